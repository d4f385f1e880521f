//! Seeded random streams.
//!
//! Every random draw in the library comes from a [`ChaCha8Rng`] built from a
//! [`StreamSeed`]. Child seeds are derived by hashing the parent seed with a
//! label through SplitMix64, so a stream's contents depend only on its path
//! from the master seed and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub fn child(self, label: u64) -> StreamSeed {
        StreamSeed(splitmix64(self.0 ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Child keyed by a string label, for readability at call sites.
    pub fn named(self, label: &str) -> StreamSeed {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.child(h)
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
