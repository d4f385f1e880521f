//! Points near a random k-dimensional subspace spanned by sign vectors.

use faer::Mat;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{random_unit, SubspaceBasis, UnitRowDataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Noise coordinates are ±1/τ. `f64::INFINITY` gives noise-free points.
    pub tau: f64,
}

impl SyntheticSpec {
    /// `n = 250·k` and `τ = 10·d`.
    pub fn experiment_default(d: usize, k: usize) -> Self {
        Self { n: 250 * k, d, k, tau: 10.0 * d as f64 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.k > self.d {
            return Err(invalid(format!("need n >= 1 and 1 <= k <= d, got n={} d={} k={}", self.n, self.d, self.k)));
        }
        if !(self.tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// The dataset and the orthonormalized span of `b_1..b_k`.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: UnitRowDataset,
    pub span: SubspaceBasis,
}

/// Draws `b_1..b_k` uniformly from {-1,1}^d, then each row as
/// `(u + ν)/‖u + ν‖` with u uniform on the unit sphere of the span and
/// ν uniform on {-1/τ, 1/τ}^d.
pub fn gen_synthetic(spec: &SyntheticSpec, rng: &mut impl Rng) -> Result<Synthetic> {
    spec.validate()?;
    let SyntheticSpec { n, d, k, tau } = *spec;
    let span = loop {
        let b = Mat::from_fn(k, d, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        // Sign vectors are dependent with probability about k²/2^d; redraw.
        if let Ok(s) = SubspaceBasis::orthonormalize(b.as_ref()) {
            break s;
        }
    };
    let v = span.rows();
    let nu = 1.0 / tau;
    let mut x = Mat::<f64>::zeros(n, d);
    for i in 0..n {
        let c = random_unit(k, rng);
        for j in 0..d {
            let u: f64 = (0..k).map(|r| c[r] * v[(r, j)]).sum();
            x[(i, j)] = u + if rng.gen::<bool>() { nu } else { -nu };
        }
    }
    Ok(Synthetic { data: UnitRowDataset::normalize(x)?, span })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gap_profile, projection_distance, svd_topk, Norm};
    use crate::rng::StreamSeed;

    #[test]
    fn noise_free_rows_lie_in_span() {
        let spec = SyntheticSpec { n: 60, d: 40, k: 3, tau: f64::INFINITY };
        let s = gen_synthetic(&spec, &mut StreamSeed(2).rng()).unwrap();
        let prof = gap_profile(s.data.as_mat(), 3).unwrap();
        assert!(prof.gamma2.unwrap() < 1e-6);
        let top = svd_topk(s.data.as_mat(), 3).unwrap();
        assert!(projection_distance(&top, &s.span, Norm::Frobenius).unwrap() < 1e-8);
    }

    #[test]
    fn default_sizes() {
        let s = SyntheticSpec::experiment_default(512, 4);
        assert_eq!((s.n, s.tau), (1000, 5120.0));
    }
}
