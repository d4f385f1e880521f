//! Fingerprinting-code hard instances and the matching extractor.
//!
//! A hard instance stacks k padded-and-permuted codebooks, one of which is
//! the input codebook X, and scales by `1/√d` so every row is a unit vector.
//! The secret (which block holds X, and the k column permutations) is shared
//! with [`extract`], which maps a rank-k subspace back to a sign vector over
//! X's columns.

use std::path::Path;

use faer::Mat;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::with_path;
use crate::error::{invalid, Error, Result};
use crate::linalg::{gap_profile, random_unit, SubspaceBasis, UnitRowDataset};

/// Agreement needed on the marked columns.
pub const AGREEMENT_THRESHOLD: f64 = 0.9;

/// Row-major ±1 matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
}

impl SignMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        if let Some(bad) = data.iter().find(|&&v| v != 1 && v != -1) {
            return Err(invalid(format!("sign matrix entry {bad} is not +1 or -1")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: i8) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i8) {
        assert!(v == 1 || v == -1, "sign entry must be +1 or -1");
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Columns whose entries all equal `b`.
    pub fn marked_columns(&self, b: i8) -> Vec<usize> {
        (0..self.cols).filter(|&j| (0..self.rows).all(|i| self.get(i, j) == b)).collect()
    }
}

/// A draw from the fingerprinting distribution: column j is i.i.d. ±1 with mean `biases[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcCodebook {
    pub entries: SignMatrix,
    pub biases: Vec<f64>,
}

impl FpcCodebook {
    pub fn n0(&self) -> usize {
        self.entries.rows()
    }

    pub fn d0(&self) -> usize {
        self.entries.cols()
    }
}

/// Largest attainable `|p|` for n0 rows: `(5 n0 - 1) / (5 n0 + 1)`.
pub fn max_bias(n0: usize) -> f64 {
    let m = 5.0 * n0 as f64;
    (m - 1.0) / (m + 1.0)
}

fn sample_codebook(n0: usize, d0: usize, rng: &mut impl Rng) -> FpcCodebook {
    let range = (5.0 * n0 as f64).ln();
    let biases: Vec<f64> = (0..d0)
        .map(|_| {
            let t = rng.gen_range(-range..=range);
            (t.exp() - 1.0) / (t.exp() + 1.0)
        })
        .collect();
    let mut data = vec![0i8; n0 * d0];
    for (j, &p) in biases.iter().enumerate() {
        let up = (1.0 + p) / 2.0;
        for i in 0..n0 {
            data[i * d0 + j] = if rng.gen::<f64>() < up { 1 } else { -1 };
        }
    }
    FpcCodebook { entries: SignMatrix { rows: n0, cols: d0, data }, biases }
}

/// Samples an `n0 × d0` fingerprinting codebook.
pub fn sample_fpc(n0: usize, d0: usize, rng: &mut impl Rng) -> Result<FpcCodebook> {
    if n0 == 0 || d0 == 0 {
        return Err(invalid("codebook needs n0 >= 1 and d0 >= 1"));
    }
    Ok(sample_codebook(n0, d0, rng))
}

/// Column permutation stored as an index array: input column i lands at
/// output column `forward[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; forward.len()];
        for &f in &forward {
            if f >= forward.len() || std::mem::replace(&mut seen[f], true) {
                return Err(invalid("index array is not a permutation"));
            }
        }
        Ok(Self { forward })
    }

    pub fn identity(d: usize) -> Self {
        Self { forward: (0..d).collect() }
    }

    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        let mut forward: Vec<usize> = (0..d).collect();
        forward.shuffle(rng);
        Self { forward }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    /// `out[forward[i]] = v[i]`.
    pub fn apply<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        for (i, &f) in self.forward.iter().enumerate() {
            out[f] = v[i];
        }
        out
    }

    /// Inverse of [`apply`](Self::apply): `out[i] = w[forward[i]]`.
    pub fn unapply<T: Copy>(&self, w: &[T]) -> Vec<T> {
        self.forward.iter().map(|&f| w[f]).collect()
    }
}

/// Appends ℓ all-ones and ℓ all-minus-ones columns to `x`, then permutes the columns.
pub fn pad_and_permute(x: &SignMatrix, ell: usize, p: &Permutation) -> Result<SignMatrix> {
    let d = x.cols() + 2 * ell;
    if p.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: p.len() });
    }
    let mut out = SignMatrix::filled(x.rows(), d, 1);
    for i in 0..x.rows() {
        let row = x.row(i);
        for (c, &f) in p.forward().iter().enumerate() {
            let v = if c < x.cols() {
                row[c]
            } else if c < x.cols() + ell {
                1
            } else {
                -1
            };
            out.data[i * d + f] = v;
        }
    }
    Ok(out)
}

/// Instance shape. `d = d0 + 2ℓ`, `n = k · n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardParams {
    pub k: usize,
    pub n0: usize,
    pub d0: usize,
    pub ell: usize,
    /// Padding level the shape was derived from, if any.
    pub pad_alpha: Option<f64>,
}

impl HardParams {
    pub fn new(k: usize, n0: usize, d0: usize, ell: usize) -> Result<Self> {
        if k == 0 || n0 == 0 || ell == 0 {
            return Err(invalid("hard instance needs k, n0, ell >= 1"));
        }
        Ok(Self { k, n0, d0, ell, pad_alpha: None })
    }

    /// Picks ℓ = 2⌈(1-α)d/4⌉ (even, so the half-blocks used by the extractor
    /// are exact) and d0 = d - 2ℓ.
    pub fn from_pad_alpha(k: usize, n0: usize, d: usize, pad_alpha: f64) -> Result<Self> {
        if !(pad_alpha > 0.0 && pad_alpha < 0.25) {
            return Err(invalid(format!("pad_alpha = {pad_alpha} must lie in (0, 0.25)")));
        }
        let ell = (2 * ((1.0 - pad_alpha) * d as f64 / 4.0).ceil() as usize).min(d / 2);
        let mut p = Self::new(k, n0, d - 2 * ell, ell)?;
        p.pad_alpha = Some(pad_alpha);
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.d0 + 2 * self.ell
    }

    pub fn n(&self) -> usize {
        self.k * self.n0
    }

    /// `pad_alpha` if set, else the unpadded share `d0/d`.
    pub fn alpha(&self) -> f64 {
        self.pad_alpha.unwrap_or(self.d0 as f64 / self.d() as f64)
    }
}

/// Which block carries the input codebook (0-based), and each block's permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Secret {
    pub s: usize,
    pub permutations: Vec<Permutation>,
}

impl Secret {
    pub fn random(k: usize, d: usize, rng: &mut impl Rng) -> Self {
        let s = rng.gen_range(0..k);
        let permutations = (0..k).map(|_| Permutation::random(d, rng)).collect();
        Self { s, permutations }
    }

    fn check(&self, k: usize, d: usize) -> Result<()> {
        if self.s >= k || self.permutations.len() != k {
            return Err(invalid(format!("secret does not match k = {k}")));
        }
        if self.permutations.iter().any(|p| p.len() != d) {
            return Err(invalid(format!("secret permutations must have length d = {d}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HardInstance {
    pub y: UnitRowDataset,
    pub secret: Secret,
    /// `v_t`: ±1/√(2ℓ) on block t's padding columns, zero elsewhere.
    pub planted: Vec<Vec<f64>>,
    pub params: HardParams,
    /// The k codebooks before padding; entry `secret.s` is the input.
    pub codebooks: Vec<FpcCodebook>,
}

impl HardInstance {
    /// Orthonormal basis of the span of the planted directions.
    pub fn planted_basis(&self) -> Result<SubspaceBasis> {
        let planted = Mat::from_fn(self.planted.len(), self.params.d(), |i, j| self.planted[i][j]);
        SubspaceBasis::orthonormalize(planted.as_ref())
    }
}

fn planted_direction(params: &HardParams, p: &Permutation) -> Vec<f64> {
    let scale = 1.0 / (2.0 * params.ell as f64).sqrt();
    let unpermuted: Vec<f64> = (0..params.d())
        .map(|c| {
            if c < params.d0 {
                0.0
            } else if c < params.d0 + params.ell {
                scale
            } else {
                -scale
            }
        })
        .collect();
    p.apply(&unpermuted)
}

/// Builds the stacked, padded and permuted instance around `x`.
///
/// The other k-1 codebooks come from `rng`; their draws do not depend on `x`,
/// so changing one row of `x` changes exactly one row of the output.
pub fn generate_hard_instance(
    x: &FpcCodebook,
    k: usize,
    ell: usize,
    secret: &Secret,
    rng: &mut impl Rng,
) -> Result<HardInstance> {
    let params = HardParams::new(k, x.n0(), x.d0(), ell)?;
    build_instance(x, params, secret, rng)
}

fn build_instance(x: &FpcCodebook, params: HardParams, secret: &Secret, rng: &mut impl Rng) -> Result<HardInstance> {
    if x.n0() != params.n0 || x.d0() != params.d0 {
        return Err(invalid("codebook shape does not match the instance parameters"));
    }
    let (k, n0, d) = (params.k, params.n0, params.d());
    secret.check(k, d)?;
    let mut codebooks: Vec<FpcCodebook> = (0..k).map(|_| sample_codebook(n0, params.d0, rng)).collect();
    codebooks[secret.s] = x.clone();
    let scale = 1.0 / (d as f64).sqrt();
    let mut y = Mat::<f64>::zeros(params.n(), d);
    for (t, book) in codebooks.iter().enumerate() {
        let b = pad_and_permute(&book.entries, params.ell, &secret.permutations[t])?;
        for i in 0..n0 {
            for (j, &v) in b.row(i).iter().enumerate() {
                y[(t * n0 + i, j)] = v as f64 * scale;
            }
        }
    }
    let planted = secret.permutations.iter().map(|p| planted_direction(&params, p)).collect();
    Ok(HardInstance { y: UnitRowDataset::normalize(y)?, secret: secret.clone(), planted, params, codebooks })
}

/// Samples X, the secret and the instance for a given shape. Returns the instance;
/// X is `inst.codebooks[inst.secret.s]`.
pub fn sample_hard_instance(params: HardParams, rng: &mut impl Rng) -> Result<HardInstance> {
    let x = sample_codebook(params.n0, params.d0, rng);
    let secret = Secret::random(params.k, params.d(), rng);
    build_instance(&x, params, &secret, rng)
}

#[derive(Debug, Clone)]
pub struct WeakGapReport {
    pub alpha: f64,
    pub sigma_k_sq: f64,
    /// `(1 - 4α) n / k`.
    pub sigma_k_sq_bound: f64,
    /// `Σ_{i>k} σ_i² / σ_k²`.
    pub tail_ratio: f64,
    /// `4αk / (1 - 4α)`.
    pub tail_ratio_bound: f64,
}

impl WeakGapReport {
    pub fn sigma_ok(&self) -> bool {
        self.sigma_k_sq >= self.sigma_k_sq_bound
    }

    pub fn tail_ok(&self) -> bool {
        self.tail_ratio <= self.tail_ratio_bound
    }

    pub fn holds(&self) -> bool {
        self.sigma_ok() && self.tail_ok()
    }
}

fn alpha_checked(params: &HardParams) -> Result<f64> {
    let a = params.alpha();
    if !(a < 0.25) {
        return Err(invalid(format!("alpha = {a} leaves no room for the gap bounds (needs < 0.25)")));
    }
    Ok(a)
}

pub fn validate_weak_gap(inst: &HardInstance) -> Result<WeakGapReport> {
    let p = &inst.params;
    let alpha = alpha_checked(p)?;
    let prof = gap_profile(inst.y.as_mat(), p.k)?;
    let sigma_k_sq = prof.sigma_k().powi(2);
    let tail_ratio = if sigma_k_sq > 0.0 { prof.tail_sq() / sigma_k_sq } else { f64::INFINITY };
    let (k, n) = (p.k as f64, p.n() as f64);
    Ok(WeakGapReport {
        alpha,
        sigma_k_sq,
        sigma_k_sq_bound: (1.0 - 4.0 * alpha) * n / k,
        tail_ratio,
        tail_ratio_bound: 4.0 * alpha * k / (1.0 - 4.0 * alpha),
    })
}

#[derive(Debug, Clone)]
pub struct StrongGapReport {
    pub alpha: f64,
    /// `σ_{k+1}(Y) / σ_k(Y)`.
    pub gamma1: f64,
    /// `σ_{k+1}² / σ_k²`.
    pub ratio_sq: f64,
    /// `α log(k/α) log(2n/k) / (1 - 4α)`: the squared-ratio scaling with unit constant.
    pub reference: f64,
}

pub fn validate_strong_gap(inst: &HardInstance) -> Result<StrongGapReport> {
    let p = &inst.params;
    let alpha = alpha_checked(p)?;
    let prof = gap_profile(inst.y.as_mat(), p.k)?;
    let gamma1 = prof.gamma1.unwrap_or(f64::INFINITY);
    let (k, n) = (p.k as f64, p.n() as f64);
    Ok(StrongGapReport {
        alpha,
        gamma1,
        ratio_sq: gamma1 * gamma1,
        reference: alpha * (k / alpha).ln().max(1.0) * (2.0 * n / k).ln() / (1.0 - 4.0 * alpha),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    /// Random unit coefficient vectors tried before local refinement.
    pub directions: usize,
    /// Run coordinate ascent on the best coefficient vector.
    pub refine: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { directions: 2000, refine: true }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    /// `sign(u)` on the first d0 de-permuted coordinates.
    pub q: Vec<i8>,
    /// The maximized min of the two padding sign sums.
    pub objective: i64,
    /// The subspace has no mass on the padding coordinates; `q` is all ones.
    pub degraded: bool,
}

fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Finds a `u` in the span of `pi` (de-permuted by block s's permutation)
/// that maximizes the min of the sign sum over the first ℓ/2 one-padding
/// columns and minus the sign sum over the first ℓ/2 minus-one-padding
/// columns, and returns `sign(u)` on the codebook columns.
///
/// The search tries ±e_r, then `opts.directions` random unit coefficient
/// vectors, then coordinate ascent with halving steps. Ties keep the first
/// candidate found.
pub fn extract(
    secret: &Secret,
    pi: &SubspaceBasis,
    params: &HardParams,
    opts: &ExtractOptions,
    rng: &mut impl Rng,
) -> Result<Extraction> {
    let (d, d0, ell) = (params.d(), params.d0, params.ell);
    if pi.d() != d {
        return Err(Error::DimensionMismatch { expected: d, got: pi.d() });
    }
    secret.check(params.k, d)?;
    let fwd = secret.permutations[secret.s].forward();
    let half = ell / 2;
    let plus: Vec<usize> = (d0..d0 + half).map(|i| fwd[i]).collect();
    let minus: Vec<usize> = (d0 + ell..d0 + ell + half).map(|i| fwd[i]).collect();
    let k = pi.k();
    let v = pi.rows();

    let gather = |cols: &[usize]| -> Vec<Vec<f64>> { cols.iter().map(|&c| (0..k).map(|r| v[(r, c)]).collect()).collect() };
    let gp = gather(&plus);
    let gm = gather(&minus);
    if gp.iter().chain(&gm).all(|row| row.iter().all(|&x| x == 0.0)) {
        return Ok(Extraction { q: vec![1; d0], objective: 0, degraded: true });
    }
    let dot = |row: &[f64], c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    let score = |c: &[f64]| -> i64 {
        let sp: i64 = gp.iter().map(|r| sign(dot(r, c)) as i64).sum();
        let sm: i64 = gm.iter().map(|r| sign(dot(r, c)) as i64).sum();
        sp.min(-sm)
    };

    let mut best: Option<(i64, Vec<f64>)> = None;
    let mut consider = |c: Vec<f64>| {
        let s = score(&c);
        if best.as_ref().map_or(true, |(b, _)| s > *b) {
            best = Some((s, c));
        }
    };
    for r in 0..k {
        for sgn in [1.0, -1.0] {
            let mut c = vec![0.0; k];
            c[r] = sgn;
            consider(c);
        }
    }
    for _ in 0..opts.directions {
        consider(random_unit(k, rng));
    }
    let (mut obj, mut c) = best.expect("at least one candidate");

    if opts.refine && k > 1 {
        let mut step = 0.5;
        while step > 1.0 / 256.0 {
            let mut improved = false;
            for r in 0..k {
                for sgn in [1.0, -1.0] {
                    let mut cand = c.clone();
                    cand[r] += sgn * step;
                    let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    cand.iter_mut().for_each(|x| *x /= norm);
                    let s = score(&cand);
                    if s > obj {
                        obj = s;
                        c = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
    }

    let q = fwd[..d0]
        .iter()
        .map(|&col| sign((0..k).map(|r| c[r] * v[(r, col)]).sum()))
        .collect();
    Ok(Extraction { q, objective: obj, degraded: false })
}

#[derive(Debug, Clone)]
pub struct AgreementMetrics {
    /// Share of 1-marked columns where q is +1; `None` if there are none.
    pub plus_fraction: Option<f64>,
    /// Share of (-1)-marked columns where q is -1; `None` if there are none.
    pub minus_fraction: Option<f64>,
    pub plus_marked: usize,
    pub minus_marked: usize,
    /// Both fractions reach [`AGREEMENT_THRESHOLD`] (an empty mark set passes vacuously).
    pub strongly_agrees: bool,
}

impl AgreementMetrics {
    /// Share of all marked columns where q matches the mark.
    pub fn overall(&self) -> Option<f64> {
        let total = self.plus_marked + self.minus_marked;
        (total > 0).then(|| {
            let hits = self.plus_fraction.unwrap_or(0.0) * self.plus_marked as f64
                + self.minus_fraction.unwrap_or(0.0) * self.minus_marked as f64;
            hits / total as f64
        })
    }
}

fn fraction_matching(q: &[i8], cols: &[usize], b: i8) -> Option<f64> {
    (!cols.is_empty()).then(|| cols.iter().filter(|&&j| q[j] == b).count() as f64 / cols.len() as f64)
}

pub fn agreement_metrics(q: &[i8], x: &SignMatrix) -> Result<AgreementMetrics> {
    if q.len() != x.cols() {
        return Err(Error::DimensionMismatch { expected: x.cols(), got: q.len() });
    }
    let plus = x.marked_columns(1);
    let minus = x.marked_columns(-1);
    let plus_fraction = fraction_matching(q, &plus, 1);
    let minus_fraction = fraction_matching(q, &minus, -1);
    let ok = |f: Option<f64>| f.map_or(true, |v| v >= AGREEMENT_THRESHOLD);
    Ok(AgreementMetrics {
        strongly_agrees: ok(plus_fraction) && ok(minus_fraction),
        plus_fraction,
        minus_fraction,
        plus_marked: plus.len(),
        minus_marked: minus.len(),
    })
}

/// Per-column agreement rates of a batch of samples of q.
#[derive(Debug, Clone)]
pub struct CorrelationMetrics {
    /// Lowest empirical `P[q^j = b]` over the b-marked columns j; `None` if none.
    pub plus_min_rate: Option<f64>,
    pub minus_min_rate: Option<f64>,
    /// Every marked column matches in at least [`AGREEMENT_THRESHOLD`] of the samples.
    pub strongly_correlated: bool,
}

pub fn correlation_metrics(samples: &[Vec<i8>], x: &SignMatrix) -> Result<CorrelationMetrics> {
    if samples.is_empty() {
        return Err(invalid("need at least one sample of q"));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != x.cols()) {
        return Err(Error::DimensionMismatch { expected: x.cols(), got: s.len() });
    }
    let rate = |b: i8| -> Option<f64> {
        x.marked_columns(b)
            .iter()
            .map(|&j| samples.iter().filter(|s| s[j] == b).count() as f64 / samples.len() as f64)
            .reduce(f64::min)
    };
    let plus_min_rate = rate(1);
    let minus_min_rate = rate(-1);
    let ok = |f: Option<f64>| f.map_or(true, |v| v >= AGREEMENT_THRESHOLD);
    Ok(CorrelationMetrics {
        strongly_correlated: ok(plus_min_rate) && ok(minus_min_rate),
        plus_min_rate,
        minus_min_rate,
    })
}

/// Everything an attacker needs next to the dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub params: HardParams,
    pub secret: Secret,
    pub codebook: FpcCodebook,
}

impl Sidecar {
    pub fn of(inst: &HardInstance) -> Self {
        Self {
            params: inst.params,
            secret: inst.secret.clone(),
            codebook: inst.codebooks[inst.secret.s].clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(with_path(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(with_path(path))?;
        let side: Self = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        side.secret.check(side.params.k, side.params.d())?;
        Permutation::new(side.secret.permutations[side.secret.s].forward.clone())
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn pad_example() {
        let x = SignMatrix::new(1, 2, vec![1, -1]).unwrap();
        let out = pad_and_permute(&x, 1, &Permutation::identity(4)).unwrap();
        assert_eq!(out.row(0), &[1, -1, 1, -1]);
    }

    #[test]
    fn single_row_bias_range() {
        assert!((max_bias(1) - 2.0 / 3.0).abs() < 1e-15);
        let book = sample_fpc(1, 500, &mut StreamSeed(4).rng()).unwrap();
        assert!(book.biases.iter().all(|p| p.abs() <= 2.0 / 3.0));
    }

    #[test]
    fn desk_shapes() {
        let p = HardParams::from_pad_alpha(3, 100, 2000, 0.02).unwrap();
        assert_eq!((p.ell, p.d0, p.d(), p.n()), (980, 40, 2000, 300));
        let p = HardParams::from_pad_alpha(3, 20, 1000, 0.1).unwrap();
        assert_eq!((p.ell, p.d0), (450, 100));
    }

    #[test]
    fn permutation_round_trip() {
        let p = Permutation::random(50, &mut StreamSeed(1).rng());
        let v: Vec<usize> = (0..50).collect();
        assert_eq!(p.unapply(&p.apply(&v)), v);
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn empty_marks_are_vacuous() {
        let x = SignMatrix::new(2, 2, vec![1, -1, -1, 1]).unwrap();
        let m = agreement_metrics(&[1, 1], &x).unwrap();
        assert!(m.strongly_agrees && m.plus_fraction.is_none() && m.overall().is_none());
    }
}
