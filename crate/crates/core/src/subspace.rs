//! Sample-and-aggregate subspace estimation.
//!
//! [`est_subspace`] splits the rows into t random subsets, takes each
//! subset's top-k basis without privacy, and privately aggregates the t bases
//! with either [`naive_agg`] (projections as d²-vectors) or [`ss_agg`]
//! (projections of shared Gaussian reference points).

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dp::{PrivacyBudget, PrivacyModel};
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    frob_sq, gaussian_mat, gap_profile, projection_distance, singular_values, svd_topk, symmetric_topk, Norm,
    SubspaceBasis, UnitRowDataset,
};
use crate::rng::StreamSeed;
use crate::robust_average::{
    robust_dp_average, unknown_diameter_average, AverageOutcome, AverageRequest, DiameterSearchConfig, PointCloud,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Naive,
    Ss,
}

/// How the aggregation diameter ξ is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diameter {
    Known(f64),
    Search(DiameterSearchConfig),
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub k: usize,
    pub t: usize,
    /// Reference points, used by [`Aggregator::Ss`] only.
    pub q: usize,
    pub diameter: Diameter,
    /// Easiness parameter the diameter was derived from, if known.
    pub gamma: Option<f64>,
    pub aggregator: Aggregator,
    pub budget: PrivacyBudget,
}

impl EstimatorConfig {
    /// Settings used in the experiments: t = 125, q = 10k, ξ searched over [1e-6, 100].
    pub fn experiment_default(k: usize, budget: PrivacyBudget) -> Self {
        Self {
            k,
            t: 125,
            q: 10 * k,
            diameter: Diameter::Search(DiameterSearchConfig::default()),
            gamma: None,
            aggregator: Aggregator::Ss,
            budget,
        }
    }

    fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.k == 0 || self.k > d {
            return Err(invalid(format!("k = {} out of range for dimension {d}", self.k)));
        }
        if self.t == 0 {
            return Err(invalid("t must be at least 1"));
        }
        if n / self.t < self.k {
            return Err(invalid(format!(
                "n = {n} rows split into t = {} subsets leaves fewer than k = {} rows per subset",
                self.t, self.k
            )));
        }
        if self.aggregator == Aggregator::Ss && self.q < self.k {
            return Err(invalid(format!("q = {} must be at least k = {}", self.q, self.k)));
        }
        Ok(())
    }
}

/// Output of a private aggregation.
#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    pub basis: SubspaceBasis,
    pub chosen_xi: f64,
    pub average: AverageOutcome,
    /// SS aggregation only: `σ_k` of the reshaped estimate was numerically zero.
    pub degenerate: bool,
}

/// Random partition of `0..n` into t parts; the first `n mod t` parts get
/// one extra element.
pub fn random_partition(n: usize, t: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / t, n % t);
    let mut out = Vec::with_capacity(t);
    let mut start = 0;
    for j in 0..t {
        let len = base + usize::from(j < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Non-private top-k basis of each subset.
pub fn subset_bases(x: &UnitRowDataset, parts: &[Vec<usize>], k: usize) -> Result<Vec<SubspaceBasis>> {
    parts.par_iter().map(|p| svd_topk(x.select_rows(p).as_ref(), k)).collect()
}

fn stack_bases(bases: &[SubspaceBasis]) -> Result<(Mat<f64>, usize, usize)> {
    let first = bases.first().ok_or_else(|| invalid("no bases to aggregate"))?;
    let (k, d) = (first.k(), first.d());
    if let Some(b) = bases.iter().find(|b| b.k() != k || b.d() != d) {
        return Err(Error::DimensionMismatch { expected: k * d, got: b.k() * b.d() });
    }
    let t = bases.len();
    let stacked = Mat::from_fn(t * k, d, |r, c| bases[r / k].rows()[(r % k, c)]);
    Ok((stacked, k, d))
}

/// t×t matrix of sums of `f` over the k×k blocks of a (tk)×(tk) index space.
fn block_sums(k: usize, t: usize, f: impl Fn(usize, usize) -> f64) -> Mat<f64> {
    Mat::from_fn(t, t, |i, j| {
        let mut s = 0.0;
        for a in 0..k {
            for b in 0..k {
                s += f(i * k + a, j * k + b);
            }
        }
        s
    })
}

/// The projections `Π_j = V_jᵀV_j` as points of R^{d²} (row-major flattening).
pub struct ProjectionCloud {
    stacked: Mat<f64>,
    k: usize,
    t: usize,
    d: usize,
}

impl ProjectionCloud {
    pub fn new(bases: &[SubspaceBasis]) -> Result<Self> {
        let (stacked, k, d) = stack_bases(bases)?;
        Ok(Self { stacked, k, t: bases.len(), d })
    }

    fn block(&self, j: usize) -> MatRef<'_, f64> {
        self.stacked.as_ref().subrows(j * self.k, self.k)
    }
}

impl PointCloud for ProjectionCloud {
    fn len(&self) -> usize {
        self.t
    }

    fn dim(&self) -> usize {
        self.d * self.d
    }

    // ⟨Π_i, Π_j⟩ = ‖V_i V_jᵀ‖_F².
    fn gram(&self) -> Mat<f64> {
        let s = &self.stacked * self.stacked.transpose();
        block_sums(self.k, self.t, |a, b| s[(a, b)] * s[(a, b)])
    }

    fn norms_sq(&self) -> Vec<f64> {
        vec![self.k as f64; self.t]
    }

    fn point(&self, i: usize) -> Vec<f64> {
        let v = self.block(i);
        let p = v.transpose() * v;
        flatten(p.as_ref())
    }

    fn weighted_sum(&self, w: &[f64]) -> Vec<f64> {
        let k = self.k;
        let scaled = Mat::from_fn(self.t * k, self.d, |r, c| w[r / k] * self.stacked[(r, c)]);
        let p = self.stacked.transpose() * &scaled;
        flatten(p.as_ref())
    }

    // ⟨Π_i, A⟩ = tr(V_i A V_iᵀ).
    fn dots(&self, v: &[f64]) -> Vec<f64> {
        let a = MatRef::from_row_major_slice(v, self.d, self.d);
        let va = &self.stacked * a;
        (0..self.t)
            .map(|i| {
                let mut s = 0.0;
                for r in i * self.k..(i + 1) * self.k {
                    for c in 0..self.d {
                        s += va[(r, c)] * self.stacked[(r, c)];
                    }
                }
                s
            })
            .collect()
    }
}

/// Reference-point images `y^j = (Π_j p_1, …, Π_j p_q)` as points of R^{qd},
/// flattened so that `Π_j p_i` occupies coordinates `[i·d, (i+1)·d)`.
pub struct ReferenceCloud {
    stacked: Mat<f64>,
    /// Rows j·k..(j+1)·k hold `C_j = V_j Pᵀ` (k×q).
    coeffs: Mat<f64>,
    k: usize,
    t: usize,
    q: usize,
    d: usize,
}

impl ReferenceCloud {
    /// `reference` is the q×d matrix whose rows are the points p_i.
    pub fn new(bases: &[SubspaceBasis], reference: MatRef<'_, f64>) -> Result<Self> {
        let (stacked, k, d) = stack_bases(bases)?;
        if reference.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: reference.ncols() });
        }
        let coeffs = &stacked * reference.transpose();
        Ok(Self { stacked, coeffs, k, t: bases.len(), q: reference.nrows(), d })
    }

    fn images(&self, j: usize) -> Mat<f64> {
        let c = self.coeffs.as_ref().subrows(j * self.k, self.k);
        let v = self.stacked.as_ref().subrows(j * self.k, self.k);
        c.transpose() * v
    }
}

impl PointCloud for ReferenceCloud {
    fn len(&self) -> usize {
        self.t
    }

    fn dim(&self) -> usize {
        self.q * self.d
    }

    // ⟨y^i, y^j⟩ = tr(C_iᵀ V_i V_jᵀ C_j) = Σ_ab (V_i V_jᵀ)_ab (C_i C_jᵀ)_ab.
    fn gram(&self) -> Mat<f64> {
        let s = &self.stacked * self.stacked.transpose();
        let cc = &self.coeffs * self.coeffs.transpose();
        block_sums(self.k, self.t, |a, b| s[(a, b)] * cc[(a, b)])
    }

    // ‖C_jᵀ V_j‖_F = ‖C_j‖_F because V_j has orthonormal rows.
    fn norms_sq(&self) -> Vec<f64> {
        (0..self.t).map(|j| frob_sq(self.coeffs.as_ref().subrows(j * self.k, self.k))).collect()
    }

    fn point(&self, i: usize) -> Vec<f64> {
        flatten(self.images(i).as_ref())
    }

    fn weighted_sum(&self, w: &[f64]) -> Vec<f64> {
        let k = self.k;
        let scaled = Mat::from_fn(self.t * k, self.q, |r, c| w[r / k] * self.coeffs[(r, c)]);
        let p = scaled.transpose() * &self.stacked;
        flatten(p.as_ref())
    }

    // ⟨y^j, A⟩ = Σ (V_j Aᵀ) ∘ C_j for A the q×d reshaping of v.
    fn dots(&self, v: &[f64]) -> Vec<f64> {
        let a = MatRef::from_row_major_slice(v, self.q, self.d);
        let va = &self.stacked * a.transpose();
        (0..self.t)
            .map(|j| {
                let mut s = 0.0;
                for r in j * self.k..(j + 1) * self.k {
                    for c in 0..self.q {
                        s += va[(r, c)] * self.coeffs[(r, c)];
                    }
                }
                s
            })
            .collect()
    }
}

fn flatten(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn average_cloud<P: PointCloud + ?Sized>(
    cloud: &P,
    diameter: &Diameter,
    budget: &PrivacyBudget,
    rng: &mut impl Rng,
) -> Result<(AverageOutcome, f64)> {
    match diameter {
        Diameter::Known(xi) => {
            let out = robust_dp_average(cloud, &AverageRequest::new(*xi, *budget), rng)?;
            Ok((out, *xi))
        }
        Diameter::Search(cfg) => {
            let s = unknown_diameter_average(cloud, cfg, budget, rng)?;
            Ok((s.outcome, s.chosen_xi))
        }
    }
}

/// Frobenius-nearest rank-k projection to a d×d matrix: top-k eigenvectors
/// of its symmetric part.
pub fn nearest_projection(p_hat: MatRef<'_, f64>, k: usize) -> Result<SubspaceBasis> {
    let d = p_hat.nrows();
    let sym = Mat::from_fn(d, d, |i, j| 0.5 * (p_hat[(i, j)] + p_hat[(j, i)]));
    Ok(symmetric_topk(sym.as_ref(), k)?.basis)
}

/// Averages the projections as d²-vectors, then rounds to the nearest
/// rank-k projection.
pub fn naive_agg(
    bases: &[SubspaceBasis],
    diameter: &Diameter,
    budget: &PrivacyBudget,
    rng: &mut impl Rng,
) -> Result<AggregateOutcome> {
    let cloud = ProjectionCloud::new(bases)?;
    let (average, chosen_xi) = average_cloud(&cloud, diameter, budget, rng)?;
    let d = cloud.d;
    let p_hat = MatRef::from_row_major_slice(&average.mean, d, d);
    let basis = nearest_projection(p_hat, cloud.k)?;
    Ok(AggregateOutcome { basis, chosen_xi, average, degenerate: false })
}

/// Averages the images of q shared Gaussian reference points under each
/// projection and returns the top-k row space of the reshaped estimate.
///
/// The reference points are drawn from `rng`; they do not depend on the data.
pub fn ss_agg(
    bases: &[SubspaceBasis],
    k: usize,
    q: usize,
    diameter: &Diameter,
    budget: &PrivacyBudget,
    rng: &mut impl Rng,
) -> Result<AggregateOutcome> {
    let d = bases.first().map(|b| b.d()).ok_or_else(|| invalid("no bases to aggregate"))?;
    if q < k {
        return Err(invalid(format!("q = {q} must be at least k = {k}")));
    }
    if bases.iter().any(|b| b.k() != k) {
        return Err(invalid("every basis must have rank k"));
    }
    let reference = gaussian_mat(q, d, rng);
    let cloud = ReferenceCloud::new(bases, reference.as_ref())?;
    let (average, chosen_xi) = average_cloud(&cloud, diameter, budget, rng)?;
    let p_tilde = MatRef::from_row_major_slice(&average.mean, q, d);
    let basis = svd_topk(p_tilde, k)?;
    let sv = crate::linalg::truncated_svd(p_tilde, k)?.singular_values;
    let degenerate = !(sv[k - 1] > 1e-8 * sv[0].max(1e-300));
    Ok(AggregateOutcome { basis, chosen_xi, average, degenerate })
}

#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    pub basis: SubspaceBasis,
    pub chosen_xi: f64,
    pub degenerate: bool,
    pub core_weight: f64,
    pub subset_sizes: Vec<usize>,
}

/// Private top-k subspace of `x`. Aborts from the aggregation step propagate.
///
/// Randomness: the partition, the reference points and the aggregation noise
/// come from separate children of `seed`.
pub fn est_subspace(x: &UnitRowDataset, cfg: &EstimatorConfig, seed: StreamSeed) -> Result<SubspaceEstimate> {
    cfg.validate(x.n(), x.d())?;
    let parts = random_partition(x.n(), cfg.t, &mut seed.named("partition").rng());
    let bases = subset_bases(x, &parts, cfg.k)?;
    let mut rng = seed.named("aggregate").rng();
    let agg = match cfg.aggregator {
        Aggregator::Naive => naive_agg(&bases, &cfg.diameter, &cfg.budget, &mut rng)?,
        Aggregator::Ss => ss_agg(&bases, cfg.k, cfg.q, &cfg.diameter, &cfg.budget, &mut rng)?,
    };
    Ok(SubspaceEstimate {
        basis: agg.basis,
        chosen_xi: agg.chosen_xi,
        degenerate: agg.degenerate,
        core_weight: agg.average.core_weight,
        subset_sizes: parts.iter().map(|p| p.len()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    WeakNaive,
    WeakSs,
    StrongSs,
}

/// The unspecified constants of the parameter recipes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecipeConstants {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for RecipeConstants {
    fn default() -> Self {
        Self { c: 1.0, c1: 1.0, c2: 1.0, c3: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ParamRecommendation {
    pub kind: EstimatorKind,
    /// Unrounded subset count.
    pub t_real: f64,
    pub t: usize,
    pub q: Option<usize>,
    pub eta: Option<f64>,
    /// ξ = xi_per_gamma · γ.
    pub xi_per_gamma: f64,
    pub gamma_max: f64,
    /// `800 k ln(25k) t`.
    pub n_required: f64,
    pub feasible: bool,
}

impl ParamRecommendation {
    pub fn config(&self, k: usize, gamma: f64, budget: PrivacyBudget) -> EstimatorConfig {
        EstimatorConfig {
            k,
            t: self.t,
            q: self.q.unwrap_or(k),
            diameter: Diameter::Known(self.xi_per_gamma * gamma),
            gamma: Some(gamma),
            aggregator: if self.kind == EstimatorKind::WeakNaive { Aggregator::Naive } else { Aggregator::Ss },
            budget,
        }
    }
}

/// Row-count threshold `800 k ln(25k) t`.
pub fn n_threshold(k: usize, t: f64) -> f64 {
    800.0 * k as f64 * (25.0 * k as f64).ln() * t
}

/// Subset count, reference-point count and diameter multiplier for the
/// three estimators, for (ε, δ)-DP with accuracy target λ.
pub fn recommend_params(
    n: usize,
    d: usize,
    k: usize,
    lambda: f64,
    eps: f64,
    delta: f64,
    kind: EstimatorKind,
    consts: RecipeConstants,
) -> Result<ParamRecommendation> {
    if n == 0 || d == 0 || k == 0 || !(lambda > 0.0) || !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("recommend_params needs positive n, d, k, lambda, eps and delta in (0, 1)"));
    }
    let (kf, df) = (k as f64, d as f64);
    let l = (1.0 / delta).ln();
    let head = l / eps;
    let log_term = (df * kf * l / (lambda * eps)).ln().max(0.0);
    let RecipeConstants { c, c1, c2, c3 } = consts;
    let (t_real, q, eta, xi_per_gamma, gamma_max) = match kind {
        EstimatorKind::WeakNaive => {
            let t = c1 * (head + df * (l * 20f64.ln()).sqrt() / (lambda * eps));
            (t, None, None, 60.0, 1.0 / 20.0)
        }
        EstimatorKind::WeakSs => {
            let t = c * (head + (kf.sqrt() + log_term.sqrt()) * (kf * df * l).sqrt() / (lambda * eps));
            let q = (c2 * kf).ceil().max(kf) as usize;
            let eta = c1 * (kf.sqrt() + (q as f64 * t.ceil()).ln().sqrt());
            (t, Some(q), Some(eta), 120.0 * eta * kf.sqrt(), (1.0 / lambda).min(1.0))
        }
        EstimatorKind::StrongSs => {
            let t = c * (head + (kf + log_term) * df * kf * l / (lambda * lambda * eps * eps));
            let q = (c2 * kf).ceil().max(kf) as usize;
            let eta = c1 * (kf.sqrt() + (q as f64 * t.ceil()).ln().sqrt());
            let xi = 8.0 * (2.0 * t.ceil() * kf).sqrt() * eta;
            (t, Some(q), Some(eta), xi, (1.0 / (2.0 * t.ceil())).min(6.0 / (c3 * lambda)))
        }
    };
    let t = t_real.ceil().max(1.0) as usize;
    let n_required = n_threshold(k, t as f64);
    Ok(ParamRecommendation {
        kind,
        t_real,
        t,
        q,
        eta,
        xi_per_gamma,
        gamma_max,
        n_required,
        feasible: n as f64 >= n_required,
    })
}

#[derive(Debug, Clone)]
pub struct RankSelection {
    pub noisy_sq_singulars: Vec<f64>,
    /// `None` when no index passes the rule.
    pub chosen_k: Option<usize>,
    pub beta: f64,
    pub eps_prime: f64,
}

/// First `i` (1-based) with `s_i ≥ ln(i/β)/ε'` and `s_{i+1} < ln(i/β)/ε'`,
/// treating entries past the end as zero.
pub fn select_rank_rule(values: &[f64], eps_prime: f64, beta: f64) -> Option<usize> {
    (1..=values.len()).find(|&i| {
        let thr = (i as f64 / beta).ln() / eps_prime;
        let next = values.get(i).copied().unwrap_or(0.0);
        values[i - 1] >= thr && next < thr
    })
}

/// Noisy squared spectrum (Laplace with scale `2/ε'`), then [`select_rank_rule`].
pub fn private_select_k_from_spectrum(
    sq_singulars: &[f64],
    eps_prime: f64,
    beta: f64,
    rng: &mut impl Rng,
) -> Result<RankSelection> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta must lie in (0, 1)"));
    }
    let noisy = crate::dp::laplace_mechanism(sq_singulars, 2.0, eps_prime, rng)?;
    let chosen_k = select_rank_rule(&noisy, eps_prime, beta);
    Ok(RankSelection { noisy_sq_singulars: noisy, chosen_k, beta, eps_prime })
}

/// Private rank selection on the squared singular values of `x`, padded with
/// zeros to length n.
pub fn private_select_k(x: &UnitRowDataset, eps_prime: f64, beta: f64, rng: &mut impl Rng) -> Result<RankSelection> {
    let mut sq: Vec<f64> = singular_values(x.as_mat())?.iter().map(|s| s * s).collect();
    sq.resize(x.n(), 0.0);
    private_select_k_from_spectrum(&sq, eps_prime, beta, rng)
}

#[derive(Debug, Clone)]
pub struct ClosenessReport {
    /// False when `σ_k² < 0.01 n/k`; the other fields are then empty.
    pub applicable: bool,
    pub bound: f64,
    pub distances: Vec<f64>,
    pub fraction_within: f64,
}

/// Distance between the top-k subspace of random m-subsets and of the whole
/// set, against the subset-closeness bound: `4√(2n/m)·γ1` (spectral) or
/// `4√(2/β)·γ2` (Frobenius).
pub fn subset_closeness_experiment(
    x: &UnitRowDataset,
    k: usize,
    m: usize,
    norm: Norm,
    trials: usize,
    beta: f64,
    rng: &mut impl Rng,
) -> Result<ClosenessReport> {
    let n = x.n();
    if m == 0 || m > n || m < k {
        return Err(invalid(format!("subset size {m} out of range for n = {n}, k = {k}")));
    }
    let profile = gap_profile(x.as_mat(), k)?;
    let sk2 = profile.sigma_k().powi(2);
    if sk2 < 0.01 * n as f64 / k as f64 {
        return Ok(ClosenessReport { applicable: false, bound: f64::NAN, distances: vec![], fraction_within: f64::NAN });
    }
    let bound = match norm {
        Norm::Spectral => 4.0 * (2.0 * n as f64 / m as f64).sqrt() * profile.gamma1.unwrap_or(f64::INFINITY),
        Norm::Frobenius => 4.0 * (2.0 / beta).sqrt() * profile.gamma2.unwrap_or(f64::INFINITY),
    };
    let full = svd_topk(x.as_mat(), k)?;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut distances = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (chosen, _) = idx.partial_shuffle(rng, m);
        let sub = x.select_rows(chosen);
        let b = svd_topk(sub.as_ref(), k)?;
        distances.push(projection_distance(&full, &b, norm)?);
    }
    // Absolute slack for rounding: on exactly low-rank data both sides are ~1e-15.
    let within = distances.iter().filter(|&&v| v <= bound + 1e-9).count();
    Ok(ClosenessReport {
        applicable: true,
        bound,
        fraction_within: within as f64 / trials.max(1) as f64,
        distances,
    })
}

/// Convenience: a noise-off budget in the zCDP model.
pub fn noise_off() -> PrivacyBudget {
    PrivacyBudget::unlimited(PrivacyModel::Zcdp)
}
