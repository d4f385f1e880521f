//! Outlier-robust private averaging.
//!
//! [`robust_dp_average`] is a filter-then-average realization of the
//! friendly-core averaging contract: points whose ξ-neighborhood holds a
//! large fraction of the data get weight, a noisy test checks that enough
//! weight exists, and the clipped weighted mean is released with Gaussian
//! noise at sensitivity `8ξ/m`.
//!
//! Points are accessed through [`PointCloud`] so callers with structured
//! points (projections, projected reference vectors) never build them densely
//! until the final weighted sum.

use faer::{Mat, MatRef};
use rand::Rng;

use crate::dp::{noisy_scalar, split_budget_with, NoiseSpec, PrivacyBudget};
use crate::error::{invalid, AbortReason, Error, Result};
use crate::linalg::random_unit;

/// Share of the averaging budget spent on the friendliness test.
pub const TEST_SHARE: f64 = 0.2;
/// Sensitivity multiplier: the weighted clipped mean moves by at most
/// `SENSITIVITY_FACTOR · ξ / m` under a single replacement.
pub const SENSITIVITY_FACTOR: f64 = 8.0;
/// Width of the weight ramp, as a fraction of m.
const RAMP: f64 = 0.1;

/// A finite set of m points in R^D, accessed through inner products.
pub trait PointCloud {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    /// m×m matrix of inner products.
    fn gram(&self) -> Mat<f64>;
    fn point(&self, i: usize) -> Vec<f64>;
    /// `Σ_i w_i y_i`.
    fn weighted_sum(&self, w: &[f64]) -> Vec<f64>;
    /// `⟨y_i, v⟩` for every i.
    fn dots(&self, v: &[f64]) -> Vec<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// m×m squared Euclidean distances.
    fn sq_distances(&self) -> Mat<f64> {
        let g = self.gram();
        let m = g.nrows();
        Mat::from_fn(m, m, |i, j| if i == j { 0.0 } else { (g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]).max(0.0) })
    }

    /// `‖y_i‖²` for every i.
    fn norms_sq(&self) -> Vec<f64> {
        let g = self.gram();
        (0..g.nrows()).map(|i| g[(i, i)]).collect()
    }

    /// `‖y_i - v‖` for every i.
    fn distances_to(&self, v: &[f64]) -> Vec<f64> {
        let vv: f64 = v.iter().map(|x| x * x).sum();
        self.dots(v)
            .into_iter()
            .zip(self.norms_sq())
            .map(|(dv, nn)| (nn - 2.0 * dv + vv).max(0.0).sqrt())
            .collect()
    }

    /// `Σ_i w_i (y_i - c)`.
    fn weighted_sum_centered(&self, w: &[f64], c: &[f64]) -> Vec<f64> {
        let total: f64 = w.iter().sum();
        let mut s = self.weighted_sum(w);
        for (x, ci) in s.iter_mut().zip(c) {
            *x -= total * ci;
        }
        s
    }
}

/// Rows of a dense m×D matrix.
#[derive(Debug, Clone, Copy)]
pub struct DensePoints<'a> {
    rows: MatRef<'a, f64>,
}

impl<'a> DensePoints<'a> {
    pub fn new(rows: MatRef<'a, f64>) -> Self {
        Self { rows }
    }
}

impl PointCloud for DensePoints<'_> {
    fn len(&self) -> usize {
        self.rows.nrows()
    }

    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn gram(&self) -> Mat<f64> {
        self.rows * self.rows.transpose()
    }

    fn point(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.rows[(i, j)]).collect()
    }

    fn weighted_sum(&self, w: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (0..self.len()).map(|i| w[i] * self.rows[(i, j)]).sum())
            .collect()
    }

    fn dots(&self, v: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| (0..self.dim()).map(|j| self.rows[(i, j)] * v[j]).sum())
            .collect()
    }

    // Translating to the first point before forming the Gram keeps the
    // distances accurate when the cloud sits far from the origin.
    fn sq_distances(&self) -> Mat<f64> {
        let m = self.len();
        let c = Mat::from_fn(m, self.dim(), |i, j| self.rows[(i, j)] - self.rows[(0, j)]);
        let g = &c * c.transpose();
        Mat::from_fn(m, m, |i, j| if i == j { 0.0 } else { (g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]).max(0.0) })
    }

    fn distances_to(&self, v: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| (0..self.dim()).map(|j| (self.rows[(i, j)] - v[j]).powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    fn weighted_sum_centered(&self, w: &[f64], c: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (0..self.len()).map(|i| w[i] * (self.rows[(i, j)] - c[j])).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageRequest {
    pub diameter: f64,
    pub budget: PrivacyBudget,
    /// Fraction of points allowed outside the dense core.
    pub outlier_tolerance: f64,
}

impl AverageRequest {
    pub fn new(diameter: f64, budget: PrivacyBudget) -> Self {
        Self { diameter, budget, outlier_tolerance: 0.2 }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(invalid("robust averaging needs at least one point"));
        }
        if !(self.diameter > 0.0) || !self.diameter.is_finite() {
            return Err(invalid(format!("diameter must be positive and finite, got {}", self.diameter)));
        }
        if !(self.outlier_tolerance > 0.0 && self.outlier_tolerance < 0.25) {
            return Err(invalid("outlier tolerance must lie in (0, 0.25)"));
        }
        Ok(())
    }
}

/// Result of a successful robust average.
#[derive(Debug, Clone)]
pub struct AverageOutcome {
    pub mean: Vec<f64>,
    pub diameter: f64,
    /// Exact `Σ w_i` before noise.
    pub core_weight: f64,
    pub noisy_core_weight: f64,
    /// `8ξ/m`.
    pub sensitivity: f64,
    pub noise_std: f64,
}

/// The deterministic part of the average: weights and the clipped weighted mean.
#[derive(Debug, Clone)]
pub struct PreNoise {
    pub weights: Vec<f64>,
    pub weight_sum: f64,
    /// Zero vector when no point has weight.
    pub mean: Vec<f64>,
}

/// Neighbor counts `c_i = #{j : ‖y_i - y_j‖ ≤ ξ}` (each point counts itself).
pub fn neighbor_counts(sq_dist: MatRef<'_, f64>, xi: f64) -> Vec<usize> {
    let m = sq_dist.nrows();
    let r2 = xi * xi;
    (0..m).map(|i| (0..m).filter(|&j| sq_dist[(i, j)] <= r2).count()).collect()
}

fn weights_from_counts(counts: &[usize], tol: f64) -> Vec<f64> {
    let m = counts.len() as f64;
    let lo = (1.0 - 2.0 * tol) * m;
    counts.iter().map(|&c| ((c as f64 - lo) / (RAMP * m)).clamp(0.0, 1.0)).collect()
}

/// Weights, then the weighted mean of the points clipped to the ξ-ball
/// around a first-pass weighted anchor.
pub fn pre_noise_average<P: PointCloud + ?Sized>(points: &P, xi: f64, tol: f64) -> PreNoise {
    let d2 = points.sq_distances();
    let counts = neighbor_counts(d2.as_ref(), xi);
    let weights = weights_from_counts(&counts, tol);
    clipped_mean(points, xi, weights, &counts)
}

fn clipped_mean<P: PointCloud + ?Sized>(points: &P, xi: f64, weights: Vec<f64>, counts: &[usize]) -> PreNoise {
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 {
        return PreNoise { weights, weight_sum, mean: vec![0.0; points.dim()] };
    }
    // Anchor: weighted mean, computed relative to the best-connected point.
    let r = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0);
    let yr = points.point(r);
    let dev = points.weighted_sum_centered(&weights, &yr);
    let anchor: Vec<f64> = yr.iter().zip(&dev).map(|(a, b)| a + b / weight_sum).collect();
    let dist = points.distances_to(&anchor);
    let clipped: Vec<f64> = weights
        .iter()
        .zip(&dist)
        .map(|(&w, &dd)| if dd > xi { w * xi / dd } else { w })
        .collect();
    let dev = points.weighted_sum_centered(&clipped, &anchor);
    let mean = anchor.iter().zip(&dev).map(|(a, b)| a + b / weight_sum).collect();
    PreNoise { weights, weight_sum, mean }
}

/// Private average of a cloud with a dense core of diameter `req.diameter`.
///
/// Aborts with [`AbortReason::NotFriendly`] when the noisy core weight falls
/// below `(1 - 2·tol)·m`.
pub fn robust_dp_average<P: PointCloud + ?Sized>(
    points: &P,
    req: &AverageRequest,
    rng: &mut impl Rng,
) -> Result<AverageOutcome> {
    req.validate(points.len())?;
    let d2 = points.sq_distances();
    average_with_distances(points, req, d2.as_ref(), rng)
}

fn average_with_distances<P: PointCloud + ?Sized>(
    points: &P,
    req: &AverageRequest,
    d2: MatRef<'_, f64>,
    rng: &mut impl Rng,
) -> Result<AverageOutcome> {
    let m = points.len();
    req.validate(m)?;
    let parts = split_budget_with(&req.budget, &[TEST_SHARE, 1.0 - TEST_SHARE], &[0.5, 0.5])?;
    let (test_budget, mean_budget) = (parts[0], parts[1]);
    let xi = req.diameter;
    let mf = m as f64;

    let counts = neighbor_counts(d2, xi);
    let weights = weights_from_counts(&counts, req.outlier_tolerance);
    let core_weight: f64 = weights.iter().sum();

    // One replacement moves its own weight by ≤ 1 and every other weight by ≤ 1/(0.1m).
    let test_sensitivity = 1.0 + (mf - 1.0) / (RAMP * mf);
    let noisy = noisy_scalar(core_weight, test_sensitivity, &test_budget, rng)?;
    let threshold = (1.0 - 2.0 * req.outlier_tolerance) * mf;
    if noisy < threshold {
        return Err(Error::Aborted(AbortReason::NotFriendly { noisy_weight: noisy, threshold }));
    }

    let pre = clipped_mean(points, xi, weights, &counts);
    let sensitivity = SENSITIVITY_FACTOR * xi / mf;
    let spec = NoiseSpec::gaussian_for(sensitivity, &mean_budget, points.dim())?;
    let mut mean = pre.mean;
    spec.perturb(&mut mean, rng);
    Ok(AverageOutcome {
        mean,
        diameter: xi,
        core_weight,
        noisy_core_weight: noisy,
        sensitivity,
        noise_std: spec.sigma_or_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterSearchConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    /// Fraction of the budget spent on the search; the rest goes to the average.
    pub search_share: f64,
    /// A grid point passes when the noisy mean neighbor count reaches this fraction of m.
    pub density: f64,
    pub outlier_tolerance: f64,
}

impl Default for DiameterSearchConfig {
    fn default() -> Self {
        Self { xi_min: 1e-6, xi_max: 100.0, search_share: 0.25, density: 0.5, outlier_tolerance: 0.2 }
    }
}

impl DiameterSearchConfig {
    pub fn new(xi_min: f64, xi_max: f64) -> Result<Self> {
        let cfg = Self { xi_min, xi_max, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.xi_min > 0.0) || !(self.xi_max >= self.xi_min) || !self.xi_max.is_finite() {
            return Err(invalid(format!("need 0 < xi_min <= xi_max, got [{}, {}]", self.xi_min, self.xi_max)));
        }
        if !(self.search_share > 0.0 && self.search_share < 1.0) {
            return Err(invalid("search share must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `ξ_min · 2^i` for every i with the value inside `[ξ_min, ξ_max]`.
    pub fn grid(&self) -> Vec<f64> {
        let mut g = vec![self.xi_min];
        loop {
            let next = g[g.len() - 1] * 2.0;
            if next > self.xi_max * (1.0 + 1e-12) {
                break;
            }
            g.push(next);
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct SearchedAverage {
    pub outcome: AverageOutcome,
    pub chosen_xi: f64,
    /// Grid index where the density probe first passed.
    pub found_index: usize,
}

fn probes_needed(grid_len: usize) -> usize {
    // Binary search over grid_len candidates, plus one confirmation probe.
    let mut steps = 0;
    while (1usize << steps) < grid_len {
        steps += 1;
    }
    steps + 1
}

/// Private binary search for a workable diameter, followed by
/// [`robust_dp_average`] at that diameter.
///
/// The probe statistic is the mean neighbor count `(1/m) Σ c_i(ξ)`, whose
/// sensitivity is below 2. The search returns the smallest grid point whose
/// noisy statistic reaches `density · m`; the average then runs one grid step
/// above it, capped at `ξ_max`.
pub fn unknown_diameter_average<P: PointCloud + ?Sized>(
    points: &P,
    cfg: &DiameterSearchConfig,
    budget: &PrivacyBudget,
    rng: &mut impl Rng,
) -> Result<SearchedAverage> {
    cfg.validate()?;
    let m = points.len();
    let grid = cfg.grid();
    if m == 0 {
        return Err(invalid("robust averaging needs at least one point"));
    }
    let d2 = points.sq_distances();
    let average = |xi: f64, b: PrivacyBudget, rng: &mut _| {
        let req = AverageRequest { diameter: xi, budget: b, outlier_tolerance: cfg.outlier_tolerance };
        average_with_distances(points, &req, d2.as_ref(), rng)
    };
    if grid.len() == 1 {
        let outcome = average(grid[0], *budget, rng)?;
        return Ok(SearchedAverage { outcome, chosen_xi: grid[0], found_index: 0 });
    }
    let parts = budget.split(&[cfg.search_share, 1.0 - cfg.search_share])?;
    let probes = probes_needed(grid.len());
    let probe_budget = parts[0].split(&vec![1.0 / probes as f64; probes])?;
    let mf = m as f64;
    let mut used = 0;
    let mut passes = |idx: usize, rng: &mut _| -> Result<bool> {
        let counts = neighbor_counts(d2.as_ref(), grid[idx]);
        let stat = counts.iter().sum::<usize>() as f64 / mf;
        let noisy = noisy_scalar(stat, 2.0, &probe_budget[used], rng)?;
        used += 1;
        Ok(noisy >= cfg.density * mf)
    };
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if passes(mid, rng)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == grid.len() - 1 && !passes(lo, rng)? {
        return Err(Error::Aborted(AbortReason::NoDenseCore));
    }
    let chosen = (lo + 1).min(grid.len() - 1);
    let outcome = average(grid[chosen], parts[1], rng)?;
    Ok(SearchedAverage { outcome, chosen_xi: grid[chosen], found_index: lo })
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeReport {
    pub max_shift: f64,
    /// `8ξ/m`.
    pub claimed: f64,
    pub trials: usize,
}

impl ProbeReport {
    pub fn within_claim(&self) -> bool {
        self.max_shift <= self.claimed * (1.0 + 1e-9)
    }
}

/// Largest pre-noise shift seen over random single-point replacements.
///
/// Each trial replaces a uniformly chosen point by either a jittered copy
/// of another point (offset up to ξ/2) or a far point at distance 100ξ.
pub fn neighbor_sensitivity_probe(points: MatRef<'_, f64>, xi: f64, trials: usize, rng: &mut impl Rng) -> ProbeReport {
    let (m, dim) = (points.nrows(), points.ncols());
    neighbor_sensitivity_probe_with(points, xi, 0.2, trials, rng, |rng, _victim| {
        let src = rng.gen_range(0..m);
        let dir = random_unit(dim, rng);
        let radius = if rng.gen_bool(0.5) { rng.gen::<f64>() * xi / 2.0 } else { 100.0 * xi };
        (0..dim).map(|j| points[(src, j)] + radius * dir[j]).collect()
    })
}

/// As [`neighbor_sensitivity_probe`] with a caller-supplied replacement rule.
pub fn neighbor_sensitivity_probe_with<R: Rng>(
    points: MatRef<'_, f64>,
    xi: f64,
    tol: f64,
    trials: usize,
    rng: &mut R,
    mut replacement: impl FnMut(&mut R, usize) -> Vec<f64>,
) -> ProbeReport {
    let m = points.nrows();
    let base = pre_noise_average(&DensePoints::new(points), xi, tol).mean;
    let mut work = points.to_owned();
    let mut max_shift: f64 = 0.0;
    for _ in 0..trials {
        let victim = rng.gen_range(0..m);
        let new = replacement(rng, victim);
        let saved: Vec<f64> = (0..work.ncols()).map(|j| work[(victim, j)]).collect();
        for (j, v) in new.iter().enumerate() {
            work[(victim, j)] = *v;
        }
        let moved = pre_noise_average(&DensePoints::new(work.as_ref()), xi, tol).mean;
        let shift = moved.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        max_shift = max_shift.max(shift);
        for (j, v) in saved.iter().enumerate() {
            work[(victim, j)] = *v;
        }
    }
    ProbeReport { max_shift, claimed: SENSITIVITY_FACTOR * xi / m as f64, trials }
}
