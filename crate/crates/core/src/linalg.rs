//! Dense linear algebra on unit-row datasets and rank-k projections.
//!
//! Projections are always stored in factored form: a k×d matrix `V` with
//! orthonormal rows represents `Π = VᵀV`. Nothing here materializes a d×d
//! matrix unless asked to.

use faer::{Mat, MatRef, Side};
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::rng::StreamSeed;

/// Rows must have unit norm within this tolerance.
pub const UNIT_TOL: f64 = 1e-9;
/// Singular (or eigen) values closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-10;
/// Above this `min(n, d)` the SVD switches to the randomized backend.
pub const DENSE_SVD_LIMIT: usize = 512;
const RANGE_OVERSAMPLE: usize = 10;
const RANGE_POWER_ITERS: usize = 4;
const RANGE_SEED: u64 = 0x51D_5EED;
/// Dense symmetric eigensolver up to this dimension, block Krylov above.
pub const DENSE_EIGEN_LIMIT: usize = 1200;

/// An n×d matrix whose rows all have unit Euclidean norm.
#[derive(Debug, Clone)]
pub struct UnitRowDataset {
    data: Mat<f64>,
}

impl UnitRowDataset {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(invalid("dataset must have at least one row and one column"));
        }
        for i in 0..data.nrows() {
            let norm = row_norm(data.as_ref(), i);
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotUnitRow { row: i, norm });
            }
        }
        Ok(Self { data })
    }

    /// Scales every row to unit length. Fails on a zero row.
    pub fn normalize(mut data: Mat<f64>) -> Result<Self> {
        for i in 0..data.nrows() {
            let norm = row_norm(data.as_ref(), i);
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::NotUnitRow { row: i, norm });
            }
            for j in 0..data.ncols() {
                data[(i, j)] /= norm;
            }
        }
        Self::new(data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        Self::new(Mat::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.d()).map(|j| self.data[(i, j)]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.d())
            .map(|j| self.data.col_as_slice(j).iter().sum::<f64>() / n)
            .collect()
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Mat<f64> {
        Mat::from_fn(idx.len(), self.d(), |i, j| self.data[(idx[i], j)])
    }
}

fn row_norm(m: MatRef<'_, f64>, i: usize) -> f64 {
    (0..m.ncols()).map(|j| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt()
}

/// A rank-k orthogonal projection `Π = VᵀV` held as its k×d factor.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    v: Mat<f64>,
    /// Set when the k-th and (k+1)-th spectral values were tied, so the
    /// subspace was not uniquely determined by the input.
    pub ambiguous: bool,
}

impl SubspaceBasis {
    /// Wraps rows that are already orthonormal (checked to 1e-8).
    pub fn from_orthonormal_rows(v: Mat<f64>) -> Result<Self> {
        let k = v.nrows();
        let g = &v * v.transpose();
        for a in 0..k {
            for b in 0..k {
                let target = if a == b { 1.0 } else { 0.0 };
                if (g[(a, b)] - target).abs() > 1e-8 {
                    return Err(Error::Numerical(format!(
                        "basis rows not orthonormal: gram[{a},{b}] = {}",
                        g[(a, b)]
                    )));
                }
            }
        }
        Ok(Self { v, ambiguous: false })
    }

    /// Orthonormalizes arbitrary independent rows (thin QR).
    pub fn orthonormalize(rows: MatRef<'_, f64>) -> Result<Self> {
        let k = rows.nrows();
        if k == 0 || k > rows.ncols() {
            return Err(invalid(format!("cannot orthonormalize {k} rows in dimension {}", rows.ncols())));
        }
        let qr = rows.transpose().qr();
        let r = qr.thin_R();
        let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(1e-300)) {
            return Err(Error::Numerical("rows are linearly dependent".into()));
        }
        let q = qr.compute_thin_Q();
        Ok(Self { v: q.transpose().to_owned(), ambiguous: false })
    }

    pub(crate) fn from_parts(v: Mat<f64>, ambiguous: bool) -> Self {
        Self { v, ambiguous }
    }

    pub fn k(&self) -> usize {
        self.v.nrows()
    }

    pub fn d(&self) -> usize {
        self.v.ncols()
    }

    /// The k×d factor `V`.
    pub fn rows(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    /// `Π x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let xv = MatRef::from_column_major_slice(x, x.len(), 1);
        let c = &self.v * xv;
        let p = self.v.transpose() * &c;
        (0..self.d()).map(|j| p[(j, 0)]).collect()
    }

    /// Dense d×d projector. Only for small d and tests.
    pub fn projector(&self) -> Mat<f64> {
        self.v.transpose() * &self.v
    }

    /// `‖Π Xᵀ‖_F²`, the energy of the rows of `x` captured by the subspace.
    pub fn captured_energy(&self, x: MatRef<'_, f64>) -> f64 {
        let c = x * self.v.transpose();
        frob_sq(c.as_ref())
    }
}

pub fn frob_sq(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s
}

pub(crate) fn gaussian_mat(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn orth_cols(m: MatRef<'_, f64>) -> Mat<f64> {
    m.qr().compute_thin_Q()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdBackend {
    Dense,
    Randomized,
}

/// Leading singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    /// r×d, rows are right singular vectors.
    pub right: Mat<f64>,
    /// n×r, columns are left singular vectors.
    pub left: Mat<f64>,
    pub backend: SvdBackend,
}

pub fn backend_for(n: usize, d: usize) -> SvdBackend {
    if n.min(d) <= DENSE_SVD_LIMIT {
        SvdBackend::Dense
    } else {
        SvdBackend::Randomized
    }
}

/// Top-`r` SVD. Dense when `min(n, d) ≤ 512`, otherwise a randomized range
/// finder with a fixed internal seed, so results are deterministic.
pub fn truncated_svd(x: MatRef<'_, f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, d) = (x.nrows(), x.ncols());
    let full = n.min(d);
    if r == 0 || r > full {
        return Err(invalid(format!("rank {r} out of range for a {n}x{d} matrix")));
    }
    match backend_for(n, d) {
        SvdBackend::Dense => {
            let svd = x.thin_svd().map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
            let s = svd.S().column_vector();
            Ok(TruncatedSvd {
                singular_values: (0..r).map(|i| s[i]).collect(),
                right: svd.V().subcols(0, r).transpose().to_owned(),
                left: svd.U().subcols(0, r).to_owned(),
                backend: SvdBackend::Dense,
            })
        }
        SvdBackend::Randomized => randomized_svd(x, r),
    }
}

fn randomized_svd(x: MatRef<'_, f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, d) = (x.nrows(), x.ncols());
    let l = (r + RANGE_OVERSAMPLE).min(n.min(d));
    let mut rng = StreamSeed(RANGE_SEED).rng();
    let omega = gaussian_mat(d, l, &mut rng);
    let mut q = orth_cols((x * &omega).as_ref());
    for _ in 0..RANGE_POWER_ITERS {
        let z = orth_cols((x.transpose() * &q).as_ref());
        q = orth_cols((x * &z).as_ref());
    }
    let b = q.transpose() * x;
    let svd = b.thin_svd().map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let left = &q * svd.U().subcols(0, r);
    Ok(TruncatedSvd {
        singular_values: (0..r).map(|i| s[i]).collect(),
        right: svd.V().subcols(0, r).transpose().to_owned(),
        left,
        backend: SvdBackend::Randomized,
    })
}

/// All `min(n, d)` singular values, nonincreasing. Always dense.
pub fn singular_values(x: MatRef<'_, f64>) -> Result<Vec<f64>> {
    x.singular_values().map_err(|e| Error::Numerical(format!("svd: {e:?}")))
}

/// Orthonormal basis of the top-k right singular subspace of `x`.
///
/// `ambiguous` is set when `σ_k - σ_{k+1} ≤ 1e-10`, or when `σ_k` itself is
/// zero and the subspace is not the whole space.
pub fn svd_topk(x: MatRef<'_, f64>, k: usize) -> Result<SubspaceBasis> {
    let (n, d) = (x.nrows(), x.ncols());
    let full = n.min(d);
    if k == 0 || k > full {
        return Err(invalid(format!("k = {k} out of range for a {n}x{d} matrix")));
    }
    let r = if k < full { k + 1 } else { k };
    let svd = truncated_svd(x, r)?;
    let s = &svd.singular_values;
    let next = if k < full { s[k] } else { 0.0 };
    let ambiguous = k < d && s[k - 1] - next <= TIE_TOL;
    let v = svd.right.subrows(0, k).to_owned();
    Ok(SubspaceBasis::from_parts(v, ambiguous))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Frobenius,
    Spectral,
}

/// `(I - Π_b) V_aᵀ`, returned transposed as a k_a×d matrix.
fn residual(a: &SubspaceBasis, b: &SubspaceBasis) -> Mat<f64> {
    let m = a.rows() * b.rows().transpose();
    let mut r = a.rows().to_owned();
    r -= &m * b.rows();
    r
}

/// `‖Π_a - Π_b‖` without materializing either projector.
///
/// Uses `‖Π_a - Π_b‖_F² = ‖(I-Π_b)Π_a‖_F² + ‖(I-Π_a)Π_b‖_F²` and
/// `‖Π_a - Π_b‖ = max(‖(I-Π_b)Π_a‖, ‖(I-Π_a)Π_b‖)`, which stay accurate when the
/// subspaces nearly coincide.
pub fn projection_distance(a: &SubspaceBasis, b: &SubspaceBasis, norm: Norm) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch { expected: a.d(), got: b.d() });
    }
    let ra = residual(a, b);
    let rb = residual(b, a);
    Ok(match norm {
        Norm::Frobenius => (frob_sq(ra.as_ref()) + frob_sq(rb.as_ref())).sqrt(),
        Norm::Spectral => {
            let top = |m: &Mat<f64>| -> Result<f64> {
                Ok(singular_values(m.as_ref())?.first().copied().unwrap_or(0.0))
            };
            top(&ra)?.max(top(&rb)?).min(1.0)
        }
    })
}

/// Spectral summary of a dataset around rank k.
#[derive(Debug, Clone)]
pub struct GapProfile {
    pub k: usize,
    pub n: usize,
    /// The top `min(k+1, rank)` singular values.
    pub sigma: Vec<f64>,
    pub frobenius_sq: f64,
    /// `σ_{k+1} / σ_k`; `None` when `σ_k = 0`. On the randomized backend
    /// `σ_{k+1}` is a Ritz value and can fall a few percent short when the tail
    /// is flat. `gamma2` goes through the Frobenius norm and stays exact.
    pub gamma1: Option<f64>,
    /// `sqrt(Σ_{i>k} σ_i²) / σ_k`; `None` when `σ_k = 0`.
    pub gamma2: Option<f64>,
    /// `σ_k² - σ_{k+1}²`.
    pub additive_gap: f64,
    /// `σ_k² k / n`.
    pub sigma_k_sq_over_nk: f64,
}

impl GapProfile {
    pub fn sigma_k(&self) -> f64 {
        self.sigma[self.k - 1]
    }

    pub fn sigma_k1(&self) -> f64 {
        self.sigma.get(self.k).copied().unwrap_or(0.0)
    }

    pub fn tail_sq(&self) -> f64 {
        let head: f64 = self.sigma[..self.k].iter().map(|s| s * s).sum();
        (self.frobenius_sq - head).max(0.0)
    }

    /// Multiplicative gap condition used by the Frobenius-closeness estimators.
    pub fn weak_easy(&self, gamma: f64) -> bool {
        self.gamma2.is_some_and(|g| g <= gamma)
    }

    /// Multiplicative gap condition used by the spectral-closeness estimator.
    pub fn strong_easy(&self, gamma: f64) -> bool {
        self.gamma1.is_some_and(|g| g <= gamma)
    }
}

pub fn gap_profile(x: MatRef<'_, f64>, k: usize) -> Result<GapProfile> {
    let (n, d) = (x.nrows(), x.ncols());
    let full = n.min(d);
    if k == 0 || k > full {
        return Err(invalid(format!("k = {k} out of range for a {n}x{d} matrix")));
    }
    let r = if k < full { k + 1 } else { k };
    let sigma = truncated_svd(x, r)?.singular_values;
    let frobenius_sq = frob_sq(x);
    let sk = sigma[k - 1];
    let sk1 = sigma.get(k).copied().unwrap_or(0.0);
    let head: f64 = sigma[..k].iter().map(|s| s * s).sum();
    let tail = (frobenius_sq - head).max(0.0);
    let ratio = |num: f64| (sk > 0.0).then(|| num / sk);
    Ok(GapProfile {
        k,
        n,
        gamma1: ratio(sk1),
        gamma2: ratio(tail.sqrt()),
        additive_gap: sk * sk - sk1 * sk1,
        sigma_k_sq_over_nk: sk * sk * k as f64 / n as f64,
        sigma,
        frobenius_sq,
    })
}

/// `(‖Π* Xᵀ‖_F² - ‖Π Xᵀ‖_F²) / n`, where Π* is the optimal rank-k projection.
///
/// Clamped at zero: the randomized backend can land a hair below the optimum.
pub fn usefulness_error(candidate: &SubspaceBasis, x: &UnitRowDataset) -> Result<f64> {
    if candidate.d() != x.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: candidate.d() });
    }
    let k = candidate.k();
    let best: f64 = truncated_svd(x.as_mat(), k)?.singular_values.iter().map(|s| s * s).sum();
    let got = candidate.captured_energy(x.as_mat());
    Ok(((best - got) / x.n() as f64).max(0.0))
}

/// Perturbation check between an exact rank-k matrix and a noisy copy.
#[derive(Debug, Clone)]
pub struct PerturbationReport {
    /// `‖P - P'‖_F`.
    pub alpha: f64,
    pub sigma_k: f64,
    /// The singular-value separation precondition `σ_k(P) ≥ 2α`.
    pub applicable: bool,
    /// `‖Π - Π'‖_F` between the top-k right singular subspaces.
    pub distance: f64,
    /// `2√2 α / (σ_k - α)`.
    pub bound: f64,
    pub usefulness: UsefulnessTransfer,
}

impl PerturbationReport {
    /// `None` when the precondition fails.
    pub fn holds(&self) -> Option<bool> {
        self.applicable.then(|| self.distance <= self.bound * (1.0 + 1e-12) + 1e-12)
    }
}

/// `‖ΠXᵀ‖_F² - ‖Π̃Xᵀ‖_F²` against `2n‖Π - Π̃‖_F`.
#[derive(Debug, Clone, Copy)]
pub struct UsefulnessTransfer {
    pub lhs: f64,
    pub rhs: f64,
}

impl UsefulnessTransfer {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-9
    }
}

pub fn check_usefulness_transfer(
    pi: &SubspaceBasis,
    pi_tilde: &SubspaceBasis,
    x: &UnitRowDataset,
) -> Result<UsefulnessTransfer> {
    let dist = projection_distance(pi, pi_tilde, Norm::Frobenius)?;
    let lhs = pi.captured_energy(x.as_mat()) - pi_tilde.captured_energy(x.as_mat());
    Ok(UsefulnessTransfer { lhs, rhs: 2.0 * x.n() as f64 * dist })
}

/// Compares the top-k subspaces of `p` and `p_prime`. The usefulness half
/// uses the nonzero rows of `p`, normalized, as the dataset.
pub fn check_perturbation_bound(
    p: MatRef<'_, f64>,
    p_prime: MatRef<'_, f64>,
    k: usize,
) -> Result<PerturbationReport> {
    if p.nrows() != p_prime.nrows() || p.ncols() != p_prime.ncols() {
        return Err(Error::DimensionMismatch { expected: p.nrows() * p.ncols(), got: p_prime.nrows() * p_prime.ncols() });
    }
    let mut diff = p.to_owned();
    diff -= p_prime;
    let alpha = frob_sq(diff.as_ref()).sqrt();
    let sigma_k = truncated_svd(p, k)?.singular_values[k - 1];
    let pi = svd_topk(p, k)?;
    let pi_prime = svd_topk(p_prime, k)?;
    let distance = projection_distance(&pi, &pi_prime, Norm::Frobenius)?;
    let bound = 2.0 * 2f64.sqrt() * alpha / (sigma_k - alpha);
    let keep: Vec<usize> = (0..p.nrows()).filter(|&i| row_norm(p, i) > 0.0).collect();
    let rows = Mat::from_fn(keep.len(), p.ncols(), |i, j| p[(keep[i], j)]);
    let x = UnitRowDataset::normalize(rows)?;
    let usefulness = check_usefulness_transfer(&pi, &pi_prime, &x)?;
    Ok(PerturbationReport {
        alpha,
        sigma_k,
        applicable: sigma_k >= 2.0 * alpha,
        distance,
        bound,
        usefulness,
    })
}

/// Leading eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricTopK {
    /// Nonincreasing, length k.
    pub values: Vec<f64>,
    pub basis: SubspaceBasis,
}

/// Top-k (largest algebraic) eigenvectors of a symmetric matrix.
///
/// Dense for `d ≤ DENSE_EIGEN_LIMIT`, otherwise block Krylov with full
/// reorthogonalization started from a fixed-seed random block.
pub fn symmetric_topk(a: MatRef<'_, f64>, k: usize) -> Result<SymmetricTopK> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: a.ncols() });
    }
    if k == 0 || k > d {
        return Err(invalid(format!("k = {k} out of range for dimension {d}")));
    }
    if d <= DENSE_EIGEN_LIMIT {
        symmetric_topk_dense(a, k)
    } else {
        symmetric_topk_krylov(a, k, KrylovOptions::default())
    }
}

fn symmetric_topk_dense(a: MatRef<'_, f64>, k: usize) -> Result<SymmetricTopK> {
    let d = a.nrows();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigen: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..k).map(|i| s[d - 1 - i]).collect();
    let v = Mat::from_fn(k, d, |i, j| u[(j, d - 1 - i)]);
    let ambiguous = k < d && values[k - 1] - s[d - 1 - k] <= TIE_TOL;
    Ok(SymmetricTopK { values, basis: SubspaceBasis::from_parts(v, ambiguous) })
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub extra_block: usize,
    pub max_steps: usize,
    /// Stop once every Ritz residual is below `tol · max|θ|`.
    pub tol: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { extra_block: 6, max_steps: 60, tol: 1e-9 }
    }
}

pub fn symmetric_topk_krylov(a: MatRef<'_, f64>, k: usize, opts: KrylovOptions) -> Result<SymmetricTopK> {
    let d = a.nrows();
    let b = (k + opts.extra_block).min(d);
    let mut rng = StreamSeed(RANGE_SEED).named("krylov").rng();
    let mut q_all: Mat<f64> = orth_cols(gaussian_mat(d, b, &mut rng).as_ref());
    let mut z_all: Mat<f64> = Mat::zeros(d, 0);
    let mut best: Option<SymmetricTopK> = None;
    let mut t_prev: Mat<f64> = Mat::zeros(0, 0);
    for _step in 0..opts.max_steps {
        let m = q_all.ncols();
        let start = z_all.ncols();
        let z_new = a * q_all.subcols(start, m - start);
        z_all = hcat(z_all.as_ref(), z_new.as_ref());
        // Rayleigh quotient T = Qᵀ A Q, extended by the new columns only.
        let t_cols = q_all.transpose() * &z_new;
        let mut t = Mat::from_fn(m, m, |i, j| {
            if i < start && j < start {
                t_prev[(i, j)]
            } else if j >= start && i >= start {
                0.5 * (t_cols[(i, j - start)] + t_cols[(j, i - start)])
            } else if j >= start {
                t_cols[(i, j - start)]
            } else {
                t_cols[(j, i - start)]
            }
        });
        for i in start..m {
            for j in 0..start {
                let s = 0.5 * (t[(i, j)] + t[(j, i)]);
                t[(i, j)] = s;
                t[(j, i)] = s;
            }
        }
        t_prev = t.clone();
        let evd = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigen: {e:?}")))?;
        let theta = evd.S().column_vector();
        let y = evd.U();
        let kk = k.min(m);
        let sel = Mat::from_fn(m, kk, |i, c| y[(i, m - 1 - c)]);
        let values: Vec<f64> = (0..kk).map(|c| theta[m - 1 - c]).collect();
        let ritz = &q_all * &sel;
        let mut resid = &z_all * &sel;
        for c in 0..kk {
            for i in 0..d {
                resid[(i, c)] -= values[c] * ritz[(i, c)];
            }
        }
        let scale = (0..m).map(|i| theta[i].abs()).fold(0.0, f64::max).max(1e-300);
        let worst = (0..kk)
            .map(|c| resid.col_as_slice(c).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if kk == k {
            let next = if m > k { theta[m - 1 - k] } else { f64::NEG_INFINITY };
            let ambiguous = values[k - 1] - next <= TIE_TOL;
            best = Some(SymmetricTopK {
                values: values.clone(),
                basis: SubspaceBasis::from_parts(ritz.transpose().to_owned(), ambiguous),
            });
            if worst <= opts.tol * scale {
                break;
            }
        }
        if m + b > d {
            break;
        }
        // Next block: the newest images, orthogonalized twice against the basis.
        let mut w = z_new;
        for _ in 0..2 {
            let c = q_all.transpose() * &w;
            w -= &q_all * &c;
        }
        let qr = w.qr();
        let r = qr.thin_R();
        let rmax = (0..r.ncols().min(r.nrows())).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if rmax <= 1e-12 * scale {
            break;
        }
        let w = qr.compute_thin_Q();
        // One more projection pass keeps the basis orthonormal to working precision.
        let c = q_all.transpose() * &w;
        let mut w2 = w;
        w2 -= &q_all * &c;
        let w2 = orth_cols(w2.as_ref());
        q_all = hcat(q_all.as_ref(), w2.as_ref());
    }
    best.ok_or_else(|| Error::Numerical("krylov iteration produced no Ritz vectors".into()))
}

fn hcat(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let (d, na, nb) = (a.nrows(), a.ncols(), b.ncols());
    Mat::from_fn(d, na + nb, |i, j| if j < na { a[(i, j)] } else { b[(i, j - na)] })
}

/// Random unit vector in R^d.
pub fn random_unit(d: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
