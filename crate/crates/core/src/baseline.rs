//! Comparators: the additive-gap Gaussian subspace algorithm and the plain
//! Gaussian-mechanism mean.
//!
//! The subspace baseline perturbs the d×d projector directly, so it needs
//! O(d²) memory and time.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dp::{gaussian_mechanism, NoiseSpec};
use crate::error::{invalid, Result};
use crate::linalg::{symmetric_topk, truncated_svd, SubspaceBasis, UnitRowDataset};

#[derive(Debug, Clone)]
pub struct AnalyzeGaussReport {
    /// `σ_k² - σ_{k+1}²` before noise.
    pub true_gap: f64,
    /// The noisy gap g.
    pub noisy_gap: f64,
    /// Per-entry std of the symmetric noise matrix. `None` on fallback.
    pub noise_std: Option<f64>,
    pub basis: SubspaceBasis,
    /// The noisy gap was too small: the output is the top-k of a pure noise matrix.
    pub fallback: bool,
}

/// `√(1/(2ρ)) / (g - 2√(ln(1/δ)/ρ) - 2)`, or `None` if the denominator is not positive.
pub fn analyze_gauss_noise_std(g: f64, rho: f64, delta: f64) -> Option<f64> {
    let denom = g - 2.0 * ((1.0 / delta).ln() / rho).sqrt() - 2.0;
    (denom > 0.0).then(|| (1.0 / (2.0 * rho)).sqrt() / denom)
}

/// Std of the Gaussian noise on the gap, `√(2/ρ)`.
pub fn gap_noise_std(rho: f64) -> f64 {
    (2.0 / rho).sqrt()
}

/// `(1 + √(2 ln(1/δ))) / ε`.
pub fn analyze_gauss_delta_eps(eps: f64, delta: f64) -> f64 {
    (1.0 + (2.0 * (1.0 / delta).ln()).sqrt()) / eps
}

/// `Δ_{ε,δ} / (g - 2 ln(1/δ)/ε - 2)`, or `None` if the denominator is not positive.
pub fn analyze_gauss_dp_noise_std(g: f64, eps: f64, delta: f64) -> Option<f64> {
    let denom = g - 2.0 * (1.0 / delta).ln() / eps - 2.0;
    (denom > 0.0).then(|| analyze_gauss_delta_eps(eps, delta) / denom)
}

fn check_inputs(x: &UnitRowDataset, k: usize, param: f64, delta: f64) -> Result<()> {
    if k == 0 || k >= x.n().min(x.d()) {
        return Err(invalid(format!("k = {k} must satisfy 1 <= k < min(n, d)")));
    }
    if !(param > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("privacy parameter must be positive and delta in (0, 1)"));
    }
    Ok(())
}

/// Symmetric d×d matrix with i.i.d. `N(0, s²)` entries on and above the diagonal.
fn symmetric_noise(d: usize, s: f64, rng: &mut impl Rng) -> Mat<f64> {
    let mut w = Mat::<f64>::zeros(d, d);
    if s == 0.0 {
        return w;
    }
    for j in 0..d {
        let col = w.col_as_slice_mut(j);
        for v in col.iter_mut().take(j + 1) {
            *v = s * rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Mirror the upper triangle in cache-sized tiles.
    const TILE: usize = 64;
    for jb in (0..d).step_by(TILE) {
        for ib in (0..=jb).step_by(TILE) {
            for j in jb..(jb + TILE).min(d) {
                for i in ib..(ib + TILE).min(j) {
                    w[(j, i)] = w[(i, j)];
                }
            }
        }
    }
    w
}

fn top_k_of_perturbed(v: MatRef<'_, f64>, k: usize, s: Option<f64>, rng: &mut impl Rng) -> Result<SubspaceBasis> {
    let d = v.ncols();
    let mut w = symmetric_noise(d, s.unwrap_or(1.0), rng);
    if s.is_some() {
        matmul(w.as_mut(), Accum::Add, v.transpose(), v, 1.0, Par::Seq);
    }
    Ok(symmetric_topk(w.as_ref(), k)?.basis)
}

/// `(2ρ, δ)`-zCDP top-k subspace from the projector plus symmetric Gaussian
/// noise scaled by the noisy additive gap.
pub fn analyze_gauss_zcdp(
    x: &UnitRowDataset,
    k: usize,
    rho: f64,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<AnalyzeGaussReport> {
    check_inputs(x, k, rho, delta)?;
    let svd = truncated_svd(x.as_mat(), k + 1)?;
    let s = &svd.singular_values;
    let true_gap = s[k - 1].powi(2) - s[k].powi(2);
    let noisy_gap = true_gap + gap_noise_std(rho) * rng.sample::<f64, _>(StandardNormal);
    let noise_std = analyze_gauss_noise_std(noisy_gap, rho, delta);
    let v = svd.right.subrows(0, k);
    let basis = top_k_of_perturbed(v, k, noise_std, rng)?;
    Ok(AnalyzeGaussReport { true_gap, noisy_gap, noise_std, basis, fallback: noise_std.is_none() })
}

/// The (ε, δ) form: Laplace noise on the gap and `Δ_{ε,δ}`-scaled matrix
/// noise. `(2ε, 2δ)`-DP.
pub fn analyze_gauss_dp(
    x: &UnitRowDataset,
    k: usize,
    eps: f64,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<AnalyzeGaussReport> {
    check_inputs(x, k, eps, delta)?;
    let svd = truncated_svd(x.as_mat(), k + 1)?;
    let s = &svd.singular_values;
    let true_gap = s[k - 1].powi(2) - s[k].powi(2);
    let noisy_gap = true_gap + NoiseSpec::laplace(2.0, eps, 1)?.sample(rng);
    let noise_std = analyze_gauss_dp_noise_std(noisy_gap, eps, delta);
    let v = svd.right.subrows(0, k);
    let basis = top_k_of_perturbed(v, k, noise_std, rng)?;
    Ok(AnalyzeGaussReport { true_gap, noisy_gap, noise_std, basis, fallback: noise_std.is_none() })
}

/// The mean of the rows plus Gaussian noise calibrated to ℓ2 sensitivity
/// `2/n` under ρ-zCDP, i.e. `σ = 2/(n√(2ρ))`.
pub fn plain_gaussian_mean(x: &UnitRowDataset, rho: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    gaussian_mechanism(&x.mean(), 2.0 / x.n() as f64, rho, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn noise_std_formula() {
        let (rho, delta) = (2.0, 1e-5);
        let shift = 2.0 * ((1e5f64).ln() / 2.0).sqrt() + 2.0;
        assert!((shift - 6.7986).abs() < 1e-4);
        let s = analyze_gauss_noise_std(100.0, rho, delta).unwrap();
        assert_eq!(s, (1.0 / 4.0f64).sqrt() / (100.0 - shift));
        assert!(analyze_gauss_noise_std(6.0, rho, delta).is_none());
    }

    #[test]
    fn gap_noise_at_rho_two_is_unit() {
        assert_eq!(gap_noise_std(2.0), 1.0);
        assert_eq!(gap_noise_std(f64::INFINITY), 0.0);
    }

    #[test]
    fn dp_sensitivity_formula() {
        let v = analyze_gauss_delta_eps(0.5, 1e-6);
        assert!((v - (1.0 + (2.0 * 1e6f64.ln()).sqrt()) / 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_matrix_is_symmetric() {
        let w = symmetric_noise(130, 1.0, &mut StreamSeed(3).rng());
        for i in 0..130 {
            for j in 0..130 {
                assert_eq!(w[(i, j)], w[(j, i)]);
            }
        }
        assert!(w[(5, 100)] != 0.0);
    }
}
