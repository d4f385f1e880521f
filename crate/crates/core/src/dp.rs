//! Privacy budgets and the base noise mechanisms.
//!
//! Accounting is by explicit splitting only. A budget lives in one model
//! (pure/approximate DP or zCDP) and is never converted to the other.
//! An infinite `eps_or_rho` means "noise off" and exists for tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivacyModel {
    /// (ε, δ)-DP. With δ = 0 this is pure DP.
    PureDp,
    /// δ-approximate ρ-zCDP.
    Zcdp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub model: PrivacyModel,
    pub eps_or_rho: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(model: PrivacyModel, eps_or_rho: f64, delta: f64) -> Result<Self> {
        if !(eps_or_rho > 0.0) {
            return Err(invalid(format!("privacy parameter must be positive, got {eps_or_rho}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { model, eps_or_rho, delta })
    }

    pub fn zcdp(rho: f64, delta: f64) -> Result<Self> {
        Self::new(PrivacyModel::Zcdp, rho, delta)
    }

    pub fn approx_dp(eps: f64, delta: f64) -> Result<Self> {
        Self::new(PrivacyModel::PureDp, eps, delta)
    }

    /// Noise-off sentinel: every mechanism calibrated from it adds zero noise.
    pub fn unlimited(model: PrivacyModel) -> Self {
        Self { model, eps_or_rho: f64::INFINITY, delta: 0.0 }
    }

    pub fn is_unlimited(&self) -> bool {
        self.eps_or_rho.is_infinite()
    }

    /// Splits into children proportional to `fractions`. The last child takes
    /// whatever remains, so the children sum back to the parent.
    pub fn split(&self, fractions: &[f64]) -> Result<Vec<PrivacyBudget>> {
        split_budget(self, fractions)
    }
}

pub fn split_budget(parent: &PrivacyBudget, fractions: &[f64]) -> Result<Vec<PrivacyBudget>> {
    split_budget_with(parent, fractions, fractions)
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(invalid("split fractions must be positive and finite"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("split fractions sum to {total}, not 1")));
    }
    Ok(())
}

/// Conserving split of a scalar: the last share takes the remainder.
fn split_scalar(total: f64, fractions: &[f64]) -> Vec<f64> {
    if total.is_infinite() {
        return vec![total; fractions.len()];
    }
    let mut out: Vec<f64> = fractions[..fractions.len() - 1].iter().map(|f| total * f).collect();
    let used: f64 = out.iter().sum();
    out.push((total - used).max(0.0));
    out
}

/// Like [`split_budget`] but with separate fractions for the privacy
/// parameter and for δ.
pub fn split_budget_with(
    parent: &PrivacyBudget,
    fractions: &[f64],
    delta_fractions: &[f64],
) -> Result<Vec<PrivacyBudget>> {
    check_fractions(fractions)?;
    check_fractions(delta_fractions)?;
    if fractions.len() != delta_fractions.len() {
        return Err(invalid("privacy and delta fractions must have the same length"));
    }
    let vals = split_scalar(parent.eps_or_rho, fractions);
    let deltas = split_scalar(parent.delta, delta_fractions);
    Ok(vals
        .into_iter()
        .zip(deltas)
        .map(|(v, d)| PrivacyBudget { model: parent.model, eps_or_rho: v, delta: d })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Laplace,
}

/// Calibrated noise for a given sensitivity and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// ℓ2 for Gaussian, ℓ1 for Laplace.
    pub sensitivity: f64,
    /// Gaussian std or Laplace scale.
    pub sigma_or_scale: f64,
    pub dimension: usize,
}

impl NoiseSpec {
    /// `σ = λ / √(2ρ)`.
    pub fn gaussian_zcdp(sensitivity: f64, rho: f64, dimension: usize) -> Result<Self> {
        check_params(sensitivity, rho)?;
        Ok(Self {
            kind: NoiseKind::Gaussian,
            sensitivity,
            sigma_or_scale: sensitivity / (2.0 * rho).sqrt(),
            dimension,
        })
    }

    /// Classical (ε, δ) Gaussian calibration `σ = λ √(2 ln(1.25/δ)) / ε`.
    pub fn gaussian_approx_dp(sensitivity: f64, eps: f64, delta: f64, dimension: usize) -> Result<Self> {
        check_params(sensitivity, eps)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("the (ε, δ) Gaussian mechanism needs δ in (0, 1)"));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian,
            sensitivity,
            sigma_or_scale: sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / eps,
            dimension,
        })
    }

    /// `b = λ₁ / ε`.
    pub fn laplace(l1_sensitivity: f64, eps: f64, dimension: usize) -> Result<Self> {
        check_params(l1_sensitivity, eps)?;
        Ok(Self {
            kind: NoiseKind::Laplace,
            sensitivity: l1_sensitivity,
            sigma_or_scale: l1_sensitivity / eps,
            dimension,
        })
    }

    /// Gaussian noise in whichever model the budget is expressed in.
    pub fn gaussian_for(sensitivity: f64, budget: &PrivacyBudget, dimension: usize) -> Result<Self> {
        match budget.model {
            PrivacyModel::Zcdp => Self::gaussian_zcdp(sensitivity, budget.eps_or_rho, dimension),
            PrivacyModel::PureDp if budget.is_unlimited() => Self::gaussian_zcdp(sensitivity, f64::INFINITY, dimension),
            PrivacyModel::PureDp => Self::gaussian_approx_dp(sensitivity, budget.eps_or_rho, budget.delta, dimension),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma_or_scale == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Gaussian => self.sigma_or_scale * rng.sample::<f64, _>(StandardNormal),
            NoiseKind::Laplace => self.sigma_or_scale * sample_laplace(rng),
        }
    }

    /// Adds one independent draw to every coordinate.
    pub fn perturb(&self, v: &mut [f64], rng: &mut impl Rng) {
        if self.sigma_or_scale == 0.0 {
            return;
        }
        for x in v.iter_mut() {
            *x += self.sample(rng);
        }
    }
}

fn check_params(sensitivity: f64, param: f64) -> Result<()> {
    if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
        return Err(invalid(format!("sensitivity must be finite and non-negative, got {sensitivity}")));
    }
    if !(param > 0.0) {
        return Err(invalid(format!("privacy parameter must be positive, got {param}")));
    }
    Ok(())
}

/// Standard Laplace draw by inversion.
fn sample_laplace(rng: &mut impl Rng) -> f64 {
    // u uniform on (-1/2, 1/2), excluding the endpoint that would give ln(0).
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let a = 1.0 - 2.0 * u.abs();
        if a > 0.0 {
            return -u.signum() * a.ln();
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(invalid(format!("non-finite input at coordinate {i}"))),
        None => Ok(()),
    }
}

/// `v + N(0, σ² I)` with `σ = sensitivity / √(2ρ)`.
pub fn gaussian_mechanism(v: &[f64], sensitivity: f64, rho: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check_finite(v)?;
    let spec = NoiseSpec::gaussian_zcdp(sensitivity, rho, v.len())?;
    let mut out = v.to_vec();
    spec.perturb(&mut out, rng);
    Ok(out)
}

/// `v + Lap(b)^D` with `b = l1_sensitivity / ε`.
pub fn laplace_mechanism(v: &[f64], l1_sensitivity: f64, eps: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check_finite(v)?;
    let spec = NoiseSpec::laplace(l1_sensitivity, eps, v.len())?;
    let mut out = v.to_vec();
    spec.perturb(&mut out, rng);
    Ok(out)
}

/// Noise on a scalar statistic in the budget's native model: Gaussian with
/// ℓ2 calibration under zCDP, Laplace under (ε, δ)-DP.
pub fn noisy_scalar(value: f64, sensitivity: f64, budget: &PrivacyBudget, rng: &mut impl Rng) -> Result<f64> {
    let spec = match budget.model {
        PrivacyModel::Zcdp => NoiseSpec::gaussian_zcdp(sensitivity, budget.eps_or_rho, 1)?,
        PrivacyModel::PureDp => NoiseSpec::laplace(sensitivity, budget.eps_or_rho, 1)?,
    };
    if !value.is_finite() {
        return Err(Error::InvalidArgument("non-finite statistic".into()));
    }
    Ok(value + spec.sample(rng))
}
