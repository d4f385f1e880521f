//! Private mean estimation for points near a k-dimensional subspace.
//!
//! Both projected pipelines spend half of ρ on a rank-k subspace and half on
//! a Gaussian-mechanism mean `x̃` with `σ = 2/(n√ρ)`, then output `Π̃ x̃`.

use crate::baseline::{analyze_gauss_zcdp, plain_gaussian_mean};
use crate::dp::{gaussian_mechanism, PrivacyBudget, PrivacyModel};
use crate::error::{invalid, Error, Result};
use crate::linalg::{SubspaceBasis, UnitRowDataset};
use crate::rng::StreamSeed;
use crate::subspace::{est_subspace, Aggregator, EstimatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    EstSubspace,
    AnalyzeGauss,
    PlainGaussian,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::EstSubspace, Method::AnalyzeGauss, Method::PlainGaussian];

    pub fn name(self) -> &'static str {
        match self {
            Method::EstSubspace => "est_subspace_pipeline",
            Method::AnalyzeGauss => "analyze_gauss_pipeline",
            Method::PlainGaussian => "plain_gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanConfig {
    pub k: usize,
    /// Total zCDP budget; `f64::INFINITY` turns all noise off.
    pub rho: f64,
    pub delta: f64,
    pub t: usize,
    pub q: usize,
}

impl MeanConfig {
    /// ρ = 2, δ = 1e-5, t = 125, q = 10k.
    pub fn experiment_default(k: usize) -> Self {
        Self { k, rho: 2.0, delta: 1e-5, t: 125, q: 10 * k }
    }

    fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("need rho > 0 and delta in (0, 1)"));
        }
        Ok(())
    }

    fn half(&self) -> Result<PrivacyBudget> {
        if self.rho.is_infinite() {
            Ok(PrivacyBudget::unlimited(PrivacyModel::Zcdp))
        } else {
            PrivacyBudget::zcdp(self.rho / 2.0, self.delta)
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanEstimate {
    pub estimate: Vec<f64>,
    /// The subspace step failed or fell back; `estimate` is `x̃` (subspace
    /// aborted) or a projection onto a noise-only subspace (baseline fallback).
    pub fallback: bool,
    pub note: Option<String>,
}

/// `‖a - b‖₂`.
pub fn l2_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn noisy_mean(x: &UnitRowDataset, cfg: &MeanConfig, seed: StreamSeed) -> Result<Vec<f64>> {
    gaussian_mechanism(&x.mean(), 2.0 / x.n() as f64, cfg.rho / 2.0, &mut seed.named("mean").rng())
}

fn project(basis: &SubspaceBasis, v: Vec<f64>, fallback: bool, note: Option<String>) -> MeanEstimate {
    MeanEstimate { estimate: basis.project(&v), fallback, note }
}

/// The subspace step uses [`est_subspace`] with SS aggregation and the
/// unknown-diameter search. If it aborts, the output is `x̃`.
pub fn private_mean_pipeline(x: &UnitRowDataset, cfg: &MeanConfig, seed: StreamSeed) -> Result<MeanEstimate> {
    cfg.check()?;
    let mut est = EstimatorConfig::experiment_default(cfg.k, cfg.half()?);
    est.t = cfg.t;
    est.q = cfg.q;
    est.aggregator = Aggregator::Ss;
    let x_tilde = noisy_mean(x, cfg, seed)?;
    match est_subspace(x, &est, seed.named("subspace")) {
        Ok(s) => {
            let note = s.degenerate.then(|| "degenerate aggregate".to_string());
            Ok(project(&s.basis, x_tilde, false, note))
        }
        Err(Error::Aborted(reason)) => {
            Ok(MeanEstimate { estimate: x_tilde, fallback: true, note: Some(reason.to_string()) })
        }
        Err(e) => Err(e),
    }
}

/// The subspace step is the additive-gap Gaussian algorithm run at ρ/4, which
/// costs ρ/2. Needs O(d²) memory.
pub fn analyze_gauss_pipeline(x: &UnitRowDataset, cfg: &MeanConfig, seed: StreamSeed) -> Result<MeanEstimate> {
    cfg.check()?;
    let x_tilde = noisy_mean(x, cfg, seed)?;
    let rep = analyze_gauss_zcdp(x, cfg.k, cfg.rho / 4.0, cfg.delta, &mut seed.named("baseline").rng())?;
    let note = rep.fallback.then(|| format!("noisy gap {:.3} too small", rep.noisy_gap));
    Ok(project(&rep.basis, x_tilde, rep.fallback, note))
}

/// The Gaussian mechanism on the mean with the whole budget.
pub fn plain_gaussian_pipeline(x: &UnitRowDataset, cfg: &MeanConfig, seed: StreamSeed) -> Result<MeanEstimate> {
    cfg.check()?;
    let estimate = plain_gaussian_mean(x, cfg.rho, &mut seed.named("plain").rng())?;
    Ok(MeanEstimate { estimate, fallback: false, note: None })
}

pub fn run_method(method: Method, x: &UnitRowDataset, cfg: &MeanConfig, seed: StreamSeed) -> Result<MeanEstimate> {
    match method {
        Method::EstSubspace => private_mean_pipeline(x, cfg, seed),
        Method::AnalyzeGauss => analyze_gauss_pipeline(x, cfg, seed),
        Method::PlainGaussian => plain_gaussian_pipeline(x, cfg, seed),
    }
}
