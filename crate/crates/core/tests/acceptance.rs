//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p privsub-core --test acceptance -- 5 6`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use faer::Mat;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use privsub::baseline::{analyze_gauss_noise_std, analyze_gauss_zcdp, gap_noise_std};
use privsub::dp::{NoiseSpec, PrivacyBudget};
use privsub::experiment::{run_experiment, summarize, summary_value, ExperimentRun, SweepVar};
use privsub::hardness::{
    agreement_metrics, extract, sample_hard_instance, validate_weak_gap, ExtractOptions, HardParams,
};
use privsub::linalg::{
    check_usefulness_transfer, gap_profile, projection_distance, svd_topk, Norm, SubspaceBasis, UnitRowDataset,
};
use privsub::pipeline::Method;
use privsub::rng::StreamSeed;
use privsub::robust_average::{neighbor_sensitivity_probe, robust_dp_average, AverageRequest, DensePoints};
use privsub::subspace::subset_closeness_experiment;
use privsub::synthetic::SyntheticSpec;
use privsub::{AbortReason, Error};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fmt_dur(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn trend_run(sweep: SweepVar, grid: Vec<SyntheticSpec>, methods: Vec<Method>, reps: usize, seed: u64) -> ExperimentRun {
    let mut run = ExperimentRun::fig1();
    run.sweep = sweep;
    run.grid = grid;
    run.methods = methods;
    run.repetitions = reps;
    run.seed = seed;
    run
}

fn values(run: &ExperimentRun, method: Method) -> Vec<f64> {
    let rows = summarize(&run_experiment(run).expect("experiment runs"));
    (0..run.grid.len()).map(|p| summary_value(&rows, method, p).unwrap_or(f64::NAN)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let grid = [512, 2048, 8192].map(|d| SyntheticSpec::experiment_default(d, 4)).to_vec();
    let run = trend_run(SweepVar::D, grid, vec![Method::EstSubspace, Method::PlainGaussian], 30, 101);
    let rows = summarize(&run_experiment(&run).expect("experiment runs"));
    let get = |m, p| summary_value(&rows, m, p).unwrap_or(f64::NAN);
    let est = (get(Method::EstSubspace, 0), get(Method::EstSubspace, 2));
    let plain = (get(Method::PlainGaussian, 0), get(Method::PlainGaussian, 2));
    let elapsed = start.elapsed();
    let est_ratio = est.1 / est.0;
    let plain_ratio = plain.1 / plain.0;
    let fallbacks: usize = rows.iter().map(|r| r.fallbacks + r.failures).sum();
    outcome(
        est_ratio <= 2.0 && plain_ratio >= 3.0 && elapsed < Duration::from_secs(20 * 60),
        format!(
            "est_subspace {:.3e} -> {:.3e} (ratio {est_ratio:.2}, need <= 2); plain {:.3e} -> {:.3e} (ratio {plain_ratio:.2}, need >= 3); fallbacks {fallbacks}; {}",
            est.0,
            est.1,
            plain.0,
            plain.1,
            fmt_dur(elapsed)
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let grid = [512, 1024, 2048, 4096].map(|d| SyntheticSpec::experiment_default(d, 4)).to_vec();
    let run = trend_run(SweepVar::D, grid, vec![Method::AnalyzeGauss], 30, 202);
    let v = values(&run, Method::AnalyzeGauss);
    let increasing = v.windows(2).all(|w| w[1] > w[0]);
    let ratio = v[3] / v[0];
    outcome(
        increasing && ratio >= 1.5,
        format!("analyze_gauss errors over d=512..4096: {v:?}; ratio {ratio:.2} (need >= 1.5, strictly increasing); {}", fmt_dur(start.elapsed())),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let ratios = [0.1, 0.3, 1.0, 3.0, 10.0];
    let grid = ratios
        .iter()
        .map(|r| SyntheticSpec { tau: r * 10_000.0, ..SyntheticSpec::experiment_default(10_000, 4) })
        .collect();
    let run = trend_run(SweepVar::TauOverD, grid, vec![Method::EstSubspace, Method::AnalyzeGauss], 10, 303);
    let rows = summarize(&run_experiment(&run).expect("experiment runs"));
    let diff: Vec<f64> = (0..ratios.len())
        .map(|p| {
            summary_value(&rows, Method::EstSubspace, p).unwrap_or(f64::NAN)
                - summary_value(&rows, Method::AnalyzeGauss, p).unwrap_or(f64::NAN)
        })
        .collect();
    // Pattern: not better (diff >= 0) up to some τ, strictly better beyond it.
    let wins: Vec<bool> = diff.iter().map(|&d| d < 0.0).collect();
    let changes = wins.windows(2).filter(|w| w[0] != w[1]).count();
    let pass = !diff.iter().any(|d| d.is_nan()) && changes == 1 && !wins[0] && wins[wins.len() - 1];
    let threshold = wins.iter().position(|&w| w).map(|i| ratios[i]);
    outcome(
        pass,
        format!(
            "est - analyze_gauss at tau/d {ratios:?}: {diff:?}; est wins from tau/d = {threshold:?}; 10 reps per point; {}",
            fmt_dur(start.elapsed())
        ),
    )
}

/// Points `√(1-ε²)·c + ε·z` with c on the unit circle of the first two
/// coordinates and z a unit vector in the remaining ones.
fn two_plane_dataset(n: usize, d: usize, eps: f64, seed: u64) -> UnitRowDataset {
    let mut rng = StreamSeed(seed).rng();
    let mut x = Mat::<f64>::zeros(n, d);
    for i in 0..n {
        let a: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let z: Vec<f64> = (2..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = (1.0 - eps * eps).sqrt();
        x[(i, 0)] = s * a.cos();
        x[(i, 1)] = s * a.sin();
        for (j, v) in z.iter().enumerate() {
            x[(i, j + 2)] = eps * v / zn;
        }
    }
    UnitRowDataset::normalize(x).expect("nonzero rows")
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (n, m, d, k, beta, target) = (62_580, 6_258, 50, 2, 0.2, 0.05);
    // Bisect the noise level until the dataset's γ2 equals the target.
    let (mut lo, mut hi) = (0.0f64, 0.2f64);
    let mut x = two_plane_dataset(n, d, hi, 404);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        x = two_plane_dataset(n, d, mid, 404);
        let g = gap_profile(x.as_mat(), k).unwrap().gamma2.unwrap();
        if g < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma2 = gap_profile(x.as_mat(), k).unwrap().gamma2.unwrap();
    let rep = subset_closeness_experiment(&x, k, m, Norm::Frobenius, 200, beta, &mut StreamSeed(405).rng()).unwrap();
    let max = rep.distances.iter().copied().fold(0.0, f64::max);
    outcome(
        rep.applicable && (gamma2 - target).abs() < 1e-6 && rep.fraction_within >= 0.8,
        format!(
            "gamma2 = {gamma2:.6}; bound {:.4}; max distance {max:.4}; {:.3} of 200 subsets within (need >= 0.80); {}",
            rep.bound,
            rep.fraction_within,
            fmt_dur(start.elapsed())
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let params = HardParams::from_pad_alpha(3, 100, 2000, 0.02).unwrap();
    let (mut both, mut sigma, mut tail) = (0, 0, 0);
    for seed in 0..100 {
        let inst = sample_hard_instance(params, &mut StreamSeed(5000 + seed).rng()).unwrap();
        let r = validate_weak_gap(&inst).unwrap();
        both += r.holds() as usize;
        sigma += r.sigma_ok() as usize;
        tail += r.tail_ok() as usize;
    }
    outcome(
        both >= 85,
        format!("both conditions in {both}/100 seeds (sigma_k {sigma}, tail {tail}; need >= 85); {}", fmt_dur(start.elapsed())),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let params = HardParams::from_pad_alpha(3, 20, 1000, 0.1).unwrap();
    let opts = ExtractOptions::default();
    let (mut agree, mut planted_sum, mut null_sum, mut counted) = (0, 0.0, 0.0, 0);
    for seed in 0..100 {
        let mut rng = StreamSeed(6000 + seed).rng();
        let inst = sample_hard_instance(params, &mut rng).unwrap();
        let x = &inst.codebooks[inst.secret.s].entries;
        let planted = svd_topk(inst.y.as_mat(), params.k).unwrap();
        let e = extract(&inst.secret, &planted, &params, &opts, &mut rng).unwrap();
        let m = agreement_metrics(&e.q, x).unwrap();
        let g = Mat::from_fn(params.k, params.d(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let random = SubspaceBasis::orthonormalize(g.as_ref()).unwrap();
        let e0 = extract(&inst.secret, &random, &params, &opts, &mut rng).unwrap();
        let m0 = agreement_metrics(&e0.q, x).unwrap();
        if let (Some(a), Some(b)) = (m.overall(), m0.overall()) {
            agree += m.strongly_agrees as usize;
            planted_sum += a;
            null_sum += b;
            counted += 1;
        }
    }
    let (planted_mean, null_mean) = (planted_sum / counted as f64, null_sum / counted as f64);
    outcome(
        agree >= 80 && (null_mean - 0.5).abs() <= 0.1 && planted_mean - null_mean >= 0.3,
        format!(
            "planted strongly agrees in {agree}/100 seeds (need >= 80); mean agreement planted {planted_mean:.3}, random {null_mean:.3} (need 0.5 +- 0.1); {counted} seeds with marked columns; {}",
            fmt_dur(start.elapsed())
        ),
    )
}

fn criterion_7() -> Outcome {
    let samples = 1_000_000;
    let mut rng = StreamSeed(7).rng();
    let (lambda, rho) = (3.0, 0.7);
    let g = NoiseSpec::gaussian_zcdp(lambda, rho, 1).unwrap();
    let draws: Vec<f64> = (0..samples).map(|_| g.sample(&mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / samples as f64;
    let std = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64).sqrt();
    let target = lambda / (2.0 * rho).sqrt();
    let g_err = (std / target - 1.0).abs();

    let (l1, eps) = (2.0, 0.5);
    let lap = NoiseSpec::laplace(l1, eps, 1).unwrap();
    let mad = (0..samples).map(|_| lap.sample(&mut rng).abs()).sum::<f64>() / samples as f64;
    let l_err = (mad / (l1 / eps) - 1.0).abs();

    let (rho_ag, delta) = (0.5f64, 1e-5f64);
    let closed = |gap: f64| (1.0 / (2.0 * rho_ag)).sqrt() / (gap - 2.0 * ((1.0 / delta).ln() / rho_ag).sqrt() - 2.0);
    let formula_exact = [20.0, 50.0, 250.0, 1e4].iter().all(|&gap| analyze_gauss_noise_std(gap, rho_ag, delta) == Some(closed(gap)));
    let x = UnitRowDataset::normalize(Mat::from_fn(300, 40, |i, j| if j < 3 { ((i * (j + 1)) % 7) as f64 + 1.0 } else { 0.01 * ((i + j) % 5) as f64 })).unwrap();
    let rep = analyze_gauss_zcdp(&x, 3, rho_ag, delta, &mut StreamSeed(77).rng()).unwrap();
    let report_exact = rep.noise_std == analyze_gauss_noise_std(rep.noisy_gap, rho_ag, delta)
        && rep.noise_std.map_or(true, |s| s == closed(rep.noisy_gap))
        && gap_noise_std(rho_ag) == (2.0 / rho_ag).sqrt();
    outcome(
        g_err <= 0.02 && l_err <= 0.03 && formula_exact && report_exact,
        format!(
            "gaussian std rel err {g_err:.2e} (<= 2%); laplace MAD rel err {l_err:.2e} (<= 3%); AnalyzeGauss std closed form exact: {}",
            formula_exact && report_exact
        ),
    )
}

fn dense_projector(b: &SubspaceBasis) -> DMatrix<f64> {
    let v = b.rows();
    DMatrix::from_fn(b.k(), b.d(), |i, j| v[(i, j)]).transpose() * DMatrix::from_fn(b.k(), b.d(), |i, j| v[(i, j)])
}

fn random_basis(k: usize, d: usize, rng: &mut impl Rng) -> SubspaceBasis {
    let g = Mat::from_fn(k, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    SubspaceBasis::orthonormalize(g.as_ref()).unwrap()
}

fn criterion_8() -> Outcome {
    let mut rng = StreamSeed(8).rng();
    // projection_distance against the materialized d×d difference.
    let mut dist_err: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.gen_range(2..=64);
        let (ka, kb) = (rng.gen_range(1..=d.min(6)), rng.gen_range(1..=d.min(6)));
        let (a, b) = (random_basis(ka, d, &mut rng), random_basis(kb, d, &mut rng));
        let diff = dense_projector(&a) - dense_projector(&b);
        let frob = diff.norm();
        let spec = diff.singular_values().max();
        dist_err = dist_err.max((projection_distance(&a, &b, Norm::Frobenius).unwrap() - frob).abs());
        dist_err = dist_err.max((projection_distance(&a, &b, Norm::Spectral).unwrap() - spec).abs());
    }
    // svd_topk against a dense symmetric eigensolver on XᵀX.
    let mut svd_err: f64 = 0.0;
    for seed in 0..100 {
        let mut r = StreamSeed(800 + seed).rng();
        let (n, d) = (r.gen_range(8..=80), r.gen_range(4..=40));
        let k = r.gen_range(1..=d.min(n).min(5) - 1);
        let x = Mat::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let xn = DMatrix::from_fn(n, d, |i, j| x[(i, j)]);
        let eig = (xn.transpose() * &xn).symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let oracle = Mat::from_fn(k, d, |i, j| eig.eigenvectors[(j, order[i])]);
        let oracle = SubspaceBasis::from_orthonormal_rows(oracle).unwrap();
        let got = svd_topk(x.as_ref(), k).unwrap();
        svd_err = svd_err.max(projection_distance(&got, &oracle, Norm::Frobenius).unwrap());
    }
    // Usefulness transfer on random triples.
    let mut violations = 0;
    for _ in 0..1000 {
        let (n, d) = (rng.gen_range(1..=40), rng.gen_range(2..=30));
        let k = rng.gen_range(1..d);
        let x = UnitRowDataset::normalize(Mat::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap();
        let (p, pt) = (random_basis(k, d, &mut rng), random_basis(k, d, &mut rng));
        violations += !check_usefulness_transfer(&p, &pt, &x).unwrap().holds() as usize;
    }
    outcome(
        dist_err <= 1e-9 && svd_err <= 1e-7 && violations == 0,
        format!("projection_distance max err {dist_err:.1e} (<= 1e-9); svd_topk max distance {svd_err:.1e} (<= 1e-7); usefulness transfer violations {violations}/1000"),
    )
}

/// `m` points: 80% inside a ball of diameter `xi` around a random center,
/// the rest scattered at distance ~10.
fn friendly_points(m: usize, dim: usize, xi: f64, rng: &mut impl Rng) -> Mat<f64> {
    let center: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let core = (4 * m).div_ceil(5);
    let mut x = Mat::<f64>::zeros(m, dim);
    for i in 0..m {
        let dir = privsub::linalg::random_unit(dim, rng);
        let r = if i < core { rng.gen::<f64>() * xi / 2.0 } else { 10.0 + rng.gen::<f64>() };
        for j in 0..dim {
            x[(i, j)] = center[j] + r * dir[j];
        }
    }
    x
}

fn criterion_9() -> Outcome {
    let mut rng = StreamSeed(9).rng();
    let (m, dim, xi) = (200, 10, 0.5);
    let x = friendly_points(m, dim, xi, &mut rng);
    let probe = neighbor_sensitivity_probe(x.as_ref(), xi, 100, &mut rng);
    let req = AverageRequest::new(xi, PrivacyBudget::zcdp(2.0, 1e-5).unwrap());
    let trials = 1000;
    let mut aborts = 0;
    for _ in 0..trials {
        let pts = friendly_points(m, dim, xi, &mut rng);
        match robust_dp_average(&DensePoints::new(pts.as_ref()), &req, &mut rng) {
            Ok(_) => {}
            Err(Error::Aborted(AbortReason::NotFriendly { .. })) => aborts += 1,
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
    let rate = aborts as f64 / trials as f64;
    outcome(
        probe.within_claim() && rate <= 0.05,
        format!(
            "max shift {:.3e} vs 8xi/m = {:.3e} over {} probes; abort rate {rate:.3} at m = {m} (<= 0.05)",
            probe.max_shift, probe.claimed, probe.trials
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("dimension independence of the subspace pipeline", criterion_1),
        ("baseline error grows with d", criterion_2),
        ("tau crossover at d = 10^4", criterion_3),
        ("subset closeness in Frobenius norm", criterion_4),
        ("weak-gap shape of hard instances", criterion_5),
        ("extractor separation", criterion_6),
        ("mechanism calibration", criterion_7),
        ("oracle equivalences", criterion_8),
        ("robust average sensitivity and abort rate", criterion_9),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let r = f();
        failed += !r.pass as usize;
        println!("criterion {id} {}: {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
