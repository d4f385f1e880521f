//! `privsub`: data generation, private estimators and experiment sweeps.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use privsub::baseline::analyze_gauss_zcdp;
use privsub::dataset::{load_any, save_dataset, write_matrix};
use privsub::dp::{PrivacyBudget, PrivacyModel};
use privsub::experiment::{run_experiment, summarize, write_cells_csv, write_summary_csv, ExperimentRun};
use privsub::hardness::{sample_hard_instance, validate_strong_gap, validate_weak_gap, HardParams, Sidecar};
use privsub::linalg::{gap_profile, usefulness_error, UnitRowDataset};
use privsub::pipeline::{l2_error, run_method, MeanConfig, Method};
use privsub::rng::StreamSeed;
use privsub::robust_average::DiameterSearchConfig;
use privsub::subspace::{est_subspace, Aggregator, Diameter, EstimatorConfig};
use privsub::synthetic::{gen_synthetic, SyntheticSpec};
use privsub::Error;

/// Environment variable holding the default worker count.
const THREADS_ENV: &str = "PRIVSUB_THREADS";

#[derive(Parser)]
#[command(name = "privsub", version, about = "Private subspace and mean estimation tools")]
struct Cli {
    /// File of `key = value` defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Input {
    /// Dataset file (DSB1, or CSV if the name ends in .csv).
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Scale rows to unit length instead of rejecting non-unit rows.
    #[arg(long)]
    normalize: bool,
}

#[derive(clap::Args)]
struct Budget {
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregatorArg {
    Ss,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    EstSubspacePipeline,
    AnalyzeGaussPipeline,
    PlainGaussian,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::EstSubspacePipeline => Method::EstSubspace,
            MethodArg::AnalyzeGaussPipeline => Method::AnalyzeGauss,
            MethodArg::PlainGaussian => Method::PlainGaussian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset near a random k-dimensional subspace.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        /// Noise coordinates are ±1/tau. Defaults to 10·d.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Private rank-k subspace by sample and aggregate.
    EstimateSubspace {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        budget: Budget,
        #[arg(long, default_value_t = 125)]
        t: usize,
        /// Reference points; defaults to 10·k.
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, value_enum, default_value_t = AggregatorArg::Ss)]
        aggregator: AggregatorArg,
        /// Known aggregation diameter; searched over [1e-6, 100] when absent.
        #[arg(long)]
        xi: Option<f64>,
        /// Write the k×d basis (DSB1).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Private mean of the rows.
    PrivateMean {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        budget: Budget,
        #[arg(long, value_enum, default_value_t = MethodArg::EstSubspacePipeline)]
        method: MethodArg,
        #[arg(long, default_value_t = 125)]
        t: usize,
        #[arg(long)]
        q: Option<usize>,
        /// Write the estimate, one coordinate per line.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Additive-gap Gaussian subspace baseline (zCDP form). Needs O(d²) memory.
    Baseline {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        budget: Budget,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a padded fingerprinting-code instance and its secret.
    HardInstance {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n0: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0.02)]
        pad_alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON sidecar with the shape, secret and codebook.
        #[arg(long)]
        secret: PathBuf,
    },
    /// Print the spectral gap profile of a dataset around rank k.
    ValidateGaps {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: usize,
    },
    /// Run a sweep and write per-repetition errors as CSV.
    Experiment {
        #[arg(long, value_parser = ["fig1", "fig2", "fig3"])]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-point trimmed means.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<MethodArg>>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the baseline above this dimension.
        #[arg(long)]
        baseline_max_d: Option<usize>,
        /// Worker threads; defaults to $PRIVSUB_THREADS, then the core count.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(input: &Input) -> Result<UnitRowDataset, Error> {
    load_any(&input.input, input.normalize)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    let f = File::create(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(f))
}

fn zcdp(rho: f64, delta: f64) -> Result<PrivacyBudget, Error> {
    if rho.is_infinite() {
        Ok(PrivacyBudget::unlimited(PrivacyModel::Zcdp))
    } else {
        PrivacyBudget::zcdp(rho, delta)
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::GenData { n, d, k, tau, seed, out } => {
            let spec = SyntheticSpec { n, d, k, tau: tau.unwrap_or(10.0 * d as f64) };
            let s = gen_synthetic(&spec, &mut StreamSeed(seed).rng())?;
            save_dataset(&out, &s.data)?;
            println!("wrote {n}x{d} dataset to {}", out.display());
        }
        Command::EstimateSubspace { input, k, budget, t, q, aggregator, xi, out } => {
            let x = load(&input)?;
            let cfg = EstimatorConfig {
                k,
                t,
                q: q.unwrap_or(10 * k),
                diameter: match xi {
                    Some(v) => Diameter::Known(v),
                    None => Diameter::Search(DiameterSearchConfig::default()),
                },
                gamma: None,
                aggregator: match aggregator {
                    AggregatorArg::Ss => Aggregator::Ss,
                    AggregatorArg::Naive => Aggregator::Naive,
                },
                budget: zcdp(budget.rho, budget.delta)?,
            };
            let est = est_subspace(&x, &cfg, StreamSeed(budget.seed))?;
            println!("chosen_xi={}", est.chosen_xi);
            println!("core_weight={}", est.core_weight);
            println!("degenerate={}", est.degenerate);
            println!("usefulness_error={}", usefulness_error(&est.basis, &x)?);
            if let Some(p) = out {
                write_matrix(&p, est.basis.rows())?;
            }
        }
        Command::PrivateMean { input, k, budget, method, t, q, out } => {
            let x = load(&input)?;
            let cfg = MeanConfig { k, rho: budget.rho, delta: budget.delta, t, q: q.unwrap_or(10 * k) };
            let est = run_method(method.into(), &x, &cfg, StreamSeed(budget.seed))?;
            println!("method={}", Method::from(method).name());
            println!("error={}", l2_error(&est.estimate, &x.mean()));
            println!("fallback={}", est.fallback);
            if let Some(note) = &est.note {
                println!("note={note}");
            }
            if let Some(p) = out {
                let mut w = create(&p)?;
                for v in &est.estimate {
                    writeln!(w, "{v}")?;
                }
                w.flush()?;
            }
        }
        Command::Baseline { input, k, budget, out } => {
            let x = load(&input)?;
            let rep = analyze_gauss_zcdp(&x, k, budget.rho, budget.delta, &mut StreamSeed(budget.seed).rng())?;
            println!("true_gap={}", rep.true_gap);
            println!("noisy_gap={}", rep.noisy_gap);
            match rep.noise_std {
                Some(s) => println!("noise_std={s}"),
                None => println!("noise_std="),
            }
            println!("fallback={}", rep.fallback);
            println!("usefulness_error={}", usefulness_error(&rep.basis, &x)?);
            if let Some(p) = out {
                write_matrix(&p, rep.basis.rows())?;
            }
        }
        Command::HardInstance { k, n0, d, pad_alpha, seed, out, secret } => {
            let params = HardParams::from_pad_alpha(k, n0, d, pad_alpha)?;
            let inst = sample_hard_instance(params, &mut StreamSeed(seed).rng())?;
            save_dataset(&out, &inst.y)?;
            Sidecar::of(&inst).save(&secret)?;
            let weak = validate_weak_gap(&inst)?;
            let strong = validate_strong_gap(&inst)?;
            println!("n={} d={} d0={} ell={}", params.n(), params.d(), params.d0, params.ell);
            println!("sigma_k_sq={} bound={} ok={}", weak.sigma_k_sq, weak.sigma_k_sq_bound, weak.sigma_ok());
            println!("tail_ratio={} bound={} ok={}", weak.tail_ratio, weak.tail_ratio_bound, weak.tail_ok());
            println!("gamma1={} ratio_sq={} reference={}", strong.gamma1, strong.ratio_sq, strong.reference);
        }
        Command::ValidateGaps { input, k } => {
            let x = load(&input)?;
            let p = gap_profile(x.as_mat(), k)?;
            let opt = |v: Option<f64>| v.map(|g| g.to_string()).unwrap_or_default();
            println!("gamma1={}", opt(p.gamma1));
            println!("gamma2={}", opt(p.gamma2));
            println!("additive_gap={}", p.additive_gap);
            println!("sigma_k={}", p.sigma_k());
            println!("sigma_k1={}", p.sigma_k1());
            println!("sigma_k_sq_over_nk={}", p.sigma_k_sq_over_nk);
        }
        Command::Experiment { preset, out, summary, reps, methods, rho, delta, seed, baseline_max_d, threads } => {
            let mut run = ExperimentRun::preset(&preset).expect("preset names are checked by the parser");
            if let Some(r) = reps {
                run.repetitions = r;
            }
            if let Some(m) = methods {
                run.methods = m.into_iter().map(Method::from).collect();
                run.methods.sort();
                run.methods.dedup();
            }
            if let Some(r) = rho {
                run.rho = r;
            }
            if let Some(d) = delta {
                run.delta = d;
            }
            if let Some(d) = baseline_max_d {
                run.baseline_max_d = d;
            }
            run.seed = seed;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = thread_count(threads)? {
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let records = pool.install(|| run_experiment(&run))?;
            write_cells_csv(create(&out)?, run.sweep, &records)?;
            let rows = summarize(&records);
            if let Some(p) = summary {
                write_summary_csv(create(&p)?, run.sweep, &rows)?;
            }
            for r in &rows {
                let v = r.trimmed_mean.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
                eprintln!("{:<24} {}={:<8} trimmed_mean={v} fallbacks={} failures={}", r.method.name(), run.sweep.column(), r.sweep_value, r.fallbacks, r.failures);
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Format(_) | Error::NotUnitRow { .. } | Error::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(config::ConfigError::Malformed(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(config::ConfigError::Io(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
