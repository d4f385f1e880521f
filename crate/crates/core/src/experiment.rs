//! Seeded sweeps over synthetic datasets with trimmed-mean summaries.
//!
//! Every (grid point, repetition) cell draws one dataset and runs all
//! requested methods on it. Cells run on the current rayon pool; results are
//! sorted before they are returned, so output does not depend on scheduling.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::pipeline::{l2_error, run_method, MeanConfig, Method};
use crate::rng::StreamSeed;
use crate::synthetic::{gen_synthetic, SyntheticSpec};

/// Lower and upper trimming quantiles.
pub const TRIM: (f64, f64) = (0.1, 0.9);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    D,
    K,
    TauOverD,
}

impl SweepVar {
    pub fn column(self) -> &'static str {
        match self {
            SweepVar::D => "d",
            SweepVar::K => "k",
            SweepVar::TauOverD => "tau_over_d",
        }
    }

    pub fn value(self, p: &SyntheticSpec) -> f64 {
        match self {
            SweepVar::D => p.d as f64,
            SweepVar::K => p.k as f64,
            SweepVar::TauOverD => p.tau / p.d as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub sweep: SweepVar,
    pub grid: Vec<SyntheticSpec>,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub rho: f64,
    pub delta: f64,
    pub t: usize,
    /// Reference points per unit of k (q = q_per_k · k).
    pub q_per_k: usize,
    /// The additive-gap baseline is skipped above this dimension.
    pub baseline_max_d: usize,
    pub seed: u64,
}

impl ExperimentRun {
    fn base(sweep: SweepVar, grid: Vec<SyntheticSpec>) -> Self {
        Self {
            sweep,
            grid,
            repetitions: 30,
            methods: Method::ALL.to_vec(),
            rho: 2.0,
            delta: 1e-5,
            t: 125,
            q_per_k: 10,
            baseline_max_d: 10_000,
            seed: 0,
        }
    }

    /// k = 4, τ = 10d, n = 1000, d from 512 to 8192.
    pub fn fig1() -> Self {
        let grid = [512, 1024, 2048, 4096, 8192].map(|d| SyntheticSpec::experiment_default(d, 4)).to_vec();
        Self::base(SweepVar::D, grid)
    }

    /// d = 10⁴, τ = 10d, n = 250·k, k from 2 to 10.
    pub fn fig2() -> Self {
        let grid = [2, 4, 6, 8, 10].map(|k| SyntheticSpec::experiment_default(10_000, k)).to_vec();
        Self::base(SweepVar::K, grid)
    }

    /// d = 10⁴, k = 4, n = 1000, τ/d from 0.003 to 10.
    pub fn fig3() -> Self {
        let grid = [0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 10.0]
            .map(|r| SyntheticSpec { tau: r * 10_000.0, ..SyntheticSpec::experiment_default(10_000, 4) })
            .to_vec();
        Self::base(SweepVar::TauOverD, grid)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fig1" => Some(Self::fig1()),
            "fig2" => Some(Self::fig2()),
            "fig3" => Some(Self::fig3()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(invalid("experiment grid is empty"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no methods selected"));
        }
        for p in &self.grid {
            p.validate()?;
        }
        Ok(())
    }

    pub fn mean_config(&self, k: usize) -> MeanConfig {
        MeanConfig { k, rho: self.rho, delta: self.delta, t: self.t, q: self.q_per_k * k }
    }
}

/// Seeds of one cell: the dataset stream and the stream handed to every method.
pub fn cell_seeds(seed: u64, point: usize, rep: usize) -> (StreamSeed, StreamSeed) {
    let root = StreamSeed(seed);
    let data = root.named("data").child(point as u64).child(rep as u64);
    let method = root.named("method").child(point as u64).child(rep as u64);
    (data, method)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Fallback,
    Failed(String),
}

impl Status {
    pub fn label(&self) -> &str {
        match self {
            Status::Ok => "ok",
            Status::Fallback => "fallback",
            Status::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellRecord {
    pub method: Method,
    pub point: usize,
    pub sweep_value: f64,
    pub rep: usize,
    /// `NaN` when the cell failed.
    pub error: f64,
    pub status: Status,
}

fn run_cell(run: &ExperimentRun, point: usize, rep: usize) -> Vec<CellRecord> {
    let spec = &run.grid[point];
    let (data_seed, method_seed) = cell_seeds(run.seed, point, rep);
    let sweep_value = run.sweep.value(spec);
    let record = |method, error, status| CellRecord { method, point, sweep_value, rep, error, status };
    let methods = run.methods.iter().filter(|&&m| m != Method::AnalyzeGauss || spec.d <= run.baseline_max_d);
    let data = match gen_synthetic(spec, &mut data_seed.rng()) {
        Ok(s) => s.data,
        Err(e) => return methods.map(|&m| record(m, f64::NAN, Status::Failed(e.to_string()))).collect(),
    };
    let mean = data.mean();
    let cfg = run.mean_config(spec.k);
    methods
        .map(|&m| match run_method(m, &data, &cfg, method_seed) {
            Ok(est) => {
                let status = if est.fallback { Status::Fallback } else { Status::Ok };
                record(m, l2_error(&est.estimate, &mean), status)
            }
            Err(e) => record(m, f64::NAN, Status::Failed(e.to_string())),
        })
        .collect()
}

/// Runs every cell. Per-cell failures become [`Status::Failed`] records.
pub fn run_experiment(run: &ExperimentRun) -> Result<Vec<CellRecord>> {
    run.validate()?;
    let cells: Vec<(usize, usize)> =
        (0..run.grid.len()).flat_map(|p| (0..run.repetitions).map(move |r| (p, r))).collect();
    let mut out: Vec<CellRecord> = cells.into_par_iter().flat_map_iter(|(p, r)| run_cell(run, p, r)).collect();
    out.sort_by_key(|c| (c.method, c.point, c.rep));
    Ok(out)
}

/// Mean of the sorted values at nearest-rank positions `⌈0.1N⌉ ..= ⌈0.9N⌉`
/// (1-based). NaNs are dropped first. `None` for no values.
pub fn trimmed_mean(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    // Integer ceilings: 0.1 * 30 is not exactly 3 in floating point.
    let lo = (n + 9) / 10;
    let hi = (9 * n + 9) / 10;
    let slice = &v[lo.max(1) - 1..hi];
    Some(slice.iter().sum::<f64>() / slice.len() as f64)
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: Method,
    pub point: usize,
    pub sweep_value: f64,
    pub trimmed_mean: Option<f64>,
    pub reps: usize,
    pub fallbacks: usize,
    pub failures: usize,
}

/// One row per (method, grid point), in the order of `records`.
pub fn summarize(records: &[CellRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let head = &records[start];
        let end = start + records[start..].iter().take_while(|c| c.method == head.method && c.point == head.point).count();
        let group = &records[start..end];
        let errors: Vec<f64> = group.iter().map(|c| c.error).collect();
        rows.push(SummaryRow {
            method: head.method,
            point: head.point,
            sweep_value: head.sweep_value,
            trimmed_mean: trimmed_mean(&errors),
            reps: group.len(),
            fallbacks: group.iter().filter(|c| c.status == Status::Fallback).count(),
            failures: group.iter().filter(|c| matches!(c.status, Status::Failed(_))).count(),
        });
        start = end;
    }
    rows
}

/// Trimmed mean of one method at one grid point.
pub fn summary_value(rows: &[SummaryRow], method: Method, point: usize) -> Option<f64> {
    rows.iter().find(|r| r.method == method && r.point == point).and_then(|r| r.trimmed_mean)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Header `method,<sweep>,rep,error,status`; failed cells leave `error` empty.
pub fn write_cells_csv(mut w: impl Write, sweep: SweepVar, records: &[CellRecord]) -> Result<()> {
    writeln!(w, "method,{},rep,error,status", sweep.column())?;
    for c in records {
        writeln!(w, "{},{},{},{},{}", c.method.name(), c.sweep_value, c.rep, fmt_value(c.error), c.status.label())?;
    }
    w.flush()?;
    Ok(())
}

/// Header `method,<sweep>,trimmed_mean,reps,fallbacks,failures`.
pub fn write_summary_csv(mut w: impl Write, sweep: SweepVar, rows: &[SummaryRow]) -> Result<()> {
    writeln!(w, "method,{},trimmed_mean,reps,fallbacks,failures", sweep.column())?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method.name(),
            r.sweep_value,
            r.trimmed_mean.map(fmt_value).unwrap_or_default(),
            r.reps,
            r.fallbacks,
            r.failures
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_thirty_to_middle_twenty_five() {
        let v: Vec<f64> = (1..=30).map(f64::from).collect();
        // Ranks 3..=27.
        assert_eq!(trimmed_mean(&v), Some((3..=27).sum::<i32>() as f64 / 25.0));
    }

    #[test]
    fn trim_handles_small_inputs() {
        assert_eq!(trimmed_mean(&[]), None);
        assert_eq!(trimmed_mean(&[2.0]), Some(2.0));
        assert_eq!(trimmed_mean(&[f64::NAN, 4.0]), Some(4.0));
    }

    #[test]
    fn presets_exist() {
        for name in ["fig1", "fig2", "fig3"] {
            let r = ExperimentRun::preset(name).unwrap();
            r.validate().unwrap();
            assert_eq!(r.repetitions, 30);
        }
        assert!(ExperimentRun::preset("fig4").is_none());
    }
}
