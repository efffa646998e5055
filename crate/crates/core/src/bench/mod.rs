//! Config-driven experiment runner behind the `cabench` binary.
//!
//! `run` writes, per optimizer, `<label>.trace.csv` with the trace columns and
//! one `summary.json` for the whole batch:
//!
//! | key | meaning |
//! |---|---|
//! | `label`, `kind` | optimizer name and method |
//! | `status` | `"ok"` or `"error"` |
//! | `error` | message when `status` is `"error"` |
//! | `steps` | last step index |
//! | `final_loss`, `final_grad_norm` | last trace record (`null` if not finite) |
//! | `wall_clock_s` | optimizer time, data generation excluded |
//! | `full_pass_equivalent` | total cost in full data passes |
//! | `recombinations` | total recombinations |
//! | `time_speedup_vs_first` | first optimizer's time over this one's |
//! | `fpe_speedup_vs_first` | same ratio for full-pass equivalents |
//!
//! `sweep` runs the experiment at every `(gamma, n)` grid point in
//! `point_gamma_<γ>_n_<N>/` and writes `aggregate.csv` comparing the first
//! two optimizers (baseline over candidate).

mod config;
pub mod verify;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{DataSource, DatasetSpec, ExperimentConfig, OptimizerSpec, OutputSpec, SweepSpec, SCHEMA_VERSION};

use crate::baselines;
use crate::bcd;
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec};
use crate::optim::{self, DirectionOracle};
use crate::trace::Trace;

/// Runs one optimizer on prepared data.
pub fn run_optimizer(spec: &OptimizerSpec, model: &ModelSpec, data: &Dataset) -> Result<Trace> {
    match spec {
        OptimizerSpec::Gd { oracle, config, .. } => {
            optim::gd_with(model, data, config, &mut DirectionOracle::new(*oracle)?)
        }
        OptimizerSpec::Cagd { oracle, config, .. } => {
            optim::cagd(model, data, config, &mut DirectionOracle::new(*oracle)?)
        }
        OptimizerSpec::Bcd { plan, config, .. } => bcd::cabcd(model, data, config, plan, false),
        OptimizerSpec::Cabcd { plan, config, .. } => bcd::cabcd(model, data, config, plan, true),
        OptimizerSpec::Sag { config, .. } => baselines::sag(model, data, config),
        OptimizerSpec::Adam { config, .. } => baselines::adam(model, data, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerSummary {
    pub label: String,
    pub kind: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub wall_clock_s: f64,
    pub full_pass_equivalent: f64,
    pub recombinations: usize,
    pub time_speedup_vs_first: Option<f64>,
    pub fpe_speedup_vs_first: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub n_samples: usize,
    pub n_features: usize,
    pub optimizers: Vec<OptimizerSummary>,
}

impl RunSummary {
    pub fn get(&self, label: &str) -> Option<&OptimizerSummary> {
        self.optimizers.iter().find(|o| o.label == label)
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    finite(a / b).filter(|_| b > 0.0)
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs every optimizer of `cfg` and writes traces plus `summary.json` into `out`.
/// Optimizer failures are reported in the summary and do not stop the batch.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let data = cfg.build_dataset()?;
    let mut optimizers: Vec<OptimizerSummary> = Vec::new();
    for spec in &cfg.optimizers {
        let label = spec.label();
        let mut s = OptimizerSummary {
            label: label.clone(),
            kind: spec.kind().to_string(),
            status: "ok".into(),
            error: None,
            steps: 0,
            final_loss: None,
            final_grad_norm: None,
            wall_clock_s: f64::NAN,
            full_pass_equivalent: f64::NAN,
            recombinations: 0,
            time_speedup_vs_first: None,
            fpe_speedup_vs_first: None,
        };
        match run_optimizer(spec, &cfg.model, &data) {
            Ok(trace) => {
                write_atomic(&out.join(format!("{label}.trace.csv")), trace.to_csv_string().as_bytes())?;
                if let Some(last) = trace.last() {
                    s.steps = last.step;
                    s.final_loss = finite(last.loss);
                    s.final_grad_norm = finite(last.grad_norm);
                    s.wall_clock_s = last.wall_clock;
                    s.full_pass_equivalent = last.full_pass_equivalent;
                    s.recombinations = last.recombinations;
                }
            }
            Err(e) => {
                s.status = "error".into();
                s.error = Some(e.to_string());
            }
        }
        optimizers.push(s);
    }
    let (t0, f0) = (optimizers[0].wall_clock_s, optimizers[0].full_pass_equivalent);
    for s in &mut optimizers {
        s.time_speedup_vs_first = ratio(t0, s.wall_clock_s);
        s.fpe_speedup_vs_first = ratio(f0, s.full_pass_equivalent);
    }
    let summary = RunSummary {
        schema_version: config::SCHEMA_VERSION,
        n_samples: data.n_samples(),
        n_features: data.n_features(),
        optimizers,
    };
    write_atomic(&out.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(summary)
}

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "gamma",
    "n",
    "baseline",
    "candidate",
    "baseline_time_s",
    "candidate_time_s",
    "time_ratio",
    "baseline_fpe",
    "candidate_fpe",
    "fpe_ratio",
];

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub gamma: f64,
    pub n: usize,
    pub baseline: String,
    pub candidate: String,
    pub baseline_time_s: f64,
    pub candidate_time_s: f64,
    /// `baseline_time_s / candidate_time_s`.
    pub time_ratio: f64,
    pub baseline_fpe: f64,
    pub candidate_fpe: f64,
    pub fpe_ratio: f64,
}

pub fn grid_point_dir(out: &Path, gamma: f64, n: usize) -> PathBuf {
    out.join(format!("point_gamma_{gamma}_n_{n}"))
}

/// Runs the `(gamma, n)` grid, points in parallel on the current rayon pool.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AggregateRow>> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("sweep: section missing".into()))?;
    if cfg.optimizers.len() < 2 {
        return Err(Error::InvalidConfig("optimizers: a sweep compares the first two optimizers".into()));
    }
    let mut points = Vec::new();
    for &g in &grid.gammas {
        for &n in &grid.ns {
            points.push((g, n));
        }
    }
    let mut rows: Vec<AggregateRow> = points
        .par_iter()
        .map(|&(gamma, n)| {
            let c = cfg.at_grid_point(gamma, n)?;
            let s = run(&c, &grid_point_dir(out, gamma, n))?;
            let (b, k) = (&s.optimizers[0], &s.optimizers[1]);
            Ok(AggregateRow {
                gamma,
                n,
                baseline: b.label.clone(),
                candidate: k.label.clone(),
                baseline_time_s: b.wall_clock_s,
                candidate_time_s: k.wall_clock_s,
                time_ratio: b.wall_clock_s / k.wall_clock_s,
                baseline_fpe: b.full_pass_equivalent,
                candidate_fpe: k.full_pass_equivalent,
                fpe_ratio: b.full_pass_equivalent / k.full_pass_equivalent,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.n.cmp(&b.n)));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_COLUMNS)?;
    for r in &rows {
        w.write_record([
            r.gamma.to_string(),
            r.n.to_string(),
            r.baseline.clone(),
            r.candidate.clone(),
            r.baseline_time_s.to_string(),
            r.candidate_time_s.to_string(),
            r.time_ratio.to_string(),
            r.baseline_fpe.to_string(),
            r.candidate_fpe.to_string(),
            r.fpe_ratio.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_atomic(&out.join("aggregate.csv"), &bytes)?;
    Ok(rows)
}

/// Writes a dataset as CSV with columns `x0..x{d-1}, y`.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = data.n_features();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..data.n_samples() {
        let mut row: Vec<String> = (0..d).map(|k| data.x()[(i, k)].to_string()).collect();
        row.push(data.y()[i].to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Trace CSV with the wall-clock column blanked, for byte comparisons.
pub fn timing_free_csv(trace: &Trace) -> String {
    let mut t = trace.clone();
    for r in &mut t.records {
        r.wall_clock = 0.0;
    }
    t.to_csv_string()
}
