//! The operations behind each subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use ebm_core::data::{gen_spiral, split, SpiralSpec};
use ebm_core::quadrature::{eval_grid, Grid, GridSpec};
use ebm_core::train::{self, MetricsRow, TrainOutcome};
use ebm_core::verify::{run_suite, CheckResult};
use ebm_core::{EnergyModel, KernelConfig, KernelVariant};

use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::io;

pub fn gen_data(spec: &SpiralSpec, n: usize, out: &Path) -> Result<()> {
    let rows = gen_spiral(spec, n)?;
    io::write_dataset(out, &rows)
}

/// Training and held-out sets for a config.
pub fn load_splits(cfg: &TrainConfig) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let data = io::read_dataset(&cfg.dataset)?;
    let (train, heldout) = match &cfg.heldout {
        Some(p) => (data, io::read_dataset(p)?),
        None => split(&data, 1.0 - cfg.heldout_fraction, cfg.seed)?,
    };
    let d = cfg.model.input_dim;
    if train[0].len() != d || heldout.first().is_some_and(|r| r.len() != d) {
        return Err(HarnessError::Config(format!(
            "model.input_dim is {d} but the dataset has {} columns",
            train[0].len()
        )));
    }
    Ok((train, heldout))
}

/// Runs a config in memory. Divergence is reported in the outcome.
pub fn train_config(cfg: &TrainConfig, on_row: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, heldout) = load_splits(cfg)?;
    let model = EnergyModel::init(cfg.model.clone(), cfg.seed)?;
    Ok(train::train_with_progress(
        model,
        &train_set,
        &heldout,
        &cfg.train_options(),
        on_row,
    )?)
}

#[derive(Debug, Clone)]
pub struct RunPaths {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            metrics: dir.join("metrics.csv"),
            checkpoint: dir.join("checkpoint.json"),
        }
    }
}

/// Trains and writes metrics and checkpoint. Both files are written even when
/// training diverges, after which [`HarnessError::Diverged`] is returned.
pub fn train_to_files(
    cfg: &TrainConfig,
    paths: &RunPaths,
    on_row: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    let outcome = train_config(cfg, on_row)?;
    io::write_metrics(&paths.metrics, &outcome.metrics)?;
    io::save_checkpoint(&paths.checkpoint, &outcome.model)?;
    match outcome.diverged {
        Some(d) => Err(HarnessError::Diverged {
            step: d.step,
            grad_norm: d.grad_norm,
        }),
        None => Ok(outcome),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// The kernel step of the base config.
    Step,
    /// CNCE with a Gaussian random-walk proposal of the given STD.
    CnceStd,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Step => "step",
            SweepParam::CnceStd => "cnce_std",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Step => cfg.kernel.step = value,
            SweepParam::CnceStd => {
                cfg.estimator = train::EstimatorKind::Cnce;
                cfg.kernel = KernelConfig {
                    variant: KernelVariant::GaussianRw,
                    step: value,
                };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: f64,
    pub status: &'static str,
    pub final_heldout_score: f64,
    pub final_median_alpha: f64,
    pub message: String,
}

/// One run per value; failures are recorded and the sweep moves on. Per-run
/// metrics land in `out_dir/run_<i>.csv` when a directory is given.
pub fn sweep(
    base: &TrainConfig,
    param: SweepParam,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(HarnessError::Config(
            "sweep needs at least one value".into(),
        ));
    }
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut cfg = base.clone();
        param.apply(&mut cfg, value);
        let mut row = SweepRow {
            parameter: param.name(),
            value,
            status: "ok",
            final_heldout_score: f64::NAN,
            final_median_alpha: f64::NAN,
            message: String::new(),
        };
        match train_config(&cfg, |_| {}) {
            Ok(outcome) => {
                if let Some(dir) = out_dir {
                    io::write_metrics(&dir.join(format!("run_{i}.csv")), &outcome.metrics)?;
                }
                if let Some(last) = outcome.final_row() {
                    row.final_heldout_score = last.heldout_score;
                    row.final_median_alpha = last.median_alpha;
                }
                if let Some(d) = outcome.diverged {
                    row.status = "diverged";
                    row.message = format!("step {} grad_norm {:e}", d.step, d.grad_norm);
                }
            }
            Err(e) => {
                row.status = "error";
                row.message = e.to_string();
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let text = sweep_summary_csv(rows);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "parameter",
        "value",
        "status",
        "final_heldout_score",
        "final_median_alpha",
        "message",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.parameter.to_string(),
            format!("{:?}", r.value),
            r.status.to_string(),
            format!("{:?}", r.final_heldout_score),
            format!("{:?}", r.final_median_alpha),
            r.message.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

/// Evaluates `log p~` on a plane through the origin and writes CSV and PGM.
pub fn eval_grid_to_files(
    model: &EnergyModel,
    axes: (usize, usize),
    spec: &GridSpec,
    csv_path: &Path,
    pgm_path: &Path,
) -> Result<Grid> {
    let grid = eval_grid(model, axes, spec)?;
    io::write_grid_csv(csv_path, &grid)?;
    io::write_pgm(pgm_path, &grid)?;
    Ok(grid)
}

/// Runs the identity suite, printing one line per check and the maximum
/// detailed-balance violation.
pub fn verify(seed: u64, out: &mut impl Write) -> Result<Vec<CheckResult>> {
    let results = run_suite(seed)?;
    report(&results, out).map_err(|e| HarnessError::io("<stdout>", e))?;
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(HarnessError::VerificationFailed(failed));
    }
    Ok(results)
}

pub fn report(results: &[CheckResult], out: &mut impl Write) -> std::io::Result<()> {
    for r in results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        writeln!(
            out,
            "{tag} {:<38} {:>10.3e} (tol {:.0e})  {}",
            r.name, r.value, r.tolerance, r.detail
        )?;
    }
    if let Some(db) = results.iter().find(|r| r.name == "detailed_balance") {
        writeln!(out, "max detailed-balance violation: {:e}", db.value)?;
    }
    Ok(())
}
