//! Dataset, checkpoint, metrics and grid files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ebm_core::quadrature::Grid;
use ebm_core::train::MetricsRow;
use ebm_core::{EnergyModel, ModelSpec, ParamVector};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const METRICS_HEADER: [&str; 7] = [
    "step",
    "lr",
    "mean_alpha",
    "median_alpha",
    "acceptance_rate",
    "heldout_score",
    "grad_norm",
];

const CHECKPOINT_VERSION: u32 = 1;

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.into(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Shortest representation that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a header-led CSV of equal-length numeric rows.
pub fn read_dataset(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let width = rdr.headers().map_err(csv_err(path))?.len();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| HarnessError::Format {
                path: path.into(),
                msg: format!("row {}: {e}", i + 1),
            })?;
        if row.len() != width || row.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Format {
                path: path.into(),
                msg: format!("row {}: expected {width} finite values", i + 1),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Format {
            path: path.into(),
            msg: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn write_dataset(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let d = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record((1..=d).map(|i| format!("x{i}")))
        .map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r.iter().map(|v| num(*v)))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub params: ParamVector,
}

pub fn save_checkpoint(path: &Path, model: &EnergyModel) -> Result<()> {
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        spec: model.spec().clone(),
        params: model.params().clone(),
    };
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &ck).map_err(|source| HarnessError::Json {
        path: path.into(),
        source,
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EnergyModel> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.into(),
        source,
    })?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(HarnessError::Format {
            path: path.into(),
            msg: format!("unsupported checkpoint version {}", ck.format_version),
        });
    }
    Ok(EnergyModel::new(ck.spec, ck.params)?)
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(METRICS_HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            num(r.lr),
            num(r.mean_alpha),
            num(r.median_alpha),
            num(r.acceptance_rate),
            num(r.heldout_score),
            num(r.grad_norm),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Parses a metrics file written by [`write_metrics`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    if rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .ne(METRICS_HEADER)
    {
        return Err(HarnessError::Format {
            path: path.into(),
            msg: "unexpected metrics header".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let f = |i: usize| rec[i].parse::<f64>().unwrap_or(f64::NAN);
        out.push(MetricsRow {
            step: rec[0].parse().map_err(|_| HarnessError::Format {
                path: path.into(),
                msg: "bad step".into(),
            })?,
            lr: f(1),
            mean_alpha: f(2),
            median_alpha: f(3),
            acceptance_rate: f(4),
            heldout_score: f(5),
            grad_norm: f(6),
        });
    }
    Ok(out)
}

/// `x,y,log_p` rows, `x` varying fastest.
pub fn write_grid_csv(path: &Path, grid: &Grid) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["x", "y", "log_p"]).map_err(csv_err(path))?;
    let nx = grid.xs.len();
    for (j, y) in grid.ys.iter().enumerate() {
        for (i, x) in grid.xs.iter().enumerate() {
            w.write_record([num(*x), num(*y), num(grid.values[j * nx + i])])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Binary 8-bit portable graymap, top row at the largest `y`.
pub fn write_pgm(path: &Path, grid: &Grid) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "P5\n{} {}\n255\n", grid.xs.len(), grid.ys.len())
        .and_then(|_| w.write_all(&grid.to_gray()))
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}
