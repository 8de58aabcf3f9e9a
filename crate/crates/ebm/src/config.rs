//! JSON run configuration. Field names match the keys of the file.

use std::path::{Path, PathBuf};

use ebm_core::estimators::NceConfig;
use ebm_core::quadrature::GridSpec;
use ebm_core::train::EstimatorKind;
use ebm_core::{KernelConfig, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

fn default_heldout_fraction() -> f64 {
    0.1
}
fn default_log_every() -> usize {
    100
}
fn default_eval_every() -> usize {
    1000
}
fn default_grad_ceiling() -> f64 {
    1e3
}
fn default_patience() -> usize {
    100
}
fn default_grid() -> GridSpec {
    GridSpec::square(2.0, 161)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub estimator: EstimatorKind,
    pub kernel: KernelConfig,
    pub k: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub seed: u64,
    pub model: ModelSpec,
    pub dataset: PathBuf,
    /// Separate held-out file; when absent a fraction of `dataset` is held out.
    #[serde(default)]
    pub heldout: Option<PathBuf>,
    #[serde(default = "default_heldout_fraction")]
    pub heldout_fraction: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_grad_ceiling")]
    pub grad_ceiling: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Reference distribution for NCE; fitted to the training split if absent.
    #[serde(default)]
    pub nce: Option<NceConfig>,
    /// Integration box for the held-out score when `d = 2`.
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
}

impl TrainConfig {
    /// Desk-scale defaults for the given estimator on a `d`-dimensional dataset.
    pub fn desk(estimator: EstimatorKind, input_dim: usize, dataset: impl Into<PathBuf>) -> Self {
        let kernel = match estimator {
            EstimatorKind::Cnce => KernelConfig {
                variant: ebm_core::KernelVariant::GaussianRw,
                step: 0.0075,
            },
            _ => KernelConfig {
                variant: ebm_core::KernelVariant::Langevin,
                step: 0.0125,
            },
        };
        Self {
            estimator,
            kernel,
            k: 5,
            batch_size: 128,
            steps: 20_000,
            lr_start: 1e-2,
            lr_end: 1e-4,
            momentum: 0.9,
            seed: 0,
            model: ModelSpec::desk(input_dim),
            dataset: dataset.into(),
            heldout: None,
            heldout_fraction: default_heldout_fraction(),
            log_every: default_log_every(),
            eval_every: default_eval_every(),
            grad_ceiling: default_grad_ceiling(),
            patience: default_patience(),
            nce: None,
            grid: default_grid(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|source| HarnessError::Json {
                path: path.into(),
                source,
            })?;
        // relative data paths are taken relative to the config file
        if let Some(dir) = path.parent() {
            cfg.dataset = resolve(dir, &cfg.dataset);
            cfg.heldout = cfg.heldout.map(|h| resolve(dir, &h));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) && self.heldout.is_none() {
            return bad("heldout_fraction must lie in (0, 1)");
        }
        self.model.validate()?;
        self.grid.validate()?;
        self.train_options().validate()?;
        Ok(())
    }

    pub fn train_options(&self) -> ebm_core::train::TrainOptions {
        use ebm_core::quadrature::ScoreMode;
        ebm_core::train::TrainOptions {
            estimator: self.estimator,
            kernel: self.kernel,
            k: self.k,
            batch_size: self.batch_size,
            steps: self.steps,
            lr_start: self.lr_start,
            lr_end: self.lr_end,
            momentum: self.momentum,
            seed: self.seed,
            log_every: self.log_every,
            eval_every: self.eval_every,
            grad_ceiling: self.grad_ceiling,
            patience: self.patience,
            nce: self.nce.clone(),
            score: if self.model.input_dim == 2 {
                ScoreMode::Quadrature(self.grid)
            } else {
                ScoreMode::Unnormalized
            },
        }
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || dir.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub estimator: Option<EstimatorKind>,
    pub kernel: Option<ebm_core::KernelVariant>,
    pub kernel_step: Option<f64>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub steps: Option<usize>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub momentum: Option<f64>,
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { cfg.$f = v; })*};
        }
        set!(estimator, k, batch_size, steps, lr_start, lr_end, momentum, seed, dataset);
        if let Some(v) = self.kernel {
            cfg.kernel.variant = v;
        }
        if let Some(s) = self.kernel_step {
            cfg.kernel.step = s;
        }
        if self.heldout.is_some() {
            cfg.heldout = self.heldout.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg = TrainConfig::desk(EstimatorKind::Acd, 2, "data.csv");
        let back: TrainConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let minimal = r#"{"estimator":"cd","kernel":{"variant":"langevin_mh","step":0.0125},"k":5,
            "batch_size":128,"steps":10,"lr_start":0.01,"lr_end":0.0001,"momentum":0.9,"seed":1,
            "model":{"input_dim":2,"width":8,"depth":2,"skip_period":2,"activation":"softplus"},
            "dataset":"d.csv"}"#;
        let cfg: TrainConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(cfg.log_every, 100);
        assert_eq!(cfg.kernel.variant, ebm_core::KernelVariant::LangevinMh);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v =
            serde_json::to_value(TrainConfig::desk(EstimatorKind::Acd, 2, "d.csv")).unwrap();
        v["learning_rate"] = 0.1.into();
        assert!(serde_json::from_value::<TrainConfig>(v).is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = TrainConfig::desk(EstimatorKind::Acd, 2, "d.csv");
        Overrides {
            steps: Some(7),
            kernel_step: Some(0.3),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.steps, 7);
        assert_eq!(cfg.kernel.step, 0.3);
        assert_eq!(cfg.lr_start, 1e-2);
    }

    #[test]
    fn inconsistent_rates_fail_validation() {
        let mut cfg = TrainConfig::desk(EstimatorKind::Acd, 2, "d.csv");
        cfg.lr_end = 1.0;
        assert!(cfg.validate().is_err());
    }
}
