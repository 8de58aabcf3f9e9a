//! The training loop: SGD with momentum under an exponentially decaying
//! learning rate, with periodic metrics and held-out scoring.

use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{self, GradEstimate, NceConfig};
use crate::math;
use crate::mcmc::KernelConfig;
use crate::model::EnergyModel;
use crate::quadrature::{heldout_score, ScoreMode};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EstimatorKind {
    Nce,
    Cnce,
    Cd,
    Acd,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Nce => "nce",
            EstimatorKind::Cnce => "cnce",
            EstimatorKind::Cd => "cd",
            EstimatorKind::Acd => "acd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub estimator: EstimatorKind,
    pub kernel: KernelConfig,
    pub k: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Held-out scoring cadence in steps; rows in between carry NaN.
    pub eval_every: usize,
    /// Gradient norm treated as divergent when exceeded for `patience`
    /// consecutive steps.
    pub grad_ceiling: f64,
    pub patience: usize,
    /// Reference distribution for NCE; fitted to the training set when absent.
    pub nce: Option<NceConfig>,
    pub score: ScoreMode,
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad("learning rates must satisfy 0 < lr_end <= lr_start");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.log_every == 0 || self.eval_every == 0 || self.patience == 0 {
            return bad("log_every, eval_every and patience must be positive");
        }
        if !(self.grad_ceiling > 0.0) {
            return bad("grad_ceiling must be positive");
        }
        Ok(())
    }
}

/// `lr_start * (lr_end / lr_start)^(t / steps)`, hitting both endpoints exactly.
pub fn learning_rate(t: usize, steps: usize, lr_start: f64, lr_end: f64) -> f64 {
    if steps == 0 || t == 0 {
        return lr_start;
    }
    if t >= steps {
        return lr_end;
    }
    lr_start * math::powf(lr_end / lr_start, t as f64 / steps as f64)
}

/// One line of the metrics stream. Row `step` describes the model after
/// `step` updates; the alpha, acceptance and gradient columns summarize the
/// updates since the previous row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    pub mean_alpha: f64,
    pub median_alpha: f64,
    pub acceptance_rate: f64,
    pub heldout_score: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: EnergyModel,
    pub metrics: Vec<MetricsRow>,
    pub diverged: Option<Divergence>,
}

impl TrainOutcome {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.metrics.last()
    }
}

#[derive(Default)]
struct Window {
    alphas: Vec<f64>,
    acceptance: Vec<f64>,
    norms: Vec<f64>,
}

impl Window {
    fn push(&mut self, est: &GradEstimate, norm: f64) {
        self.alphas.extend_from_slice(&est.alphas);
        self.acceptance.push(est.diag.acceptance_rate);
        self.norms.push(norm);
    }

    fn drain_row(&mut self, step: usize, lr: f64, heldout_score: f64) -> MetricsRow {
        let row = MetricsRow {
            step,
            lr,
            mean_alpha: stats::mean(&self.alphas),
            median_alpha: stats::median(&self.alphas),
            acceptance_rate: stats::mean(&self.acceptance),
            heldout_score,
            grad_norm: stats::mean(&self.norms),
        };
        *self = Window::default();
        row
    }
}

fn estimate(
    model: &EnergyModel,
    opts: &TrainOptions,
    nce: &NceConfig,
    batch: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<GradEstimate> {
    match opts.estimator {
        EstimatorKind::Nce => estimators::nce_grad(model, nce, batch, rng),
        EstimatorKind::Cnce => estimators::cnce_grad(model, &opts.kernel, batch, rng),
        EstimatorKind::Cd => estimators::cd_grad(model, &opts.kernel, batch, opts.k, rng),
        EstimatorKind::Acd => estimators::acd_grad(model, &opts.kernel, batch, opts.k, rng),
    }
}

pub fn train(
    model: EnergyModel,
    train_set: &[Vec<f64>],
    heldout: &[Vec<f64>],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    train_with_progress(model, train_set, heldout, opts, |_| {})
}

/// Runs `opts.steps` updates, calling `on_row` for every metrics row as it is
/// produced. Fully determined by `(model, data, opts)`.
pub fn train_with_progress<F: FnMut(&MetricsRow)>(
    mut model: EnergyModel,
    train_set: &[Vec<f64>],
    heldout: &[Vec<f64>],
    opts: &TrainOptions,
    mut on_row: F,
) -> Result<TrainOutcome> {
    opts.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = model.spec().input_dim;
    if let Some(bad) = train_set.iter().chain(heldout).find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let nce = match &opts.nce {
        Some(cfg) => {
            cfg.validate()?;
            cfg.clone()
        }
        None => NceConfig::fit(train_set)?,
    };
    let score = |m: &EnergyModel| -> Result<f64> {
        if heldout.is_empty() {
            Ok(f64::NAN)
        } else {
            heldout_score(m, heldout, &opts.score)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // stream 0 of the same seed initializes parameters
    rng.set_stream(1);
    let mut velocity = vec![0.0; model.params().len()];
    let mut metrics = Vec::new();
    let mut window = Window::default();
    let mut over_ceiling = 0usize;
    let mut diverged = None;

    let first = window.drain_row(
        0,
        learning_rate(0, opts.steps, opts.lr_start, opts.lr_end),
        score(&model)?,
    );
    on_row(&first);
    metrics.push(first);

    for t in 0..opts.steps {
        let batch: Vec<Vec<f64>> = (0..opts.batch_size)
            .map(|_| train_set[rng.random_range(0..train_set.len())].clone())
            .collect();
        let est = match estimate(&model, opts, &nce, &batch, &mut rng) {
            Ok(est) => est,
            Err(Error::NonFinite { .. }) => {
                diverged = Some(Divergence {
                    step: t,
                    grad_norm: f64::NAN,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let norm = est.grad.norm();
        if !norm.is_finite() {
            diverged = Some(Divergence {
                step: t,
                grad_norm: norm,
            });
            break;
        }
        over_ceiling = if norm > opts.grad_ceiling {
            over_ceiling + 1
        } else {
            0
        };
        if over_ceiling >= opts.patience {
            diverged = Some(Divergence {
                step: t,
                grad_norm: norm,
            });
            break;
        }
        let lr = learning_rate(t, opts.steps, opts.lr_start, opts.lr_end);
        let params = model.params_mut();
        for ((p, v), g) in params
            .iter_mut()
            .zip(velocity.iter_mut())
            .zip(est.grad.iter())
        {
            *v = opts.momentum * *v + g;
            *p -= lr * *v;
        }
        if params.iter().any(|p| !p.is_finite()) {
            diverged = Some(Divergence {
                step: t,
                grad_norm: norm,
            });
            break;
        }
        window.push(&est, norm);

        let s = t + 1;
        if s % opts.log_every == 0 || s == opts.steps {
            let held = if s % opts.eval_every == 0 || s == opts.steps {
                score(&model)?
            } else {
                f64::NAN
            };
            let row = window.drain_row(
                s,
                learning_rate(s, opts.steps, opts.lr_start, opts.lr_end),
                held,
            );
            on_row(&row);
            metrics.push(row);
        }
    }
    if let Some(div) = diverged {
        let row = window.drain_row(
            div.step,
            learning_rate(div.step, opts.steps, opts.lr_start, opts.lr_end),
            f64::NAN,
        );
        on_row(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        model,
        metrics,
        diverged,
    })
}

/// Human-readable one-line summary of a run.
pub fn describe(opts: &TrainOptions) -> alloc::string::String {
    format!(
        "{} kernel={:?} step={} k={} batch={} steps={} lr={}..{}",
        opts.estimator.name(),
        opts.kernel.variant,
        opts.kernel.step,
        opts.k,
        opts.batch_size,
        opts.steps,
        opts.lr_start,
        opts.lr_end
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_spiral, SpiralSpec};
    use crate::model::ModelSpec;
    use crate::quadrature::GridSpec;

    fn opts(estimator: EstimatorKind, steps: usize) -> TrainOptions {
        TrainOptions {
            estimator,
            kernel: KernelConfig::langevin(0.0125).unwrap(),
            k: 2,
            batch_size: 16,
            steps,
            lr_start: 1e-2,
            lr_end: 1e-4,
            momentum: 0.9,
            seed: 3,
            log_every: 5,
            eval_every: 10,
            grad_ceiling: 1e3,
            patience: 100,
            nce: None,
            score: ScoreMode::Quadrature(GridSpec::square(2.0, 21)),
        }
    }

    fn small_model() -> EnergyModel {
        EnergyModel::init(
            ModelSpec::new(2, 8, 2, 2, crate::Activation::Softplus).unwrap(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn schedule_endpoints_are_exact() {
        assert_eq!(learning_rate(0, 1000, 1e-2, 1e-4), 1e-2);
        assert_eq!(learning_rate(1000, 1000, 1e-2, 1e-4), 1e-4);
        assert!((learning_rate(500, 1000, 1e-2, 1e-4) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let data = gen_spiral(&SpiralSpec::new(2, 0), 64).unwrap();
        let m = small_model();
        let out = train(m.clone(), &data, &data[..8], &opts(EstimatorKind::Acd, 0)).unwrap();
        assert_eq!(out.model, m);
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].step, 0);
    }

    #[test]
    fn runs_are_reproducible_and_logged_on_cadence() {
        let data = gen_spiral(&SpiralSpec::new(2, 0), 256).unwrap();
        for est in [
            EstimatorKind::Nce,
            EstimatorKind::Cnce,
            EstimatorKind::Cd,
            EstimatorKind::Acd,
        ] {
            let mut o = opts(est, 12);
            if est == EstimatorKind::Cnce {
                o.kernel = KernelConfig::gaussian_rw(0.05).unwrap();
            }
            let a = train(small_model(), &data, &data[..32], &o).unwrap();
            let b = train(small_model(), &data, &data[..32], &o).unwrap();
            assert_eq!(a.model, b.model);
            assert_eq!(format!("{:?}", a.metrics), format!("{:?}", b.metrics));
            let steps: Vec<usize> = a.metrics.iter().map(|r| r.step).collect();
            assert_eq!(steps, vec![0, 5, 10, 12]);
            assert!(a.metrics[1].heldout_score.is_nan());
            assert!(a.metrics[2].heldout_score.is_finite());
            assert!(a.diverged.is_none());
        }
    }

    #[test]
    fn persistent_large_gradients_abort() {
        let data = gen_spiral(&SpiralSpec::new(2, 0), 64).unwrap();
        let mut o = opts(EstimatorKind::Cd, 50);
        o.grad_ceiling = 1e-12;
        o.patience = 3;
        let out = train(small_model(), &data, &[], &o).unwrap();
        assert_eq!(out.diverged.map(|d| d.step), Some(2));
    }

    #[test]
    fn invalid_options_are_rejected() {
        let data = gen_spiral(&SpiralSpec::new(2, 0), 8).unwrap();
        let mut o = opts(EstimatorKind::Cd, 1);
        o.lr_end = 1.0;
        assert!(train(small_model(), &data, &[], &o).is_err());
        let mut o = opts(EstimatorKind::Cd, 1);
        o.momentum = 1.0;
        assert!(train(small_model(), &data, &[], &o).is_err());
    }
}
