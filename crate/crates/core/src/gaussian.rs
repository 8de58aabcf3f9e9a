//! A diagonal Gaussian energy, `log p~(x) = -1/2 sum_j e^{s_j} (x_j - mu_j)^2`,
//! with parameters `(mu, s)`. At `mu = 0, s = 0` it is the standard normal,
//! the target for which the autoregressive kernel is exactly reversible.

use alloc::vec::Vec;

use crate::energy::{all_finite, DifferentiableEnergy, Energy};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEnergy {
    mean: Vec<f64>,
    log_precision: Vec<f64>,
}

impl GaussianEnergy {
    pub fn new(mean: Vec<f64>, log_precision: Vec<f64>) -> Result<Self> {
        if mean.len() != log_precision.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: log_precision.len(),
            });
        }
        if mean.is_empty() || !all_finite(&mean) || !all_finite(&log_precision) {
            return Err(Error::InvalidConfig(
                "gaussian parameters must be finite and non-empty".into(),
            ));
        }
        Ok(Self {
            mean,
            log_precision,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; dim],
            log_precision: alloc::vec![0.0; dim],
        }
    }

    /// Flat parameters `(mu_1..mu_d, s_1..s_d)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean.clone();
        p.extend_from_slice(&self.log_precision);
        p
    }

    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() % 2 != 0 {
            return Err(Error::InvalidConfig(
                "gaussian parameter vector must have even length".into(),
            ));
        }
        let d = params.len() / 2;
        Self::new(params[..d].to_vec(), params[d..].to_vec())
    }

    /// `log Z` for the density `exp(log p~) / Z`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_precision
            .iter()
            .map(|s| 0.5 * (math::LN_2PI - s))
            .sum()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, m), s) in x.iter().zip(&self.mean).zip(&self.log_precision) {
            let r = xi - m;
            acc += math::exp(*s) * r * r;
        }
        -0.5 * acc
    }
}

impl Energy for GaussianEnergy {
    type State = Vec<f64>;

    fn param_len(&self) -> usize {
        2 * self.mean.len()
    }

    fn log_p_tilde_batch(&self, states: &[Vec<f64>], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for x in states {
            self.check(x)?;
            out.push(self.value(x));
        }
        Ok(())
    }

    fn accumulate_grad_theta(
        &self,
        states: &[Vec<f64>],
        weights: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.mean.len();
        if out.len() != 2 * d || weights.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * d,
                got: out.len(),
            });
        }
        for (x, w) in states.iter().zip(weights) {
            self.check(x)?;
            for j in 0..d {
                let prec = math::exp(self.log_precision[j]);
                let r = x[j] - self.mean[j];
                out[j] += w * prec * r;
                out[d + j] += w * (-0.5 * prec * r * r);
            }
        }
        Ok(())
    }

    fn state_is_finite(&self, state: &Vec<f64>) -> bool {
        all_finite(state)
    }
}

impl DifferentiableEnergy for GaussianEnergy {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_p_and_grad_x_batch(&self, states: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut values = Vec::with_capacity(states.len());
        let mut grads = Vec::with_capacity(states.len());
        for x in states {
            self.check(x)?;
            values.push(self.value(x));
            grads.push(
                x.iter()
                    .zip(&self.mean)
                    .zip(&self.log_precision)
                    .map(|((xi, m), s)| -math::exp(*s) * (xi - m))
                    .collect(),
            );
        }
        Ok((values, grads))
    }
}
