//! Parameter-gradient estimators and the BCE losses they differentiate.
//!
//! Every estimator returns the gradient of a loss to be minimized, so a step
//! is `theta <- theta - lr * grad`. For chain-based estimators the per-chain
//! term is `c_i (grad log p~(x_k) - grad log p~(x_0))` with
//!
//! * `c_i = 1/n` for CD-k,
//! * `c_i = alpha_i / n` for adjusted CD-k, `alpha_i = logistic(log_w_total_i)`,
//! * CNCE is adjusted CD with `k = 1` and a fixed proposal.
//!
//! The kernel is held fixed while differentiating: no gradient flows through
//! proposal means. Both endpoint sums are reduced in ascending chain order
//! with the same coefficients, so the output-bias coordinate of a chain
//! estimator is exactly zero.

use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::energy::{all_finite, Energy};
use crate::error::{Error, Result};
use crate::math;
use crate::mcmc::{sample_chains, transition_record, ChainSample, Kernel};
use crate::model::ParamVector;
use crate::stats;

/// Summary statistics of one gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub mean_alpha: f64,
    pub median_alpha: f64,
    /// Accepted over proposed transitions; 1 for kernels without rejection.
    pub acceptance_rate: f64,
    pub mean_log_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub grad: ParamVector,
    pub diag: Diagnostics,
    /// Per-sample weights in batch order.
    pub alphas: Vec<f64>,
}

/// `alpha = (1 + w^-1)^-1`, the logistic function of `log w`.
pub fn alpha_from_log_w(log_w: f64) -> f64 {
    math::logistic(log_w)
}

/// Probability that the optimal time-reversal discriminator assigns to the
/// chain being in forward order, `(1 + prod w_i)^-1`.
pub fn discriminator_prob<S>(chain: &ChainSample<S>) -> f64 {
    math::logistic(-chain.log_w_total)
}

/// Reference distribution for NCE: a diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NceConfig {
    pub ref_mean: Vec<f64>,
    pub ref_cov_diag: Vec<f64>,
}

impl NceConfig {
    pub fn new(ref_mean: Vec<f64>, ref_cov_diag: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            ref_mean,
            ref_cov_diag,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ref_mean.len() != self.ref_cov_diag.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ref_mean.len(),
                got: self.ref_cov_diag.len(),
            });
        }
        if self.ref_mean.is_empty() || !all_finite(&self.ref_mean) {
            return Err(Error::InvalidConfig(
                "reference mean must be finite and non-empty".into(),
            ));
        }
        if let Some(v) = self
            .ref_cov_diag
            .iter()
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidConfig(format!(
                "reference variances must be positive, got {v}"
            )));
        }
        Ok(())
    }

    /// Moment-matched diagonal Gaussian for `data`.
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let first = data.first().ok_or(Error::EmptyBatch)?;
        let d = first.len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in data {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        Self::new(mean, var)
    }

    pub fn dim(&self) -> usize {
        self.ref_mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, m), v) in x.iter().zip(&self.ref_mean).zip(&self.ref_cov_diag) {
            let r = xi - m;
            acc += r * r / v + math::ln(*v) + math::LN_2PI;
        }
        -0.5 * acc
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.ref_mean
            .iter()
            .zip(&self.ref_cov_diag)
            .map(|(m, v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + math::sqrt(*v) * z
            })
            .collect()
    }
}

/// `G(ends, c) - G(starts, c)` with `G(xs, c) = sum_i c_i grad log p~(xs_i)`.
fn endpoint_grad<E: Energy>(
    energy: &E,
    starts: &[E::State],
    ends: &[E::State],
    coeffs: &[f64],
) -> Result<ParamVector> {
    let len = energy.param_len();
    let mut g_end = vec![0.0; len];
    let mut g_start = vec![0.0; len];
    energy.accumulate_grad_theta(ends, coeffs, &mut g_end)?;
    energy.accumulate_grad_theta(starts, coeffs, &mut g_start)?;
    for (a, b) in g_end.iter_mut().zip(&g_start) {
        *a -= b;
    }
    Ok(ParamVector(g_end))
}

fn split_endpoints<S: Clone>(chains: &[ChainSample<S>]) -> (Vec<S>, Vec<S>) {
    chains
        .iter()
        .map(|c| (c.first().clone(), c.last().clone()))
        .unzip()
}

fn chain_diagnostics<S>(chains: &[ChainSample<S>], alphas: &[f64]) -> Diagnostics {
    let proposed: usize = chains.iter().map(|c| c.proposed).sum();
    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    let log_ws: Vec<f64> = chains.iter().map(|c| c.log_w_total).collect();
    Diagnostics {
        mean_alpha: stats::mean(alphas),
        median_alpha: stats::median(alphas),
        acceptance_rate: if proposed == 0 {
            1.0
        } else {
            accepted as f64 / proposed as f64
        },
        mean_log_w: stats::mean(&log_ws),
    }
}

/// Adjusted CD on frozen chains with a caller-supplied weighting.
pub fn acd_grad_from_chains_with<E, F>(
    energy: &E,
    chains: &[ChainSample<E::State>],
    alpha: F,
) -> Result<GradEstimate>
where
    E: Energy,
    F: Fn(f64) -> f64,
{
    if chains.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = chains.len() as f64;
    let alphas: Vec<f64> = chains.iter().map(|c| alpha(c.log_w_total)).collect();
    let coeffs: Vec<f64> = alphas.iter().map(|a| a / n).collect();
    let (starts, ends) = split_endpoints(chains);
    let grad = endpoint_grad(energy, &starts, &ends, &coeffs)?;
    let diag = chain_diagnostics(chains, &alphas);
    Ok(GradEstimate { grad, diag, alphas })
}

/// Adjusted CD-k on frozen chains.
pub fn acd_grad_from_chains<E: Energy>(
    energy: &E,
    chains: &[ChainSample<E::State>],
) -> Result<GradEstimate> {
    acd_grad_from_chains_with(energy, chains, alpha_from_log_w)
}

/// Plain CD-k on frozen chains. The alpha diagnostics are fixed at 1/2.
pub fn cd_grad_from_chains<E: Energy>(
    energy: &E,
    chains: &[ChainSample<E::State>],
) -> Result<GradEstimate> {
    if chains.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = chains.len() as f64;
    let coeffs = vec![1.0 / n; chains.len()];
    let (starts, ends) = split_endpoints(chains);
    let grad = endpoint_grad(energy, &starts, &ends, &coeffs)?;
    let alphas = vec![0.5; chains.len()];
    let mut diag = chain_diagnostics(chains, &alphas);
    diag.mean_alpha = 0.5;
    diag.median_alpha = 0.5;
    Ok(GradEstimate { grad, diag, alphas })
}

fn check_batch<S>(batch: &[S], k: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if k == 0 {
        return Err(Error::InvalidConfig(
            "chain length k must be at least 1".into(),
        ));
    }
    Ok(())
}

/// CD-k: one fresh chain of length `k` from every batch sample.
pub fn cd_grad<E, K, R>(
    energy: &E,
    kernel: &K,
    batch: &[E::State],
    k: usize,
    rng: &mut R,
) -> Result<GradEstimate>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore + ?Sized,
{
    check_batch(batch, k)?;
    let chains = sample_chains(kernel, energy, batch, k, rng)?;
    cd_grad_from_chains(energy, &chains)
}

/// Adjusted CD-k: every chain weighted by its hardness `alpha`.
pub fn acd_grad<E, K, R>(
    energy: &E,
    kernel: &K,
    batch: &[E::State],
    k: usize,
    rng: &mut R,
) -> Result<GradEstimate>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore + ?Sized,
{
    check_batch(batch, k)?;
    let chains = sample_chains(kernel, energy, batch, k, rng)?;
    acd_grad_from_chains(energy, &chains)
}

/// CNCE: one contrastive draw `x~ ~ q(.|x)` per sample, weighted by alpha.
pub fn cnce_grad<E, K, R>(
    energy: &E,
    kernel: &K,
    batch: &[E::State],
    rng: &mut R,
) -> Result<GradEstimate>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore + ?Sized,
{
    acd_grad(energy, kernel, batch, 1, rng)
}

/// NCE gradient for frozen data and reference draws.
///
/// With `u(x) = log p~(x) - log p_ref(x)` and `D = logistic(u)`, the loss is
/// `1/2 mean_data softplus(-u) + 1/2 mean_noise softplus(u)`. Unlike the
/// chain estimators this one is not invariant to the output bias: NCE fits
/// the normalization along with the shape.
pub fn nce_grad_from_samples<E>(
    energy: &E,
    nce: &NceConfig,
    data: &[Vec<f64>],
    noise: &[Vec<f64>],
) -> Result<GradEstimate>
where
    E: Energy<State = Vec<f64>>,
{
    if data.is_empty() || noise.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut lp_data = Vec::new();
    let mut lp_noise = Vec::new();
    energy.log_p_tilde_batch(data, &mut lp_data)?;
    energy.log_p_tilde_batch(noise, &mut lp_noise)?;
    let nd = data.len() as f64;
    let nn = noise.len() as f64;
    let miss_data: Vec<f64> = data
        .iter()
        .zip(&lp_data)
        .map(|(x, lp)| 1.0 - math::logistic(lp - nce.log_density(x)))
        .collect();
    let hit_noise: Vec<f64> = noise
        .iter()
        .zip(&lp_noise)
        .map(|(y, lp)| math::logistic(lp - nce.log_density(y)))
        .collect();
    let c_data: Vec<f64> = miss_data.iter().map(|a| 0.5 * a / nd).collect();
    let c_noise: Vec<f64> = hit_noise.iter().map(|a| 0.5 * a / nn).collect();
    let len = energy.param_len();
    let mut g = vec![0.0; len];
    let mut g_data = vec![0.0; len];
    energy.accumulate_grad_theta(noise, &c_noise, &mut g)?;
    energy.accumulate_grad_theta(data, &c_data, &mut g_data)?;
    for (a, b) in g.iter_mut().zip(&g_data) {
        *a -= b;
    }
    let log_ws: Vec<f64> = data
        .iter()
        .zip(&lp_data)
        .map(|(x, lp)| lp - nce.log_density(x))
        .collect();
    let diag = Diagnostics {
        mean_alpha: stats::mean(&miss_data),
        median_alpha: stats::median(&miss_data),
        acceptance_rate: 1.0,
        mean_log_w: stats::mean(&log_ws),
    };
    Ok(GradEstimate {
        grad: ParamVector(g),
        diag,
        alphas: miss_data,
    })
}

/// NCE with as many reference draws as data samples.
pub fn nce_grad<E, R>(
    energy: &E,
    nce: &NceConfig,
    batch: &[Vec<f64>],
    rng: &mut R,
) -> Result<GradEstimate>
where
    E: Energy<State = Vec<f64>>,
    R: RngCore + ?Sized,
{
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let noise: Vec<Vec<f64>> = (0..batch.len()).map(|_| nce.sample(rng)).collect();
    nce_grad_from_samples(energy, nce, batch, &noise)
}

/// The NCE BCE loss for frozen data and reference draws.
pub fn nce_bce_loss<E>(
    energy: &E,
    nce: &NceConfig,
    data: &[Vec<f64>],
    noise: &[Vec<f64>],
) -> Result<f64>
where
    E: Energy<State = Vec<f64>>,
{
    if data.is_empty() || noise.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut lp = Vec::new();
    energy.log_p_tilde_batch(data, &mut lp)?;
    let data_term: f64 = data
        .iter()
        .zip(&lp)
        .map(|(x, l)| math::softplus(-(l - nce.log_density(x))))
        .sum::<f64>()
        / data.len() as f64;
    energy.log_p_tilde_batch(noise, &mut lp)?;
    let noise_term: f64 = noise
        .iter()
        .zip(&lp)
        .map(|(y, l)| math::softplus(l - nce.log_density(y)))
        .sum::<f64>()
        / noise.len() as f64;
    Ok(0.5 * data_term + 0.5 * noise_term)
}

/// `-mean log D(x, x~)` over frozen pairs, with `D = (1 + w(x, x~))^-1`.
pub fn cnce_bce_loss<E, K>(energy: &E, kernel: &K, pairs: &[(E::State, E::State)]) -> Result<f64>
where
    E: Energy,
    K: Kernel<E>,
{
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (x, x_tilde) in pairs {
        let lw = transition_record(kernel, energy, x, x_tilde)?.log_w;
        total += math::softplus(lw);
    }
    Ok(total / pairs.len() as f64)
}

/// `-mean log D(x(0), .., x(k))` over frozen chains. The model enters through
/// the endpoints; the kernel density ratios stay at their recorded values.
pub fn chain_bce_loss<E: Energy>(energy: &E, chains: &[ChainSample<E::State>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (starts, ends) = split_endpoints(chains);
    let mut lp0 = Vec::new();
    let mut lpk = Vec::new();
    energy.log_p_tilde_batch(&starts, &mut lp0)?;
    energy.log_p_tilde_batch(&ends, &mut lpk)?;
    let total: f64 = chains
        .iter()
        .zip(lp0.iter().zip(&lpk))
        .map(|(c, (a, b))| math::softplus(c.log_q_ratio_total + b - a))
        .sum();
    Ok(total / chains.len() as f64)
}

/// Softplus `ln(1 + e^x)`, exposed for loss oracles.
pub fn softplus(x: f64) -> f64 {
    math::softplus(x)
}
