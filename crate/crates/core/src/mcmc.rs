//! Transition kernels, per-step importance log-weights, Metropolis-Hastings
//! filtering and chain generation.
//!
//! For a transition `a -> b` the log-weight is
//! `log w(a, b) = log q(a|b) + log p~(b) - log q(b|a) - log p~(a)`;
//! the normalization constant of `p~` cancels. A chain accumulates the sum of
//! its step log-weights. Rejected Metropolis-Hastings steps leave the state in
//! place and contribute zero, the log-ratio of the effective kernel's
//! self-transition.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::energy::{DifferentiableEnergy, Energy};
use crate::error::{Error, Result};
use crate::math;

/// `log p~` of a state plus kernel-specific data needed to propose from it
/// and to evaluate the proposal density (for Langevin: the drifted mean).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared<A> {
    pub log_p: f64,
    pub aux: A,
}

/// A transition rule `q(.|.)` with an evaluable log-density.
pub trait Kernel<E: Energy> {
    type Aux: Clone;

    /// Evaluates the model at every state. Called once per chain step on the
    /// whole batch.
    fn prepare(&self, energy: &E, states: &[E::State]) -> Result<Vec<Prepared<Self::Aux>>>;

    fn propose<R: RngCore + ?Sized>(
        &self,
        from: &E::State,
        aux: &Self::Aux,
        rng: &mut R,
    ) -> E::State;

    /// `log q(to | from)`.
    fn log_q(&self, from: &E::State, aux: &Self::Aux, to: &E::State) -> f64;

    /// Whether proposals pass through a Metropolis-Hastings accept step.
    fn metropolized(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KernelVariant {
    /// `x' = x + step * z`.
    GaussianRw,
    /// `x' = x + (step^2 / 2) grad log p~(x) + step * z`.
    Langevin,
    /// Langevin proposals filtered by Metropolis-Hastings.
    LangevinMh,
    /// `x' = step * x + sqrt(1 - step^2) * z`, reversible for a standard normal.
    Autoregressive,
}

/// A continuous Gaussian kernel. `step` is the proposal standard deviation for
/// the random walk, the noise scale `eps` for Langevin variants and the
/// correlation `rho` for the autoregressive kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelConfig {
    pub variant: KernelVariant,
    pub step: f64,
}

impl KernelConfig {
    pub fn new(variant: KernelVariant, step: f64) -> Result<Self> {
        let k = Self { variant, step };
        k.validate()?;
        Ok(k)
    }

    pub fn gaussian_rw(sigma: f64) -> Result<Self> {
        Self::new(KernelVariant::GaussianRw, sigma)
    }

    pub fn langevin(eps: f64) -> Result<Self> {
        Self::new(KernelVariant::Langevin, eps)
    }

    pub fn langevin_mh(eps: f64) -> Result<Self> {
        Self::new(KernelVariant::LangevinMh, eps)
    }

    pub fn autoregressive(rho: f64) -> Result<Self> {
        Self::new(KernelVariant::Autoregressive, rho)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel step must be positive, got {}",
                self.step
            )));
        }
        if self.variant == KernelVariant::Autoregressive && self.step >= 1.0 {
            return Err(Error::InvalidConfig(
                "autoregressive correlation must be below 1".into(),
            ));
        }
        Ok(())
    }

    /// Standard deviation of the Gaussian proposal around its mean.
    pub fn noise_scale(&self) -> f64 {
        match self.variant {
            KernelVariant::Autoregressive => math::sqrt(1.0 - self.step * self.step),
            _ => self.step,
        }
    }

    fn uses_gradient(&self) -> bool {
        matches!(
            self.variant,
            KernelVariant::Langevin | KernelVariant::LangevinMh
        )
    }
}

impl<E: DifferentiableEnergy> Kernel<E> for KernelConfig {
    type Aux = Vec<f64>;

    fn prepare(&self, energy: &E, states: &[Vec<f64>]) -> Result<Vec<Prepared<Vec<f64>>>> {
        if self.uses_gradient() {
            let (values, grads) = energy.log_p_and_grad_x_batch(states)?;
            let half = 0.5 * self.step * self.step;
            Ok(states
                .iter()
                .zip(values)
                .zip(grads)
                .map(|((x, log_p), g)| Prepared {
                    log_p,
                    aux: x.iter().zip(&g).map(|(xi, gi)| xi + half * gi).collect(),
                })
                .collect())
        } else {
            let mut values = Vec::with_capacity(states.len());
            energy.log_p_tilde_batch(states, &mut values)?;
            let rho = self.step;
            Ok(states
                .iter()
                .zip(values)
                .map(|(x, log_p)| Prepared {
                    log_p,
                    aux: match self.variant {
                        KernelVariant::Autoregressive => x.iter().map(|v| rho * v).collect(),
                        _ => x.clone(),
                    },
                })
                .collect())
        }
    }

    fn propose<R: RngCore + ?Sized>(
        &self,
        _from: &Vec<f64>,
        mean: &Vec<f64>,
        rng: &mut R,
    ) -> Vec<f64> {
        let s = self.noise_scale();
        mean.iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect()
    }

    fn log_q(&self, _from: &Vec<f64>, mean: &Vec<f64>, to: &Vec<f64>) -> f64 {
        let s = self.noise_scale();
        let d = to.len() as f64;
        let mut sq = 0.0;
        for (t, m) in to.iter().zip(mean) {
            let r = (t - m) / s;
            sq += r * r;
        }
        -0.5 * sq - d * math::ln(s) - 0.5 * d * math::LN_2PI
    }

    fn metropolized(&self) -> bool {
        self.variant == KernelVariant::LangevinMh
    }
}

/// One proposed transition with its densities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord<S> {
    pub from: S,
    pub to: S,
    /// `log q(to | from)`.
    pub log_q_fwd: f64,
    /// `log q(from | to)`.
    pub log_q_rev: f64,
    pub log_w: f64,
    pub accepted: bool,
}

/// The realized states `x(0) .. x(k)` of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample<S> {
    pub states: Vec<S>,
    /// Sum of step log-weights along the realized trajectory.
    pub log_w_total: f64,
    /// The part of `log_w_total` contributed by the kernel densities,
    /// `sum (log q_rev - log q_fwd)` over accepted steps. Held fixed when the
    /// model changes and the chain is re-scored.
    pub log_q_ratio_total: f64,
    pub accepted: usize,
    pub proposed: usize,
}

impl<S: Clone> ChainSample<S> {
    pub fn first(&self) -> &S {
        &self.states[0]
    }

    pub fn last(&self) -> &S {
        &self.states[self.states.len() - 1]
    }

    pub fn len_steps(&self) -> usize {
        self.states.len() - 1
    }

    /// The same chain presented in time-reversed order.
    pub fn reversed(&self) -> Self {
        let mut states = self.states.clone();
        states.reverse();
        Self {
            states,
            log_w_total: -self.log_w_total,
            log_q_ratio_total: -self.log_q_ratio_total,
            accepted: self.accepted,
            proposed: self.proposed,
        }
    }

    /// Log-weight of the frozen trajectory under a (possibly different) model,
    /// keeping the kernel densities fixed.
    pub fn rescored_log_w<E: Energy<State = S>>(&self, energy: &E) -> Result<f64> {
        let mut lp = Vec::with_capacity(2);
        energy.log_p_tilde_batch(&[self.first().clone(), self.last().clone()], &mut lp)?;
        Ok(self.log_q_ratio_total + lp[1] - lp[0])
    }
}

/// Probability that a Metropolis-Hastings step with log-weight `log_w` is
/// accepted.
pub fn acceptance_probability(log_w: f64) -> f64 {
    if log_w >= 0.0 {
        1.0
    } else {
        math::exp(log_w)
    }
}

/// Draws one uniform from `rng` and accepts with probability `min(1, e^log_w)`.
pub fn mh_accept_log_w<R: RngCore + ?Sized>(log_w: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < acceptance_probability(log_w)
}

fn check_pair<E: Energy>(energy: &E, from: &E::State, to: &E::State) -> Result<()> {
    if !energy.state_is_finite(from) || !energy.state_is_finite(to) {
        return Err(Error::NonFinite { chain: 0, step: 0 });
    }
    Ok(())
}

/// Draws one proposal `x' ~ q(.|x)`.
pub fn propose<E, K, R>(kernel: &K, energy: &E, x: &E::State, rng: &mut R) -> Result<E::State>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore + ?Sized,
{
    let prep = kernel.prepare(energy, core::slice::from_ref(x))?;
    if !prep[0].log_p.is_finite() {
        return Err(Error::NonFinite { chain: 0, step: 0 });
    }
    Ok(kernel.propose(x, &prep[0].aux, rng))
}

/// `log q(to | from)`.
pub fn log_q<E: Energy, K: Kernel<E>>(
    kernel: &K,
    energy: &E,
    from: &E::State,
    to: &E::State,
) -> Result<f64> {
    check_pair(energy, from, to)?;
    let prep = kernel.prepare(energy, core::slice::from_ref(from))?;
    Ok(kernel.log_q(from, &prep[0].aux, to))
}

/// Evaluates both directions of the transition `from -> to`.
pub fn transition_record<E: Energy, K: Kernel<E>>(
    kernel: &K,
    energy: &E,
    from: &E::State,
    to: &E::State,
) -> Result<TransitionRecord<E::State>> {
    check_pair(energy, from, to)?;
    let prep = kernel.prepare(energy, &[from.clone(), to.clone()])?;
    let log_q_fwd = kernel.log_q(from, &prep[0].aux, to);
    let log_q_rev = kernel.log_q(to, &prep[1].aux, from);
    let log_w = (log_q_rev - log_q_fwd) + prep[1].log_p - prep[0].log_p;
    Ok(TransitionRecord {
        from: from.clone(),
        to: to.clone(),
        log_q_fwd,
        log_q_rev,
        log_w,
        accepted: true,
    })
}

/// `log w(from, to)`.
pub fn step_log_w<E: Energy, K: Kernel<E>>(
    kernel: &K,
    energy: &E,
    from: &E::State,
    to: &E::State,
) -> Result<f64> {
    Ok(transition_record(kernel, energy, from, to)?.log_w)
}

/// Metropolis-Hastings decision for a fixed proposal `from -> to`.
pub fn mh_accept<E, K, R>(
    kernel: &K,
    energy: &E,
    from: &E::State,
    to: &E::State,
    rng: &mut R,
) -> Result<bool>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore + ?Sized,
{
    if !kernel.metropolized() {
        return Err(Error::NotMetropolized);
    }
    let lw = step_log_w(kernel, energy, from, to)?;
    Ok(mh_accept_log_w(lw, rng))
}

/// Independent per-chain random streams derived from `master`.
pub fn chain_rngs<R: RngCore + ?Sized>(master: &mut R, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|_| ChaCha8Rng::seed_from_u64(master.next_u64()))
        .collect()
}

/// Runs `k` transitions from each `x0s[i]` using `rngs[i]`, evaluating the
/// model once per step for the whole batch.
///
/// Within a chain the random draws are, per step: the proposal noise, then one
/// uniform when the kernel is metropolized.
pub fn run_chains<E, K, R>(
    kernel: &K,
    energy: &E,
    x0s: &[E::State],
    k: usize,
    rngs: &mut [R],
) -> Result<Vec<ChainSample<E::State>>>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore,
{
    if k == 0 {
        return Err(Error::InvalidConfig(
            "chain length k must be at least 1".into(),
        ));
    }
    if rngs.len() != x0s.len() {
        return Err(Error::DimensionMismatch {
            expected: x0s.len(),
            got: rngs.len(),
        });
    }
    let n = x0s.len();
    let mut current: Vec<E::State> = x0s.to_vec();
    let mut prepared = kernel.prepare(energy, &current)?;
    for (i, (x, p)) in current.iter().zip(&prepared).enumerate() {
        if !energy.state_is_finite(x) || !p.log_p.is_finite() {
            return Err(Error::NonFinite { chain: i, step: 0 });
        }
    }
    let mut chains: Vec<ChainSample<E::State>> = current
        .iter()
        .map(|x| {
            let mut states = Vec::with_capacity(k + 1);
            states.push(x.clone());
            ChainSample {
                states,
                log_w_total: 0.0,
                log_q_ratio_total: 0.0,
                accepted: 0,
                proposed: 0,
            }
        })
        .collect();
    let mh = kernel.metropolized();

    for step in 1..=k {
        let proposals: Vec<E::State> = (0..n)
            .map(|i| kernel.propose(&current[i], &prepared[i].aux, &mut rngs[i]))
            .collect();
        let prop_prep = kernel.prepare(energy, &proposals)?;
        for (i, (to, to_prep)) in proposals.into_iter().zip(prop_prep).enumerate() {
            if !energy.state_is_finite(&to) || !to_prep.log_p.is_finite() {
                return Err(Error::NonFinite { chain: i, step });
            }
            let from = &current[i];
            let log_q_fwd = kernel.log_q(from, &prepared[i].aux, &to);
            let log_q_rev = kernel.log_q(&to, &to_prep.aux, from);
            let q_ratio = log_q_rev - log_q_fwd;
            let log_w = q_ratio + to_prep.log_p - prepared[i].log_p;
            if log_w.is_nan() {
                return Err(Error::NonFinite { chain: i, step });
            }
            let chain = &mut chains[i];
            chain.proposed += 1;
            let accepted = !mh || mh_accept_log_w(log_w, &mut rngs[i]);
            if accepted {
                chain.accepted += 1;
                chain.log_w_total += log_w;
                chain.log_q_ratio_total += q_ratio;
                current[i] = to;
                prepared[i] = to_prep;
            }
            chain.states.push(current[i].clone());
        }
    }
    Ok(chains)
}

/// A single chain; identical to the corresponding entry of [`run_chains`]
/// given the same stream.
pub fn run_chain<E, K, R>(
    kernel: &K,
    energy: &E,
    x0: &E::State,
    k: usize,
    rng: &mut R,
) -> Result<ChainSample<E::State>>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore,
{
    let mut out = run_chains(
        kernel,
        energy,
        core::slice::from_ref(x0),
        k,
        core::slice::from_mut(rng),
    )?;
    Ok(out.remove(0))
}

/// Seeds one stream per batch entry from `master` and runs the chains in
/// fixed-size blocks, keeping memory flat for very large batches.
pub fn sample_chains<E, K, R>(
    kernel: &K,
    energy: &E,
    batch: &[E::State],
    k: usize,
    master: &mut R,
) -> Result<Vec<ChainSample<E::State>>>
where
    E: Energy,
    K: Kernel<E>,
    R: RngCore + ?Sized,
{
    const BLOCK: usize = 4096;
    let seeds: Vec<u64> = (0..batch.len()).map(|_| master.next_u64()).collect();
    let mut chains = Vec::with_capacity(batch.len());
    for (block, block_seeds) in batch.chunks(BLOCK).zip(seeds.chunks(BLOCK)) {
        let mut rngs: Vec<ChaCha8Rng> = block_seeds
            .iter()
            .map(|&s| ChaCha8Rng::seed_from_u64(s))
            .collect();
        match run_chains(kernel, energy, block, k, &mut rngs) {
            Ok(mut c) => chains.append(&mut c),
            Err(Error::NonFinite { chain, step }) => {
                return Err(Error::NonFinite {
                    chain: chain + chains.len(),
                    step,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianEnergy;
    use crate::model::{EnergyModel, ModelSpec};

    fn model() -> EnergyModel {
        EnergyModel::init(
            ModelSpec::new(2, 6, 2, 1, crate::Activation::Softplus).unwrap(),
            4,
        )
        .unwrap()
    }

    #[test]
    fn random_walk_displacement_is_scaled_noise() {
        let m = model();
        let k = KernelConfig::gaussian_rw(0.3).unwrap();
        let x = vec![0.2, -0.1];
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let y = propose(&k, &m, &x, &mut r1).unwrap();
        let z: Vec<f64> = (0..2)
            .map(|_| r2.sample::<f64, _>(StandardNormal))
            .collect();
        for i in 0..2 {
            assert_eq!(y[i], x[i] + 0.3 * z[i]);
        }
    }

    #[test]
    fn fixed_seed_gives_fixed_proposal() {
        let m = model();
        let k = KernelConfig::langevin(0.1).unwrap();
        let x = vec![0.5, 0.5];
        let a = propose(&k, &m, &x, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = propose(&k, &m, &x, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn langevin_on_flat_model_is_a_random_walk() {
        let flat = EnergyModel::zeros(ModelSpec::desk(2)).unwrap();
        let lang = KernelConfig::langevin(0.2).unwrap();
        let rw = KernelConfig::gaussian_rw(0.2).unwrap();
        let x = vec![0.3, -0.7];
        let a = propose(&lang, &flat, &x, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = propose(&rw, &flat, &x, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            log_q(&lang, &flat, &x, &a).unwrap(),
            log_q(&rw, &flat, &x, &a).unwrap()
        );
    }

    #[test]
    fn standard_normal_density_at_origin() {
        let g = GaussianEnergy::standard(1);
        let k = KernelConfig::gaussian_rw(1.0).unwrap();
        let v = log_q(&k, &g, &vec![0.0], &vec![0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * core::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn random_walk_density_is_symmetric() {
        let m = model();
        let k = KernelConfig::gaussian_rw(0.4).unwrap();
        let a = vec![0.1, 0.9];
        let b = vec![-1.3, 0.2];
        assert_eq!(
            log_q(&k, &m, &a, &b).unwrap(),
            log_q(&k, &m, &b, &a).unwrap()
        );
    }

    #[test]
    fn symmetric_kernel_weight_is_density_ratio() {
        let m = model();
        let k = KernelConfig::gaussian_rw(0.4).unwrap();
        let a = vec![0.1, 0.9];
        let b = vec![-1.3, 0.2];
        let lw = step_log_w(&k, &m, &a, &b).unwrap();
        let want = m.log_p_tilde(&b).unwrap() - m.log_p_tilde(&a).unwrap();
        assert!((lw - want).abs() < 1e-14);
    }

    #[test]
    fn self_transition_has_zero_weight() {
        let m = model();
        for k in [
            KernelConfig::gaussian_rw(0.4).unwrap(),
            KernelConfig::langevin(0.4).unwrap(),
            KernelConfig::langevin_mh(0.4).unwrap(),
        ] {
            assert_eq!(
                step_log_w(&k, &m, &vec![0.3, 0.1], &vec![0.3, 0.1]).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn mh_accept_rejects_non_mh_kernels() {
        let m = model();
        let k = KernelConfig::langevin(0.1).unwrap();
        let r = mh_accept(
            &k,
            &m,
            &vec![0.0, 0.0],
            &vec![0.1, 0.0],
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(r, Err(Error::NotMetropolized));
    }

    #[test]
    fn acceptance_probability_is_min_one_w() {
        assert_eq!(acceptance_probability(0.0), 1.0);
        assert_eq!(acceptance_probability(3.0), 1.0);
        assert!((acceptance_probability(0.25f64.ln()) - 0.25).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..1000).all(|_| mh_accept_log_w(0.0, &mut rng)));
    }

    #[test]
    fn single_step_chain() {
        let m = model();
        let k = KernelConfig::langevin(0.3).unwrap();
        let x0 = vec![0.1, 0.2];
        let c = run_chain(&k, &m, &x0, 1, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(c.states.len(), 2);
        assert_eq!(c.states[0], x0);
        let lw = step_log_w(&k, &m, &c.states[0], &c.states[1]).unwrap();
        assert!((c.log_w_total - lw).abs() < 1e-13);
    }

    #[test]
    fn zero_length_chain_is_rejected() {
        let m = model();
        let k = KernelConfig::langevin(0.3).unwrap();
        assert!(run_chain(
            &k,
            &m,
            &vec![0.0, 0.0],
            0,
            &mut ChaCha8Rng::seed_from_u64(0)
        )
        .is_err());
    }

    #[test]
    fn batched_chains_match_single_chains() {
        let m = model();
        let k = KernelConfig::langevin_mh(0.5).unwrap();
        let batch: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![0.2 * i as f64, -0.1 * i as f64])
            .collect();
        let mut master = ChaCha8Rng::seed_from_u64(17);
        let chains = sample_chains(&k, &m, &batch, 4, &mut master).unwrap();
        let mut master = ChaCha8Rng::seed_from_u64(17);
        let mut rngs = chain_rngs(&mut master, batch.len());
        for (i, x0) in batch.iter().enumerate() {
            let single = run_chain(&k, &m, x0, 4, &mut rngs[i]).unwrap();
            assert_eq!(single, chains[i]);
        }
    }

    #[test]
    fn random_walk_chain_telescopes() {
        // log p~ quadratic: the weights of a symmetric kernel telescope.
        let g = GaussianEnergy::new(vec![0.3, -0.2], vec![0.5, -1.0]).unwrap();
        let k = KernelConfig::gaussian_rw(0.7).unwrap();
        let x0 = vec![1.0, 2.0];
        let c = run_chain(&k, &g, &x0, 9, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let quad = |x: &[f64]| -> f64 {
            -0.5 * (0.5f64.exp() * (x[0] - 0.3).powi(2) + (-1.0f64).exp() * (x[1] + 0.2).powi(2))
        };
        let mut hand = 0.0;
        for w in c.states.windows(2) {
            hand += quad(&w[1]) - quad(&w[0]);
        }
        let ends = quad(c.last()) - quad(c.first());
        assert!((c.log_w_total - hand).abs() < 1e-12);
        assert!((c.log_w_total - ends).abs() < 1e-12);
    }

    #[test]
    fn rejected_steps_keep_state_and_add_nothing() {
        // a huge step on a peaked model forces rejections
        let g = GaussianEnergy::new(vec![0.0, 0.0], vec![6.0, 6.0]).unwrap();
        let k = KernelConfig::langevin_mh(2.0).unwrap();
        let c = run_chain(
            &k,
            &g,
            &vec![0.0, 0.0],
            50,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(c.accepted < c.proposed);
        let mut total = 0.0;
        for w in c.states.windows(2) {
            if w[0] != w[1] {
                total += step_log_w(&k, &g, &w[0], &w[1]).unwrap();
            }
        }
        assert!((c.log_w_total - total).abs() < 1e-9 * total.abs().max(1.0));
    }
}
