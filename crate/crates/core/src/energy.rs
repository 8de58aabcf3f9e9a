//! Traits shared by every model the estimators can train.

use alloc::vec::Vec;

use crate::error::Result;

/// An unnormalized log-density `log p~_theta` over some state space.
///
/// Batched methods are the primitive; the per-state helpers are derived from
/// them. Implementations must compute every batch entry with the same
/// sequence of floating-point operations regardless of batch size, so a
/// chain run alone reproduces the same chain run inside a batch bit for bit.
pub trait Energy {
    type State: Clone;

    /// Length of the flat parameter vector.
    fn param_len(&self) -> usize;

    /// Writes `log p~(x)` for every state into `out` (cleared first).
    fn log_p_tilde_batch(&self, states: &[Self::State], out: &mut Vec<f64>) -> Result<()>;

    /// Adds `sum_i weights[i] * grad_theta log p~(states[i])` into `out`.
    ///
    /// Contributions are reduced in ascending state order.
    fn accumulate_grad_theta(
        &self,
        states: &[Self::State],
        weights: &[f64],
        out: &mut [f64],
    ) -> Result<()>;

    fn state_is_finite(&self, _state: &Self::State) -> bool {
        true
    }

    fn log_p_tilde_of(&self, state: &Self::State) -> Result<f64> {
        let mut out = Vec::with_capacity(1);
        self.log_p_tilde_batch(core::slice::from_ref(state), &mut out)?;
        Ok(out[0])
    }

    fn grad_theta_of(&self, state: &Self::State) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.param_len()];
        self.accumulate_grad_theta(core::slice::from_ref(state), &[1.0], &mut out)?;
        Ok(out)
    }
}

/// A continuous energy over `R^d` that also exposes `grad_x log p~`.
pub trait DifferentiableEnergy: Energy<State = Vec<f64>> {
    fn dim(&self) -> usize;

    /// Returns `(log p~(x_i), grad_x log p~(x_i))` for every state.
    fn log_p_and_grad_x_batch(&self, states: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)>;
}

pub(crate) fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
