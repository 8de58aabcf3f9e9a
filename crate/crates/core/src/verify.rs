//! Self-contained identity suite over the discrete oracle and small
//! continuous models. The weighting function is a parameter so that a
//! corrupted formula can be shown to be caught.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::estimators::{acd_grad_from_chains_with, cd_grad_from_chains, cnce_bce_loss};
use crate::gaussian::GaussianEnergy;
use crate::mcmc::{run_chain, sample_chains, step_log_w, KernelConfig};
use crate::model::{Activation, EnergyModel, ModelSpec, ParamVector};
use crate::oracle::{
    build_metropolis, check_detailed_balance, exact_chain_gradient, exact_chain_gradient_with,
    exact_cnce_gradient, finite_diff_richardson, DiscreteModel, Graph,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// The worst observed discrepancy.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, value: f64, tolerance: f64, detail: String) -> Self {
        // NaN never passes
        Self {
            name,
            passed: value <= tolerance,
            value,
            tolerance,
            detail,
        }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps coordinates whose true
/// value is (near) zero from dividing by rounding noise.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_masses(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Detailed balance and constant weights for exact Metropolis kernels on
/// rings of 3 to 8 states.
fn discrete_reversibility(
    alpha: &dyn Fn(f64) -> f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CheckResult>,
) -> Result<()> {
    let trials = 100;
    let mut balance: f64 = 0.0;
    let mut worst_lw: f64 = 0.0;
    let mut worst_alpha: f64 = 0.0;
    for t in 0..trials {
        let n = 3 + t % 6;
        let masses = random_masses(rng, n);
        let kernel = build_metropolis(&masses, &Graph::ring(n))?;
        let model = DiscreteModel::new(masses.clone())?;
        balance = balance.max(check_detailed_balance(&kernel, &masses));
        for a in 0..n {
            for b in 0..n {
                if kernel.prob(a, b) == 0.0 {
                    continue;
                }
                let lw = step_log_w(&kernel, &model, &a, &b)?;
                worst_lw = worst_lw.max(lw.abs());
                worst_alpha = worst_alpha.max((alpha(lw) - 0.5).abs());
            }
        }
    }
    out.push(CheckResult::new(
        "detailed_balance",
        balance,
        1e-12,
        format!("max |pi_a T(a,b) - pi_b T(b,a)| over {trials} ring kernels"),
    ));
    out.push(CheckResult::new(
        "discrete_log_w_zero",
        worst_lw,
        1e-12,
        "max |log w| over all allowed transitions".into(),
    ));
    out.push(CheckResult::new(
        "discrete_alpha_half",
        worst_alpha,
        1e-12,
        "max |alpha - 1/2| over all allowed transitions".into(),
    ));
    Ok(())
}

/// The autoregressive kernel is exactly reversible for a standard normal.
fn continuous_reversibility(
    alpha: &dyn Fn(f64) -> f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CheckResult>,
) -> Result<()> {
    let energy = GaussianEnergy::standard(3);
    let kernel = KernelConfig::autoregressive(0.8)?;
    let transitions = 10_000;
    let x0: Vec<Vec<f64>> = (0..transitions)
        .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let chains = sample_chains(&kernel, &energy, &x0, 1, rng)?;
    let worst = chains
        .iter()
        .map(|c| (alpha(c.log_w_total) - 0.5).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::new(
        "autoregressive_alpha_half",
        worst,
        1e-10,
        format!("max |alpha - 1/2| over {transitions} transitions"),
    ));
    Ok(())
}

/// Adjusted CD is exactly half of CD when every weight is 1/2.
fn acd_half_cd(
    alpha: &dyn Fn(f64) -> f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CheckResult>,
) -> Result<()> {
    let mut worst: f64 = 0.0;
    for n in [3usize, 5, 8] {
        let masses = random_masses(rng, n);
        let kernel = build_metropolis(&masses, &Graph::ring(n))?;
        let model = DiscreteModel::new(masses)?;
        let batch: Vec<usize> = (0..256).map(|i| i % n).collect();
        for k in [1usize, 3] {
            let seed = rng.random::<u64>();
            let chains = sample_chains(
                &kernel,
                &model,
                &batch,
                k,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?;
            let acd = acd_grad_from_chains_with(&model, &chains, alpha)?;
            let cd = cd_grad_from_chains(&model, &chains)?;
            worst = worst.max(max_abs_diff(&acd.grad, &cd.grad.scaled(0.5)));
        }
    }
    let energy = GaussianEnergy::new(vec![0.0; 2], vec![0.0; 2])?;
    let kernel = KernelConfig::autoregressive(0.5)?;
    let batch: Vec<Vec<f64>> = (0..256)
        .map(|_| (0..2).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let chains = sample_chains(&kernel, &energy, &batch, 1, rng)?;
    let acd = acd_grad_from_chains_with(&energy, &chains, alpha)?;
    let cd = cd_grad_from_chains(&energy, &chains)?;
    worst = worst.max(max_abs_diff(&acd.grad, &cd.grad.scaled(0.5)));
    out.push(CheckResult::new(
        "acd_half_cd",
        worst,
        1e-12,
        "max |acd - cd/2| under reversible kernels".into(),
    ));
    Ok(())
}

/// Enumerated chain gradients against derivatives of the enumerated loss,
/// the k = 1 reduction, and the zero gradient at equilibrium.
fn enumeration(
    alpha: &dyn Fn(f64) -> f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CheckResult>,
) -> Result<()> {
    let mut fd_worst: f64 = 0.0;
    let mut k1_worst: f64 = 0.0;
    let mut eq_worst: f64 = 0.0;
    for (n, k) in [(4usize, 2usize), (5, 3), (6, 3), (3, 1)] {
        // the kernel targets a different mass than the model so weights vary
        let kernel_mass = random_masses(rng, n);
        let kernel = build_metropolis(&kernel_mass, &Graph::ring(n))?;
        let theta = random_masses(rng, n);
        let data = random_dist(rng, n);
        let model = DiscreteModel::new(theta.clone())?;
        let exact = exact_chain_gradient_with(&model, &kernel, &data, k, alpha)?;
        let fd = finite_diff_richardson(
            |t| {
                DiscreteModel::new(t.to_vec())
                    .and_then(|m| exact_chain_gradient(&m, &kernel, &data, k))
                    .map_or(f64::NAN, |r| r.loss)
            },
            &theta,
            1e-3,
            None,
        );
        fd_worst = fd_worst.max(max_abs_diff(&exact.grad, &fd));

        let one = exact_chain_gradient_with(&model, &kernel, &data, 1, alpha)?;
        k1_worst = k1_worst.max(max_abs_diff(
            &one.grad,
            &exact_cnce_gradient(&model, &kernel, &data)?,
        ));

        let pi = model.distribution();
        let matched = build_metropolis(&theta, &Graph::ring(n))?;
        let eq = exact_chain_gradient_with(&model, &matched, &pi, k, alpha)?;
        eq_worst = eq_worst.max(eq.grad.iter().fold(0.0, |m: f64, g| m.max(g.abs())));
    }
    out.push(CheckResult::new(
        "enumeration_matches_loss_derivative",
        fd_worst,
        1e-10,
        "max |exact chain gradient - d(chain loss)/d theta|".into(),
    ));
    out.push(CheckResult::new(
        "k1_equals_cnce",
        k1_worst,
        1e-12,
        "max |chain gradient (k=1) - pairwise CNCE gradient|".into(),
    ));
    out.push(CheckResult::new(
        "zero_gradient_at_equilibrium",
        eq_worst,
        1e-12,
        "max |gradient| when data equals model".into(),
    ));
    Ok(())
}

/// CNCE on a small network against finite differences of its BCE loss.
fn cnce_network(
    alpha: &dyn Fn(f64) -> f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CheckResult>,
) -> Result<()> {
    let spec = ModelSpec::new(2, 16, 3, 2, Activation::Softplus)?;
    let model = EnergyModel::init(spec.clone(), rng.random())?;
    let kernel = KernelConfig::gaussian_rw(0.3)?;
    let batch: Vec<Vec<f64>> = (0..32)
        .map(|_| (0..2).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut pairs = Vec::with_capacity(batch.len());
    let mut chains = Vec::with_capacity(batch.len());
    for x in &batch {
        let c = run_chain(&kernel, &model, x, 1, rng)?;
        pairs.push((c.first().clone(), c.last().clone()));
        chains.push(c);
    }
    let est = acd_grad_from_chains_with(&model, &chains, alpha)?;
    let coords: Vec<usize> = (0..20)
        .map(|_| rng.random_range(0..model.params().len()))
        .collect();
    let fd = finite_diff_richardson(
        |t| {
            EnergyModel::new(spec.clone(), ParamVector(t.to_vec()))
                .and_then(|m| cnce_bce_loss(&m, &kernel, &pairs))
                .unwrap_or(f64::NAN)
        },
        model.params(),
        1e-4,
        Some(&coords),
    );
    let worst = coords
        .iter()
        .map(|&i| relative_error(est.grad[i], fd[i], 1e-6))
        .fold(0.0, f64::max);
    out.push(CheckResult::new(
        "cnce_matches_loss_derivative",
        worst,
        1e-5,
        "max relative error over 20 parameter coordinates".into(),
    ));
    Ok(())
}

/// Runs every identity with the given weighting function.
pub fn run_suite_with(alpha: &dyn Fn(f64) -> f64, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    discrete_reversibility(alpha, &mut rng, &mut out)?;
    continuous_reversibility(alpha, &mut rng, &mut out)?;
    acd_half_cd(alpha, &mut rng, &mut out)?;
    enumeration(alpha, &mut rng, &mut out)?;
    cnce_network(alpha, &mut rng, &mut out)?;
    Ok(out)
}

pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    run_suite_with(&crate::estimators::alpha_from_log_w, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;

    #[test]
    fn suite_passes() {
        for r in run_suite(0).unwrap() {
            assert!(r.passed, "{} = {:e} > {:e}", r.name, r.value, r.tolerance);
        }
    }

    #[test]
    fn corrupted_weights_are_caught() {
        let shifted = |lw: f64| math::logistic(lw + 1e-3);
        let failed: Vec<_> = run_suite_with(&shifted, 0)
            .unwrap()
            .into_iter()
            .filter(|r| !r.passed)
            .map(|r| r.name)
            .collect();
        assert!(failed.contains(&"discrete_alpha_half"));
        assert!(failed.contains(&"enumeration_matches_loss_derivative"));
        let flipped = |lw: f64| math::logistic(-lw);
        let results = run_suite_with(&flipped, 0).unwrap();
        assert!(results
            .iter()
            .any(|r| r.name == "cnce_matches_loss_derivative" && !r.passed));
    }
}
