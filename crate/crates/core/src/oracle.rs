//! Brute-force verification substrate.
//!
//! A [`DiscreteModel`] has one parameter per state, `theta_s = log p~(s)`, so
//! `grad_theta log p~(s)` is the indicator of `s`. Paired with an exact
//! Metropolis kernel on a small graph, every expectation the estimators
//! approximate can be computed by enumerating all chains.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, RngCore};

use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::estimators::alpha_from_log_w;
use crate::math;
use crate::mcmc::{Kernel, Prepared};
use crate::model::ParamVector;

/// Unnormalized log-masses over `S` states.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub log_mass: Vec<f64>,
}

impl DiscreteModel {
    pub fn new(log_mass: Vec<f64>) -> Result<Self> {
        if log_mass.is_empty() || log_mass.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "log masses must be finite and non-empty".into(),
            ));
        }
        Ok(Self { log_mass })
    }

    pub fn num_states(&self) -> usize {
        self.log_mass.len()
    }

    /// Normalized probabilities `pi_s`.
    pub fn distribution(&self) -> Vec<f64> {
        softmax(&self.log_mass)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| math::exp(l - max)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

impl Energy for DiscreteModel {
    type State = usize;

    fn param_len(&self) -> usize {
        self.log_mass.len()
    }

    fn log_p_tilde_batch(&self, states: &[usize], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for &s in states {
            let v = *self.log_mass.get(s).ok_or(Error::DimensionMismatch {
                expected: self.log_mass.len(),
                got: s,
            })?;
            out.push(v);
        }
        Ok(())
    }

    fn accumulate_grad_theta(
        &self,
        states: &[usize],
        weights: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != self.log_mass.len() || weights.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: self.log_mass.len(),
                got: out.len(),
            });
        }
        for (&s, w) in states.iter().zip(weights) {
            if s >= out.len() {
                return Err(Error::DimensionMismatch {
                    expected: out.len(),
                    got: s,
                });
            }
            out[s] += w;
        }
        Ok(())
    }
}

/// Symmetric adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidConfig(format!("bad edge ({a}, {b})")));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { neighbors })
    }

    /// Cycle over `n` states; a single edge for `n = 2`.
    pub fn ring(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::from_edges(n, &edges).expect("ring edges are valid")
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, s: usize) -> &[usize] {
        &self.neighbors[s]
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        if self.neighbors.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for &t in &self.neighbors[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen.into_iter().all(|v| v)
    }
}

/// A row-stochastic transition matrix with its elementwise logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    n: usize,
    t: Vec<f64>,
    log_t: Vec<f64>,
}

impl DiscreteKernel {
    /// Wraps an arbitrary row-stochastic matrix (row-major `n x n`).
    pub fn from_matrix(n: usize, t: Vec<f64>) -> Result<Self> {
        if t.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: t.len(),
            });
        }
        for row in t.chunks_exact(n) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(
                    "transition rows must be non-negative and sum to 1".into(),
                ));
            }
        }
        let log_t = t
            .iter()
            .map(|v| {
                if *v > 0.0 {
                    math::ln(*v)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        Ok(Self { n, t, log_t })
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.t[from * self.n + to]
    }

    pub fn log_prob(&self, from: usize, to: usize) -> f64 {
        self.log_t[from * self.n + to]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.t
    }

    pub fn row_sum_error(&self) -> f64 {
        self.t
            .chunks_exact(self.n)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Metropolis kernel for `pi ∝ exp(log_mass)` from the symmetric proposal
/// "pick each neighbor with probability 1/max_degree, else stay":
/// `T(s, s') = min(1, pi_s' / pi_s) / max_degree` for neighbors, and the
/// remaining mass on the diagonal. On regular graphs `max_degree` is the
/// degree of every state.
pub fn build_metropolis(log_mass: &[f64], graph: &Graph) -> Result<DiscreteKernel> {
    let n = log_mass.len();
    if graph.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: graph.len(),
        });
    }
    if !graph.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    let deg = graph.max_degree() as f64;
    let log_prop = -math::ln(deg);
    let mut t = vec![0.0; n * n];
    let mut log_t = vec![f64::NEG_INFINITY; n * n];
    for s in 0..n {
        let mut off = 0.0;
        for &u in graph.neighbors(s) {
            let log_acc = (log_mass[u] - log_mass[s]).min(0.0);
            log_t[s * n + u] = log_prop + log_acc;
            let p = math::exp(log_acc) / deg;
            t[s * n + u] = p;
            off += p;
        }
        let stay = (1.0 - off).max(0.0);
        t[s * n + s] = stay;
        log_t[s * n + s] = if stay > 0.0 {
            math::ln(stay)
        } else {
            f64::NEG_INFINITY
        };
    }
    Ok(DiscreteKernel { n, t, log_t })
}

/// `max_{s,s'} |pi_s T(s,s') - pi_s' T(s',s)|` with `pi ∝ exp(log_mass)`.
pub fn check_detailed_balance(kernel: &DiscreteKernel, log_mass: &[f64]) -> f64 {
    let pi = softmax(log_mass);
    let n = kernel.n;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            worst = worst.max((pi[a] * kernel.prob(a, b) - pi[b] * kernel.prob(b, a)).abs());
        }
    }
    worst
}

/// Stationary distribution by power iteration on the lazy chain `(I + T) / 2`.
pub fn stationary_distribution(kernel: &DiscreteKernel, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = kernel.n;
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                next[b] += p[a] * kernel.prob(a, b);
            }
        }
        let mut tv = 0.0;
        for (q, old) in next.iter_mut().zip(&p) {
            *q = 0.5 * (*q + old);
            tv += (*q - old).abs();
        }
        p = next;
        if 0.5 * tv < tol {
            break;
        }
    }
    p
}

impl Kernel<DiscreteModel> for DiscreteKernel {
    type Aux = ();

    fn prepare(&self, energy: &DiscreteModel, states: &[usize]) -> Result<Vec<Prepared<()>>> {
        let mut lp = Vec::with_capacity(states.len());
        energy.log_p_tilde_batch(states, &mut lp)?;
        Ok(lp
            .into_iter()
            .map(|log_p| Prepared { log_p, aux: () })
            .collect())
    }

    fn propose<R: RngCore + ?Sized>(&self, from: &usize, _aux: &(), rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.t[from * self.n..(from + 1) * self.n];
        let mut acc = 0.0;
        for (s, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        // rounding left u above the cumulative sum: take the last reachable state
        row.iter().rposition(|p| *p > 0.0).unwrap_or(*from)
    }

    fn log_q(&self, from: &usize, _aux: &(), to: &usize) -> f64 {
        self.log_prob(*from, *to)
    }
}

/// Exact expectation of the chain discrimination game.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactChainResult {
    /// Expected adjusted CD-k gradient.
    pub grad: ParamVector,
    /// Expected chain BCE loss.
    pub loss: f64,
}

pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Enumerates all `S^(k+1)` chains `x0 ~ data_dist, x_i ~ T(x_{i-1}, .)`.
/// The kernel is held fixed; the model enters through `log p~` at the
/// endpoints. `alpha` maps a chain log-weight to its weight.
pub fn exact_chain_gradient_with<F: Fn(f64) -> f64>(
    model: &DiscreteModel,
    kernel: &DiscreteKernel,
    data_dist: &[f64],
    k: usize,
    alpha: F,
) -> Result<ExactChainResult> {
    let n = kernel.n;
    if model.num_states() != n || data_dist.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data_dist.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig(
            "chain length k must be at least 1".into(),
        ));
    }
    let needed = (n as u128).checked_pow(k as u32 + 1).unwrap_or(u128::MAX);
    if needed > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            needed,
            budget: ENUMERATION_BUDGET,
        });
    }
    let theta = &model.log_mass;
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    let mut path = vec![0usize; k + 1];
    loop {
        let mut prob = data_dist[path[0]];
        let mut q_ratio = 0.0;
        for w in path.windows(2) {
            prob *= kernel.prob(w[0], w[1]);
            if prob == 0.0 {
                break;
            }
            q_ratio += kernel.log_prob(w[1], w[0]) - kernel.log_prob(w[0], w[1]);
        }
        if prob > 0.0 {
            let lw = q_ratio + theta[path[k]] - theta[path[0]];
            let a = alpha(lw);
            grad[path[k]] += prob * a;
            grad[path[0]] -= prob * a;
            loss += prob * math::softplus(lw);
        }
        // odometer increment, last position fastest
        let mut pos = k + 1;
        loop {
            if pos == 0 {
                return Ok(ExactChainResult {
                    grad: ParamVector(grad),
                    loss,
                });
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
        }
    }
}

pub fn exact_chain_gradient(
    model: &DiscreteModel,
    kernel: &DiscreteKernel,
    data_dist: &[f64],
    k: usize,
) -> Result<ExactChainResult> {
    exact_chain_gradient_with(model, kernel, data_dist, k, alpha_from_log_w)
}

/// Exact CNCE gradient from pairwise enumeration:
/// `sum_{a,b} p(a) q(b|a) alpha(a, b) (e_b - e_a)`.
pub fn exact_cnce_gradient(
    model: &DiscreteModel,
    kernel: &DiscreteKernel,
    data_dist: &[f64],
) -> Result<ParamVector> {
    let n = kernel.n;
    if model.num_states() != n || data_dist.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data_dist.len(),
        });
    }
    let mut grad = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            let p = data_dist[a] * kernel.prob(a, b);
            if p == 0.0 {
                continue;
            }
            let lw = kernel.log_prob(b, a) + model.log_mass[b]
                - kernel.log_prob(a, b)
                - model.log_mass[a];
            let w = alpha_from_log_w(lw);
            grad[b] += p * w;
            grad[a] -= p * w;
        }
    }
    Ok(ParamVector(grad))
}

/// Central differences `(f(t + h e_i) - f(t - h e_i)) / 2h` for each
/// requested coordinate (all when `coords` is `None`). Entries for
/// coordinates that were not requested are zero.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(
    mut loss: F,
    theta: &[f64],
    h: f64,
    coords: Option<&[usize]>,
) -> Vec<f64> {
    let all: Vec<usize> = (0..theta.len()).collect();
    let coords = coords.unwrap_or(&all);
    let mut t = theta.to_vec();
    let mut out = vec![0.0; theta.len()];
    for &i in coords {
        let orig = t[i];
        t[i] = orig + h;
        let up = loss(&t);
        t[i] = orig - h;
        let down = loss(&t);
        t[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    out
}

/// Richardson-extrapolated central differences, error `O(h^4)`.
pub fn finite_diff_richardson<F: FnMut(&[f64]) -> f64>(
    mut loss: F,
    theta: &[f64],
    h: f64,
    coords: Option<&[usize]>,
) -> Vec<f64> {
    let coarse = finite_diff(&mut loss, theta, h, coords);
    let fine = finite_diff(&mut loss, theta, 0.5 * h, coords);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mass_gives_plain_random_walk() {
        let k = build_metropolis(&[0.3; 5], &Graph::ring(5)).unwrap();
        for s in 0..5 {
            assert_eq!(k.prob(s, s), 0.0);
            assert_eq!(k.prob(s, (s + 1) % 5), 0.5);
            assert_eq!(k.prob(s, (s + 4) % 5), 0.5);
        }
    }

    #[test]
    fn two_state_chain() {
        let log_mass = [(1.0f64 / 3.0).ln(), (2.0f64 / 3.0).ln()];
        let k = build_metropolis(&log_mass, &Graph::ring(2)).unwrap();
        assert!((k.prob(0, 1) - 1.0).abs() < 1e-15);
        assert!((k.prob(1, 0) - 0.5).abs() < 1e-15);
        assert!((k.prob(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(
            build_metropolis(&[0.0; 4], &g),
            Err(Error::DisconnectedGraph)
        );
    }

    #[test]
    fn stationary_distribution_is_target() {
        let log_mass = [0.1, -1.2, 0.7, 2.0, -0.3];
        let k = build_metropolis(&log_mass, &Graph::ring(5)).unwrap();
        let pi = softmax(&log_mass);
        let st = stationary_distribution(&k, 1e-15, 100_000);
        let tv: f64 = 0.5 * pi.iter().zip(&st).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 1e-10, "{tv}");
    }

    #[test]
    fn detailed_balance_violation_detection() {
        let log_mass = [0.5, -0.5, 1.5, 0.0];
        let k = build_metropolis(&log_mass, &Graph::ring(4)).unwrap();
        assert!(check_detailed_balance(&k, &log_mass) <= 1e-12);
        assert!(k.row_sum_error() <= 1e-12);

        let mut t = k.matrix().to_vec();
        t[1] += 0.05; // 0 -> 1
        t[0] -= 0.05;
        let bad = DiscreteKernel::from_matrix(4, t).unwrap();
        assert!(check_detailed_balance(&bad, &log_mass) > 1e-3);
    }

    #[test]
    fn uniform_target_violation_is_row_asymmetry() {
        let t = vec![0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.4, 0.1, 0.5];
        let k = DiscreteKernel::from_matrix(3, t.clone()).unwrap();
        let mut asym: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                asym = asym.max((t[a * 3 + b] - t[b * 3 + a]).abs());
            }
        }
        let v = check_detailed_balance(&k, &[0.0; 3]);
        assert!((v - asym / 3.0).abs() < 1e-15);
    }

    #[test]
    fn budget_is_enforced() {
        let m = DiscreteModel::new(vec![0.0; 10]).unwrap();
        let k = build_metropolis(&m.log_mass, &Graph::ring(10)).unwrap();
        let r = exact_chain_gradient(&m, &k, &[0.1; 10], 6);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn finite_differences_of_polynomials() {
        let lin = |t: &[f64]| 3.0 * t[0] - 2.0 * t[1];
        assert_eq!(finite_diff(lin, &[1.0, 5.0], 0.5, None), vec![3.0, -2.0]);
        let quad = |t: &[f64]| t[0] * t[0] + t[0] * t[1];
        let g = finite_diff(quad, &[1.0, 2.0], 1e-3, None);
        assert!((g[0] - 4.0).abs() < 1e-9 && (g[1] - 1.0).abs() < 1e-9);
        let g = finite_diff(quad, &[1.0, 2.0], 1e-3, Some(&[1]));
        assert_eq!(g[0], 0.0);
    }
}
