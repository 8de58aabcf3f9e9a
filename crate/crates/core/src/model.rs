//! The MLP energy `log p~_theta(x)` with skip connections.
//!
//! Hidden layer `l` (1-based) computes `h_l = act(W_l h_{l-1} + b_l)`. Every
//! `skip_period` layers the block input is added back: `h_l += h_{l-period}`,
//! where `h_0 = x` is passed through a learned linear projection when the
//! input dimension differs from the width. The output is `v . h_depth + c`.
//!
//! Gradients with respect to the input and to the parameters are derived by
//! hand for this one architecture and evaluated in batches.

use alloc::vec::Vec;
use alloc::{format, vec};
use core::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{DifferentiableEnergy, Energy};
use crate::error::{Error, Result};
use crate::linalg::{col_sum_acc, gemm_acc, gemm_tn_acc, transpose};
use crate::math;

/// Smooth scalar nonlinearity used by every hidden unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Softplus,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        self.apply_with_derivative(z).0
    }

    /// `(act(z), act'(z))`.
    #[inline]
    pub fn apply_with_derivative(self, z: f64) -> (f64, f64) {
        let mut v = [z];
        let mut d = [0.0];
        self.apply_batch(&mut v, &mut d);
        (v[0], d[0])
    }

    /// Applies the activation to `z` in place and writes derivatives to `slope`.
    pub fn apply_batch(self, z: &mut [f64], slope: &mut [f64]) {
        match self {
            Activation::Softplus => math::softplus_with_slope(z, slope),
            Activation::Tanh => {
                for (v, d) in z.iter_mut().zip(slope.iter_mut()) {
                    let t = math::tanh(*v);
                    *v = t;
                    *d = 1.0 - t * t;
                }
            }
        }
    }
}

/// Architecture of the energy network.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub skip_period: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(
        input_dim: usize,
        width: usize,
        depth: usize,
        skip_period: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            width,
            depth,
            skip_period,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Width 64, depth 4, a skip every two layers, softplus units.
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            width: 64,
            depth: 4,
            skip_period: 2,
            activation: Activation::Softplus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(Error::InvalidSpec(
                "width and depth must be positive".into(),
            ));
        }
        if self.skip_period == 0 || self.skip_period > self.depth {
            return Err(Error::InvalidSpec(format!(
                "skip_period must lie in 1..={}, got {}",
                self.depth, self.skip_period
            )));
        }
        Ok(())
    }

    /// Index of the hidden state added back after layer `layer`, if any
    /// (0 denotes the input).
    pub fn skip_source(&self, layer: usize) -> Option<usize> {
        (layer % self.skip_period == 0).then(|| layer - self.skip_period)
    }

    pub fn has_projection(&self) -> bool {
        self.input_dim != self.width && self.skip_source(self.skip_period) == Some(0)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    pub fn param_len(&self) -> usize {
        self.layout().len
    }
}

/// Offsets of one dense layer inside the flat vector. Weights are stored
/// input-major: the weight from input `i` to unit `j` sits at
/// `weight + i * fan_out + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseOffsets {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Deterministic map from (layer, weight/bias, index) to flat offsets.
///
/// Order: hidden layers `1..=depth` (weights then biases), the input
/// projection when present, output weights, and the output bias last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub hidden: Vec<DenseOffsets>,
    pub projection: Option<usize>,
    pub out_weight: usize,
    pub out_bias: usize,
    pub len: usize,
    width: usize,
    input_dim: usize,
}

impl ParamLayout {
    fn new(spec: &ModelSpec) -> Self {
        let mut cursor = 0;
        let mut hidden = Vec::with_capacity(spec.depth);
        for layer in 1..=spec.depth {
            let fan_in = if layer == 1 {
                spec.input_dim
            } else {
                spec.width
            };
            let weight = cursor;
            cursor += fan_in * spec.width;
            let bias = cursor;
            cursor += spec.width;
            hidden.push(DenseOffsets {
                weight,
                bias,
                fan_in,
                fan_out: spec.width,
            });
        }
        let projection = spec.has_projection().then(|| {
            let at = cursor;
            cursor += spec.input_dim * spec.width;
            at
        });
        let out_weight = cursor;
        cursor += spec.width;
        let out_bias = cursor;
        cursor += 1;
        Self {
            hidden,
            projection,
            out_weight,
            out_bias,
            len: cursor,
            width: spec.width,
            input_dim: spec.input_dim,
        }
    }

    /// Hidden layers are numbered from 1; layer 0 is the input.
    pub fn weight_index(&self, layer: usize, input: usize, unit: usize) -> usize {
        let d = &self.hidden[layer - 1];
        d.weight + input * d.fan_out + unit
    }

    pub fn bias_index(&self, layer: usize, unit: usize) -> usize {
        self.hidden[layer - 1].bias + unit
    }

    pub fn projection_index(&self, input: usize, unit: usize) -> Option<usize> {
        self.projection.map(|p| p + input * self.width + unit)
    }

    /// Structured copy of the parameters.
    pub fn unpack(&self, params: &[f64]) -> MlpWeights {
        let hidden = self
            .hidden
            .iter()
            .map(|d| Dense {
                fan_in: d.fan_in,
                fan_out: d.fan_out,
                weight: params[d.weight..d.weight + d.fan_in * d.fan_out].to_vec(),
                bias: params[d.bias..d.bias + d.fan_out].to_vec(),
            })
            .collect();
        let projection = self
            .projection
            .map(|p| params[p..p + self.input_dim * self.width].to_vec());
        MlpWeights {
            hidden,
            projection,
            out_weight: params[self.out_weight..self.out_weight + self.width].to_vec(),
            out_bias: params[self.out_bias],
        }
    }

    pub fn pack(&self, weights: &MlpWeights) -> ParamVector {
        let mut v = vec![0.0; self.len];
        for (d, dense) in self.hidden.iter().zip(&weights.hidden) {
            v[d.weight..d.weight + dense.weight.len()].copy_from_slice(&dense.weight);
            v[d.bias..d.bias + dense.bias.len()].copy_from_slice(&dense.bias);
        }
        if let (Some(p), Some(proj)) = (self.projection, &weights.projection) {
            v[p..p + proj.len()].copy_from_slice(proj);
        }
        v[self.out_weight..self.out_weight + self.width].copy_from_slice(&weights.out_weight);
        v[self.out_bias] = weights.out_bias;
        ParamVector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Input-major, `fan_in * fan_out` entries.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub hidden: Vec<Dense>,
    /// Input-major `input_dim * width` matrix.
    pub projection: Option<Vec<f64>>,
    pub out_weight: Vec<f64>,
    pub out_bias: f64,
}

/// Flat vector of every model parameter.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.0.iter().map(|v| v * v).sum())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, s: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| v * s).collect())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Fan-in scaled uniform initialization: every weight and bias feeding a unit
/// with fan-in `f` is drawn from `U(-1/sqrt(f), 1/sqrt(f))`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0.0; layout.len];
    let mut fill = |range: core::ops::Range<usize>, fan_in: usize| {
        let bound = 1.0 / math::sqrt(fan_in as f64);
        for slot in &mut v[range] {
            *slot = rng.random_range(-bound..bound);
        }
    };
    for d in &layout.hidden {
        fill(d.weight..d.weight + d.fan_in * d.fan_out, d.fan_in);
        fill(d.bias..d.bias + d.fan_out, d.fan_in);
    }
    if let Some(p) = layout.projection {
        fill(p..p + spec.input_dim * spec.width, spec.input_dim);
    }
    fill(
        layout.out_weight..layout.out_weight + spec.width,
        spec.width,
    );
    fill(layout.out_bias..layout.out_bias + 1, spec.width);
    ParamVector(v)
}

/// An MLP architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    spec: ModelSpec,
    layout: ParamLayout,
    params: ParamVector,
}

struct Trace {
    n: usize,
    /// `h_0 .. h_depth`, each `n x fan_out` row-major.
    hidden: Vec<Vec<f64>>,
    /// `act'(z_l)` for layers `1..=depth`.
    slopes: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl EnergyModel {
    pub fn new(spec: ModelSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if params.len() != layout.len {
            return Err(Error::DimensionMismatch {
                expected: layout.len,
                got: params.len(),
            });
        }
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, seed);
        Self::new(spec, params)
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let len = spec.param_len();
        Self::new(spec, ParamVector::zeros(len))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    /// Parameters may be changed in place; the length is fixed by the spec.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_bias_index(&self) -> usize {
        self.layout.out_bias
    }

    pub fn log_p_tilde(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.forward(x, 1, false).out[0])
    }

    /// `grad_x log p~(x)`.
    pub fn grad_x(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let trace = self.forward(x, 1, true);
        Ok(self
            .backward(&trace, &[1.0], None, true)
            .unwrap_or_default())
    }

    /// `grad_theta log p~(x)`.
    pub fn grad_theta(&self, x: &[f64]) -> Result<ParamVector> {
        self.check_dim(x)?;
        let trace = self.forward(x, 1, true);
        let mut g = vec![0.0; self.layout.len];
        self.backward(&trace, &[1.0], Some(&mut g), false);
        Ok(ParamVector(g))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn flatten(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.spec.input_dim;
        let mut flat = Vec::with_capacity(states.len() * d);
        for s in states {
            self.check_dim(s)?;
            flat.extend_from_slice(s);
        }
        Ok(flat)
    }

    fn forward(&self, xs: &[f64], n: usize, keep: bool) -> Trace {
        let p = &self.params[..];
        let w = self.spec.width;
        let act = self.spec.activation;
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.spec.depth + 1);
        let mut slopes = Vec::with_capacity(if keep { self.spec.depth } else { 0 });
        hidden.push(xs.to_vec());
        for (idx, d) in self.layout.hidden.iter().enumerate() {
            let layer = idx + 1;
            let bias = &p[d.bias..d.bias + w];
            let mut z = Vec::with_capacity(n * w);
            for _ in 0..n {
                z.extend_from_slice(bias);
            }
            gemm_acc(
                &hidden[layer - 1],
                &p[d.weight..d.weight + d.fan_in * w],
                &mut z,
                n,
                d.fan_in,
                w,
            );
            let mut slope = vec![0.0; n * w];
            act.apply_batch(&mut z, &mut slope);
            let mut h = z;
            if let Some(src) = self.spec.skip_source(layer) {
                match (src, self.layout.projection) {
                    (0, Some(proj)) => {
                        let d_in = self.spec.input_dim;
                        gemm_acc(&hidden[0], &p[proj..proj + d_in * w], &mut h, n, d_in, w);
                    }
                    _ => {
                        for (hv, sv) in h.iter_mut().zip(&hidden[src]) {
                            *hv += sv;
                        }
                    }
                }
            }
            hidden.push(h);
            if keep {
                slopes.push(slope);
            }
        }
        let mut out = vec![p[self.layout.out_bias]; n];
        let last = &hidden[self.spec.depth];
        gemm_acc(
            last,
            &p[self.layout.out_weight..self.layout.out_weight + w],
            &mut out,
            n,
            w,
            1,
        );
        if !keep {
            hidden.clear();
        }
        Trace {
            n,
            hidden,
            slopes,
            out,
        }
    }

    /// Reverse pass seeded with `d out_b = seeds[b]`. Adds the summed parameter
    /// gradient into `param_grad` and returns the per-row input gradients when
    /// `want_x` is set.
    fn backward(
        &self,
        trace: &Trace,
        seeds: &[f64],
        mut param_grad: Option<&mut [f64]>,
        want_x: bool,
    ) -> Option<Vec<f64>> {
        let p = &self.params[..];
        let n = trace.n;
        let w = self.spec.width;
        let d_in = self.spec.input_dim;
        let depth = self.spec.depth;
        let lay = &self.layout;

        // grads[l] = d out / d h_l, row-major n x fan_out(l)
        let mut grads: Vec<Vec<f64>> = (0..=depth)
            .map(|l| {
                if l == 0 {
                    if want_x {
                        vec![0.0; n * d_in]
                    } else {
                        Vec::new()
                    }
                } else {
                    vec![0.0; n * w]
                }
            })
            .collect();
        let out_w = &p[lay.out_weight..lay.out_weight + w];
        for (b, &s) in seeds.iter().enumerate() {
            for (g, &v) in grads[depth][b * w..(b + 1) * w].iter_mut().zip(out_w) {
                *g = s * v;
            }
        }
        if let Some(pg) = param_grad.as_deref_mut() {
            gemm_tn_acc(
                seeds,
                &trace.hidden[depth],
                &mut pg[lay.out_weight..lay.out_weight + w],
                n,
                1,
                w,
            );
            let mut total = 0.0;
            for &s in seeds {
                total += s;
            }
            pg[lay.out_bias] += total;
        }

        for layer in (1..=depth).rev() {
            let d = &lay.hidden[layer - 1];
            let g_here = core::mem::take(&mut grads[layer]);
            if let Some(src) = self.spec.skip_source(layer) {
                match (src, lay.projection) {
                    (0, Some(proj)) => {
                        if let Some(pg) = param_grad.as_deref_mut() {
                            gemm_tn_acc(
                                &trace.hidden[0],
                                &g_here,
                                &mut pg[proj..proj + d_in * w],
                                n,
                                d_in,
                                w,
                            );
                        }
                        if want_x {
                            let pt = transpose(&p[proj..proj + d_in * w], d_in, w);
                            gemm_acc(&g_here, &pt, &mut grads[0], n, w, d_in);
                        }
                    }
                    (0, None) => {
                        if want_x {
                            for (a, b) in grads[0].iter_mut().zip(&g_here) {
                                *a += b;
                            }
                        }
                    }
                    (s, _) => {
                        for (a, b) in grads[s].iter_mut().zip(&g_here) {
                            *a += b;
                        }
                    }
                }
            }
            let mut dz = g_here;
            for (g, s) in dz.iter_mut().zip(&trace.slopes[layer - 1]) {
                *g *= s;
            }
            if let Some(pg) = param_grad.as_deref_mut() {
                gemm_tn_acc(
                    &trace.hidden[layer - 1],
                    &dz,
                    &mut pg[d.weight..d.weight + d.fan_in * w],
                    n,
                    d.fan_in,
                    w,
                );
                col_sum_acc(&dz, &mut pg[d.bias..d.bias + w], w);
            }
            if layer > 1 || want_x {
                let wt = transpose(&p[d.weight..d.weight + d.fan_in * w], d.fan_in, w);
                gemm_acc(&dz, &wt, &mut grads[layer - 1], n, w, d.fan_in);
            }
        }
        want_x.then(|| core::mem::take(&mut grads[0]))
    }
}

impl Energy for EnergyModel {
    type State = Vec<f64>;

    fn param_len(&self) -> usize {
        self.layout.len
    }

    fn log_p_tilde_batch(&self, states: &[Vec<f64>], out: &mut Vec<f64>) -> Result<()> {
        let flat = self.flatten(states)?;
        let trace = self.forward(&flat, states.len(), false);
        out.clear();
        out.extend_from_slice(&trace.out);
        Ok(())
    }

    fn accumulate_grad_theta(
        &self,
        states: &[Vec<f64>],
        weights: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        if weights.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                got: weights.len(),
            });
        }
        if out.len() != self.layout.len {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len,
                got: out.len(),
            });
        }
        let flat = self.flatten(states)?;
        let trace = self.forward(&flat, states.len(), true);
        self.backward(&trace, weights, Some(out), false);
        Ok(())
    }

    fn state_is_finite(&self, state: &Vec<f64>) -> bool {
        crate::energy::all_finite(state)
    }
}

impl DifferentiableEnergy for EnergyModel {
    fn dim(&self) -> usize {
        self.spec.input_dim
    }

    fn log_p_and_grad_x_batch(&self, states: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = states.len();
        let d = self.spec.input_dim;
        let flat = self.flatten(states)?;
        let trace = self.forward(&flat, n, true);
        let seeds = vec![1.0; n];
        let gx = self
            .backward(&trace, &seeds, None, true)
            .unwrap_or_default();
        let grads = gx.chunks_exact(d).map(<[f64]>::to_vec).collect();
        Ok((trace.out, grads))
    }
}
