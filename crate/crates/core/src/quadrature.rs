//! Held-out scoring and density grids.

use alloc::vec::Vec;

use crate::energy::DifferentiableEnergy;
use crate::error::{Error, Result};
use crate::math;
use crate::stats::log_sum_exp;

/// An axis-aligned rectangle sampled at `resolution` points per axis,
/// endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, resolution: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            y_min: -half_width,
            y_max: half_width,
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wide = self.x_max > self.x_min && self.y_max > self.y_min;
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !wide || !finite || self.resolution < 2 {
            return Err(Error::DegenerateBounds);
        }
        Ok(())
    }

    fn coords(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + h * i as f64 })
            .collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::coords(self.x_min, self.x_max, self.resolution)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::coords(self.y_min, self.y_max, self.resolution)
    }
}

/// How the held-out score is normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreMode {
    /// `log Z` by trapezoid integration over a box; needs `d = 2`.
    Quadrature(GridSpec),
    /// Mean `log p~` with no normalization; any `d`.
    Unnormalized,
}

/// `log p~` on a 2-d grid through `axes`, every other coordinate held at 0.
/// `values[j * nx + i]` is the value at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: (usize, usize),
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn argmax(&self) -> (usize, usize) {
        let (mut best, mut at) = (f64::NEG_INFINITY, 0);
        for (i, v) in self.values.iter().enumerate() {
            if *v > best {
                best = *v;
                at = i;
            }
        }
        (at % self.xs.len(), at / self.xs.len())
    }

    /// 8-bit intensities scaled to `[min, max]`, top image row at the largest
    /// `y`. A constant grid maps to mid gray.
    pub fn to_gray(&self) -> Vec<u8> {
        let nx = self.xs.len();
        let ny = self.ys.len();
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let mut out = Vec::with_capacity(nx * ny);
        for row in (0..ny).rev() {
            for col in 0..nx {
                let v = self.values[row * nx + col];
                let g = if span > 0.0 && span.is_finite() {
                    (v - lo) / span * 255.0
                } else {
                    128.0
                };
                out.push(math::round(g).clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

pub fn eval_grid<E: DifferentiableEnergy>(
    energy: &E,
    axes: (usize, usize),
    spec: &GridSpec,
) -> Result<Grid> {
    spec.validate()?;
    let d = energy.dim();
    if axes.0 >= d || axes.1 >= d || axes.0 == axes.1 {
        return Err(Error::InvalidConfig(alloc::format!(
            "invalid plane axes {axes:?} for dimension {d}"
        )));
    }
    let xs = spec.xs();
    let ys = spec.ys();
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    let mut row_vals = Vec::with_capacity(xs.len());
    for &y in &ys {
        let states: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                let mut p = alloc::vec![0.0; d];
                p[axes.0] = x;
                p[axes.1] = y;
                p
            })
            .collect();
        energy.log_p_tilde_batch(&states, &mut row_vals)?;
        values.extend_from_slice(&row_vals);
    }
    Ok(Grid {
        axes,
        xs,
        ys,
        values,
    })
}

/// `log` of the trapezoid-rule integral of `exp(log p~)` over the box.
pub fn log_partition_2d<E: DifferentiableEnergy>(energy: &E, spec: &GridSpec) -> Result<f64> {
    if energy.dim() != 2 {
        return Err(Error::QuadratureDim(energy.dim()));
    }
    let grid = eval_grid(energy, (0, 1), spec)?;
    let n = spec.resolution;
    let hx = (spec.x_max - spec.x_min) / (n - 1) as f64;
    let hy = (spec.y_max - spec.y_min) / (n - 1) as f64;
    let edge = |i: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
    let mut terms = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            terms.push(grid.values[j * n + i] + math::ln(edge(i) * edge(j) * hx * hy));
        }
    }
    Ok(log_sum_exp(&terms))
}

/// Mean held-out `log p~(x)`, normalized by quadrature when requested.
pub fn heldout_score<E: DifferentiableEnergy>(
    energy: &E,
    heldout: &[Vec<f64>],
    mode: &ScoreMode,
) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::EmptyHeldout);
    }
    let log_z = match mode {
        ScoreMode::Quadrature(spec) => log_partition_2d(energy, spec)?,
        ScoreMode::Unnormalized => 0.0,
    };
    let mut lp = Vec::with_capacity(heldout.len());
    for chunk in heldout.chunks(1024) {
        let mut part = Vec::new();
        energy.log_p_tilde_batch(chunk, &mut part)?;
        lp.extend(part);
    }
    Ok(lp.iter().sum::<f64>() / lp.len() as f64 - log_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Energy;
    use crate::gaussian::GaussianEnergy;
    use crate::model::{EnergyModel, ModelSpec};

    #[test]
    fn gaussian_score_matches_closed_form() {
        let g = GaussianEnergy::new(
            vec![0.2, -0.1],
            vec![(1.0f64 / 0.09).ln(), (1.0f64 / 0.16).ln()],
        )
        .unwrap();
        let heldout: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![0.01 * i as f64 - 0.2, 0.3 - 0.012 * i as f64])
            .collect();
        let spec = GridSpec::square(3.0, 301);
        let score = heldout_score(&g, &heldout, &ScoreMode::Quadrature(spec)).unwrap();
        let exact: f64 = heldout
            .iter()
            .map(|x| {
                let lp = g.log_p_tilde_of(x).unwrap();
                lp - g.log_normalizer()
            })
            .sum::<f64>()
            / heldout.len() as f64;
        assert!((score - exact).abs() < 1e-3, "{score} vs {exact}");
    }

    #[test]
    fn score_ignores_constant_offsets() {
        let m = EnergyModel::init(
            ModelSpec::new(2, 8, 2, 2, crate::Activation::Softplus).unwrap(),
            1,
        )
        .unwrap();
        let mut shifted = m.clone();
        let ob = shifted.output_bias_index();
        shifted.params_mut()[ob] += 7.0;
        let held = vec![vec![0.1, 0.2], vec![-0.5, 0.4]];
        let mode = ScoreMode::Quadrature(GridSpec::square(2.0, 41));
        let a = heldout_score(&m, &held, &mode).unwrap();
        let b = heldout_score(&shifted, &held, &mode).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn error_paths() {
        let g = GaussianEnergy::standard(3);
        let mode = ScoreMode::Quadrature(GridSpec::square(2.0, 11));
        assert_eq!(
            heldout_score(&g, &[vec![0.0; 3]], &mode),
            Err(Error::QuadratureDim(3))
        );
        assert_eq!(
            heldout_score(&g, &[], &ScoreMode::Unnormalized),
            Err(Error::EmptyHeldout)
        );
        let flat = GridSpec {
            x_min: 1.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            resolution: 10,
        };
        assert_eq!(eval_grid(&g, (0, 1), &flat), Err(Error::DegenerateBounds));
    }

    #[test]
    fn grid_images() {
        let flat = EnergyModel::zeros(ModelSpec::desk(2)).unwrap();
        let grid = eval_grid(&flat, (0, 1), &GridSpec::square(1.0, 9)).unwrap();
        assert!(grid.to_gray().iter().all(|v| *v == 128));

        let bump = GaussianEnergy::new(vec![0.5, -0.25], vec![2.0, 2.0]).unwrap();
        let grid = eval_grid(&bump, (0, 1), &GridSpec::square(1.0, 9)).unwrap();
        let (i, j) = grid.argmax();
        assert_eq!((grid.xs[i], grid.ys[j]), (0.5, -0.25));
    }
}
