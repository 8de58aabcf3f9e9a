//! The spiral toy dataset: an Archimedean spiral in the `e1-e2` plane of
//! `R^d`, sampled uniformly by arc length, plus axis-aligned Gaussian noise.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpiralSpec {
    pub ambient_dim: usize,
    pub n_turns: f64,
    /// Noise STD along `e1` and `e2`.
    pub noise_in_plane: f64,
    /// Noise STD along `e3 .. ed`.
    pub noise_off_plane: f64,
    pub seed: u64,
}

impl SpiralSpec {
    /// Two turns with noise STDs 0.05 in-plane and 0.01 off-plane.
    pub fn new(ambient_dim: usize, seed: u64) -> Self {
        Self {
            ambient_dim,
            n_turns: 2.0,
            noise_in_plane: 0.05,
            noise_off_plane: 0.01,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ambient_dim < 2 {
            return Err(Error::InvalidConfig("spiral needs ambient_dim >= 2".into()));
        }
        if !(self.n_turns > 0.0 && self.n_turns.is_finite()) {
            return Err(Error::InvalidConfig("n_turns must be positive".into()));
        }
        if !(self.noise_in_plane >= 0.0 && self.noise_off_plane >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise STDs must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn max_angle(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.n_turns
    }
}

/// A sample and the noiseless spiral point it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiralSample {
    pub point: Vec<f64>,
    pub base: [f64; 2],
}

/// Arc length of `r = a * phi` from 0 to `phi`, divided by `a`.
fn arc_length(phi: f64) -> f64 {
    0.5 * (phi * math::sqrt(1.0 + phi * phi) + math::asinh(phi))
}

/// Angle at which the scaled arc length reaches `target`.
fn angle_at_arc_length(target: f64, max_angle: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, max_angle);
    let mut phi = 0.5 * max_angle;
    for _ in 0..100 {
        let f = arc_length(phi) - target;
        if f > 0.0 {
            hi = phi;
        } else {
            lo = phi;
        }
        let newton = phi - f / math::sqrt(1.0 + phi * phi);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - phi).abs() <= 1e-15 * max_angle {
            return next;
        }
        phi = next;
    }
    phi
}

/// Generates `n` samples together with their base points.
pub fn gen_spiral_detailed(spec: &SpiralSpec, n: usize) -> Result<Vec<SpiralSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_angle = spec.max_angle();
    let total = arc_length(max_angle);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s: f64 = rng.random::<f64>() * total;
        let phi = angle_at_arc_length(s, max_angle);
        let r = phi / max_angle;
        let base = [r * math::cos(phi), r * math::sin(phi)];
        let point = (0..spec.ambient_dim)
            .map(|axis| {
                let z: f64 = rng.sample(StandardNormal);
                match axis {
                    0 | 1 => base[axis] + spec.noise_in_plane * z,
                    _ => spec.noise_off_plane * z,
                }
            })
            .collect();
        out.push(SpiralSample { point, base });
    }
    Ok(out)
}

/// `n` i.i.d. spiral samples; deterministic given `spec.seed`.
pub fn gen_spiral(spec: &SpiralSpec, n: usize) -> Result<Vec<Vec<f64>>> {
    Ok(gen_spiral_detailed(spec, n)?
        .into_iter()
        .map(|s| s.point)
        .collect())
}

/// Deterministic shuffle followed by a cut at `train_fraction`.
pub fn split(
    dataset: &[Vec<f64>],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidConfig(
            "train_fraction must lie in [0, 1]".into(),
        ));
    }
    let mut rows: Vec<Vec<f64>> = dataset.to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = math::round((rows.len() as f64) * train_fraction) as usize;
    let heldout = rows.split_off(cut.min(rows.len()));
    Ok((rows, heldout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::std_dev;

    #[test]
    fn noiseless_samples_lie_on_the_planar_spiral() {
        let mut spec = SpiralSpec::new(5, 3);
        spec.noise_in_plane = 0.0;
        spec.noise_off_plane = 0.0;
        for s in gen_spiral_detailed(&spec, 500).unwrap() {
            assert_eq!(&s.point[..2], &s.base[..]);
            assert!(s.point[2..].iter().all(|v| *v == 0.0));
            let r = (s.base[0].powi(2) + s.base[1].powi(2)).sqrt();
            let phi = r * spec.max_angle();
            assert!((s.base[0] - r * phi.cos()).abs() < 1e-12);
            assert!((s.base[1] - r * phi.sin()).abs() < 1e-12);
            assert!(s.base[0].abs() <= 1.0 && s.base[1].abs() <= 1.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SpiralSpec::new(3, 42);
        assert_eq!(
            gen_spiral(&spec, 100).unwrap(),
            gen_spiral(&spec, 100).unwrap()
        );
    }

    #[test]
    fn rejects_one_dimensional_ambient_space() {
        assert!(gen_spiral(&SpiralSpec::new(1, 0), 10).is_err());
    }

    #[test]
    fn radius_soft_bound() {
        let spec = SpiralSpec::new(2, 1);
        for x in gen_spiral(&spec, 20_000).unwrap() {
            assert!((x[0] * x[0] + x[1] * x[1]).sqrt() <= 1.0 + 6.0 * spec.noise_in_plane);
        }
    }

    #[test]
    fn arc_length_sampling_is_uniform_along_the_curve() {
        // equal arc-length quarters should hold equal counts
        let mut spec = SpiralSpec::new(2, 9);
        spec.noise_in_plane = 0.0;
        let max = spec.max_angle();
        let total = arc_length(max);
        let samples = gen_spiral_detailed(&spec, 40_000).unwrap();
        let mut counts = [0usize; 4];
        for s in &samples {
            let phi = (s.base[0].powi(2) + s.base[1].powi(2)).sqrt() * max;
            let q = ((arc_length(phi) / total) * 4.0).floor().min(3.0) as usize;
            counts[q] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn off_plane_std_matches() {
        let spec = SpiralSpec::new(4, 5);
        let xs = gen_spiral(&spec, 100_000).unwrap();
        let axis3: Vec<f64> = xs.iter().map(|x| x[2]).collect();
        let s = std_dev(&axis3);
        assert!((0.0095..=0.0105).contains(&s), "{s}");
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let (a, b) = split(&data, 0.7, 3).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(split(&data, 0.7, 3).unwrap(), (a.clone(), b.clone()));
        let mut all: Vec<f64> = a.iter().chain(&b).map(|v| v[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }
}
