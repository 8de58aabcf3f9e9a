//! Estimators for unnormalized (energy-based) density models.
//!
//! The crate treats contrastive divergence as a time-reversal classification
//! game: a discriminator built from the model decides whether a Markov chain
//! started at a data sample is shown in its original or reversed order. The
//! gradient of that game is the CD-k update, and weighting each chain by its
//! hardness `alpha` keeps it exact for kernels that lack detailed balance.
//!
//! Everything here is pure computation on `alloc` types and builds without
//! `std`. File formats and the command line live in the companion `ebm` crate.
//!
//! Main entry points:
//!
//! * [`model`]: the MLP energy `log p~(x)` with exact input and parameter gradients.
//! * [`mcmc`]: transition kernels, per-step log-weights, MH filtering, chains.
//! * [`estimators`]: NCE, CNCE, CD-k and adjusted CD-k gradients plus BCE losses.
//! * [`oracle`]: finite discrete models with exact Metropolis kernels and
//!   full-enumeration gradients.
//! * [`data`]: the spiral toy dataset.
//! * [`train`]: SGD with momentum, schedules, metrics and held-out scoring.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod data;
pub mod energy;
pub mod error;
pub mod estimators;
pub mod gaussian;
mod linalg;
mod math;
pub mod mcmc;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod stats;
pub mod train;
pub mod verify;

pub use energy::{DifferentiableEnergy, Energy};
pub use error::{Error, Result};
pub use estimators::{GradEstimate, NceConfig};
pub use mcmc::{ChainSample, Kernel, KernelConfig, KernelVariant};
pub use model::{Activation, EnergyModel, ModelSpec, ParamVector};
