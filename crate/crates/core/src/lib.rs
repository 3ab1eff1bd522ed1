//! Multi-hypothesis 3D human pose lifting from a single-hypothesis lifter.
//!
//! A deterministic 2D-to-3D lifter is trained first and frozen. Its per-joint
//! errors on the training set, normalized to mean one, become pseudo-labels
//! for a second network that predicts a noise scale for every joint of a 2D
//! input. At test time the 2D input is perturbed S times with Gaussian noise
//! at those scales and every perturbed copy is lifted, giving S hypotheses.
//!
//! Modules, bottom-up: [`pose`] (domain types), [`synthgen`] (synthetic
//! benchmark), [`nn`] (network core), [`lifter`], [`avgnoise`] (pseudo-labels
//! and the variance network), [`sampler`] (hypothesis generation),
//! [`metrics`] and [`harness`] (pipeline, ablations, CLI support).

pub mod avgnoise;
pub mod error;
pub mod harness;
pub mod io;
pub mod lifter;
pub mod metrics;
pub mod nn;
pub mod pose;
pub mod rng;
pub mod sampler;
pub mod synthgen;

pub use error::{Error, Result};
