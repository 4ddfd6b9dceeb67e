//! Common spatial pattern (CSP) filter design and CSP-empowered convolutional
//! networks for motor-imagery EEG classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: trial collections, on-disk format, band-pass filtering,
//!   synthetic data and train/test splitting.
//! - [`csp`]: class covariances, the CSP generalized eigenproblem, and the
//!   CSP + logistic-regression baseline.
//! - [`nn`]: a small reverse-mode engine over a sequential layer pipeline,
//!   with Adam, parameter freezing and finite-difference gradient checks.
//! - [`models`]: EEGNet, ShallowCNN and DeepCNN backbones.
//! - [`cspnet`]: CSP-Net-1 (CSP projection in front of a backbone) and
//!   CSP-Net-2 (CSP filters written into the backbone's spatial layer).
//! - [`harness`]: training loop, within-subject / leave-one-subject-out
//!   protocols, sweeps, paired t-tests with Benjamini-Hochberg correction and
//!   CSV reports.

pub mod csp;
pub mod cspnet;
pub mod data;
mod error;
pub mod gradsuite;
pub mod harness;
pub mod models;
pub mod nn;
pub mod rng;

pub use crate::error::{Error, Result};

pub use crate::csp::{CspLrModel, CspModel, CspScheme, SpatialCovariance};
pub use crate::cspnet::{CspLayerMode, CspNetFamily, CspNetModel, CspVariant};
pub use crate::data::{EpochSet, SplitPlan, SplitScheme, SynthSpec, Trial};
pub use crate::harness::{Approach, ExperimentReport, RunRecord, TrainConfig};
pub use crate::models::{BackboneKind, BackboneSpec};
pub use crate::nn::{AdamState, LayerSpec, Mode, ModelGraph, Parameter, Tensor4};
