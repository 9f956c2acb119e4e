//! Link-level simulation and beamforming optimisation for simultaneously
//! transmitting and reflecting reconfigurable intelligent surfaces
//! (STAR-RIS).
//!
//! * [`element`]: impedance model, T&R coefficients, dual-sided matrices,
//!   energy classes, coupled phase shifts and operating protocols.
//! * [`channel`]: far- and near-field cascaded channels with Rician fading.
//! * [`optim`]: penalty, alternating and element-wise beamforming solvers.
//! * [`scenarios`]: Monte-Carlo experiments, NOMA/OMA rates and sweeps.
//!
//! Monte-Carlo trials run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; results are identical either
//! way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod element;
pub mod error;
pub mod optim;
pub mod parallel;
pub mod scenarios;

pub use error::{Error, Result};
