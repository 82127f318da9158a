//! Constrained model-predictive control of an unstable resistive-wall mode.
//!
//! The crate covers the whole control stack:
//!
//! * [`lti`] – state-space models, the seeded surrogate plant, modal
//!   decomposition, ZOH discretization, Davison and balanced-truncation
//!   reduction, Padé delays.
//! * [`riccati`] – DARE, LQ and Kalman gains.
//! * [`lqg`] – Kalman filter step and the LQG baseline with estimator wind-up
//!   protection.
//! * [`mpc`] – condensed infinite-horizon MPC QP with move blocking.
//! * [`fgm`] – preconditioned primal fast gradient method for box QPs.
//! * [`oracle`] – active-set reference solver used to certify the FGM.
//! * [`sim`] – closed-loop simulation, noise, robustness and BAP sweeps.
//! * [`bench`] – latency/accuracy benchmark and per-sample certification.

pub mod bench;
pub mod bounds;
pub mod design;
pub mod error;
pub mod fgm;
pub mod linalg;
pub mod lqg;
pub mod lti;
pub mod matio;
pub mod mpc;
pub mod oracle;
pub mod riccati;
pub mod sim;

pub use error::{Error, Result};
