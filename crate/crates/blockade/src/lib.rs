//! Transmission blockade breakdown in a driven optical cavity.
//!
//! A cold atomic ensemble dispersively coupled to a cavity mode shifts the
//! mode out of resonance with a fixed drive, blocking transmission. Weak
//! residual excitation lets atoms escape into dark states, the shift decays,
//! and the system switches collectively to the transmitting phase. This crate
//! implements the mean-field model of that switch, a stochastic jump layer on
//! top of it (atom loss + photodetection), and the analysis pipeline that
//! extracts transition times, widths, thermal photon numbers and scaling
//! exponents from the resulting traces.
//!
//! Conventions used throughout:
//!
//! * all rates and detunings are angular frequencies in rad/us,
//! * times are in us,
//! * config files and CLI flags take ordinary frequencies in MHz and the
//!   factor 2*pi is applied on load (see [`config`]).

pub mod analysis;
pub mod config;
pub mod error;
pub mod manifest;
pub mod meanfield;
pub mod ode;
pub mod params;
pub mod stochastic;
pub mod units;

pub use error::Error;
pub use params::{AtomEnsemble, ModeGeometry, PhysicalParams};
