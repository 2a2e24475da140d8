//! Opportunistic relay networks under quasi-static Rayleigh fading.
//!
//! The crate has three cross-checking layers:
//!
//! * [`dmt`] holds the closed-form diversity-multiplexing tradeoff curves
//!   for every topology and relaying protocol as exact piecewise curves.
//! * [`exponent`] solves the high-SNR outage-exponent infimum problems
//!   numerically (grid search with local refinement) and compares the
//!   answers against the catalog.
//! * [`fading`], [`protocol`], [`network`] and [`outage`] simulate the
//!   networks at finite SNR and estimate outage probabilities and
//!   diversity slopes by Monte Carlo.
//!
//! [`compose`] combines conditional DMTs, and [`experiment`] wires it all
//! into a configuration-driven runner with a result cache.


pub mod compose;
pub mod dmt;
pub mod error;
pub mod experiment;
pub mod exponent;
pub mod fading;
pub mod network;
pub mod outage;
pub mod protocol;

pub use error::{Error, Result};
