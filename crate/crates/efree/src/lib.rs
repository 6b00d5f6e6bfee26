//! Equation-free coarse time stepping with implicit lifting and healing time.
//!
//! The crate provides a model-agnostic core ([`efcore`]) and three backends:
//! Michaelis-Menten kinetics ([`mmkinetics`]), a spectral Fokker-Planck model
//! of a double-well SDE ([`fpspectral`]) and Monte Carlo ensembles of the same
//! SDE ([`mcsde`]).

pub mod efcore;
pub mod error;
pub mod fpspectral;
pub mod integrate;
pub mod mcsde;
pub mod mmkinetics;
pub mod newton;
pub mod par;
pub mod potential;
pub mod rng;

pub use error::{EfError, Result};
