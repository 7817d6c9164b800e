//! Positive-P and truncated-Wigner simulation of quantum pulse propagation
//! through a one-dimensional two-level medium, with an exact single-mode
//! Fock-space oracle.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod ppr;
pub mod propagator;
pub mod rng;
pub mod single_cell;
pub mod stats;
pub mod twa;

pub use error::{Error, Result};
pub use model::{Method, C64};
