//! Cat states of a cavity field coupled to a moving mirror by radiation pressure:
//! closed-form distributions, the first-order photon-loss correction, and a
//! brute-force numerical reference.

pub mod analytic;
pub mod cli;
pub mod dissipation;
pub mod error;
pub mod model;
pub mod oracle;
pub mod specfun;
pub mod states;

pub use error::{Error, Result};
