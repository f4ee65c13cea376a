//! Numerics for radial nonlinear Schrödinger dynamics in dimension n ≥ 5:
//! spectral free flow, dilation calculus, channel wave operators and
//! decay-estimate probes.

pub mod bench;
pub mod dilation;
pub mod error;
pub mod nls;
pub mod observables;
pub mod radial;
pub mod scattering;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
