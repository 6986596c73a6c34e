//! Self-similar blowup examples for linear and quasilinear uniformly parabolic
//! systems in the plane, with the numerical checks that certify each step of
//! the construction.

pub mod coefficients;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod estimates;
pub mod evolution;
pub mod jet;
pub mod liouville;
pub mod params;
pub mod profiles;
pub mod quadrature;
pub mod quasilinear;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
pub use params::{ConstructionParams, Variant};
pub use profiles::RadialProfiles;
