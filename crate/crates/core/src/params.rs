use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which counterexample is being built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Bounded self-similar solution; the gradient blows up at the origin.
    Bounded,
    /// `(-t)^{-eps/2}`-scaled solution that blows up in `L^inf`.
    Unbounded,
    /// Pair `(U, U~)` whose coefficients are functions of the solution.
    Quasilinear,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Bounded => "bounded",
            Variant::Unbounded => "unbounded",
            Variant::Quasilinear => "quasilinear",
        }
    }
}

pub const MIN_R0: f64 = 10.0;
pub const DEFAULT_R0: f64 = 100.0;
pub const DEFAULT_QUAD_TOL: f64 = 1e-12;
pub const DEFAULT_SERIES_SWITCH: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub variant: Variant,
    pub r0: f64,
    pub epsilon: f64,
    pub quad_tol: f64,
    pub series_switch_radius: f64,
}

impl ConstructionParams {
    pub fn new(variant: Variant, r0: f64) -> Result<Self> {
        if !(r0 >= MIN_R0) || !r0.is_finite() {
            return Err(Error::InvalidParams(format!("r0 = {r0} must be a finite number >= {MIN_R0}")));
        }
        let epsilon = match variant {
            Variant::Unbounded => 1.0 / (r0 * r0 * r0.ln()),
            Variant::Bounded | Variant::Quasilinear => 0.0,
        };
        Ok(Self {
            variant,
            r0,
            epsilon,
            quad_tol: DEFAULT_QUAD_TOL,
            series_switch_radius: DEFAULT_SERIES_SWITCH,
        })
    }

    pub fn bounded(r0: f64) -> Result<Self> {
        Self::new(Variant::Bounded, r0)
    }

    pub fn unbounded(r0: f64) -> Result<Self> {
        Self::new(Variant::Unbounded, r0)
    }

    pub fn quasilinear(r0: f64) -> Result<Self> {
        Self::new(Variant::Quasilinear, r0)
    }

    /// Unbounded construction with the exponent forced to a chosen value
    /// (used to check that `eps = 0` collapses onto the bounded example).
    pub fn unbounded_with_epsilon(r0: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon} must be >= 0")));
        }
        let mut p = Self::new(Variant::Unbounded, r0)?;
        p.epsilon = epsilon;
        Ok(p)
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1e-3) {
            return Err(Error::InvalidParams(format!("quad_tol = {tol} outside (0, 1e-3)")));
        }
        self.quad_tol = tol;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_r0() {
        assert!(ConstructionParams::bounded(5.0).is_err());
        assert!(ConstructionParams::bounded(f64::NAN).is_err());
        assert!(ConstructionParams::bounded(10.0).is_ok());
    }

    #[test]
    fn epsilon_by_variant() {
        assert_eq!(ConstructionParams::bounded(100.0).unwrap().epsilon, 0.0);
        assert_eq!(ConstructionParams::quasilinear(100.0).unwrap().epsilon, 0.0);
        let u = ConstructionParams::unbounded(100.0).unwrap();
        assert!((u.epsilon - 1.0 / (1e4 * 100f64.ln())).abs() < 1e-20);
    }
}
