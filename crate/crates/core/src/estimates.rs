//! Audit of the size estimates satisfied by the radial profiles.
//!
//! Each estimate is measured as a constant (a sup over a dense grid of a
//! suitably normalised quantity) and compared against a fixed cap. The caps
//! were chosen once from the measurements at `r0 ∈ {50, 100, 200}` and do
//! not depend on `r0`, so a pass is evidence that the constant is uniform.

use serde::{Deserialize, Serialize};

use crate::params::Variant;
use crate::profiles::RadialProfiles;
use crate::report::{lin_grid, log_grid, Check, Section};

/// Fixed caps for the measured constants.
pub mod caps {
    pub const PHI_PRIME_R3: f64 = 10.0;
    pub const PHI_SECOND_R4: f64 = 120.0;
    pub const H_OVER_LOG: f64 = 2.0;
    pub const DEFICIT_SCALED: f64 = 25.0;
    pub const ETA_OVER_LOG: f64 = 10.0;
    pub const F_PLATEAU_LO: f64 = 0.5;
    pub const F_PLATEAU_HI: f64 = 2.0;
}

/// Measured constants of one profile family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConstants {
    pub r0: f64,
    /// `sup_{[r0, 2r0]} |phi'| r^3`, with `r^(3+eps)` for the unbounded variant.
    pub phi_prime_r3: f64,
    /// `sup_{[r0, 2r0]} |phi''| r^4`, with `r^(4+eps)` for the unbounded variant.
    pub phi_second_r4: f64,
    /// `min / max of f_0(R) / (R^2 log R)` over `[r0, 10 r0]`.
    pub f0_ratio_min: f64,
    pub f0_ratio_max: f64,
    /// `f(r0) / (r0^2 log r0)`.
    pub f_plateau_scaled: f64,
    pub f_min: f64,
    pub h_min: f64,
    /// `sup h / log r0`.
    pub h_over_log: f64,
    /// `sup |E| r0^2 / log r0` over the deficit support.
    pub deficit_scaled: f64,
    /// `sup |E|` outside the deficit support.
    pub deficit_off_support: f64,
    /// `sup |eta| / log r0`.
    pub eta_over_log: f64,
}

/// Grid used by the audit: dense inside the transition windows.
pub fn audit_grid(p: &RadialProfiles) -> Vec<f64> {
    let r0 = p.start;
    let (a, b) = p.deficit_support();
    let mut g = log_grid(1e-3, 100.0 * r0, 4000);
    g.extend(lin_grid(a, b, 8001));
    g.extend(lin_grid(a, a + 1.0, 1001));
    g.extend(lin_grid(b - 1.0, b, 1001));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

pub fn measure(p: &RadialProfiles) -> ProfileConstants {
    let r0 = p.start;
    let eps = p.epsilon;
    let log_r0 = r0.ln();
    let grid = audit_grid(p);
    let (s_lo, s_hi) = p.deficit_support();

    let mut c = ProfileConstants {
        r0,
        phi_prime_r3: 0.0,
        phi_second_r4: 0.0,
        f0_ratio_min: f64::INFINITY,
        f0_ratio_max: 0.0,
        f_plateau_scaled: p.f_plateau / (r0 * r0 * log_r0),
        f_min: f64::INFINITY,
        h_min: f64::INFINITY,
        h_over_log: 0.0,
        deficit_scaled: 0.0,
        deficit_off_support: 0.0,
        eta_over_log: 0.0,
    };
    for &r in &grid {
        if (r0..=2.0 * r0).contains(&r) {
            c.phi_prime_r3 = c.phi_prime_r3.max(p.phi(r, 1).abs() * r.powf(3.0 + eps));
            c.phi_second_r4 = c.phi_second_r4.max(p.phi(r, 2).abs() * r.powf(4.0 + eps));
        }
        if (r0..=10.0 * r0).contains(&r) {
            let q = p.f0_jet(crate::jet::Jet::constant(r)).value() / (r * r * r.ln());
            c.f0_ratio_min = c.f0_ratio_min.min(q);
            c.f0_ratio_max = c.f0_ratio_max.max(q);
        }
        let h = p.h(r, 0);
        c.f_min = c.f_min.min(p.f(r, 0));
        c.h_min = c.h_min.min(h);
        c.h_over_log = c.h_over_log.max(h / log_r0);
        let e = p.deficit(r).abs();
        if r < s_lo || r > s_hi {
            c.deficit_off_support = c.deficit_off_support.max(e);
        } else {
            c.deficit_scaled = c.deficit_scaled.max(e * r0 * r0 / log_r0);
        }
        c.eta_over_log = c.eta_over_log.max(p.eta(r).abs() / log_r0);
    }
    c
}

/// Runs every estimate check and reports the measured constants.
pub fn profile_estimate_audit(p: &RadialProfiles) -> Section {
    let c = measure(p);
    let mut s = Section::new("estimates");
    s.push(Check::at_most("phi_prime_r3", c.phi_prime_r3, caps::PHI_PRIME_R3));
    s.push(Check::at_most("phi_second_r4", c.phi_second_r4, caps::PHI_SECOND_R4));
    match p.params.variant {
        Variant::Unbounded => {
            s.push(Check::at_least("f_plateau_scaled_lo", c.f_plateau_scaled, caps::F_PLATEAU_LO));
            s.push(Check::at_most("f_plateau_scaled_hi", c.f_plateau_scaled, caps::F_PLATEAU_HI));
        }
        Variant::Bounded | Variant::Quasilinear => {
            s.push(Check::at_least("f0_ratio_min", c.f0_ratio_min, 1.0));
            s.push(Check::at_most("f0_ratio_max", c.f0_ratio_max, 2.0));
        }
    }
    s.push(Check::at_least("f_min", c.f_min, 0.5 - 1e-12));
    s.push(Check::at_least("h_min", c.h_min, 0.5 - 1e-12));
    s.push(Check::at_most("h_over_log", c.h_over_log, caps::H_OVER_LOG));
    s.push(Check::at_most("deficit_scaled", c.deficit_scaled, caps::DEFICIT_SCALED));
    s.push(Check::at_most("deficit_off_support", c.deficit_off_support, 1e-10));
    s.push(Check::at_most("eta_over_log", c.eta_over_log, caps::ETA_OVER_LOG));
    s.with_data(serde_json::to_value(&c).unwrap_or_default())
}
