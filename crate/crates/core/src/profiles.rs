//! Radial ingredients of the scalar building block: the profile `phi`, the
//! radial and tangential coefficients `f` and `h`, the deficit `E`, and the
//! corrector `eta`.
//!
//! One [`RadialProfiles`] describes one profile family. Its `phi` follows
//! `phi_1 = r / sqrt(1 + r^2)` up to `start` and a homogeneous tail
//! `r^-eps + r^(-eps-2)/2` beyond `start + width`. The bounded example is
//! `eps = 0`, `start = width = r0`. The second family of the quasilinear
//! example uses `start = 3 r0`.

use rayon::prelude::*;

use crate::cutoff::xi_jet;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::params::ConstructionParams;
use crate::quadrature;

/// Number of checkpoints of the corrector table across its support.
pub const ETA_CHECKPOINTS: usize = 4096;

const F0_SERIES: [f64; 15] = [
    0.5,
    0.0,
    5.0 / 6.0,
    0.0,
    1.0 / 5.0,
    0.0,
    -2.0 / 35.0,
    0.0,
    8.0 / 315.0,
    0.0,
    -16.0 / 1155.0,
    0.0,
    128.0 / 15015.0,
    0.0,
    -256.0 / 45045.0,
];

// coefficient of eps in f_0 for the unbounded construction
const F0_EPS_SERIES: [f64; 15] = [
    0.0,
    0.0,
    1.0 / 6.0,
    0.0,
    1.0 / 5.0,
    0.0,
    1.0 / 70.0,
    0.0,
    -2.0 / 315.0,
    0.0,
    4.0 / 1155.0,
    0.0,
    -32.0 / 15015.0,
    0.0,
    64.0 / 45045.0,
];

pub fn phi1_jet(r: Jet) -> Jet {
    r / (r * r + 1.0).sqrt()
}

/// `r^-eps + r^(-eps-2) / 2`; equals `1 + 1/(2 r^2)` for `eps = 0`.
pub fn phi_tail_jet(r: Jet, eps: f64) -> Jet {
    if eps == 0.0 {
        1.0 + (r * r).recip() * 0.5
    } else {
        r.powf(-eps) + r.powf(-eps - 2.0) * 0.5
    }
}

/// `phi_tail - phi_1`, formed without cancelling the leading 1.
pub fn phi_gap_jet(r: Jet, eps: f64) -> Jet {
    let q = (r * r + 1.0).sqrt();
    let one_minus_phi1 = (q * (q + r)).recip();
    if eps == 0.0 {
        one_minus_phi1 + (r * r).recip() * 0.5
    } else {
        let pow = (r.ln() * -eps).exp_m1();
        one_minus_phi1 + pow + r.powf(-eps - 2.0) * 0.5
    }
}

/// Inverse of `phi_1` on `[0, 1)`.
pub fn phi1_inverse(s: f64) -> f64 {
    s / ((1.0 - s) * (1.0 + s)).sqrt()
}

/// Solution of `E = 0` with `phi = phi_1`, `h = 1/2` that is finite at the
/// origin. The `eps` term integrates `s^2 / sqrt(1 + s^2)` exactly.
pub fn f0_jet(r: Jet, eps: f64, series_switch: f64) -> Jet {
    if r.value() < series_switch {
        let base = r.poly(&F0_SERIES);
        if eps == 0.0 {
            base
        } else {
            base + r.poly(&F0_EPS_SERIES) * eps
        }
    } else {
        let q = r * r + 1.0;
        let sq = q.sqrt();
        let a = r.asinh();
        let q32 = q * sq;
        let base = q32 * a / r - q * 0.5;
        if eps == 0.0 {
            base
        } else {
            base + q32 * (r * sq - a) / r * (0.25 * eps)
        }
    }
}

/// `(1 + r^2)^{3/2} asinh(r) / r - (1 + r^2) / 2`, with the even power series
/// used below `series_switch`.
pub fn f0_closed_with_switch(r: f64, series_switch: f64) -> f64 {
    f0_jet(Jet::variable(r), 0.0, series_switch).value()
}

pub fn f0_closed(r: f64) -> f64 {
    f0_closed_with_switch(r, crate::params::DEFAULT_SERIES_SWITCH)
}

/// `f_0` from its integral form, by adaptive quadrature: with `phi = phi_1`
/// and `h = 1/2`, `E = 0` integrates to
/// `r phi' f = int_0^r t ((t phi' + eps phi)/2 + phi/(2 t^2)) dt`.
pub fn f0_quadrature(r: f64, eps: f64, rel_tol: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParams(format!("f0 quadrature needs r > 0, got {r}")));
    }
    let integrand = |t: f64| {
        let q = (1.0 + t * t).sqrt();
        0.5 * (t * t / (q * q * q) + eps * t * t / q + 1.0 / q)
    };
    let mut breaks = vec![0.0];
    breaks.extend(crate::report::log_grid(1e-2f64.min(0.5 * r), r, 8).into_iter().filter(|b| *b > 0.0));
    breaks.dedup();
    let num = quadrature::integrate_with_breaks(integrand, &breaks, rel_tol, 0.0)?;
    let q = (1.0 + r * r).sqrt();
    Ok(num * q * q * q / r)
}

/// Cumulative table of `eta(r) = int_0^r t E(t) / phi(t) dt`.
#[derive(Clone, Debug)]
struct EtaTable {
    lo: f64,
    hi: f64,
    step: f64,
    cum: Vec<f64>,
}

impl EtaTable {
    fn tail(&self) -> f64 {
        *self.cum.last().unwrap()
    }
}

#[derive(Clone, Debug)]
pub struct RadialProfiles {
    pub params: ConstructionParams,
    pub start: f64,
    pub width: f64,
    pub epsilon: f64,
    /// `f_0(start)`, the constant value of `f` beyond `start + 1`.
    pub f_plateau: f64,
    eta: EtaTable,
}

impl RadialProfiles {
    /// The primary profile family of a construction.
    pub fn new(params: &ConstructionParams) -> Result<Self> {
        Self::with_window(params, params.r0, params.r0)
    }

    /// A family whose `phi` transitions on `[start, start + width]`.
    pub fn with_window(params: &ConstructionParams, start: f64, width: f64) -> Result<Self> {
        let epsilon = params.epsilon;
        let f_plateau = f0_jet(Jet::constant(start), epsilon, params.series_switch_radius).value();
        let mut p = Self {
            params: *params,
            start,
            width,
            epsilon,
            f_plateau,
            eta: EtaTable { lo: start, hi: start + width + 1.0, step: 0.0, cum: vec![0.0] },
        };
        p.eta = p.build_eta_table()?;
        Ok(p)
    }

    fn build_eta_table(&self) -> Result<EtaTable> {
        let lo = self.start;
        let hi = self.start + self.width + 1.0;
        let n = ETA_CHECKPOINTS;
        let step = (hi - lo) / n as f64;
        let tol = self.params.quad_tol;
        let (scale, noise) = (0..=2048)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / 2048.0;
                (self.eta_integrand(t).abs(), self.eta_noise(t))
            })
            .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        let abs_tol = step * (tol * scale + 1e-12 + 1e3 * f64::EPSILON * noise);
        let pieces: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| {
                let a = lo + step * k as f64;
                let b = if k + 1 == n { hi } else { lo + step * (k + 1) as f64 };
                // parts of the integrand sit at rounding-noise level, so the target is absolute
                quadrature::integrate(|t| self.eta_integrand(t), a, b, tol, abs_tol)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for v in pieces {
            acc += v;
            cum.push(acc);
        }
        Ok(EtaTable { lo, hi, step, cum })
    }

    fn eta_integrand(&self, t: f64) -> f64 {
        t * self.deficit(t) / self.phi(t, 0)
    }

    /// Size of the terms that cancel in `t E / phi`.
    fn eta_noise(&self, t: f64) -> f64 {
        let (p1, p2) = (self.phi(t, 1).abs(), self.phi(t, 2).abs());
        let (f, f1) = (self.f(t, 0), self.f(t, 1).abs());
        t * (f * p2 + f1 * p1 + f * p1 / t + self.h(t, 0) / (t * t)) / self.phi(t, 0)
    }

    pub fn phi_window(&self) -> (f64, f64) {
        (self.start, self.start + self.width)
    }

    pub fn f_window(&self) -> (f64, f64) {
        (self.start, self.start + 1.0)
    }

    pub fn h_window(&self) -> (f64, f64) {
        (self.start + self.width, self.start + self.width + 1.0)
    }

    /// Interval outside of which the deficit vanishes.
    pub fn deficit_support(&self) -> (f64, f64) {
        (self.start, self.start + self.width + 1.0)
    }

    pub fn phi_jet(&self, r: Jet) -> Jet {
        let r_val = r.value();
        if r_val <= self.start {
            return phi1_jet(r);
        }
        if r_val >= self.start + self.width {
            return phi_tail_jet(r, self.epsilon);
        }
        let w = xi_jet((r - self.start) / self.width);
        phi1_jet(r) + (1.0 - w) * phi_gap_jet(r, self.epsilon)
    }

    pub fn f0_jet(&self, r: Jet) -> Jet {
        f0_jet(r, self.epsilon, self.params.series_switch_radius)
    }

    pub fn f_jet(&self, r: Jet) -> Jet {
        let r_val = r.value();
        if r_val <= self.start {
            return self.f0_jet(r);
        }
        if r_val >= self.start + 1.0 {
            return Jet::constant(self.f_plateau);
        }
        let w = xi_jet(r - self.start);
        w * self.f0_jet(r) + (1.0 - w) * self.f_plateau
    }

    /// The tangential coefficient that solves `E = 0` on the homogeneous tail.
    pub fn h_tail_jet(&self, r: Jet) -> Jet {
        let eps = self.epsilon;
        let inv_r2 = (r * r).recip();
        let num = 0.5 + (eps * eps + inv_r2 * (0.5 * (2.0 + eps) * (2.0 + eps))) * self.f_plateau;
        num / (1.0 + inv_r2 * 0.5)
    }

    pub fn h_jet(&self, r: Jet) -> Jet {
        let (a, b) = self.h_window();
        let r_val = r.value();
        if r_val <= a {
            return Jet::constant(0.5);
        }
        if r_val >= b {
            return self.h_tail_jet(r);
        }
        let w = xi_jet(r - a);
        w * 0.5 + (1.0 - w) * self.h_tail_jet(r)
    }

    /// Deficit `E(r)`; the jet is exact through the second derivative.
    pub fn deficit_jet(&self, r: Jet) -> Jet {
        let phi = self.phi_jet(r);
        let dphi = phi.derivative();
        let f = self.f_jet(r);
        let h = self.h_jet(r);
        let flux = r * dphi * f;
        let dflux = flux.derivative();
        (r * dphi + phi * self.epsilon) * 0.5 + h * phi / (r * r) - dflux / r
    }

    /// `eta` with derivatives from `eta' = r E / phi`; exact through the third derivative.
    pub fn eta_jet(&self, r: f64) -> Jet {
        let mut out = Jet::zero();
        if r <= self.eta.lo {
            return out;
        }
        out.0[0] = self.eta(r);
        if r >= self.eta.hi {
            return out;
        }
        let rj = Jet::variable(r);
        let d = rj * self.deficit_jet(rj) / self.phi_jet(rj);
        for k in 0..3 {
            out.0[k + 1] = d.0[k] / (k + 1) as f64;
        }
        out
    }

    pub fn phi(&self, r: f64, deriv_order: usize) -> f64 {
        self.phi_jet(Jet::variable(r)).deriv(deriv_order)
    }

    pub fn f(&self, r: f64, deriv_order: usize) -> f64 {
        self.f_jet(Jet::variable(r)).deriv(deriv_order)
    }

    pub fn h(&self, r: f64, deriv_order: usize) -> f64 {
        self.h_jet(Jet::variable(r)).deriv(deriv_order)
    }

    pub fn deficit(&self, r: f64) -> f64 {
        self.deficit_jet(Jet::variable(r)).value()
    }

    pub fn eta(&self, r: f64) -> f64 {
        let t = &self.eta;
        if r <= t.lo {
            return 0.0;
        }
        if r >= t.hi {
            return t.tail();
        }
        let k = (((r - t.lo) / t.step) as usize).min(t.cum.len() - 2);
        let a = t.lo + t.step * k as f64;
        t.cum[k] + quadrature::gauss_legendre8(|s| self.eta_integrand(s), a, r)
    }

    pub fn eta_deriv(&self, r: f64, deriv_order: usize) -> f64 {
        if deriv_order == 0 {
            return self.eta(r);
        }
        self.eta_jet(r).deriv(deriv_order)
    }

    /// Constant value of `eta` beyond the deficit support.
    pub fn eta_tail(&self) -> f64 {
        self.eta.tail()
    }

    /// `(f - 1/2) / r^2`, the factor in `M = I/2 + beta x⊗x` wherever `h = 1/2`.
    pub fn beta(&self, r: f64) -> f64 {
        if r < self.params.series_switch_radius {
            let x = Jet::constant(r);
            let base = x.poly(&F0_SERIES[2..]).value();
            if self.epsilon == 0.0 {
                base
            } else {
                base + self.epsilon * x.poly(&F0_EPS_SERIES[2..]).value()
            }
        } else {
            (self.f(r, 0) - 0.5) / (r * r)
        }
    }

    /// `(f, h, eta)` at radius `r`.
    pub fn block(&self, r: f64) -> Block {
        Block { f: self.f(r, 0), h: self.h(r, 0), eta: self.eta(r) }
    }
}

/// The three radial coefficients of one coupled pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub f: f64,
    pub h: f64,
    pub eta: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ConstructionParams;

    fn bounded(r0: f64) -> RadialProfiles {
        RadialProfiles::new(&ConstructionParams::bounded(r0).unwrap()).unwrap()
    }

    #[test]
    fn phi_point_values() {
        let p = bounded(100.0);
        assert_eq!(p.phi(0.0, 0), 0.0);
        assert!((p.phi(1.0, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((p.phi(300.0, 0) - (1.0 + 1.0 / (18.0 * 1e4))).abs() < 1e-15);
        for &r in &[0.5, 10.0, 150.0, 1e4] {
            assert!(p.phi(r, 0) > 0.0);
        }
    }

    #[test]
    fn f0_closed_form_matches_quadrature() {
        for &r in &[1e-3, 0.3, 1.0, 7.0, 100.0, 1000.0] {
            for eps in [0.0, 1e-3] {
                let c = f0_jet(Jet::variable(r), eps, crate::params::DEFAULT_SERIES_SWITCH).value();
                let q = f0_quadrature(r, eps, 1e-13).unwrap();
                assert!((c / q - 1.0).abs() < 1e-11, "r={r} eps={eps} {c} {q}");
            }
        }
    }

    #[test]
    fn f0_series_and_closed_form_agree_at_switch() {
        let s = 1e-2;
        let a = f0_closed_with_switch(s * (1.0 + 1e-12), s);
        let b = f0_closed_with_switch(s * (1.0 - 1e-12), s);
        assert!((a - b).abs() < 1e-12);
        assert_eq!(f0_closed(0.0), 0.5);
        assert!((f0_closed(1.0) - (2f64.powf(1.5) * 1f64.asinh() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn f_and_h_point_values() {
        let p = bounded(100.0);
        assert_eq!(p.f(0.0, 0), 0.5);
        assert_eq!(p.f(300.0, 0), f0_closed(100.0));
        assert_eq!(p.f(300.0, 1), 0.0);
        assert_eq!(p.h(100.0, 0), 0.5);
        assert!((p.h(1e4, 0) - 0.5).abs() < 1e-3);
        for i in 0..2000 {
            let r = 1e-3 * (1e7f64).powf(i as f64 / 1999.0);
            assert!(p.f(r, 0) >= 0.5 - 1e-14);
            assert!(p.h(r, 0) >= 0.5 - 1e-14);
        }
    }

    #[test]
    fn odd_derivatives_vanish_at_origin() {
        let p = bounded(50.0);
        assert_eq!(p.f(0.0, 1), 0.0);
        assert_eq!(p.f(0.0, 3), 0.0);
        assert_eq!(p.h(0.0, 1), 0.0);
        // phi is odd; its reflection u = phi(r) cos(theta) is smooth iff phi'' (0) = 0
        assert!(p.phi(0.0, 2).abs() < 1e-15);
    }

    #[test]
    fn deficit_vanishes_off_support() {
        for p in [bounded(100.0), RadialProfiles::new(&ConstructionParams::unbounded(100.0).unwrap()).unwrap()] {
            let (lo, hi) = p.deficit_support();
            for i in 0..400 {
                let r = 1e-2 * (1e6f64).powf(i as f64 / 399.0);
                if r < lo || r > hi {
                    assert!(p.deficit(r).abs() < 1e-10, "r={r} E={}", p.deficit(r));
                }
            }
        }
    }

    #[test]
    fn tail_gap_matches_direct_difference() {
        for eps in [0.0, 0.05] {
            for r in [3.0, 40.0, 700.0] {
                let g = phi_gap_jet(Jet::variable(r), eps);
                let direct = phi_tail_jet(Jet::variable(r), eps) - phi1_jet(Jet::variable(r));
                let scale = g.value().abs();
                for k in 0..4 {
                    assert!((g.deriv(k) - direct.deriv(k)).abs() <= 1e-9 * scale.max(direct.deriv(k).abs()), "eps={eps} r={r} k={k}");
                }
            }
        }
    }

    #[test]
    fn eta_support_and_tail() {
        let p = bounded(100.0);
        assert_eq!(p.eta(100.0), 0.0);
        assert_eq!(p.eta(50.0), 0.0);
        assert_eq!(p.eta(201.0), p.eta(1000.0));
        assert!(p.eta_tail().abs() > 0.0);
    }

    #[test]
    fn eta_derivative_is_r_e_over_phi() {
        let p = bounded(50.0);
        for &r in &[55.0, 70.0, 99.5, 100.3] {
            let fd = (p.eta(r + 1e-4) - p.eta(r - 1e-4)) / 2e-4;
            let exact = r * p.deficit(r) / p.phi(r, 0);
            assert!((fd - exact).abs() < 1e-8 * (1.0 + exact.abs()), "r={r}");
            assert!((p.eta_deriv(r, 1) - exact).abs() < 1e-14);
        }
    }
}
