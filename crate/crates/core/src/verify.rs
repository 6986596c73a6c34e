//! Pointwise verification of the stationary system
//! `div(A DU) = (DU·x + eps U) / 2` for `U = phi(|x|) x/|x|`.
//!
//! The divergence is taken by central differences of the analytic flux
//! `A(y) DU(y)`, so the only error is the O(step^2) truncation of the stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{frame_at, scalar_block_m, CoefficientTensor};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::profiles::RadialProfiles;
use crate::report::{linear_fit, log_grid, Check, Section};

/// `U`, `DU` (row `α` is `∇U^α`) and the drift `DU·x + eps U`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSample {
    pub u: Vec<f64>,
    pub du: Vec<[f64; 2]>,
    pub drift: Vec<f64>,
}

/// `(phi/r, (phi/r)'/r)`; `U = g x`, `DU = g I + k x⊗x`.
fn radial_factors(p: &RadialProfiles, r: f64) -> (f64, f64) {
    if r < 1e-3 && r <= p.start {
        let q = 1.0 + r * r;
        return (1.0 / q.sqrt(), -1.0 / (q * q.sqrt()));
    }
    let phi = p.phi_jet(Jet::variable(r));
    let (v, d) = (phi.value(), phi.deriv(1));
    (v / r, (d - v / r) / (r * r))
}

/// A stationary problem built from one or more profile families; each family
/// contributes the pair `phi_k(|x|) x/|x|` and its coupled block.
#[derive(Clone, Debug)]
pub struct StationarySystem<'a> {
    pub families: Vec<&'a RadialProfiles>,
    /// With `false` every `eta` is replaced by zero.
    pub coupled: bool,
}

impl<'a> StationarySystem<'a> {
    pub fn single(p: &'a RadialProfiles) -> Self {
        Self { families: vec![p], coupled: true }
    }

    pub fn paired(p: &'a RadialProfiles, q: &'a RadialProfiles) -> Self {
        Self { families: vec![p, q], coupled: true }
    }

    pub fn decoupled(&self) -> Self {
        Self { families: self.families.clone(), coupled: false }
    }

    pub fn components(&self) -> usize {
        2 * self.families.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.families[0].epsilon
    }

    pub fn sample(&self, x: [f64; 2]) -> MapSample {
        let r = x[0].hypot(x[1]);
        let eps = self.epsilon();
        let m = self.components();
        let mut out = MapSample { u: Vec::with_capacity(m), du: Vec::with_capacity(m), drift: Vec::with_capacity(m) };
        for p in &self.families {
            let (g, k) = radial_factors(p, r);
            for a in 0..2 {
                let u = g * x[a];
                let row = [
                    if a == 0 { g } else { 0.0 } + k * x[a] * x[0],
                    if a == 1 { g } else { 0.0 } + k * x[a] * x[1],
                ];
                out.u.push(u);
                out.drift.push(row[0] * x[0] + row[1] * x[1] + eps * u);
                out.du.push(row);
            }
        }
        out
    }

    pub fn tensor(&self, x: [f64; 2]) -> CoefficientTensor {
        let r = x[0].hypot(x[1]);
        let mut t = CoefficientTensor::zeros(self.components());
        for (k, p) in self.families.iter().enumerate() {
            let eta = if self.coupled { p.eta(r) } else { 0.0 };
            t.set_pair(k, scalar_block_m(p, x), eta);
        }
        t
    }

    pub fn flux(&self, x: [f64; 2]) -> Vec<[f64; 2]> {
        self.tensor(x).apply(&self.sample(x).du)
    }

    /// `div(A DU) - (DU·x + eps U)/2` at `x` with stencil spacing `step`.
    pub fn residual(&self, x: [f64; 2], step: f64) -> Result<ResidualSample> {
        if x[0].hypot(x[1]) <= 2.0 * step {
            return Err(Error::OriginFrame);
        }
        let fxp = self.flux([x[0] + step, x[1]]);
        let fxm = self.flux([x[0] - step, x[1]]);
        let fyp = self.flux([x[0], x[1] + step]);
        let fym = self.flux([x[0], x[1] - step]);
        let s = self.sample(x);
        let residual = (0..self.components())
            .map(|a| (fxp[a][0] - fxm[a][0] + fyp[a][1] - fym[a][1]) / (2.0 * step) - 0.5 * s.drift[a])
            .collect();
        Ok(ResidualSample { x, residual, scheme_step: step })
    }
}

/// The map `U` of a single profile family.
pub fn u_eval(p: &RadialProfiles, x: [f64; 2]) -> MapSample {
    StationarySystem::single(p).sample(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub x: [f64; 2],
    pub residual: Vec<f64>,
    pub scheme_step: f64,
}

impl ResidualSample {
    pub fn norm(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn elliptic_residual(p: &RadialProfiles, x: [f64; 2], step: f64) -> Result<ResidualSample> {
    StationarySystem::single(p).residual(x, step)
}

/// `n` radii on `[lo, hi]` whose log-density is `factor` times larger on `[wlo, whi]`.
pub fn refined_log_radii(lo: f64, hi: f64, wlo: f64, whi: f64, n: usize, factor: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let (wa, wb) = (wlo.max(lo).ln(), whi.min(hi).ln());
    let mass = |s: f64| {
        let inside = (s.min(wb) - wa).max(0.0);
        (s - a) + (factor - 1.0) * inside
    };
    let total = mass(b);
    (0..n)
        .map(|i| {
            let target = total * i as f64 / (n - 1) as f64;
            // invert the piecewise-linear cumulative mass by bisection
            let (mut l, mut h) = (a, b);
            for _ in 0..100 {
                let mid = 0.5 * (l + h);
                if mass(mid) < target {
                    l = mid;
                } else {
                    h = mid;
                }
            }
            (0.5 * (l + h)).exp()
        })
        .collect()
}

pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConvergence {
    pub name: String,
    pub points: usize,
    pub max_residual: Vec<f64>,
    pub order: f64,
    /// `false` when the coarsest-step maximum is already at rounding level,
    /// in which case `order` carries no information.
    pub resolved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    pub n_radii: usize,
    pub n_angles: usize,
    pub max_residual: Vec<f64>,
    /// Least-squares slope of `log max_residual` against `log step`.
    pub order: f64,
    pub classes: Vec<ClassConvergence>,
    /// `max |residual_decoupled + E nu - residual_coupled|` at the probe step.
    pub decoupled_probe: f64,
    pub probe_step: f64,
}

pub const RESIDUAL_BOUND: f64 = 1e-4;
pub const ORDER_BOUND: f64 = 1.9;
pub const PROBE_BOUND: f64 = 1e-8;
/// Residuals below this are dominated by rounding in the flux differences.
pub const ROUNDING_FLOOR: f64 = 1e-9;

fn fit_order(steps: &[f64], maxima: &[f64]) -> f64 {
    let lx: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = maxima.iter().map(|s| s.max(1e-300).ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Default sample points: 64 radii on `[1, 10 r0]` refined four-fold on the
/// deficit support, times 16 angles.
pub fn default_points(p: &RadialProfiles) -> (Vec<f64>, Vec<f64>) {
    let r0 = p.params.r0;
    let (a, b) = p.deficit_support();
    let radii = refined_log_radii(1.0, 10.0 * r0, a, b, 64, 4.0);
    let angles = (0..16).map(|k| (k as f64 + 0.25) * std::f64::consts::TAU / 16.0).collect();
    (radii, angles)
}

/// Residual maxima over `radii × angles` at each step, with fitted orders.
/// Points inside any transition window (`[start, start + width + 1]` of some
/// family) form the `window` class; the rest form `smooth`.
pub fn residual_convergence(
    sys: &StationarySystem,
    radii: &[f64],
    angles: &[f64],
    steps: &[f64],
) -> Result<ConvergenceReport> {
    let points: Vec<[f64; 2]> = radii
        .iter()
        .flat_map(|&r| angles.iter().map(move |&t| [r * t.cos(), r * t.sin()]))
        .collect();
    let in_window = |x: &[f64; 2]| {
        let r = x[0].hypot(x[1]);
        sys.families.iter().any(|p| {
            let (a, b) = p.deficit_support();
            r >= a && r <= b
        })
    };
    let norms: Vec<Vec<f64>> = steps
        .iter()
        .map(|&h| {
            points
                .par_iter()
                .map(|&x| sys.residual(x, h).map(|s| s.norm()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let class = |name: &str, keep: &dyn Fn(&[f64; 2]) -> bool| {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| keep(&points[i])).collect();
        let max_residual: Vec<f64> =
            norms.iter().map(|n| idx.iter().map(|&i| n[i]).fold(0.0, f64::max)).collect();
        ClassConvergence {
            name: name.to_string(),
            points: idx.len(),
            order: fit_order(steps, &max_residual),
            resolved: max_residual[0] > ROUNDING_FLOOR,
            max_residual,
        }
    };
    let window = class("window", &|x| in_window(x));
    let smooth = class("smooth", &|x| !in_window(x));
    let max_residual: Vec<f64> = norms.iter().map(|n| n.iter().copied().fold(0.0, f64::max)).collect();
    let probe_step = 1e-4;
    let decoupled_probe = decoupled_probe(sys, radii, angles, probe_step)?;
    Ok(ConvergenceReport {
        steps: steps.to_vec(),
        n_radii: radii.len(),
        n_angles: angles.len(),
        order: fit_order(steps, &max_residual),
        max_residual,
        classes: vec![window, smooth],
        decoupled_probe,
        probe_step,
    })
}

/// Removing the coupling must leave exactly `-E(r) nu` per pair.
pub fn decoupled_probe(sys: &StationarySystem, radii: &[f64], angles: &[f64], step: f64) -> Result<f64> {
    let dec = sys.decoupled();
    let worst = radii
        .par_iter()
        .map(|&r| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for &t in angles {
                let x = [r * t.cos(), r * t.sin()];
                let full = sys.residual(x, step)?;
                let part = dec.residual(x, step)?;
                let nu = frame_at(x)?.nu;
                for (k, p) in sys.families.iter().enumerate() {
                    let e = p.deficit(r);
                    for a in 0..2 {
                        let i = 2 * k + a;
                        worst = worst.max((part.residual[i] + e * nu[a] - full.residual[i]).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

impl ConvergenceReport {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("residual_convergence");
        s.push(Check::at_most("max_residual_finest", *self.max_residual.last().unwrap(), RESIDUAL_BOUND));
        s.push(Check::at_least("order", self.order, ORDER_BOUND));
        s.push(Check::at_most("decoupled_probe", self.decoupled_probe, PROBE_BOUND));
        for c in &self.classes {
            s.push(
                Check::flag(format!("order_{}", c.name), true, c.order).with_note(format!(
                    "{} points, finest max {:.3e}{}",
                    c.points,
                    c.max_residual.last().unwrap(),
                    if c.resolved { "" } else { ", rounding-limited" }
                )),
            );
        }
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub epsilon: f64,
    /// Slope of `log |DU|` against `log |x|` on `[10 r0, 1e4 r0]`.
    pub gradient_slope: f64,
    /// Slope of `log |DU·x + eps U|`.
    pub drift_slope: f64,
    /// `sup |DU| |x|` over `[1, 100 r0]`.
    pub gradient_scaled_sup: f64,
    /// `sup |DU·x + eps U| |x|^2` over `[1, 100 r0]`.
    pub drift_scaled_sup: f64,
}

pub const SLOPE_TOL: f64 = 0.05;

pub fn decay_audit(p: &RadialProfiles) -> DecayReport {
    let r0 = p.params.r0;
    let sys = StationarySystem::single(p);
    let dir = [0.6, 0.8];
    let measure = |r: f64| {
        let s = sys.sample([r * dir[0], r * dir[1]]);
        let g = s.du.iter().map(|row| row[0] * row[0] + row[1] * row[1]).sum::<f64>().sqrt();
        let d = s.drift.iter().map(|v| v * v).sum::<f64>().sqrt();
        (g, d)
    };
    let far = log_grid(10.0 * r0, 1e4 * r0, 200);
    let lx: Vec<f64> = far.iter().map(|r| r.ln()).collect();
    let (lg, ld): (Vec<f64>, Vec<f64>) = far
        .iter()
        .map(|&r| {
            let (g, d) = measure(r);
            (g.ln(), d.ln())
        })
        .unzip();
    let mut gradient_scaled_sup: f64 = 0.0;
    let mut drift_scaled_sup: f64 = 0.0;
    for r in log_grid(1.0, 100.0 * r0, 2000) {
        let (g, d) = measure(r);
        gradient_scaled_sup = gradient_scaled_sup.max(g * r);
        drift_scaled_sup = drift_scaled_sup.max(d * r * r);
    }
    DecayReport {
        epsilon: p.epsilon,
        gradient_slope: linear_fit(&lx, &lg).0,
        drift_slope: linear_fit(&lx, &ld).0,
        gradient_scaled_sup,
        drift_scaled_sup,
    }
}

impl DecayReport {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("decay");
        let eps = self.epsilon;
        s.push(Check::at_most("gradient_slope_error", (self.gradient_slope + 1.0 + eps).abs(), SLOPE_TOL));
        s.push(Check::at_most("drift_slope_error", (self.drift_slope + 2.0 + eps).abs(), SLOPE_TOL));
        s.push(Check::flag("gradient_scaled_sup", self.gradient_scaled_sup.is_finite(), self.gradient_scaled_sup));
        s.push(Check::flag("drift_scaled_sup", self.drift_scaled_sup.is_finite(), self.drift_scaled_sup));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleProbe {
    pub r_star: f64,
    pub deficit_at_root: f64,
    pub phi_prime_lo: f64,
    pub phi_prime_hi: f64,
    /// `eta(r* + 1) - eta(r* - 1)`.
    pub eta_jump: f64,
}

/// Root of `phi'` on `[a, b]` by bisection to floating-point resolution.
pub fn phi_prime_root(p: &RadialProfiles, a: f64, b: f64) -> Result<f64> {
    let d = |r: f64| p.phi(r, 1);
    let (mut lo, mut hi) = (a, b);
    let (dlo, dhi) = (d(lo), d(hi));
    if !(dlo > 0.0 && dhi < 0.0) {
        return Err(Error::RootNotBracketed { lo: a, hi: b });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if d(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Where `|U|` turns from increasing to decreasing the deficit must be positive.
pub fn max_principle_probe(p: &RadialProfiles) -> Result<MaxPrincipleProbe> {
    let (a, b) = p.phi_window();
    let r_star = phi_prime_root(p, a, b)?;
    Ok(MaxPrincipleProbe {
        r_star,
        deficit_at_root: p.deficit(r_star),
        phi_prime_lo: p.phi(a, 1),
        phi_prime_hi: p.phi(b, 1),
        eta_jump: p.eta(r_star + 1.0) - p.eta(r_star - 1.0),
    })
}

impl MaxPrincipleProbe {
    pub fn to_section(&self, p: &RadialProfiles) -> Section {
        let (a, b) = p.phi_window();
        let mut s = Section::new("max_principle");
        s.push(Check::flag("root_inside_window", self.r_star > a && self.r_star < b, self.r_star));
        s.push(Check::flag("deficit_positive", self.deficit_at_root > 0.0, self.deficit_at_root));
        s.push(Check::flag("eta_grows_across_root", self.eta_jump > 0.0, self.eta_jump));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}

/// Failed construction as a section, so suites stay total.
pub fn error_section(name: &str, err: &Error) -> Section {
    let mut s = Section::new(name);
    s.push(Check::flag("construction", false, f64::NAN).with_note(err.to_string()));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ConstructionParams;

    fn bounded(r0: f64) -> RadialProfiles {
        RadialProfiles::new(&ConstructionParams::bounded(r0).unwrap()).unwrap()
    }

    #[test]
    fn map_point_values() {
        let p = bounded(100.0);
        let s = u_eval(&p, [0.0, 0.0]);
        assert_eq!(s.u, vec![0.0, 0.0]);
        assert_eq!(s.du, vec![[1.0, 0.0], [0.0, 1.0]]);
        let s = u_eval(&p, [150.0, 0.0]);
        assert!((s.u[0] - p.phi(150.0, 0)).abs() < 1e-15 && s.u[1] == 0.0);
    }

    #[test]
    fn gradient_matches_polar_formula() {
        // row a of DU is grad(phi nu_a) = phi' nu_a nu + (phi/r) tau_a tau
        let p = bounded(50.0);
        for &(r, th) in &[(3.0, 0.4), (70.0, 2.0), (120.0, -1.0)] {
            let x = [r * f64::cos(th), r * f64::sin(th)];
            let s = u_eval(&p, x);
            let f = frame_at(x).unwrap();
            let (phi, dphi) = (p.phi(r, 0), p.phi(r, 1));
            for a in 0..2 {
                let want = [
                    dphi * f.nu[a] * f.nu[0] + phi / r * f.tau[a] * f.tau[0],
                    dphi * f.nu[a] * f.nu[1] + phi / r * f.tau[a] * f.tau[1],
                ];
                for i in 0..2 {
                    assert!((s.du[a][i] - want[i]).abs() < 1e-13, "r={r}");
                }
            }
            let m = (s.u[0].powi(2) + s.u[1].powi(2)).sqrt();
            assert!((m - phi).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_small_inside_first_window() {
        let p = bounded(100.0);
        let s = elliptic_residual(&p, [50.0, 0.0], 1e-3).unwrap();
        assert!(s.norm() <= 1e-5, "{s:?}");
        assert!(matches!(elliptic_residual(&p, [1e-4, 0.0], 1e-3), Err(Error::OriginFrame)));
    }

    #[test]
    fn residual_second_order_where_resolved() {
        // inside the windows the truncation error is below rounding, so the
        // Richardson ratio is taken where the flux varies on unit scale
        let p = bounded(100.0);
        let x = [1.5, 0.7];
        let e1 = elliptic_residual(&p, x, 2e-2).unwrap().norm();
        let e2 = elliptic_residual(&p, x, 1e-2).unwrap().norm();
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn residual_is_rotation_equivariant() {
        let p = bounded(100.0);
        let (r, a) = (130.0, 0.3f64);
        for &b in &[0.7f64, 2.1, -1.3] {
            let x = [r * a.cos(), r * a.sin()];
            let y = [r * (a + b).cos(), r * (a + b).sin()];
            let rx = elliptic_residual(&p, x, 1e-2).unwrap().residual;
            let ry = elliptic_residual(&p, y, 1e-2).unwrap().residual;
            let rot = [b.cos() * rx[0] - b.sin() * rx[1], b.sin() * rx[0] + b.cos() * rx[1]];
            assert!((rot[0] - ry[0]).abs() < 1e-10 && (rot[1] - ry[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn refined_radii_are_sorted_and_denser_in_window() {
        let g = refined_log_radii(1.0, 1000.0, 100.0, 201.0, 64, 4.0);
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[63] - 1000.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let inside = g.iter().filter(|&&r| (100.0..=201.0).contains(&r)).count();
        assert!(inside > 15, "{inside}");
    }

    #[test]
    fn decay_slopes_bounded_and_eps_zero_consistency() {
        let b = decay_audit(&bounded(100.0));
        assert!((b.gradient_slope + 1.0).abs() < 0.05 && (b.drift_slope + 2.0).abs() < 0.05, "{b:?}");
        let u0 = RadialProfiles::new(&ConstructionParams::unbounded_with_epsilon(100.0, 0.0).unwrap()).unwrap();
        assert_eq!(decay_audit(&u0), b);
    }

    #[test]
    fn probe_finds_root_with_positive_deficit() {
        let p = bounded(100.0);
        let m = max_principle_probe(&p).unwrap();
        assert!(m.r_star > 100.0 && m.r_star < 200.0);
        assert!(m.deficit_at_root > 0.0 && m.eta_jump > 0.0);
        assert!(m.phi_prime_lo > 0.0 && m.phi_prime_hi < 0.0);
        assert!(matches!(phi_prime_root(&p, 1.0, 50.0), Err(Error::RootNotBracketed { .. })));
    }
}
