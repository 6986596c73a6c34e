//! The observable footprint of the Liouville theorem for radially increasing
//! solutions. The log cutoff has energy `2 pi / log R`. A fixed nonzero
//! `int_{B_1} |DU|^2` therefore cannot obey a Caccioppoli bound of that size
//! for large `R`. The constructed `U` escapes the theorem only because `|U|`
//! stops increasing at the root of `phi'`.

use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::tensor_cartesian;
use crate::error::{Error, Result};
use crate::params::ConstructionParams;
use crate::profiles::RadialProfiles;
use crate::quadrature::integrate_with_breaks;
use crate::report::{linear_fit, log_grid, Check, Section};
use crate::verify::{default_points, phi_prime_root, u_eval, DEFAULT_STEPS, ORDER_BOUND, RESIDUAL_BOUND};

/// Value and Jacobian (row `α` is `∇F^α`) of a planar field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub value: Vec<f64>,
    pub gradient: Vec<[f64; 2]>,
}

pub type Field<'a> = dyn Fn([f64; 2]) -> FieldSample + Sync + 'a;

/// The field `U = phi nu` of a profile family.
pub fn profile_field(p: &RadialProfiles) -> impl Fn([f64; 2]) -> FieldSample + Sync + '_ {
    move |x| {
        let s = u_eval(p, x);
        FieldSample { value: s.u, gradient: s.du }
    }
}

/// `g(|x|) x/|x|` for a radial amplitude with derivative, `g(r) = (g, g')`.
pub fn radial_field<G: Fn(f64) -> (f64, f64) + Sync>(g: G) -> impl Fn([f64; 2]) -> FieldSample + Sync {
    move |x| {
        let r = x[0].hypot(x[1]);
        let (v, d) = g(r);
        let nu = [x[0] / r, x[1] / r];
        // D(g nu) = g' nu⊗nu + (g/r)(I - nu⊗nu)
        let grad = |a: usize, b: usize| {
            let delta = if a == b { 1.0 } else { 0.0 };
            d * nu[a] * nu[b] + v / r * (delta - nu[a] * nu[b])
        };
        FieldSample { value: vec![v * nu[0], v * nu[1]], gradient: vec![[grad(0, 0), grad(0, 1)], [grad(1, 0), grad(1, 1)]] }
    }
}

pub fn constant_field(c: [f64; 2]) -> impl Fn([f64; 2]) -> FieldSample + Sync {
    move |_| FieldSample { value: c.to_vec(), gradient: vec![[0.0; 2]; 2] }
}

/// `psi = 1` on `B_1`, `1 - log r / log R` on `[1, R]`, `0` beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogCutoff {
    pub outer: f64,
}

impl LogCutoff {
    pub fn new(outer: f64) -> Result<Self> {
        if !(outer > 1.0) || !outer.is_finite() {
            return Err(Error::InvalidParams(format!("cutoff radius {outer} must exceed 1")));
        }
        Ok(Self { outer })
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= 1.0 {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            1.0 - r.ln() / self.outer.ln()
        }
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r = r2.sqrt();
        if r <= 1.0 || r >= self.outer {
            return [0.0, 0.0];
        }
        let k = -1.0 / (r2 * self.outer.ln());
        [k * x[0], k * x[1]]
    }

    pub fn energy_closed(&self) -> f64 {
        TAU / self.outer.ln()
    }

    /// `int |grad psi|^2` on a polar grid, log-spaced in `r`.
    pub fn energy_quadrature(&self) -> Result<f64> {
        let breaks = log_grid(1.0, self.outer, 9);
        polar_integral(|x| {
            let g = self.gradient(x);
            g[0] * g[0] + g[1] * g[1]
        }, &breaks)
    }
}

const ANGLES: usize = 32;
const QUAD_TOL: f64 = 1e-12;

/// `int f` over the annuli between consecutive `breaks`, with the trapezoid
/// rule in angle and adaptive quadrature in `log r` (in `r` from the origin).
fn polar_integral<F: Fn([f64; 2]) -> f64 + Sync>(f: F, breaks: &[f64]) -> Result<f64> {
    let ring = |r: f64| {
        (0..ANGLES)
            .map(|k| {
                let th = TAU * (k as f64 + 0.5) / ANGLES as f64;
                f([r * th.cos(), r * th.sin()])
            })
            .sum::<f64>()
            * TAU
            / ANGLES as f64
    };
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += if w[0] == 0.0 {
            integrate_with_breaks(|r| r * ring(r), w, QUAD_TOL, 1e-300)?
        } else {
            let s = [w[0].ln(), w[1].ln()];
            integrate_with_breaks(|s| { let r = s.exp(); r * r * ring(r) }, &s, QUAD_TOL, 1e-300)?
        };
    }
    Ok(total)
}

fn grad_norm2(s: &FieldSample) -> f64 {
    s.gradient.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum()
}

/// Ray along which radial derivatives of `|F|` are taken.
pub const SCAN_ANGLE: f64 = 0.3;

/// Decrease of `|F|` below this multiple of `eps |F| / r` is rounding.
const DECREASE_FLOOR: f64 = 64.0 * f64::EPSILON;

fn decreasing(field: &Field, r: f64) -> bool {
    let nu = [SCAN_ANGLE.cos(), SCAN_ANGLE.sin()];
    let m = field([r * nu[0], r * nu[1]]).value.iter().map(|v| v * v).sum::<f64>().sqrt();
    modulus_derivative(field, r) < -DECREASE_FLOOR * m / r
}

/// `d|F|/dr` at radius `r` on the scan ray.
pub fn modulus_derivative(field: &Field, r: f64) -> f64 {
    let nu = [SCAN_ANGLE.cos(), SCAN_ANGLE.sin()];
    let s = field([r * nu[0], r * nu[1]]);
    let m = s.value.iter().map(|v| v * v).sum::<f64>().sqrt();
    if m == 0.0 {
        return 0.0;
    }
    let dot: f64 = s.value.iter().zip(&s.gradient).map(|(v, g)| v * (g[0] * nu[0] + g[1] * nu[1])).sum();
    dot / m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub radii: usize,
    /// `d|F|/dr >= 0`, up to rounding, at every scanned radius.
    pub monotone: bool,
    /// First radius where `d|F|/dr` turns negative, refined by bisection.
    pub first_sign_change: Option<f64>,
    pub min_derivative: f64,
}

pub fn monotonicity_scan(field: &Field, radii: &[f64]) -> MonotonicityReport {
    let d: Vec<f64> = radii.par_iter().map(|&r| modulus_derivative(field, r)).collect();
    let first = radii.iter().position(|&r| decreasing(field, r));
    let first_sign_change = first.map(|k| {
        if k == 0 {
            return radii[0];
        }
        let (mut lo, mut hi) = (radii[k - 1], radii[k]);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return mid;
            }
            // the floor only decides that a decrease exists; the crossing uses the raw sign
            if modulus_derivative(field, mid) < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    });
    MonotonicityReport {
        radii: radii.len(),
        monotone: first.is_none(),
        first_sign_change,
        min_derivative: d.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// One row of the Caccioppoli comparison at cutoff radius `R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub outer: f64,
    /// `int_{B_1} |DF|^2`.
    pub inner_energy: f64,
    /// `int_{B_R} |DF|^2 psi^2`.
    pub weighted_energy: f64,
    /// `int |grad psi|^2` by quadrature (`2 pi / log R`).
    pub cutoff_energy: f64,
    /// `C int |grad psi|^2`.
    pub bound: f64,
    /// `inner_energy / bound`; above 1 the inequality fails.
    pub ratio: f64,
}

pub fn caccioppoli_ratio(field: &Field, outer: f64, constant: f64) -> Result<EnergyRow> {
    if !(outer >= 10.0) {
        return Err(Error::InvalidParams(format!("cutoff radius {outer} below 10")));
    }
    let cutoff = LogCutoff::new(outer)?;
    let inner_energy = polar_integral(|x| grad_norm2(&field(x)), &[0.0, 0.5, 1.0])?;
    let mut breaks = vec![0.0];
    breaks.extend(log_grid(1.0, outer, 9));
    let weighted_energy = polar_integral(
        |x| {
            let w = cutoff.value(x[0].hypot(x[1]));
            grad_norm2(&field(x)) * w * w
        },
        &breaks,
    )?;
    let cutoff_energy = cutoff.energy_quadrature()?;
    let bound = constant * cutoff_energy;
    let ratio = if inner_energy == 0.0 { 0.0 } else { inner_energy / bound };
    Ok(EnergyRow { outer, inner_energy, weighted_energy, cutoff_energy, bound, ratio })
}

/// Rows for several `R`, and the first `R` at which the inequality fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub constant: f64,
    pub rows: Vec<EnergyRow>,
    pub crossover: Option<f64>,
    /// Slope of `log cutoff_energy` against `log log R` (exactly `-1`).
    pub cutoff_decay_slope: f64,
}

pub fn energy_report(field: &Field, radii: &[f64], constant: f64) -> Result<EnergyReport> {
    let rows = radii.par_iter().map(|&r| caccioppoli_ratio(field, r, constant)).collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.outer.ln().ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.cutoff_energy.ln()).collect();
    let cutoff_decay_slope = if rows.len() > 1 { linear_fit(&lx, &ly).0 } else { f64::NAN };
    Ok(EnergyReport { constant, crossover: rows.iter().find(|r| r.ratio > 1.0).map(|r| r.outer), rows, cutoff_decay_slope })
}

impl EnergyReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Relative gap between quadrature and `2 pi / log R`.
pub fn cutoff_energy_gap(outer: f64) -> Result<f64> {
    let c = LogCutoff::new(outer)?;
    Ok((c.energy_quadrature()? / c.energy_closed() - 1.0).abs())
}

pub const CUTOFF_RADII: [f64; 3] = [1e2, 1e3, 1e4];
pub const CUTOFF_TOL: f64 = 1e-8;
pub const ROOT_MATCH_TOL: f64 = 1e-8;

/// `div(A DF) - (DF·x + eps F)/2` with the coefficients of `p` and stencil `step`.
pub fn field_residual(p: &RadialProfiles, field: &Field, x: [f64; 2], step: f64) -> f64 {
    let flux = |y: [f64; 2]| tensor_cartesian(p, y).apply(&field(y).gradient);
    let fxp = flux([x[0] + step, x[1]]);
    let fxm = flux([x[0] - step, x[1]]);
    let fyp = flux([x[0], x[1] + step]);
    let fym = flux([x[0], x[1] - step]);
    let s = field(x);
    (0..2)
        .map(|a| {
            let drift = s.gradient[a][0] * x[0] + s.gradient[a][1] * x[1] + p.epsilon * s.value[a];
            let r = (fxp[a][0] - fxm[a][0] + fyp[a][1] - fym[a][1]) / (2.0 * step) - 0.5 * drift;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub r0: f64,
    /// (a) the field solves the system: residual maxima per step and order.
    pub residual_max: Vec<f64>,
    pub residual_order: f64,
    pub solves: bool,
    /// (b) `sup |F|` and `sup |F| - inf |F|` on the scan radii.
    pub sup_modulus: f64,
    pub osc_modulus: f64,
    pub bounded_nonconstant: bool,
    /// (c) first sign change of `d|F|/dr`, required inside the `phi` window.
    pub sign_change: Option<f64>,
    pub sign_change_in_window: bool,
    /// Distance from the root of `phi'` (for the constructed field).
    pub root_gap: Option<f64>,
    pub passed: bool,
}

/// Bound on `sup |F|` accepted as bounded.
pub const MODULUS_BOUND: f64 = 10.0;
/// Least oscillation of `|F|` accepted as non-constant.
pub const MODULUS_OSC_MIN: f64 = 0.1;

/// The three prongs for an arbitrary field against the system of `p`.
pub fn witness_for_field(p: &RadialProfiles, field: &Field) -> WitnessReport {
    let (radii, angles) = default_points(p);
    let points: Vec<[f64; 2]> =
        radii.iter().flat_map(|&r| angles.iter().map(move |&t| [r * t.cos(), r * t.sin()])).collect();
    let residual_max: Vec<f64> = DEFAULT_STEPS
        .iter()
        .map(|&h| points.par_iter().map(|&x| field_residual(p, field, x, h)).reduce(|| 0.0, f64::max))
        .collect();
    let lx: Vec<f64> = DEFAULT_STEPS.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = residual_max.iter().map(|v| v.max(1e-300).ln()).collect();
    let residual_order = linear_fit(&lx, &ly).0;
    let solves = residual_max.iter().all(|v| *v == 0.0)
        || (residual_order >= ORDER_BOUND && *residual_max.last().unwrap() <= RESIDUAL_BOUND);

    let r0 = p.params.r0;
    let scan = scan_radii(p);
    let moduli: Vec<f64> = scan
        .iter()
        .map(|&r| field([r * SCAN_ANGLE.cos(), r * SCAN_ANGLE.sin()]).value.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let sup_modulus = moduli.iter().copied().fold(0.0, f64::max);
    let osc_modulus = sup_modulus - moduli.iter().copied().fold(f64::INFINITY, f64::min);
    let bounded_nonconstant = sup_modulus <= MODULUS_BOUND && osc_modulus >= MODULUS_OSC_MIN;

    let mono = monotonicity_scan(field, &scan);
    let (a, b) = p.phi_window();
    let sign_change_in_window = mono.first_sign_change.is_some_and(|r| r > a && r < b);
    let root_gap = match (mono.first_sign_change, phi_prime_root(p, a, b)) {
        (Some(r), Ok(root)) => Some((r - root).abs()),
        _ => None,
    };
    WitnessReport {
        r0,
        residual_max,
        residual_order,
        solves,
        sup_modulus,
        osc_modulus,
        bounded_nonconstant,
        sign_change: mono.first_sign_change,
        sign_change_in_window,
        root_gap,
        passed: solves && bounded_nonconstant && sign_change_in_window,
    }
}

/// Radii for the monotonicity scan: log-spaced on `[1e-2, 100 r0]`, dense on
/// the `phi` window.
pub fn scan_radii(p: &RadialProfiles) -> Vec<f64> {
    let (a, b) = p.phi_window();
    let mut r = log_grid(1e-2, 100.0 * p.params.r0, 2000);
    r.extend(log_grid(a, b, 2000));
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// The witness for the constructed `U` of the bounded variant.
pub fn liouville_witness(params: &ConstructionParams) -> Result<WitnessReport> {
    let p = RadialProfiles::new(params)?;
    let field = profile_field(&p);
    Ok(witness_for_field(&p, &field))
}

/// `phi` clamped to its running maximum: radially non-decreasing.
pub fn clamped_profile_field(p: &RadialProfiles) -> Result<impl Fn([f64; 2]) -> FieldSample + Sync + '_> {
    let (a, b) = p.phi_window();
    let root = phi_prime_root(p, a, b)?;
    let top = p.phi(root, 0);
    Ok(radial_field(move |r| if r <= root { (p.phi(r, 0), p.phi(r, 1)) } else { (top, 0.0) }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleSuite {
    pub cutoff_gaps: Vec<(f64, f64)>,
    pub witness: WitnessReport,
    pub energy: EnergyReport,
}

pub fn liouville_suite(p: &RadialProfiles) -> Result<LiouvilleSuite> {
    let cutoff_gaps =
        CUTOFF_RADII.iter().map(|&r| cutoff_energy_gap(r).map(|g| (r, g))).collect::<Result<Vec<_>>>()?;
    let field = profile_field(p);
    let witness = witness_for_field(p, &field);
    let phi1 = radial_field(|r| {
        let q = (1.0 + r * r).sqrt();
        (r / q, 1.0 / (q * q * q))
    });
    let energy = energy_report(&phi1, &CUTOFF_RADII, 1.0)?;
    Ok(LiouvilleSuite { cutoff_gaps, witness, energy })
}

impl LiouvilleSuite {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("liouville_witness");
        for (r, g) in &self.cutoff_gaps {
            s.push(Check::at_most(format!("cutoff_energy_gap_R{r:.0e}"), *g, CUTOFF_TOL));
        }
        let w = &self.witness;
        s.push(Check::at_most("residual_finest", *w.residual_max.last().unwrap(), RESIDUAL_BOUND));
        s.push(Check::at_least("residual_order", w.residual_order, ORDER_BOUND));
        s.push(Check::at_most("sup_modulus", w.sup_modulus, MODULUS_BOUND));
        s.push(Check::at_least("osc_modulus", w.osc_modulus, MODULUS_OSC_MIN));
        s.push(Check::flag("sign_change_in_window", w.sign_change_in_window, w.sign_change.unwrap_or(f64::NAN)));
        s.push(Check::at_most("root_gap", w.root_gap.unwrap_or(f64::INFINITY), ROOT_MATCH_TOL));
        s.push(Check::flag(
            "cutoff_decay_slope",
            (self.energy.cutoff_decay_slope + 1.0).abs() < 1e-6,
            self.energy.cutoff_decay_slope,
        ));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}
