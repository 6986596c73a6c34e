//! Coefficients that depend only on the value of the solution.
//!
//! `W = (phi nu, phi~ nu)` pairs the bounded example with a copy whose
//! profile transitions on `[3 r0, 4 r0]`. The curve `Gamma = {(phi, phi~)}`
//! is embedded, so the radial coefficients can be written as functions on
//! state space:
//!
//! * `F(|p|)` recovers `f` by inverting `phi_1`; `f` is constant wherever the
//!   inversion would be ambiguous.
//! * `H(|p|, |q|)` and `N(|p|, |q|)` are extended off `Gamma` through a thin
//!   tube around it: each state is projected to its nearest point of `Gamma`
//!   and the on-curve value is faded out with the distance. A collar cutoff
//!   makes both trivial outside the square `Q` of half side `delta_bar`
//!   centred at `(1, 1)`.
//!
//! Near `(1, 1)` the curve runs down the diagonal forever; that tail is a
//! segment handled in closed form, where `h = (1/2 + 4 F s) / (1 + s)` with
//! `s = |p| - 1`. The segment is continued a distance `ell` past `(1, 1)`
//! with the same formula under a cutoff, so the extension is smooth there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{tensor_for_families, CoefficientTensor, Mat2};
use crate::cutoff::{bump_half, cutoff_xi};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::params::{ConstructionParams, Variant};
use crate::profiles::{phi1_inverse, RadialProfiles};
use crate::report::{log_grid, Check, Section};
use crate::verify::{refined_log_radii, residual_convergence, ConvergenceReport, MapSample, StationarySystem, DEFAULT_STEPS};

pub const DEFAULT_GAMMA_SAMPLES: usize = 8192;
pub const MIN_GAMMA_SAMPLES: usize = 2048;

/// The profile family of `U` and the shifted family of `U~`.
#[derive(Clone, Debug)]
pub struct PairedProfiles {
    pub primary: RadialProfiles,
    pub tilde: RadialProfiles,
}

pub fn paired_profiles(params: &ConstructionParams) -> Result<PairedProfiles> {
    if params.variant == Variant::Unbounded || params.epsilon != 0.0 {
        return Err(Error::InvalidParams("the quasilinear example is built from the bounded profiles".into()));
    }
    let r0 = params.r0;
    Ok(PairedProfiles { primary: RadialProfiles::new(params)?, tilde: RadialProfiles::with_window(params, 3.0 * r0, r0)? })
}

impl PairedProfiles {
    pub fn families(&self) -> [&RadialProfiles; 2] {
        [&self.primary, &self.tilde]
    }

    pub fn system(&self) -> StationarySystem<'_> {
        StationarySystem::paired(&self.primary, &self.tilde)
    }

    /// `Gamma(r)` with its first two derivatives in `r`.
    fn curve_jet(&self, r: f64) -> [[f64; 3]; 2] {
        let a = self.primary.phi_jet(Jet::variable(r));
        let b = self.tilde.phi_jet(Jet::variable(r));
        [[a.value(), a.deriv(1), a.deriv(2)], [b.value(), b.deriv(1), b.deriv(2)]]
    }

    pub fn curve(&self, r: f64) -> [f64; 2] {
        [self.primary.phi(r, 0), self.tilde.phi(r, 0)]
    }
}

/// `W(x)` and its derivative.
pub fn w_eval(pair: &PairedProfiles, x: [f64; 2]) -> MapSample {
    pair.system().sample(x)
}

/// `A_0(x)` as a Cartesian tensor on `4 × 2` gradient matrices.
pub fn a0_tensor(pair: &PairedProfiles, x: [f64; 2]) -> CoefficientTensor {
    tensor_for_families(&pair.families(), x)
}

/// `A_0` in frame coordinates: two copies of the coupled block.
pub fn a0_rotated(pair: &PairedProfiles, r: f64) -> [[f64; 8]; 8] {
    let mut out = [[0.0; 8]; 8];
    for (k, p) in pair.families().iter().enumerate() {
        let b = crate::coefficients::assemble_rotated(p, r);
        for i in 0..4 {
            for j in 0..4 {
                out[4 * k + i][4 * k + j] = b[i][j];
            }
        }
    }
    out
}

/// `(F, H, N)` on `Gamma` at radius `r`, for the primary and tilde family.
pub fn coefficients_on_gamma(pair: &PairedProfiles, r: f64) -> [(f64, f64, f64); 2] {
    pair.families().map(|p| (p.f(r, 0), p.h(r, 0), p.eta(r)))
}

/// Residual study of `W` against `A_0`, refined on both transition windows.
pub fn paired_residual(pair: &PairedProfiles) -> Result<ConvergenceReport> {
    let r0 = pair.primary.params.r0;
    let radii = refined_log_radii(1.0, 10.0 * r0, r0, 4.0 * r0 + 1.0, 64, 4.0);
    let angles: Vec<f64> = (0..16).map(|k| (k as f64 + 0.25) * std::f64::consts::TAU / 16.0).collect();
    residual_convergence(&pair.system(), &radii, &angles, &DEFAULT_STEPS)
}

/// Sampled `Gamma` near `(1, 1)` plus its diagonal tail.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaCurve {
    pub r: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    /// Closed-form tail: the diagonal points `(1 + s, 1 + s)`, `s` in `[-ell, s_max]`.
    pub tail_s_max: f64,
    pub ell: f64,
    /// Smallest distance between samples whose separation along the curve
    /// exceeds `pi/2` times their distance.
    pub branch_gap: f64,
    pub min_curvature_radius: f64,
    /// `min(min_curvature_radius, branch_gap / 2)`.
    pub reach: f64,
    /// `(1 - phi_1(r0)) + (min over the sampled tail of phi_2 - 1)`.
    pub diagonal_gap: f64,
    pub rho: f64,
}

/// Builds the curve and measures the distance between its branches.
pub fn gamma_build(pair: &PairedProfiles, n_samples: usize) -> Result<GammaCurve> {
    if n_samples < MIN_GAMMA_SAMPLES {
        return Err(Error::InvalidParams(format!("gamma needs at least {MIN_GAMMA_SAMPLES} samples")));
    }
    let r0 = pair.primary.params.r0;
    let dbar = square_half_side(r0);
    let r_lo = phi1_inverse(1.0 - 1.5 * dbar);
    let r_hi = 8.0 * r0;
    let r: Vec<f64> = refined_log_radii(r_lo, r_hi, r0, 4.0 * r0 + 1.0, n_samples, 2.0);
    let points: Vec<[f64; 2]> = r.par_iter().map(|&t| pair.curve(t)).collect();
    for w in points.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InjectivityFailure(format!("repeated sample at {:?}", w[0])));
        }
    }
    let tail_s_max = points.last().unwrap()[0] - 1.0;
    let f_max = pair.primary.f_plateau.max(pair.tilde.f_plateau);
    // keeps (1/2 + 4 F s)/(1 + s) above 1/2 - 1/24 on [-ell, 0]
    let ell = 1.0 / (96.0 * f_max);

    // densified copy including the closed-form tail for the gap measurement
    let mut all = points.clone();
    for s in log_grid(1e-3, 1.0, 256).iter().rev() {
        let t = tail_s_max * s;
        all.push([1.0 + t, 1.0 + t]);
    }
    for k in 0..=16 {
        let t = -ell * k as f64 / 16.0;
        all.push([1.0 + t, 1.0 + t]);
    }
    let branch_gap = branch_gap(&all);
    if !(branch_gap > 0.0) || !branch_gap.is_finite() {
        return Err(Error::InjectivityFailure(format!("branch gap {branch_gap:e}")));
    }
    let min_curvature_radius = r
        .par_iter()
        .map(|&t| {
            let c = pair.curve_jet(t);
            let speed = c[0][1].hypot(c[1][1]);
            speed.powi(3) / (c[0][1] * c[1][2] - c[1][1] * c[0][2]).abs()
        })
        .reduce(|| f64::INFINITY, f64::min);
    let reach = min_curvature_radius.min(0.5 * branch_gap);
    let tail_min = log_grid(4.0 * r0 + 1.0, 1e4 * r0, 256).iter().map(|&t| pair.primary.phi(t, 0)).fold(f64::INFINITY, f64::min);
    let diagonal_gap = (1.0 - pair.primary.phi(r0, 0)) + (tail_min - 1.0);
    Ok(GammaCurve { r, points, tail_s_max, ell, branch_gap, min_curvature_radius, reach, diagonal_gap, rho: 0.25 * reach })
}

fn branch_gap(pts: &[[f64; 2]]) -> f64 {
    let mut arc = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        arc[i] = arc[i - 1] + dist(pts[i], pts[i - 1]);
    }
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in i + 1..pts.len() {
                let d = dist(pts[i], pts[j]);
                if arc[j] - arc[i] > std::f64::consts::FRAC_PI_2 * d {
                    best = best.min(d);
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `4 (1 - phi_1(r0))`.
pub fn square_half_side(r0: f64) -> f64 {
    let q = (1.0 + r0 * r0).sqrt();
    // 1 - r/sqrt(1 + r^2) without cancellation
    4.0 / (q * (q + r0))
}

/// `F` as an even function of one state variable.
#[derive(Clone, Debug)]
pub struct FExtension {
    pub plateau: f64,
    /// `phi(start)`: below it `phi = phi_1`.
    pub lower: f64,
    /// `1 - delta` with `delta = 1 - phi(start + 1)`: above it `F` is constant.
    pub cap: f64,
    pub delta: f64,
}

impl FExtension {
    /// Validates that `f` factors through `phi` and builds the extension.
    pub fn new(p: &RadialProfiles) -> Result<Self> {
        let (a, b) = p.f_window();
        let delta = 1.0 - p.phi(b, 0);
        let ext = Self { plateau: p.f_plateau, lower: p.phi(a, 0), cap: 1.0 - delta, delta };
        for k in 1..=200 {
            let (r0, r1) = (a + (k - 1) as f64 / 200.0, a + k as f64 / 200.0);
            if p.phi(r1, 0) <= p.phi(r0, 0) {
                return Err(Error::FactorizationFailure(format!("phi is not increasing on the f window near {r1}")));
            }
        }
        for r in log_grid(1e-2, 10.0 * p.start, 4000) {
            let (a, b) = (ext.value(p, p.phi(r, 0)), p.f(r, 0));
            if (a - b).abs() > 1e-8 * b {
                return Err(Error::FactorizationFailure(format!("F(phi({r})) = {a} but f = {b}")));
            }
        }
        Ok(ext)
    }

    /// Radius on the increasing branch with `phi(r) = s`, for `s < cap`.
    fn radius(&self, p: &RadialProfiles, s: f64) -> f64 {
        let guess = phi1_inverse(s);
        if s <= self.lower {
            return guess;
        }
        let (mut lo, mut hi) = p.f_window();
        let mut r = guess.clamp(lo, hi);
        for _ in 0..100 {
            let j = p.phi_jet(Jet::variable(r));
            let g = j.value() - s;
            if g == 0.0 {
                break;
            }
            if g < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let mut next = r - g / j.deriv(1);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= 4.0 * f64::EPSILON * r {
                return next;
            }
            r = next;
        }
        r
    }

    pub fn value(&self, p: &RadialProfiles, s: f64) -> f64 {
        let s = s.abs();
        if s < self.cap {
            p.f(self.radius(p, s), 0)
        } else {
            self.plateau
        }
    }

    /// `(F(s) - 1/2) / s^2`, smooth at `s = 0`.
    pub fn excess_over_square(&self, p: &RadialProfiles, s: f64) -> f64 {
        let s = s.abs();
        if s <= self.lower {
            // r^2 / s^2 = 1 / (1 - s^2) on phi_1
            p.beta(phi1_inverse(s)) / ((1.0 - s) * (1.0 + s))
        } else {
            (self.value(p, s) - 0.5) / (s * s)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Foot {
    Curve(f64),
    Tail(f64),
}

/// The state-space coefficient functions of both families.
#[derive(Clone, Debug)]
pub struct QuasilinearExample {
    pub pair: PairedProfiles,
    pub gamma: GammaCurve,
    pub f_ext: [FExtension; 2],
    pub delta_bar: f64,
}

impl QuasilinearExample {
    pub fn build(params: &ConstructionParams, n_samples: usize) -> Result<Self> {
        let pair = paired_profiles(params)?;
        let gamma = gamma_build(&pair, n_samples)?;
        let f_ext = [FExtension::new(&pair.primary)?, FExtension::new(&pair.tilde)?];
        let ex = Self { delta_bar: square_half_side(params.r0), pair, gamma, f_ext };
        ex.validate_tube()?;
        Ok(ex)
    }

    /// Every curve point carrying nontrivial `h` or `eta` must sit, with its
    /// tube, where the collar cutoff is one.
    fn validate_tube(&self) -> Result<()> {
        let inner = 0.5 * self.delta_bar - self.gamma.rho;
        for (&r, pt) in self.gamma.r.iter().zip(&self.gamma.points) {
            let nontrivial = self
                .pair
                .families()
                .iter()
                .any(|p| p.eta(r) != 0.0 || p.h(r, 0) != 0.5);
            if nontrivial && ((pt[0] - 1.0).abs() > inner || (pt[1] - 1.0).abs() > inner) {
                return Err(Error::TubeOverlap(format!("curve point at r = {r} leaves the inner square")));
            }
        }
        if self.gamma.tail_s_max + self.gamma.rho > inner {
            return Err(Error::TubeOverlap("diagonal tail leaves the inner square".into()));
        }
        // the continued tail must stay clear of the rest of the curve
        let far = self.gamma.points.iter().zip(&self.gamma.r).filter(|(_, &r)| r < 3.0 * self.pair.primary.start);
        for (p, &r) in far {
            let t = (0.5 * (p[0] + p[1]) - 1.0).clamp(-self.gamma.ell, 0.0);
            if dist(*p, [1.0 + t, 1.0 + t]) < 2.0 * self.gamma.rho {
                return Err(Error::TubeOverlap(format!("continued tail within 2 rho of the curve at r = {r}")));
            }
        }
        Ok(())
    }

    fn collar(&self, x: f64, y: f64) -> f64 {
        bump_half((x - 1.0).abs() / self.delta_bar) * bump_half((y - 1.0).abs() / self.delta_bar)
    }

    /// Nearest point of `Gamma` (or of its continued tail) and the distance to it.
    fn project(&self, s: [f64; 2]) -> (Foot, f64) {
        let g = &self.gamma;
        // closed-form tail
        let t = (0.5 * (s[0] + s[1]) - 1.0).clamp(-g.ell, g.tail_s_max);
        let d_tail = dist(s, [1.0 + t, 1.0 + t]);
        // sampled curve: nearest sample, then safeguarded Newton on (Gamma - s)·Gamma'
        let (k, _) = g
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let n = g.r.len();
        let (mut lo, mut hi) = (g.r[k.saturating_sub(1)], g.r[(k + 1).min(n - 1)]);
        let gfun = |r: f64| {
            let c = self.pair.curve_jet(r);
            let dx = [c[0][0] - s[0], c[1][0] - s[1]];
            let g1 = dx[0] * c[0][1] + dx[1] * c[1][1];
            let g2 = c[0][1] * c[0][1] + c[1][1] * c[1][1] + dx[0] * c[0][2] + dx[1] * c[1][2];
            (g1, g2)
        };
        let (glo, ghi) = (gfun(lo).0, gfun(hi).0);
        let r_star = if glo >= 0.0 {
            lo
        } else if ghi <= 0.0 {
            hi
        } else {
            let mut r = g.r[k];
            for _ in 0..100 {
                let (g1, g2) = gfun(r);
                if g1 == 0.0 {
                    break;
                }
                if g1 < 0.0 {
                    lo = r;
                } else {
                    hi = r;
                }
                let mut next = r - g1 / g2;
                if !(g2 > 0.0) || next <= lo || next >= hi {
                    next = 0.5 * (lo + hi);
                }
                if (next - r).abs() <= 4.0 * f64::EPSILON * r {
                    r = next;
                    break;
                }
                r = next;
            }
            r
        };
        let d_curve = dist(s, self.pair.curve(r_star));
        if d_tail < d_curve {
            (Foot::Tail(t), d_tail)
        } else {
            (Foot::Curve(r_star), d_curve)
        }
    }

    /// `(h, eta)` of family `k` at a foot point.
    fn foot_values(&self, k: usize, foot: Foot) -> (f64, f64) {
        let p = self.pair.families()[k];
        match foot {
            Foot::Curve(r) => (p.h(r, 0), p.eta(r)),
            Foot::Tail(s) => {
                // 1 on [-ell/2, inf), 0 below -ell
                let z = cutoff_xi(-2.0 * s / self.gamma.ell - 1.0, 0);
                let f = p.f_plateau;
                (0.5 + (4.0 * f - 0.5) * s / (1.0 + s) * z, p.eta_tail() * z)
            }
        }
    }

    /// `(H_k, N_k)` at the state `(|p|, |q|) = (x, y)` for both families.
    pub fn h_n(&self, x: f64, y: f64) -> [(f64, f64); 2] {
        let c = self.collar(x, y);
        if c == 0.0 {
            return [(0.5, 0.0); 2];
        }
        let (foot, d) = self.project([x, y]);
        let w = c * bump_half(d / self.gamma.rho);
        if w == 0.0 {
            return [(0.5, 0.0); 2];
        }
        let mut out = [(0.5, 0.0); 2];
        for (k, o) in out.iter_mut().enumerate() {
            let (h, eta) = self.foot_values(k, foot);
            *o = (0.5 + w * (h - 0.5), w * eta);
        }
        out
    }

    pub fn f_value(&self, k: usize, s: f64) -> f64 {
        self.f_ext[k].value(self.pair.families()[k], s)
    }

    /// `A(p, q)` on `4 × 2` gradient matrices: the first pair is oriented by
    /// `p`, the second by `q`.
    pub fn a_of_state(&self, p: [f64; 2], q: [f64; 2]) -> CoefficientTensor {
        let (x, y) = (p[0].hypot(p[1]), q[0].hypot(q[1]));
        let hn = self.h_n(x, y);
        let mut t = CoefficientTensor::zeros(4);
        for (k, v) in [p, q].iter().enumerate() {
            let s = v[0].hypot(v[1]);
            let a = self.f_ext[k].excess_over_square(self.pair.families()[k], s);
            let b = if hn[k].0 == 0.5 { 0.0 } else { (hn[k].0 - 0.5) / (s * s) };
            let perp = [-v[1], v[0]];
            let off = a * v[0] * v[1] + b * perp[0] * perp[1];
            let m: Mat2 = [
                [0.5 + a * v[0] * v[0] + b * perp[0] * perp[0], off],
                [off, 0.5 + a * v[1] * v[1] + b * perp[1] * perp[1]],
            ];
            t.set_pair(k, m, hn[k].1);
        }
        t
    }

    /// `A(W(x))`.
    pub fn a_of_w(&self, x: [f64; 2]) -> CoefficientTensor {
        let w = w_eval(&self.pair, x);
        self.a_of_state([w.u[0], w.u[1]], [w.u[2], w.u[3]])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub points: usize,
    /// `max ||A(W(x)) - A_0(x)||` (operator norm).
    pub max_gap: f64,
    /// `max ||A(W(x)) - A_0(x)|| / ||A_0(x)||`.
    pub max_relative_gap: f64,
    pub worst_radius: f64,
    /// `max gap / (1e-8 + allowance)`; at most one when the check passes.
    pub gap_ratio: f64,
    /// `max |F(phi) - f|`, both families.
    pub f_roundtrip: f64,
    pub f_roundtrip_relative: f64,
    /// `max |H(phi, phi~) - h|`, both families.
    pub h_roundtrip: f64,
    /// `max |N(phi, phi~) - eta|`, both families.
    pub n_roundtrip: f64,
    /// `max error / (1e-8 + allowance)` over the three round trips.
    pub roundtrip_ratio: f64,
    pub branch_gap: f64,
    pub reach: f64,
    pub rho: f64,
    pub delta_bar: f64,
    pub state_lambda_min: f64,
    pub state_samples: usize,
    /// `sup |N| / log r0` over the sampled states and the curve.
    pub n_over_log: f64,
}

pub const CONSISTENCY_BOUND: f64 = 1e-8;

/// Unavoidable error from rounding the state `(phi(r), phi~(r))`.
///
/// The state pins `r` down only to about `u / |Gamma'(r)|`, so a value `v(r)`
/// read back from it is uncertain by `u |v'| / |Gamma'|` whatever the
/// extension. Entries are `[F, H, N]` per family.
pub fn rounding_allowance(pair: &PairedProfiles, r: f64) -> [[f64; 3]; 2] {
    let u = 4.0 * f64::EPSILON;
    let c = pair.curve_jet(r);
    let speed = c[0][1].hypot(c[1][1]);
    let mut out = [[0.0; 3]; 2];
    for (k, p) in pair.families().iter().enumerate() {
        let df = p.f(r, 1).abs();
        let dphi = c[k][1].abs();
        out[k][0] = if df == 0.0 { 0.0 } else { u * df / dphi };
        if speed > 0.0 {
            out[k][1] = u * p.h(r, 1).abs() / speed;
            out[k][2] = u * p.eta_deriv(r, 1).abs() / speed;
        }
    }
    out
}
pub const ROUNDTRIP_BOUND: f64 = 1e-8;
pub const STATE_MARGIN: f64 = 0.25;

/// Radii used for the consistency and round-trip checks.
pub fn consistency_radii(r0: f64, n: usize) -> Vec<f64> {
    refined_log_radii(1e-3, 10.0 * r0, 0.5 * r0, 4.0 * r0 + 1.0, n, 4.0)
}

/// Random states: half spread over a box, half concentrated on the square.
pub fn random_states(ex: &QuasilinearExample, n: usize, seed: u64) -> Vec<([f64; 2], [f64; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (x, y) = if i % 2 == 0 {
                (rng.gen::<f64>() * 1.6, rng.gen::<f64>() * 1.6)
            } else {
                let d = ex.delta_bar;
                (1.0 + d * (2.4 * rng.gen::<f64>() - 1.2), 1.0 + d * (2.4 * rng.gen::<f64>() - 1.2))
            };
            let (a, b) = (rng.gen::<f64>() * std::f64::consts::TAU, rng.gen::<f64>() * std::f64::consts::TAU);
            ([x * a.cos(), x * a.sin()], [y * b.cos(), y * b.sin()])
        })
        .collect()
}

pub fn consistency_check(ex: &QuasilinearExample, radii: &[f64], n_angles: usize, n_states: usize, seed: u64) -> ConsistencyReport {
    let angles: Vec<f64> = (0..n_angles).map(|k| (k as f64 + 0.5) * std::f64::consts::TAU / n_angles as f64).collect();
    let gaps: Vec<(f64, f64, f64, f64)> = radii
        .par_iter()
        .map(|&r| {
            let allow: f64 = rounding_allowance(&ex.pair, r).iter().flatten().sum();
            let mut worst = (0.0f64, 0.0f64, 0.0f64, r);
            for &t in &angles {
                let x = [r * t.cos(), r * t.sin()];
                let a0 = a0_tensor(&ex.pair, x);
                let a = ex.a_of_w(x);
                let g = a.norm_diff(&a0);
                let n0 = a0.eigen_range().1.abs();
                worst.0 = worst.0.max(g);
                worst.1 = worst.1.max(g / n0);
                worst.2 = worst.2.max(g / (CONSISTENCY_BOUND + allow + 16.0 * f64::EPSILON * n0));
            }
            worst
        })
        .collect();
    let (mut max_gap, mut max_rel, mut gap_ratio, mut worst_radius) = (0.0f64, 0.0f64, 0.0f64, 0.0);
    for (g, rel, ratio, r) in gaps {
        if g > max_gap {
            max_gap = g;
            worst_radius = r;
        }
        max_rel = max_rel.max(rel);
        gap_ratio = gap_ratio.max(ratio);
    }
    let fam = ex.pair.families();
    // [F abs, F rel, H, N, ratio, sup |N|]
    let trips: Vec<[f64; 6]> = radii
        .par_iter()
        .map(|&r| {
            let (x, y) = (fam[0].phi(r, 0), fam[1].phi(r, 0));
            let hn = ex.h_n(x, y);
            let allow = rounding_allowance(&ex.pair, r);
            let mut out = [0.0f64; 6];
            for k in 0..2 {
                let f = fam[k].f(r, 0);
                let err = [
                    (ex.f_value(k, [x, y][k]) - f).abs(),
                    (hn[k].0 - fam[k].h(r, 0)).abs(),
                    (hn[k].1 - fam[k].eta(r)).abs(),
                ];
                out[0] = out[0].max(err[0]);
                out[1] = out[1].max(err[0] / f);
                out[2] = out[2].max(err[1]);
                out[3] = out[3].max(err[2]);
                for j in 0..3 {
                    out[4] = out[4].max(err[j] / (ROUNDTRIP_BOUND + allow[k][j]));
                }
                out[5] = out[5].max(hn[k].1.abs());
            }
            out
        })
        .collect();
    let col = |j: usize| trips.iter().map(|t| t[j]).fold(0.0, f64::max);
    let mut n_sup = col(5);

    let states = random_states(ex, n_states, seed);
    let per_state: Vec<(f64, f64)> = states
        .par_iter()
        .map(|&(p, q)| {
            let t = ex.a_of_state(p, q);
            let hn = ex.h_n(p[0].hypot(p[1]), q[0].hypot(q[1]));
            (t.eigen_range().0, hn[0].1.abs().max(hn[1].1.abs()))
        })
        .collect();
    let state_lambda_min = per_state.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    n_sup = per_state.iter().map(|v| v.1).fold(n_sup, f64::max);
    ConsistencyReport {
        points: radii.len() * n_angles,
        max_gap,
        max_relative_gap: max_rel,
        gap_ratio,
        worst_radius,
        f_roundtrip: col(0),
        f_roundtrip_relative: col(1),
        h_roundtrip: col(2),
        n_roundtrip: col(3),
        roundtrip_ratio: col(4),
        branch_gap: ex.gamma.branch_gap,
        reach: ex.gamma.reach,
        rho: ex.gamma.rho,
        delta_bar: ex.delta_bar,
        state_lambda_min,
        state_samples: n_states,
        n_over_log: n_sup / ex.pair.primary.params.r0.ln(),
    }
}

impl ConsistencyReport {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("quasilinear_consistency");
        s.push(
            Check::at_most("gap_ratio", self.gap_ratio, 1.0)
                .with_note(format!("max gap {:.3e} at r = {:.6}, relative {:.3e}", self.max_gap, self.worst_radius, self.max_relative_gap)),
        );
        s.push(Check::at_most("roundtrip_ratio", self.roundtrip_ratio, 1.0).with_note(format!(
            "F {:.3e} (relative {:.3e}), H {:.3e}, N {:.3e}",
            self.f_roundtrip, self.f_roundtrip_relative, self.h_roundtrip, self.n_roundtrip
        )));
        s.push(Check::flag("injective", self.branch_gap > 0.0, self.branch_gap));
        s.push(Check::at_least("state_lambda_min", self.state_lambda_min, STATE_MARGIN));
        s.push(Check::flag("n_over_log", self.n_over_log.is_finite(), self.n_over_log));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(r0: f64) -> QuasilinearExample {
        QuasilinearExample::build(&ConstructionParams::quasilinear(r0).unwrap(), DEFAULT_GAMMA_SAMPLES).unwrap()
    }

    #[test]
    fn paired_profile_regions() {
        let pair = paired_profiles(&ConstructionParams::quasilinear(100.0).unwrap()).unwrap();
        let phi1 = |r: f64| r / (1.0 + r * r).sqrt();
        let phi2 = |r: f64| 1.0 + 0.5 / (r * r);
        assert_eq!(pair.curve(50.0), [phi1(50.0), phi1(50.0)]);
        let c = pair.curve(250.0);
        assert!((c[0] - phi2(250.0)).abs() < 1e-15 && (c[1] - phi1(250.0)).abs() < 1e-15);
        let c = pair.curve(500.0);
        assert!((c[0] - phi2(500.0)).abs() < 1e-15 && c[0] == c[1]);
        assert!(paired_profiles(&ConstructionParams::unbounded(100.0).unwrap()).is_err());
    }

    #[test]
    fn w_and_a0_basics() {
        let pair = paired_profiles(&ConstructionParams::quasilinear(100.0).unwrap()).unwrap();
        let w = w_eval(&pair, [0.0, 0.0]);
        assert!(w.u.iter().all(|&v| v == 0.0));
        let w = w_eval(&pair, [20.0, 0.0]);
        let p1 = 20.0 / 401f64.sqrt();
        assert!((w.u[0] - p1).abs() < 1e-15 && w.u[1] == 0.0 && (w.u[2] - p1).abs() < 1e-15 && w.u[3] == 0.0);
        let m = a0_rotated(&pair, 50.0);
        let d = [m[0][0], m[1][1], m[4][4], m[5][5]];
        assert_eq!(d, [pair.primary.f(50.0, 0), 0.5, pair.tilde.f(50.0, 0), 0.5]);
        let a = a0_tensor(&pair, [130.0, -40.0]);
        assert_eq!(a.max_asymmetry(), 0.0);
    }

    #[test]
    fn gamma_geometry() {
        let ex = example(100.0);
        let g = &ex.gamma;
        for (&r, p) in g.r.iter().zip(&g.points) {
            if r <= 100.0 {
                assert!(p[0] == p[1] && p[0] < 1.0);
            }
            if r > 200.0 && r < 300.0 {
                assert!(p[1] < p[0]);
            }
        }
        assert!(g.branch_gap > 0.0 && g.branch_gap < 1e-3);
        assert!(g.diagonal_gap > 0.0 && g.diagonal_gap * 1e4 < 10.0);
    }

    #[test]
    fn f_extension_properties() {
        let ex = example(100.0);
        assert_eq!(ex.f_value(0, 0.0), 0.5);
        assert_eq!(ex.f_value(0, 1.0), ex.pair.primary.f_plateau);
        assert_eq!(ex.f_value(0, 1.3), ex.pair.primary.f_plateau);
        assert_eq!(ex.f_value(0, -0.7), ex.f_value(0, 0.7));
        assert!((ex.f_ext[0].excess_over_square(&ex.pair.primary, 0.0) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn extensions_trivial_outside_square() {
        let ex = example(100.0);
        assert_eq!(ex.h_n(0.5, 0.5), [(0.5, 0.0); 2]);
        let d = ex.delta_bar;
        assert_eq!(ex.h_n(1.0 + 1.01 * d, 1.0), [(0.5, 0.0); 2]);
        let t = ex.a_of_state([0.0; 2], [0.0; 2]);
        let mut id = CoefficientTensor::zeros(4);
        for k in 0..8 {
            id.a[k * 8 + k] = 0.5;
        }
        assert_eq!(t, id);
    }

    #[test]
    fn radial_eigenvalue_beyond_unit_state() {
        let ex = example(100.0);
        let p = [1.2 * 0.6, 1.2 * 0.8];
        let t = ex.a_of_state(p, [0.1, 0.0]);
        let g = [[0.6, 0.8], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        assert!((t.quadratic_form(&g) - ex.pair.primary.f_plateau).abs() < 1e-9);
    }

    #[test]
    fn paired_residual_second_order() {
        let pair = paired_profiles(&ConstructionParams::quasilinear(100.0).unwrap()).unwrap();
        let rep = paired_residual(&pair).unwrap();
        assert!(rep.to_section().passed, "{rep:#?}");
        assert!(rep.order > 1.9 && rep.decoupled_probe < 1e-8);
    }

    #[test]
    fn values_on_gamma() {
        let pair = paired_profiles(&ConstructionParams::quasilinear(100.0).unwrap()).unwrap();
        let c = coefficients_on_gamma(&pair, 50.0);
        assert_eq!((c[0].1, c[0].2, c[1].1, c[1].2), (0.5, 0.0, 0.5, 0.0));
        let (a, b) = (coefficients_on_gamma(&pair, 250.0)[0], coefficients_on_gamma(&pair, 900.0)[0]);
        assert_eq!(a.2, pair.primary.eta_tail());
        assert_eq!(b.2, pair.primary.eta_tail());
        let f = pair.primary.f_plateau;
        let x = pair.primary.phi(900.0, 0);
        assert!((b.1 - (4.0 * f - (4.0 * f - 0.5) / x)).abs() < 1e-9 * b.1);
    }

    fn second_difference(g: &dyn Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (g(t + h) - 2.0 * g(t) + g(t - h)) / (h * h)
    }

    /// Second and first differences agree under halving `h`, up to the
    /// effect of `rel_noise` relative rounding in the values.
    fn converges(g: &dyn Fn(f64) -> f64, t: f64, h: f64, rel_noise: f64) -> bool {
        let (a, b) = (second_difference(g, t, h), second_difference(g, t, 0.5 * h));
        let (c, d) = ((g(t + h) - g(t - h)) / (2.0 * h), (g(t + 0.5 * h) - g(t - 0.5 * h)) / h);
        let noise = rel_noise * (1.0 + g(t).abs());
        a.is_finite()
            && (a - b).abs() <= 0.05 * a.abs().max(b.abs()) + 16.0 * noise / (h * h)
            && (c - d).abs() <= 0.05 * c.abs().max(d.abs()) + 4.0 * noise / h
    }

    #[test]
    fn smoothness_proxy_across_the_tube() {
        let ex = example(10.0);
        let rho = ex.gamma.rho;
        for r in [13.0, 16.0, 25.0, 35.0] {
            let c = ex.pair.curve_jet(r);
            let n = [-c[1][1], c[0][1]];
            let len = n[0].hypot(n[1]);
            let base = ex.pair.curve(r);
            // the cutoff argument d / rho carries rounding u / rho
            let noise = 8.0 * f64::EPSILON / rho;
            for k in 0..2 {
                let line = |t: f64| ex.h_n(base[0] + t * n[0] / len, base[1] + t * n[1] / len)[k];
                for off in [0.3, 0.65, 0.75, 0.9, 1.1] {
                    assert!(converges(&|t| line(t).1, off * rho, rho / 100.0, noise), "N_{k} at r = {r}, offset {off}");
                    assert!(converges(&|t| line(t).0, off * rho, rho / 100.0, noise), "H_{k} at r = {r}, offset {off}");
                }
            }
        }
    }

    #[test]
    fn smoothness_proxy_for_f_and_origin() {
        let ex = example(10.0);
        let p = &ex.pair.primary;
        let cap = ex.f_ext[0].cap;
        for s in [0.0, 0.3, ex.f_ext[0].lower, 0.5 * (ex.f_ext[0].lower + cap), cap] {
            assert!(converges(&|t| ex.f_value(0, t), s, 1e-4 * (1.0 - s).max(1e-3), 1e-13), "F at {s}");
        }
        assert!((ex.f_ext[0].excess_over_square(p, 1e-9) - 5.0 / 6.0).abs() < 1e-12);
        for (i, j) in [(0, 0), (0, 1), (1, 1), (2, 4), (6, 6)] {
            let g = |t: f64| ex.a_of_state([t, 0.3 * t], [0.2 * t, -t]).a[i * 8 + j];
            assert!(converges(&g, 0.0, 1e-3, 1e-13), "entry ({i}, {j}) across p = 0");
        }
    }

    #[test]
    fn trivial_outside_square_random() {
        let ex = example(100.0);
        let d = ex.delta_bar;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let (x, y) = (rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0);
            if (x - 1.0).abs().max((y - 1.0).abs()) > d {
                assert_eq!(ex.h_n(x, y), [(0.5, 0.0); 2]);
            }
        }
    }

    #[test]
    fn consistency_and_roundtrips() {
        let ex = example(100.0);
        let radii = consistency_radii(100.0, 512);
        let rep = consistency_check(&ex, &radii, 4, 2000, 5);
        assert!(rep.gap_ratio <= 1.0 && rep.max_relative_gap <= 1e-8, "{rep:#?}");
        assert!(rep.roundtrip_ratio <= 1.0 && rep.f_roundtrip_relative <= 1e-10, "{rep:#?}");
        assert!(rep.state_lambda_min > 0.25, "{rep:#?}");
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn shared() -> &'static QuasilinearExample {
        static EX: OnceLock<QuasilinearExample> = OnceLock::new();
        EX.get_or_init(|| QuasilinearExample::build(&ConstructionParams::quasilinear(10.0).unwrap(), MIN_GAMMA_SAMPLES).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn state_tensor_symmetric_and_elliptic(x in 0.0f64..1.5, y in 0.0f64..1.5, a in 0.0f64..6.3, b in 0.0f64..6.3) {
            let ex = shared();
            let t = ex.a_of_state([x * a.cos(), x * a.sin()], [y * b.cos(), y * b.sin()]);
            prop_assert!(t.max_asymmetry() <= 1e-12 * t.eigen_range().1);
            prop_assert!(t.eigen_range().0 > STATE_MARGIN);
        }

        #[test]
        fn near_square_states_elliptic(u in -1.2f64..1.2, v in -1.2f64..1.2, a in 0.0f64..6.3) {
            let ex = shared();
            let (x, y) = (1.0 + u * ex.delta_bar, 1.0 + v * ex.delta_bar);
            let t = ex.a_of_state([x * a.cos(), x * a.sin()], [0.0, y]);
            prop_assert!(t.eigen_range().0 > STATE_MARGIN);
            let hn = ex.h_n(x, y);
            prop_assert!(hn[0].0 >= 1.0 / 3.0 && hn[1].0 >= 1.0 / 3.0);
        }

        #[test]
        fn f_extension_even_and_bounded(s in -2.0f64..2.0) {
            let ex = shared();
            let v = ex.f_value(0, s);
            prop_assert_eq!(v, ex.f_value(0, -s));
            let p = &ex.pair.primary;
            prop_assert!(v >= 0.5 && v <= p.f0_jet(Jet::constant(p.start + 1.0)).value());
        }

        #[test]
        fn state_tensor_rotation_equivariant(x in 0.0f64..1.2, y in 0.0f64..1.2, a in 0.0f64..6.3) {
            // rotating both state vectors rotates each pair block
            let ex = shared();
            let t0 = ex.a_of_state([x, 0.0], [0.0, y]);
            let t1 = ex.a_of_state([x * a.cos(), x * a.sin()], [-y * a.sin(), y * a.cos()]);
            let (c, s) = (a.cos(), a.sin());
            let g = [[0.3, -0.2], [0.7, 0.1], [-0.4, 0.5], [0.2, 0.9]];
            let rot = g.map(|row| [c * row[0] - s * row[1], s * row[0] + c * row[1]]);
            let rotv = [[c * rot[0][0] - s * rot[1][0], c * rot[0][1] - s * rot[1][1]],
                        [s * rot[0][0] + c * rot[1][0], s * rot[0][1] + c * rot[1][1]],
                        [c * rot[2][0] - s * rot[3][0], c * rot[2][1] - s * rot[3][1]],
                        [s * rot[2][0] + c * rot[3][0], s * rot[2][1] + c * rot[3][1]]];
            let (q0, q1) = (t0.quadratic_form(&g), t1.quadratic_form(&rotv));
            prop_assert!((q0 - q1).abs() <= 1e-9 * q0.abs().max(1.0));
        }
    }
}
