//! The parabolic problem `u_t = div(a Du)` behind the stationary examples.
//!
//! `u(x, t) = (-t)^{-eps/2} U(x/sqrt(-t))` and `a(x, t) = A(x/sqrt(-t))`. The
//! evaluators below are checked against the parabolic equation directly, and
//! two forward solvers evolve the exact initial data towards `t = 0`.

pub mod cartesian;
pub mod grid;
pub mod metrics;
pub mod radial;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{tensor_cartesian, CoefficientTensor};
use crate::error::{Error, Result};
use crate::params::{ConstructionParams, Variant};
use crate::profiles::RadialProfiles;
use crate::quasilinear::{w_eval, QuasilinearExample, DEFAULT_GAMMA_SAMPLES};
use crate::report::{linear_fit, Check, Section};
use crate::verify::{u_eval, MapSample};

pub use cartesian::solve_cartesian_2d;
pub use metrics::{blowup_metrics, BlowupReport};
pub use radial::solve_radial;

/// Where the stationary pair `(U, A)` comes from.
#[derive(Clone, Debug)]
pub enum ProfileSource {
    /// `U = phi nu` with the linear coefficients `A(x)`.
    Linear(Box<RadialProfiles>),
    /// `W = (phi nu, phi~ nu)` with `A` read off the state, `A(W(x))`.
    Quasilinear(Box<QuasilinearExample>),
}

#[derive(Clone, Debug)]
pub struct SelfSimilarSolution {
    pub params: ConstructionParams,
    pub source: ProfileSource,
}

/// `sqrt(-t)`, or `TimeDomain` outside `t < 0`.
pub fn parabolic_scale(t: f64) -> Result<f64> {
    if t < 0.0 && t.is_finite() {
        Ok((-t).sqrt())
    } else {
        Err(Error::TimeDomain(t))
    }
}

impl SelfSimilarSolution {
    /// Linear source for the bounded and unbounded variants, state-dependent
    /// coefficients for the quasilinear one.
    pub fn new(params: &ConstructionParams) -> Result<Self> {
        match params.variant {
            Variant::Quasilinear => Self::quasilinear(params, DEFAULT_GAMMA_SAMPLES),
            Variant::Bounded | Variant::Unbounded => Self::linear(params),
        }
    }

    pub fn linear(params: &ConstructionParams) -> Result<Self> {
        if params.variant == Variant::Quasilinear {
            return Err(Error::InvalidParams("the linear source needs the bounded or unbounded variant".into()));
        }
        let p = RadialProfiles::new(params)?;
        Ok(Self { params: *params, source: ProfileSource::Linear(Box::new(p)) })
    }

    pub fn quasilinear(params: &ConstructionParams, n_samples: usize) -> Result<Self> {
        let ex = QuasilinearExample::build(params, n_samples)?;
        Ok(Self { params: *params, source: ProfileSource::Quasilinear(Box::new(ex)) })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.source, ProfileSource::Linear(_))
    }

    /// The first (or only) profile family.
    pub fn profiles(&self) -> &RadialProfiles {
        match &self.source {
            ProfileSource::Linear(p) => p,
            ProfileSource::Quasilinear(ex) => &ex.pair.primary,
        }
    }

    pub fn components(&self) -> usize {
        match self.source {
            ProfileSource::Linear(_) => 2,
            ProfileSource::Quasilinear(_) => 4,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.profiles().epsilon
    }

    /// `U(y)`, `DU(y)` of the stationary problem.
    pub fn stationary(&self, y: [f64; 2]) -> MapSample {
        match &self.source {
            ProfileSource::Linear(p) => u_eval(p, y),
            ProfileSource::Quasilinear(ex) => w_eval(&ex.pair, y),
        }
    }

    /// `A(y)`; for the quasilinear source this is `A` of the state `W(y)`.
    pub fn stationary_tensor(&self, y: [f64; 2]) -> CoefficientTensor {
        match &self.source {
            ProfileSource::Linear(p) => tensor_cartesian(p, y),
            ProfileSource::Quasilinear(ex) => ex.a_of_w(y),
        }
    }

    pub fn u(&self, x: [f64; 2], t: f64) -> Result<Vec<f64>> {
        let s = parabolic_scale(t)?;
        let amp = s.powf(-self.epsilon());
        Ok(self.stationary([x[0] / s, x[1] / s]).u.into_iter().map(|v| amp * v).collect())
    }

    pub fn du(&self, x: [f64; 2], t: f64) -> Result<Vec<[f64; 2]>> {
        let s = parabolic_scale(t)?;
        let amp = s.powf(-self.epsilon()) / s;
        Ok(self.stationary([x[0] / s, x[1] / s]).du.into_iter().map(|r| [amp * r[0], amp * r[1]]).collect())
    }

    pub fn a(&self, x: [f64; 2], t: f64) -> Result<CoefficientTensor> {
        let s = parabolic_scale(t)?;
        Ok(self.stationary_tensor([x[0] / s, x[1] / s]))
    }

    /// Radial amplitude `psi(r, t)` of the first family, `u = psi nu`.
    pub fn psi(&self, r: f64, t: f64) -> Result<f64> {
        let s = parabolic_scale(t)?;
        Ok(s.powf(-self.epsilon()) * self.profiles().phi(r / s, 0))
    }

    fn flux(&self, x: [f64; 2], t: f64) -> Result<Vec<[f64; 2]>> {
        let s = parabolic_scale(t)?;
        let y = [x[0] / s, x[1] / s];
        let amp = s.powf(-self.epsilon()) / s;
        let du: Vec<[f64; 2]> = self.stationary(y).du.into_iter().map(|r| [amp * r[0], amp * r[1]]).collect();
        Ok(self.stationary_tensor(y).apply(&du))
    }
}

pub fn selfsim_u(sol: &SelfSimilarSolution, x: [f64; 2], t: f64) -> Result<Vec<f64>> {
    sol.u(x, t)
}

pub fn selfsim_a(sol: &SelfSimilarSolution, x: [f64; 2], t: f64) -> Result<CoefficientTensor> {
    sol.a(x, t)
}

/// `u_t - div(a(., t) Du(., t))` at `(x, t)`: central differences in `t` of
/// `u` and in `x` of the analytic flux.
pub fn parabolic_residual(
    sol: &SelfSimilarSolution,
    x: [f64; 2],
    t: f64,
    step_x: f64,
    step_t: f64,
) -> Result<Vec<f64>> {
    parabolic_scale(t)?;
    parabolic_scale(t + step_t)?;
    if x[0].hypot(x[1]) <= 2.0 * step_x {
        return Err(Error::OriginFrame);
    }
    let up = sol.u(x, t + step_t)?;
    let um = sol.u(x, t - step_t)?;
    let fxp = sol.flux([x[0] + step_x, x[1]], t)?;
    let fxm = sol.flux([x[0] - step_x, x[1]], t)?;
    let fyp = sol.flux([x[0], x[1] + step_x], t)?;
    let fym = sol.flux([x[0], x[1] - step_x], t)?;
    Ok((0..sol.components())
        .map(|a| {
            let ut = (up[a] - um[a]) / (2.0 * step_t);
            let div = (fxp[a][0] - fxm[a][0] + fyp[a][1] - fym[a][1]) / (2.0 * step_x);
            ut - div
        })
        .collect())
}

pub const PARABOLIC_KAPPAS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
pub const PARABOLIC_ORDER_BOUND: f64 = 1.9;

/// A random spacetime point with `-t` log-uniform in `[0.01, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub x: [f64; 2],
    pub t: f64,
}

/// `n` points with `|x|/sqrt(-t)` log-uniform in `[0.05, y_max]`.
pub fn spacetime_points(n: usize, y_max: f64, seed: u64) -> Vec<SpacetimePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = -(10f64).powf(rng.gen_range(-2.0..0.0));
            let y = rng.gen_range(0.05f64.ln()..y_max.ln()).exp();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = (-t).sqrt();
            SpacetimePoint { x: [s * y * th.cos(), s * y * th.sin()], t }
        })
        .collect()
}

/// Stencil steps at relative size `kappa`: `kappa sqrt(-t)` in space and
/// `kappa (-t) / max(1, |y|)` in time, the time it takes a feature of unit
/// width in `y` to move past a fixed `x`.
pub fn parabolic_steps(p: &SpacetimePoint, kappa: f64) -> (f64, f64) {
    let s = (-p.t).sqrt();
    let y = p.x[0].hypot(p.x[1]) / s;
    (kappa * s, kappa * (-p.t) / y.max(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicReport {
    pub source: String,
    pub r0: f64,
    pub points: usize,
    pub kappas: Vec<f64>,
    pub max_residual: Vec<f64>,
    /// The same maxima with each residual multiplied by `-t`, which removes
    /// the `1/(-t)` growth of the parabolic scaling.
    pub max_scaled_residual: Vec<f64>,
    pub order: f64,
    pub scaled_order: f64,
}

fn fit_order(steps: &[f64], maxima: &[f64]) -> f64 {
    let lx: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = maxima.iter().map(|s| s.max(1e-300).ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Residual maxima over `points` at each `kappa`, with fitted orders.
pub fn parabolic_convergence(
    sol: &SelfSimilarSolution,
    points: &[SpacetimePoint],
    kappas: &[f64],
) -> Result<ParabolicReport> {
    let mut max_residual = Vec::new();
    let mut max_scaled_residual = Vec::new();
    for &k in kappas {
        let norms = points
            .par_iter()
            .map(|p| {
                let (hx, ht) = parabolic_steps(p, k);
                let r = parabolic_residual(sol, p.x, p.t, hx, ht)?;
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                Ok((n, n * (-p.t)))
            })
            .collect::<Result<Vec<_>>>()?;
        max_residual.push(norms.iter().map(|v| v.0).fold(0.0, f64::max));
        max_scaled_residual.push(norms.iter().map(|v| v.1).fold(0.0, f64::max));
    }
    Ok(ParabolicReport {
        source: if sol.is_linear() { "linear" } else { "quasilinear" }.into(),
        r0: sol.params.r0,
        points: points.len(),
        kappas: kappas.to_vec(),
        order: fit_order(kappas, &max_residual),
        scaled_order: fit_order(kappas, &max_scaled_residual),
        max_residual,
        max_scaled_residual,
    })
}

impl ParabolicReport {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new(format!("parabolic_residual_{}", self.source));
        s.push(Check::at_least("order", self.order, PARABOLIC_ORDER_BOUND));
        s.push(Check::flag("scaled_order", true, self.scaled_order));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Radial,
    Cart2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialData {
    /// The self-similar solution at `t_start`, with its exact trace.
    Exact,
    /// Zero data and zero boundary values.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub t_start: f64,
    pub t_end: f64,
    /// Radial cells.
    pub n_r: usize,
    /// Physical radius of the radial domain at `t_start`. The default keeps
    /// `B_1` inside the domain up to `t_end`.
    pub domain_radius: Option<f64>,
    pub n_x: usize,
    pub n_y: usize,
    /// Half side of the Cartesian square at `t_start`.
    pub half_width: f64,
    /// Time levels per decade of `-t`.
    pub steps_per_decade: usize,
    pub snapshots: usize,
    pub initial: InitialData,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Radial,
            t_start: -1.0,
            t_end: -1e-2,
            n_r: 4096,
            domain_radius: None,
            n_x: 256,
            n_y: 256,
            half_width: 3.0,
            steps_per_decade: 400,
            snapshots: 9,
            initial: InitialData::Exact,
        }
    }
}

impl SolverConfig {
    pub fn radial(t_start: f64, t_end: f64, n_r: usize) -> Self {
        Self { t_start, t_end, n_r, ..Self::default() }
    }

    pub fn cart2d(t_start: f64, t_end: f64, n: usize) -> Self {
        Self { mode: SolverMode::Cart2d, t_start, t_end, n_x: n, n_y: n, steps_per_decade: 100, ..Self::default() }
    }

    /// Physical radius of the radial domain at `t_start`.
    pub fn radial_domain(&self, r0: f64) -> f64 {
        let (s0, s1) = ((-self.t_start).sqrt(), (-self.t_end).sqrt());
        self.domain_radius.unwrap_or(s0 * (5.0 * r0).max(2.0 / s1))
    }

    pub fn validate(&self, r0: f64) -> Result<()> {
        parabolic_scale(self.t_end)?;
        parabolic_scale(self.t_start)?;
        if !(self.t_start < self.t_end) {
            return Err(Error::InvalidParams(format!(
                "t_start = {} must precede t_end = {}",
                self.t_start, self.t_end
            )));
        }
        if self.steps_per_decade == 0 || self.snapshots < 2 {
            return Err(Error::InvalidParams("need steps_per_decade >= 1 and snapshots >= 2".into()));
        }
        match self.mode {
            SolverMode::Radial => {
                if self.n_r < 16 {
                    return Err(Error::InvalidParams(format!("n_r = {} below 16", self.n_r)));
                }
                let need = 5.0 * r0 * (-self.t_start).sqrt();
                let l = self.radial_domain(r0);
                if !(l >= need) {
                    return Err(Error::InvalidParams(format!("domain radius {l} below 5 r0 sqrt(-t_start) = {need}")));
                }
            }
            SolverMode::Cart2d => {
                if self.n_x < 8 || self.n_y < 8 || !(self.half_width > 0.0) {
                    return Err(Error::InvalidParams("Cartesian grid needs n_x, n_y >= 8 and half_width > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Time levels with uniform steps in `log(-t)`, ending exactly at `t_end`.
    pub fn time_levels(&self) -> Vec<f64> {
        let decades = (self.t_start / self.t_end).log10();
        let n = ((self.steps_per_decade as f64 * decades).ceil() as usize).max(2);
        let mut t: Vec<f64> = (0..=n).map(|k| self.t_start * 10f64.powf(-decades * k as f64 / n as f64)).collect();
        t[n] = self.t_end;
        t
    }

    /// Indices into `time_levels` at which snapshots are kept.
    pub fn snapshot_indices(&self, levels: usize) -> Vec<usize> {
        let last = levels - 1;
        let k = self.snapshots.min(levels);
        let mut idx: Vec<usize> = (0..k).map(|i| (i * last + (k - 1) / 2) / (k - 1)).collect();
        idx.dedup();
        idx
    }
}

/// One time level of a trajectory, measured on `B_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub sup_b1: f64,
    pub lip_b1: f64,
    /// Diameter of `u(B_sqrt(-t), t)`.
    pub osc_parabolic: f64,
    pub rel_error: f64,
}

/// Radial amplitude `psi(r)` at one time. For the Cartesian solver this is
/// the mode-1 projection on circles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub r: Vec<f64>,
    pub value: Vec<f64>,
    pub exact: Vec<f64>,
}

/// Cartesian run against the radial solver at the final time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub t: f64,
    pub r: Vec<f64>,
    pub mode1: Vec<f64>,
    pub radial: Vec<f64>,
    /// `max |mode1 - radial| / max |radial|`.
    pub agreement: f64,
    /// Share of the angular energy outside mode 1.
    pub leakage: f64,
    /// Final-time relative error of the Cartesian run against the exact solution.
    pub exact_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: SolverMode,
    pub variant: Variant,
    pub r0: f64,
    pub epsilon: f64,
    pub initial: InitialData,
    pub steps: usize,
    pub nodes: usize,
    /// `y` at which the exact profile peaks; `B_1` contains it once
    /// `sqrt(-t) <= 1/profile_peak`.
    pub profile_peak: f64,
    pub series: Vec<SeriesRow>,
    pub snapshots: Vec<Snapshot>,
    pub max_rel_error: f64,
    pub cross_validation: Option<CrossValidation>,
}

#[derive(Serialize)]
struct SnapshotRow {
    t: f64,
    r: f64,
    value: f64,
    exact: f64,
}

impl Trajectory {
    pub fn write_series_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.series {
            out.serialize(row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_snapshots_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.snapshots {
            for i in 0..s.r.len() {
                out.serialize(SnapshotRow { t: s.t, r: s.r[i], value: s.value[i], exact: s.exact[i] })
                    .map_err(csv_error)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `max |a - b| / max |b|`, zero when both vanish.
pub(crate) fn relative_max_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}
