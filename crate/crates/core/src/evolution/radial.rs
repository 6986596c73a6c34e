//! Radial solver on a mesh that moves with the self-similar scaling.
//!
//! With `r = sqrt(-t) y` and `tau = -log sqrt(-t)` the amplitude obeys
//! `psi_tau = 2 L psi - y psi_y`, where
//! `L psi = (y f psi_y)_y / y - h psi / y^2 + eta' psi / y` has coefficients
//! fixed in `y`. The exact solution is `exp(eps tau) phi(y)`. Every step is
//! one tridiagonal solve with a matrix that never changes.

use crate::error::{Error, Result};
use crate::evolution::grid::{graded_nodes, profile_bands};
use crate::evolution::{
    relative_max_error, InitialData, SelfSimilarSolution, SeriesRow, Snapshot, SolverConfig, SolverMode, Trajectory,
};
use crate::profiles::RadialProfiles;

/// Tridiagonal rows `i = 1..n-1`, stored at index `i - 1`.
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    /// `alpha I + beta self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| beta * v).collect(),
            diag: self.diag.iter().map(|v| alpha + beta * v).collect(),
            upper: self.upper.iter().map(|v| beta * v).collect(),
        }
    }

    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let den = self.diag[i] - if i > 0 { self.lower[i] * prev_c } else { 0.0 };
            if !(den.abs() > 0.0) || !den.is_finite() {
                return Err(Error::StepRejection { t: f64::NAN, reason: format!("singular pivot in row {}", i + 1) });
            }
            inv[i] = 1.0 / den;
            c[i] = self.upper[i] * inv[i];
            prev_c = c[i];
        }
        Ok(TridiagonalLu { lower: self.lower.clone(), c, inv })
    }
}

/// Thomas factorization of a fixed tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    c: Vec<f64>,
    inv: Vec<f64>,
}

impl TridiagonalLu {
    pub fn solve(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] *= self.inv[0];
        for i in 1..n {
            d[i] = (d[i] - self.lower[i] * d[i - 1]) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.c[i] * d[i + 1];
        }
    }
}

/// The spatial operators on fixed nodes `y_0 = 0 < ... < y_n`.
#[derive(Clone, Debug)]
pub struct RadialOperator {
    pub y: Vec<f64>,
    /// `L` with Dirichlet rows removed.
    pub diffusion: Tridiagonal,
    /// Central `y psi_y`.
    pub drift: Tridiagonal,
    /// Cell weights `y_i (y_{i+1} - y_{i-1}) / 2` of the discrete `L^2(r dr)`.
    pub weights: Vec<f64>,
}

impl RadialOperator {
    pub fn new(p: &RadialProfiles, y: &[f64]) -> Self {
        let n = y.len() - 1;
        let mut diffusion = Tridiagonal { lower: vec![0.0; n - 1], diag: vec![0.0; n - 1], upper: vec![0.0; n - 1] };
        let mut drift = diffusion.clone();
        let mut weights = vec![0.0; n - 1];
        for i in 1..n {
            let (ym, yi, yp) = (y[i - 1], y[i], y[i + 1]);
            let (cm, cp) = (0.5 * (ym + yi), 0.5 * (yi + yp));
            let w = 0.5 * (yp - ym);
            let lo = cm * p.f(cm, 0) / ((yi - ym) * yi * w);
            let up = cp * p.f(cp, 0) / ((yp - yi) * yi * w);
            // eta' / y = E / phi
            let e = p.deficit(yi);
            let zeroth = -p.h(yi, 0) / (yi * yi) + if e == 0.0 { 0.0 } else { e / p.phi(yi, 0) };
            let k = i - 1;
            diffusion.lower[k] = lo;
            diffusion.diag[k] = -lo - up + zeroth;
            diffusion.upper[k] = up;
            let c = yi / (yp - ym);
            drift.lower[k] = -c;
            drift.upper[k] = c;
            weights[k] = yi * w;
        }
        Self { y: y.to_vec(), diffusion, drift, weights }
    }

    /// `G = 2 L - D`, the generator in `tau`.
    pub fn generator(&self) -> Tridiagonal {
        let l = &self.diffusion;
        let d = &self.drift;
        Tridiagonal {
            lower: l.lower.iter().zip(&d.lower).map(|(a, b)| 2.0 * a - b).collect(),
            diag: l.diag.iter().zip(&d.diag).map(|(a, b)| 2.0 * a - b).collect(),
            upper: l.upper.iter().zip(&d.upper).map(|(a, b)| 2.0 * a - b).collect(),
        }
    }
}

/// Nodes covering `[0, y_max]` refined on the windows of `p`.
pub fn radial_nodes(p: &RadialProfiles, y_max: f64, n: usize) -> Vec<f64> {
    graded_nodes(y_max, n, &profile_bands(p))
}

/// Measurements of `u = psi nu` on `B_1` at scale `s = sqrt(-t)`.
pub(crate) fn radial_row(t: f64, y: &[f64], psi: &[f64], exact: &[f64]) -> SeriesRow {
    let s = (-t).sqrt();
    let reach = 1.0 / s;
    let mut sup: f64 = 0.0;
    let mut lip: f64 = 0.0;
    let mut core: f64 = 0.0;
    for i in 0..y.len() {
        if y[i] > reach {
            break;
        }
        sup = sup.max(psi[i].abs());
        if y[i] <= 1.0 {
            core = core.max(psi[i].abs());
        }
        if i > 0 {
            lip = lip.max(psi[i].abs() / (s * y[i]));
        }
        if i + 1 < y.len() && y[i + 1] <= reach {
            lip = lip.max((psi[i + 1] - psi[i]).abs() / (s * (y[i + 1] - y[i])));
        }
    }
    SeriesRow { t, sup_b1: sup, lip_b1: lip, osc_parabolic: 2.0 * core, rel_error: relative_max_error(psi, exact) }
}

/// Evolves the radial amplitude of the linear example from `t_start` to `t_end`.
pub fn solve_radial(sol: &SelfSimilarSolution, cfg: &SolverConfig) -> Result<Trajectory> {
    if cfg.mode != SolverMode::Radial {
        return Err(Error::InvalidParams("solve_radial needs mode = radial".into()));
    }
    if !sol.is_linear() {
        return Err(Error::InvalidParams("the solvers evolve the linear examples only".into()));
    }
    let p = sol.profiles();
    let r0 = sol.params.r0;
    cfg.validate(r0)?;
    let eps = sol.epsilon();
    let s0 = (-cfg.t_start).sqrt();
    let y_max = cfg.radial_domain(r0) / s0;
    let y = radial_nodes(p, y_max, cfg.n_r);
    let n = cfg.n_r;
    let op = RadialOperator::new(p, &y);
    let g = op.generator();
    let phi: Vec<f64> = y.iter().map(|&v| p.phi(v, 0)).collect();
    let amp = match cfg.initial {
        InitialData::Exact => 1.0,
        InitialData::Zero => 0.0,
    };

    let levels = cfg.time_levels();
    let tau = |t: f64| -0.5 * (-t).ln();
    let dtau = tau(levels[1]) - tau(levels[0]);
    let bdf1 = g.shifted(1.0, -dtau).factor()?;
    let bdf2 = g.shifted(3.0, -2.0 * dtau).factor()?;
    let g_up = *g.upper.last().unwrap();

    let exact_at = |t: f64| -> Vec<f64> {
        let a = amp * (eps * tau(t)).exp();
        phi.iter().map(|v| a * v).collect()
    };
    let peak = y[phi.iter().enumerate().fold(0, |b, (i, v)| if *v > phi[b] { i } else { b })];
    let snap_at = cfg.snapshot_indices(levels.len());
    let snapshot = |t: f64, psi: &[f64], ex: &[f64]| Snapshot {
        t,
        r: y.iter().map(|v| (-t).sqrt() * v).collect(),
        value: psi.to_vec(),
        exact: ex.to_vec(),
    };

    let mut psi = exact_at(levels[0]);
    let mut prev = psi.clone();
    let mut series = vec![radial_row(levels[0], &y, &psi, &psi)];
    let mut snapshots = vec![snapshot(levels[0], &psi, &psi)];
    let mut rhs = vec![0.0; n - 1];
    for k in 1..levels.len() {
        let t = levels[k];
        let ex = exact_at(t);
        let boundary = ex[n];
        if k == 1 {
            rhs.copy_from_slice(&psi[1..n]);
            rhs[n - 2] += dtau * g_up * boundary;
            bdf1.solve(&mut rhs);
        } else {
            for i in 1..n {
                rhs[i - 1] = 4.0 * psi[i] - prev[i];
            }
            rhs[n - 2] += 2.0 * dtau * g_up * boundary;
            bdf2.solve(&mut rhs);
        }
        std::mem::swap(&mut prev, &mut psi);
        psi[0] = 0.0;
        psi[1..n].copy_from_slice(&rhs);
        psi[n] = boundary;
        check_state(t, &psi, &ex)?;
        series.push(radial_row(t, &y, &psi, &ex));
        if snap_at.contains(&k) {
            snapshots.push(snapshot(t, &psi, &ex));
        }
    }
    let max_rel_error = series.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(Trajectory {
        mode: SolverMode::Radial,
        variant: sol.params.variant,
        r0,
        epsilon: eps,
        initial: cfg.initial,
        steps: levels.len() - 1,
        nodes: n + 1,
        profile_peak: peak,
        series,
        snapshots,
        max_rel_error,
        cross_validation: None,
    })
}

/// `StepRejection` on non-finite values, `Divergence` past ten times the exact bound.
pub(crate) fn check_state(t: f64, u: &[f64], exact: &[f64]) -> Result<()> {
    let norm = u.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !norm.is_finite() || u.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepRejection { t, reason: "non-finite solution values".into() });
    }
    let bound = 10.0 * exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if norm > bound {
        return Err(Error::Divergence { t, norm, bound });
    }
    Ok(())
}

/// Discrete `int |u|^2` along backward-Euler steps of `psi_t = L psi` with the
/// coefficients of `p` frozen, no drift and zero boundary values.
pub fn frozen_energy_history(p: &RadialProfiles, y: &[f64], psi0: &[f64], dt: f64, steps: usize) -> Result<Vec<f64>> {
    let op = RadialOperator::new(p, y);
    let lu = op.diffusion.shifted(1.0, -dt).factor()?;
    let n = y.len() - 1;
    let mut v = psi0[1..n].to_vec();
    let energy = |v: &[f64]| v.iter().zip(&op.weights).map(|(a, w)| w * a * a).sum::<f64>();
    let mut out = vec![energy(&v)];
    for _ in 0..steps {
        lu.solve(&mut v);
        out.push(energy(&v));
    }
    Ok(out)
}
