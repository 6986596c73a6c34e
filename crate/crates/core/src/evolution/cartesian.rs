//! Two-dimensional solver on a Cartesian grid, outside the radial ansatz.
//!
//! The grid is uniform in `y = x / sqrt(-t)`, so it covers the physical
//! square of half side `half_width sqrt(-t / -t_start)`. In these variables
//! `u_tau = 2 div(A(y) Du) - (y·D) u` with `A` fixed, discretized in flux form
//! with the full tensor. Mixed derivatives at a face average the four nearest
//! differences. Dirichlet values come from the exact solution. BDF2 in
//! `tau` then needs one sparse LU per scheme for the whole run.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};
use crate::evolution::radial::{check_state, solve_radial};
use crate::evolution::{
    relative_max_error, CrossValidation, InitialData, SelfSimilarSolution, SeriesRow, Snapshot, SolverConfig,
    SolverMode, Trajectory,
};

/// Directions used for the diameter of a planar point set.
const WIDTH_DIRECTIONS: usize = 180;
pub const PROJECTION_RADII: usize = 48;
pub const PROJECTION_ANGLES: usize = 64;

#[derive(Clone, Debug)]
struct Grid {
    nx: usize,
    ny: usize,
    half: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    fn new(nx: usize, ny: usize, half: f64) -> Self {
        Self { nx, ny, half, hx: 2.0 * half / (nx - 1) as f64, hy: 2.0 * half / (ny - 1) as f64 }
    }

    fn x(&self, i: usize) -> f64 {
        -self.half + i as f64 * self.hx
    }

    fn y(&self, j: usize) -> f64 {
        -self.half + j as f64 * self.hy
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    fn interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }

    /// Row of component `c` at interior node `(i, j)`.
    fn unknown(&self, i: usize, j: usize, c: usize) -> usize {
        2 * ((j - 1) * (self.nx - 2) + (i - 1)) + c
    }

    fn unknowns(&self) -> usize {
        2 * (self.nx - 2) * (self.ny - 2)
    }
}

/// `G` split into its interior block and its coupling to boundary nodes.
struct Assembled {
    interior: Vec<(usize, usize, f64)>,
    /// `(row, node, component, coefficient)`.
    boundary: Vec<(usize, usize, usize, f64)>,
}

fn assemble(sol: &SelfSimilarSolution, g: &Grid) -> Assembled {
    let (nx, ny) = (g.nx, g.ny);
    // x-faces between (i, j) and (i + 1, j); y-faces between (i, j) and (i, j + 1)
    let xface: Vec<[f64; 16]> = (0..ny)
        .flat_map(|j| (0..nx - 1).map(move |i| (i, j)))
        .map(|(i, j)| tensor16(sol, [g.x(i) + 0.5 * g.hx, g.y(j)]))
        .collect();
    let yface: Vec<[f64; 16]> = (0..ny - 1)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| tensor16(sol, [g.x(i), g.y(j) + 0.5 * g.hy]))
        .collect();
    let xf = |i: usize, j: usize| &xface[j * (nx - 1) + i];
    let yf = |i: usize, j: usize| &yface[j * nx + i];
    let at = |t: &[f64; 16], a: usize, k: usize, b: usize, l: usize| t[(2 * a + k) * 4 + 2 * b + l];

    let mut out = Assembled { interior: Vec::new(), boundary: Vec::new() };
    let mut row: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(64);
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            for a in 0..2 {
                row.clear();
                let mut add = |ii: usize, jj: usize, b: usize, c: f64| row.push((ii, jj, b, c));
                let (cx, cy) = (2.0 / (g.hx * g.hx), 2.0 / (g.hy * g.hy));
                let (mxy, myx) = (2.0 / (4.0 * g.hx * g.hy), 2.0 / (4.0 * g.hx * g.hy));
                for b in 0..2 {
                    let (e, w) = (xf(i, j), xf(i - 1, j));
                    let (n, s) = (yf(i, j), yf(i, j - 1));
                    // normal differences
                    let (ae, aw) = (at(e, a, 0, b, 0), at(w, a, 0, b, 0));
                    add(i + 1, j, b, cx * ae);
                    add(i - 1, j, b, cx * aw);
                    add(i, j, b, -cx * (ae + aw));
                    let (an, as_) = (at(n, a, 1, b, 1), at(s, a, 1, b, 1));
                    add(i, j + 1, b, cy * an);
                    add(i, j - 1, b, cy * as_);
                    add(i, j, b, -cy * (an + as_));
                    // mixed differences, d/dy at x-faces
                    let (be, bw) = (mxy * at(e, a, 0, b, 1), mxy * at(w, a, 0, b, 1));
                    for (ii, c) in [(i, be), (i + 1, be), (i - 1, -bw), (i, -bw)] {
                        add(ii, j + 1, b, c);
                        add(ii, j - 1, b, -c);
                    }
                    // d/dx at y-faces
                    let (bn, bs) = (myx * at(n, a, 1, b, 0), myx * at(s, a, 1, b, 0));
                    for (jj, c) in [(j, bn), (j + 1, bn), (j - 1, -bs), (j, -bs)] {
                        add(i + 1, jj, b, c);
                        add(i - 1, jj, b, -c);
                    }
                }
                // drift -(y·D) u
                let (dx, dy) = (g.x(i) / (2.0 * g.hx), g.y(j) / (2.0 * g.hy));
                add(i + 1, j, a, -dx);
                add(i - 1, j, a, dx);
                add(i, j + 1, a, -dy);
                add(i, j - 1, a, dy);

                let r = g.unknown(i, j, a);
                row.sort_by_key(|e| (e.1, e.0, e.2));
                let mut k = 0;
                while k < row.len() {
                    let (ii, jj, b, mut c) = row[k];
                    k += 1;
                    while k < row.len() && (row[k].0, row[k].1, row[k].2) == (ii, jj, b) {
                        c += row[k].3;
                        k += 1;
                    }
                    if g.interior(ii, jj) {
                        out.interior.push((r, g.unknown(ii, jj, b), c));
                    } else {
                        out.boundary.push((r, g.node(ii, jj), b, c));
                    }
                }
            }
        }
    }
    out
}

fn tensor16(sol: &SelfSimilarSolution, y: [f64; 2]) -> [f64; 16] {
    let t = sol.stationary_tensor(y);
    let mut out = [0.0; 16];
    out.copy_from_slice(&t.a);
    out
}

type Lu = faer::sparse::linalg::solvers::Lu<usize, f64>;

fn factor(a: &Assembled, n: usize, alpha: f64, beta: f64, t: f64) -> Result<Lu> {
    let mut trip: Vec<Triplet<usize, usize, f64>> =
        a.interior.iter().map(|&(r, c, v)| Triplet::new(r, c, beta * v)).collect();
    trip.extend((0..n).map(|r| Triplet::new(r, r, alpha)));
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::StepRejection { t, reason: format!("sparse assembly: {e:?}") })?;
    m.sp_lu().map_err(|e| Error::StepRejection { t, reason: format!("sparse LU: {e:?}") })
}

/// Catmull-Rom interpolation of nodal values at `p`.
fn bicubic(g: &Grid, v: &[f64], p: [f64; 2]) -> f64 {
    let fx = (p[0] + g.half) / g.hx;
    let fy = (p[1] + g.half) / g.hy;
    let (i, j) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let w = |t: f64| {
        let (t2, t3) = (t * t, t * t * t);
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ]
    };
    let (wx, wy) = (w(tx), w(ty));
    let mut acc = 0.0;
    for (b, wyb) in wy.iter().enumerate() {
        for (a, wxa) in wx.iter().enumerate() {
            acc += wyb * wxa * v[g.node(i + a - 1, j + b - 1)];
        }
    }
    acc
}

/// Mode-1 coefficient of `u^1 + i u^2` on each circle, and the share of the
/// (radius-weighted) angular energy outside mode 1.
fn mode_projection(g: &Grid, u: &[Vec<f64>; 2], radii: &[f64]) -> (Vec<f64>, f64) {
    let m = PROJECTION_ANGLES;
    let mut mode1 = Vec::with_capacity(radii.len());
    let (mut total, mut outside) = (0.0, 0.0);
    for &r in radii {
        let (mut re, mut im) = (vec![0.0; m], vec![0.0; m]);
        for k in 0..m {
            let th = std::f64::consts::TAU * (k as f64 + 0.5) / m as f64;
            let p = [r * th.cos(), r * th.sin()];
            re[k] = bicubic(g, &u[0], p);
            im[k] = bicubic(g, &u[1], p);
        }
        let mut energy = 0.0;
        let mut e1 = 0.0;
        for q in 0..m {
            let mode = q as i64 - (m / 2) as i64;
            let (mut cr, mut ci) = (0.0, 0.0);
            for k in 0..m {
                let th = std::f64::consts::TAU * (k as f64 + 0.5) / m as f64;
                let (c, s) = ((mode as f64 * th).cos(), (mode as f64 * th).sin());
                // (re + i im) e^{-i mode th}
                cr += re[k] * c + im[k] * s;
                ci += im[k] * c - re[k] * s;
            }
            let (cr, ci) = (cr / m as f64, ci / m as f64);
            let e = cr * cr + ci * ci;
            energy += e;
            if mode == 1 {
                e1 = e;
                mode1.push(cr);
            }
        }
        total += r * energy;
        outside += r * (energy - e1);
    }
    (mode1, if total > 0.0 { outside / total } else { 0.0 })
}

/// Largest singular value of a 2×2 matrix.
fn spectral_norm(m: [[f64; 2]; 2]) -> f64 {
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    (0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()).sqrt()
}

fn cartesian_row(g: &Grid, t: f64, u: &[Vec<f64>; 2], exact: &[Vec<f64>; 2]) -> SeriesRow {
    let s = (-t).sqrt();
    let reach = 1.0 / s;
    let (mut sup, mut lip): (f64, f64) = (0.0, 0.0);
    let mut core: Vec<[f64; 2]> = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let r = g.x(i).hypot(g.y(j));
            if r > reach {
                continue;
            }
            let k = g.node(i, j);
            sup = sup.max(u[0][k].hypot(u[1][k]));
            if r <= 1.0 {
                core.push([u[0][k], u[1][k]]);
            }
            if g.interior(i, j) {
                let d = |c: usize| {
                    [
                        (u[c][g.node(i + 1, j)] - u[c][g.node(i - 1, j)]) / (2.0 * g.hx * s),
                        (u[c][g.node(i, j + 1)] - u[c][g.node(i, j - 1)]) / (2.0 * g.hy * s),
                    ]
                };
                lip = lip.max(spectral_norm([d(0), d(1)]));
            }
        }
    }
    let mut osc: f64 = 0.0;
    for k in 0..WIDTH_DIRECTIONS {
        let th = std::f64::consts::PI * k as f64 / WIDTH_DIRECTIONS as f64;
        let (c, sn) = (th.cos(), th.sin());
        let (lo, hi) = core
            .iter()
            .map(|v| v[0] * c + v[1] * sn)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p), h.max(p)));
        if hi >= lo {
            osc = osc.max(hi - lo);
        }
    }
    let norm_err = (0..u[0].len())
        .map(|k| (u[0][k] - exact[0][k]).hypot(u[1][k] - exact[1][k]))
        .fold(0.0, f64::max);
    let norm_ex = (0..u[0].len()).map(|k| exact[0][k].hypot(exact[1][k])).fold(0.0, f64::max);
    let rel_error = if norm_err == 0.0 { 0.0 } else { norm_err / norm_ex };
    SeriesRow { t, sup_b1: sup, lip_b1: lip, osc_parabolic: osc, rel_error }
}

/// Evolves the linear example on the Cartesian grid and compares the final
/// state with the radial solver run with the same time levels.
pub fn solve_cartesian_2d(sol: &SelfSimilarSolution, cfg: &SolverConfig) -> Result<Trajectory> {
    if cfg.mode != SolverMode::Cart2d {
        return Err(Error::InvalidParams("solve_cartesian_2d needs mode = cart2d".into()));
    }
    if !sol.is_linear() {
        return Err(Error::InvalidParams("the solvers evolve the linear examples only".into()));
    }
    let r0 = sol.params.r0;
    cfg.validate(r0)?;
    let eps = sol.epsilon();
    let s0 = (-cfg.t_start).sqrt();
    let g = Grid::new(cfg.n_x, cfg.n_y, cfg.half_width / s0);
    let amp = match cfg.initial {
        InitialData::Exact => 1.0,
        InitialData::Zero => 0.0,
    };
    let nodes = g.nx * g.ny;
    let mut profile = [vec![0.0; nodes], vec![0.0; nodes]];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let u = sol.stationary([g.x(i), g.y(j)]).u;
            profile[0][g.node(i, j)] = amp * u[0];
            profile[1][g.node(i, j)] = amp * u[1];
        }
    }
    let tau = |t: f64| -0.5 * (-t).ln();
    let exact_at = |t: f64| {
        let a = (eps * tau(t)).exp();
        [profile[0].iter().map(|v| a * v).collect::<Vec<_>>(), profile[1].iter().map(|v| a * v).collect()]
    };

    let levels = cfg.time_levels();
    let dtau = tau(levels[1]) - tau(levels[0]);
    let asm = assemble(sol, &g);
    let n = g.unknowns();
    let bdf1 = factor(&asm, n, 1.0, -dtau, levels[0])?;
    let bdf2 = factor(&asm, n, 3.0, -2.0 * dtau, levels[0])?;

    let radii: Vec<f64> =
        (1..=PROJECTION_RADII).map(|k| 0.9 * g.half * k as f64 / PROJECTION_RADII as f64).collect();
    let p = sol.profiles();
    let snap_at = cfg.snapshot_indices(levels.len());
    let snapshot = |t: f64, u: &[Vec<f64>; 2]| {
        let s = (-t).sqrt();
        let a = amp * (eps * tau(t)).exp();
        Snapshot {
            t,
            r: radii.iter().map(|r| s * r).collect(),
            value: mode_projection(&g, u, &radii).0,
            exact: radii.iter().map(|&r| a * p.phi(r, 0)).collect(),
        }
    };

    let interior_of = |u: &[Vec<f64>; 2], k: usize| {
        let cell = k / 2;
        let (i, j) = (cell % (g.nx - 2) + 1, cell / (g.nx - 2) + 1);
        u[k % 2][g.node(i, j)]
    };
    let mut u = exact_at(levels[0]);
    let mut prev = u.clone();
    let mut series = vec![cartesian_row(&g, levels[0], &u, &u)];
    let mut snapshots = vec![snapshot(levels[0], &u)];
    let mut rhs = Col::<f64>::zeros(n);
    for k in 1..levels.len() {
        let t = levels[k];
        let ex = exact_at(t);
        let (lu, scale) = if k == 1 { (&bdf1, dtau) } else { (&bdf2, 2.0 * dtau) };
        for q in 0..n {
            rhs[q] = if k == 1 { interior_of(&u, q) } else { 4.0 * interior_of(&u, q) - interior_of(&prev, q) };
        }
        for &(r, node, c, v) in &asm.boundary {
            rhs[r] += scale * v * ex[c][node];
        }
        lu.solve_in_place(rhs.as_mat_mut());
        std::mem::swap(&mut prev, &mut u);
        u = ex.clone();
        for q in 0..n {
            let cell = q / 2;
            let (i, j) = (cell % (g.nx - 2) + 1, cell / (g.nx - 2) + 1);
            u[q % 2][g.node(i, j)] = rhs[q];
        }
        check_state(t, &[u[0].as_slice(), u[1].as_slice()].concat(), &[ex[0].as_slice(), ex[1].as_slice()].concat())?;
        series.push(cartesian_row(&g, t, &u, &ex));
        if snap_at.contains(&k) {
            snapshots.push(snapshot(t, &u));
        }
    }

    let t_end = *levels.last().unwrap();
    let (mode1, leakage) = mode_projection(&g, &u, &radii);
    let radial_cfg = SolverConfig { mode: SolverMode::Radial, domain_radius: None, ..*cfg };
    let radial = solve_radial(sol, &radial_cfg)?;
    let last = radial.snapshots.last().unwrap();
    let s_end = (-t_end).sqrt();
    let y_rad: Vec<f64> = last.r.iter().map(|r| r / s_end).collect();
    let reference: Vec<f64> = radii.iter().map(|&y| interpolate(&y_rad, &last.value, y)).collect();
    let exact_error = series.last().unwrap().rel_error;
    let cross = CrossValidation {
        t: t_end,
        r: radii.iter().map(|r| s_end * r).collect(),
        agreement: relative_max_error(&mode1, &reference),
        mode1,
        radial: reference,
        leakage,
        exact_error,
    };
    let max_rel_error = series.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(Trajectory {
        mode: SolverMode::Cart2d,
        variant: sol.params.variant,
        r0,
        epsilon: eps,
        initial: cfg.initial,
        steps: levels.len() - 1,
        nodes,
        profile_peak: radial.profile_peak,
        series,
        snapshots,
        max_rel_error,
        cross_validation: Some(cross),
    })
}

/// Piecewise-linear interpolation on increasing nodes.
fn interpolate(x: &[f64], v: &[f64], at: f64) -> f64 {
    let k = x.partition_point(|&p| p <= at).clamp(1, x.len() - 1);
    let w = (at - x[k - 1]) / (x[k] - x[k - 1]);
    v[k - 1] + w * (v[k] - v[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ConstructionParams;

    fn sol() -> SelfSimilarSolution {
        SelfSimilarSolution::new(&ConstructionParams::bounded(50.0).unwrap()).unwrap()
    }

    #[test]
    fn bicubic_exact_on_biquadratics() {
        let g = Grid::new(20, 20, 1.0);
        let f = |x: f64, y: f64| 1.0 + x - 2.0 * y * y + x * x * y - 0.5 * x * x * y * y;
        let v: Vec<f64> = (0..400).map(|k| f(g.x(k % 20), g.y(k / 20))).collect();
        let p = [0.123, -0.377];
        assert!((bicubic(&g, &v, p) - f(p[0], p[1])).abs() < 1e-12);
    }

    #[test]
    fn projection_of_pure_mode_one() {
        let g = Grid::new(64, 64, 2.0);
        let mut u = [vec![0.0; 64 * 64], vec![0.0; 64 * 64]];
        for j in 0..64 {
            for i in 0..64 {
                let (x, y) = (g.x(i), g.y(j));
                u[0][g.node(i, j)] = x * (1.0 - 0.1 * (x * x + y * y));
                u[1][g.node(i, j)] = y * (1.0 - 0.1 * (x * x + y * y));
            }
        }
        let radii = [0.5, 1.0];
        let (m1, leak) = mode_projection(&g, &u, &radii);
        assert!((m1[0] - 0.5 * (1.0 - 0.025)).abs() < 1e-5, "{m1:?}");
        assert!(leak < 1e-9, "{leak:e}");
    }

    #[test]
    fn spectral_norm_of_rotation_and_diag() {
        assert!((spectral_norm([[0.0, -2.0], [2.0, 0.0]]) - 2.0).abs() < 1e-15);
        assert!((spectral_norm([[3.0, 0.0], [0.0, -1.0]]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = SolverConfig { initial: InitialData::Zero, steps_per_decade: 10, ..SolverConfig::cart2d(-1.0, -0.1, 32) };
        let tr = solve_cartesian_2d(&sol(), &cfg).unwrap();
        assert!(tr.series.iter().all(|r| r.sup_b1 == 0.0 && r.rel_error == 0.0));
    }

    #[test]
    fn coarse_run_tracks_exact_and_radial() {
        let cfg = SolverConfig { n_r: 1024, ..SolverConfig::cart2d(-1.0, -0.1, 64) };
        let tr = solve_cartesian_2d(&sol(), &cfg).unwrap();
        let cv = tr.cross_validation.unwrap();
        assert!(cv.exact_error < 0.1, "{cv:?}");
        assert!(cv.agreement < 0.1, "{cv:?}");
        assert!(cv.leakage < 1e-2, "{cv:?}");
    }
}
