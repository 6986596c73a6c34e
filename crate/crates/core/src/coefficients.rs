//! The coefficient tensor built from the radial profiles.
//!
//! For one profile family the two components are coupled by
//! `A11 = A22 = M = f nu⊗nu + h tau⊗tau` and `A12 = -A21 = eta J`, where
//! `J = nu⊗tau - tau⊗nu = [[0, 1], [-1, 0]]`. In the frame coordinates
//! `c = (p1·nu, p1·tau, p2·nu, p2·tau)` of a gradient matrix with rows `p1, p2`
//! the quadratic form is `cᵀ R c` with
//!
//! ```text
//! R = [[f, 0,   0,  eta],
//!      [0, h,  -eta, 0 ],
//!      [0, -eta, f,  0 ],
//!      [eta, 0,  0,  h ]]
//! ```
//!
//! whose characteristic polynomial is `((l - f)(l - h) - eta^2)^2`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Block, RadialProfiles};
use crate::report::{log_grid, Check, Section};

/// Below this radius the frame is not used.
pub const ORIGIN_RADIUS: f64 = 1e-6;
pub const DEFAULT_MARGIN: f64 = 0.25;
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameBasis {
    pub nu: [f64; 2],
    pub tau: [f64; 2],
    pub r: f64,
}

pub fn frame_at(x: [f64; 2]) -> Result<FrameBasis> {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return Err(Error::OriginFrame);
    }
    let nu = [x[0] / r, x[1] / r];
    Ok(FrameBasis { nu, tau: [-nu[1], nu[0]], r })
}

pub type Mat2 = [[f64; 2]; 2];
pub type Mat4 = [[f64; 4]; 4];

/// `f nu⊗nu + h tau⊗tau` in Cartesian components.
pub fn frame_block(frame: &FrameBasis, f: f64, h: f64) -> Mat2 {
    let (n, t) = (frame.nu, frame.tau);
    let off = f * n[0] * n[1] + h * t[0] * t[1];
    [[f * n[0] * n[0] + h * t[0] * t[0], off], [off, f * n[1] * n[1] + h * t[1] * t[1]]]
}

/// The radial/tangential block `M` at `x`; inside the first window it is
/// evaluated as `I/2 + beta(|x|) x⊗x`, which is smooth through the origin.
pub fn scalar_block_m(p: &RadialProfiles, x: [f64; 2]) -> Mat2 {
    let r = x[0].hypot(x[1]);
    if r < p.start {
        let b = p.beta(r);
        return [
            [0.5 + b * x[0] * x[0], b * x[0] * x[1]],
            [b * x[0] * x[1], 0.5 + b * x[1] * x[1]],
        ];
    }
    let frame = frame_at(x).expect("r >= start > 0");
    frame_block(&frame, p.f(r, 0), p.h(r, 0))
}

pub fn rotated_matrix(b: Block) -> Mat4 {
    let Block { f, h, eta } = b;
    [
        [f, 0.0, 0.0, eta],
        [0.0, h, -eta, 0.0],
        [0.0, -eta, f, 0.0],
        [eta, 0.0, 0.0, h],
    ]
}

/// Frame-coordinate matrix at radius `r` (`r = 0` gives `I/2`).
pub fn assemble_rotated(p: &RadialProfiles, r: f64) -> Mat4 {
    rotated_matrix(p.block(r))
}

/// The two distinct eigenvalues `(lo, hi)`; each has multiplicity two.
pub fn block_spectrum(b: Block) -> (f64, f64) {
    let mean = 0.5 * (b.f + b.h);
    let rad = (0.5 * (b.f - b.h)).hypot(b.eta);
    (mean - rad, mean + rad)
}

/// All four eigenvalues of [`assemble_rotated`], ascending.
pub fn spectrum_closed(p: &RadialProfiles, r: f64) -> [f64; 4] {
    let (lo, hi) = block_spectrum(p.block(r));
    [lo, lo, hi, hi]
}

/// Symmetric `2m × 2m` matrix of `a^{ij}_{αβ}` at index `(2α + i, 2β + j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensor {
    pub m: usize,
    pub a: Vec<f64>,
}

impl CoefficientTensor {
    pub fn zeros(m: usize) -> Self {
        Self { m, a: vec![0.0; 4 * m * m] }
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn get(&self, alpha: usize, i: usize, beta: usize, j: usize) -> f64 {
        self.a[(2 * alpha + i) * self.dim() + 2 * beta + j]
    }

    fn set(&mut self, alpha: usize, i: usize, beta: usize, j: usize, v: f64) {
        let d = self.dim();
        self.a[(2 * alpha + i) * d + 2 * beta + j] = v;
    }

    /// Writes the coupled pair for components `(2k, 2k + 1)`.
    pub fn set_pair(&mut self, k: usize, m_block: Mat2, eta: f64) {
        let (a, b) = (2 * k, 2 * k + 1);
        for i in 0..2 {
            for j in 0..2 {
                self.set(a, i, a, j, m_block[i][j]);
                self.set(b, i, b, j, m_block[i][j]);
            }
        }
        // A12 = eta J, A21 = -eta J
        self.set(a, 0, b, 1, eta);
        self.set(a, 1, b, 0, -eta);
        self.set(b, 0, a, 1, -eta);
        self.set(b, 1, a, 0, eta);
    }

    /// The flux `(A P)^α_i = a^{ij}_{αβ} P^β_j`.
    pub fn apply(&self, p: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let d = self.dim();
        (0..self.m)
            .map(|alpha| {
                let mut out = [0.0; 2];
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &self.a[(2 * alpha + i) * d..(2 * alpha + i + 1) * d];
                    *o = p.iter().flatten().zip(row).map(|(x, y)| x * y).sum();
                }
                out
            })
            .collect()
    }

    pub fn quadratic_form(&self, p: &[[f64; 2]]) -> f64 {
        self.apply(p).iter().zip(p).map(|(q, r)| q[0] * r[0] + q[1] * r[1]).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for l in 0..k {
                worst = worst.max((self.a[k * d + l] - self.a[l * d + k]).abs());
            }
        }
        worst
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.a)
    }

    /// Extreme eigenvalues from a numeric symmetric eigensolver.
    pub fn eigen_range(&self) -> (f64, f64) {
        let e = SymmetricEigen::new(self.to_matrix()).eigenvalues;
        (e.min(), e.max())
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.a.iter().zip(&other.a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Operator (spectral) norm of `self - other`.
    pub fn norm_diff(&self, other: &Self) -> f64 {
        let diff = self.to_matrix() - other.to_matrix();
        let e = SymmetricEigen::new(diff).eigenvalues;
        e.amax()
    }
}

/// Cartesian coefficient tensor for a list of profile families, one coupled
/// pair per family (`m = 2 × families.len()`).
pub fn tensor_for_families(families: &[&RadialProfiles], x: [f64; 2]) -> CoefficientTensor {
    let r = x[0].hypot(x[1]);
    let mut t = CoefficientTensor::zeros(2 * families.len());
    for (k, p) in families.iter().enumerate() {
        t.set_pair(k, scalar_block_m(p, x), p.eta(r));
    }
    t
}

pub fn tensor_cartesian(p: &RadialProfiles, x: [f64; 2]) -> CoefficientTensor {
    tensor_for_families(&[p], x)
}

/// Frame coordinates `(p1·nu, p1·tau, p2·nu, p2·tau)`.
pub fn frame_coordinates(frame: &FrameBasis, p: &[[f64; 2]; 2]) -> [f64; 4] {
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    [dot(p[0], frame.nu), dot(p[0], frame.tau), dot(p[1], frame.nu), dot(p[1], frame.tau)]
}

/// `cᵀ R c` with `R` the frame matrix at `|x|`.
pub fn frame_quadratic_form(p: &RadialProfiles, x: [f64; 2], grad: &[[f64; 2]; 2]) -> Result<f64> {
    let frame = frame_at(x)?;
    let c = frame_coordinates(&frame, grad);
    let r = assemble_rotated(p, frame.r);
    let mut q = 0.0;
    for k in 0..4 {
        for l in 0..4 {
            q += c[k] * r[k][l] * c[l];
        }
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub worst_radius: f64,
    /// Smallest eigenvalue, compared against `threshold`.
    pub margin: f64,
    pub threshold: f64,
    /// `min (f h - eta^2)` over the grid; positive iff every radius is elliptic.
    pub min_fh_minus_eta2: f64,
    /// Largest violation of `lambda_min |P|^2 <= Q <= lambda_max |P|^2` in the random sampling.
    pub sampling_violation: f64,
    pub samples_per_radius: usize,
    pub seed: u64,
    pub n_radii: usize,
    /// `lambda_max / (r0^2 log r0)`.
    pub lambda_max_scaled: f64,
    pub pass: bool,
}

/// Log-spaced radii on `[1e-3, 10 r0]`, refined inside `[r0, 2 r0 + 1]`, plus the origin.
pub fn default_radii(r0: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(log_grid(1e-3, 10.0 * r0, 1024));
    g.extend(log_grid(r0, 2.0 * r0 + 1.0, 2048));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Scans the closed-form spectrum over `radii` and samples the Cartesian
/// quadratic form on random unit gradient matrices at a random angle per radius.
pub fn ellipticity_scan(
    p: &RadialProfiles,
    radii: &[f64],
    threshold: f64,
    seed: u64,
    samples_per_radius: usize,
) -> EllipticityReport {
    struct Acc {
        lo: f64,
        hi: f64,
        worst_r: f64,
        min_det: f64,
        violation: f64,
    }
    let per_radius: Vec<Acc> = radii
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let b = p.block(r);
            let (lo, hi) = block_spectrum(b);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let t = tensor_cartesian(p, [r * theta.cos(), r * theta.sin()]);
            let scale = hi.abs().max(1.0);
            let mut violation: f64 = 0.0;
            for _ in 0..samples_per_radius {
                let mut g = [[0.0; 2]; 2];
                let mut n2 = 0.0;
                for v in g.iter_mut().flatten() {
                    *v = rng.gen::<f64>() * 2.0 - 1.0;
                    n2 += *v * *v;
                }
                let q = t.quadratic_form(&g) / n2;
                violation = violation.max((lo - q) / scale).max((q - hi) / scale);
            }
            Acc { lo, hi, worst_r: r, min_det: b.f * b.h - b.eta * b.eta, violation }
        })
        .collect();
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    let mut worst_radius = 0.0;
    let mut min_det = f64::INFINITY;
    let mut violation: f64 = 0.0;
    for a in &per_radius {
        if a.lo < lambda_min {
            lambda_min = a.lo;
            worst_radius = a.worst_r;
        }
        lambda_max = lambda_max.max(a.hi);
        min_det = min_det.min(a.min_det);
        violation = violation.max(a.violation);
    }
    let r0 = p.params.r0;
    // rounding slack for the sampled quadratic forms
    let pass = lambda_min >= threshold && min_det > 0.0 && violation <= 1e-12;
    EllipticityReport {
        lambda_min,
        lambda_max,
        worst_radius,
        margin: lambda_min,
        threshold,
        min_fh_minus_eta2: min_det,
        sampling_violation: violation,
        samples_per_radius,
        seed,
        n_radii: radii.len(),
        lambda_max_scaled: lambda_max / (r0 * r0 * r0.ln()),
        pass,
    }
}

impl EllipticityReport {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("ellipticity");
        s.push(Check::at_least("lambda_min", self.lambda_min, self.threshold));
        s.push(Check::at_least("min_fh_minus_eta2", self.min_fh_minus_eta2, 0.0));
        s.push(Check::at_most("sampling_violation", self.sampling_violation, 1e-12));
        s.push(Check::flag("lambda_max_scaled", true, self.lambda_max_scaled));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}
