//! Adaptive Gauss-Kronrod (7/15) quadrature and a fixed Gauss-Legendre rule.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel: (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`
/// (with an absolute floor `abs_tol`).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    integrate_with_breaks(f, &[a, b], rel_tol, abs_tol)
}

/// Like [`integrate`], with initial panel boundaries (sorted, first and last are the limits).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    const MAX_PANELS: usize = 20_000;
    let a = breaks[0];
    let b = *breaks.last().unwrap();
    if a == b {
        return Ok(0.0);
    }
    let mut panels: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        let tol = abs_tol.max(rel_tol * total.abs());
        if err <= tol {
            return Ok(total);
        }
        if !err.is_finite() || panels.len() >= MAX_PANELS {
            return Err(Error::QuadratureFailure { a, b, tol, estimate: err });
        }
        // bisect the worst panel
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::QuadratureFailure { a, b, tol, estimate: err });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

const GL8_X: [f64; 4] = [
    0.183434642495649804939476142360184,
    0.525532409916328985817739049189246,
    0.796666477413626739591553936475830,
    0.960289856497536231683560868569473,
];
const GL8_W: [f64; 4] = [
    0.362683783378361982965150449277196,
    0.313706645877887287337962201986601,
    0.222381034453374470544355994426241,
    0.101228536290376259152531354309861,
];

/// Fixed 8-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..4 {
        s += GL8_W[k] * (f(c - h * GL8_X[k]) + f(c + h * GL8_X[k]));
    }
    s * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 2.0 * x, -1.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 3.0)).abs() < 1e-13);
        let g = gauss_legendre8(|x| x.powi(15), 0.0, 1.0);
        assert!((g - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn peaked_integrand_converges() {
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 0.0).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() / exact < 1e-11);
    }

    #[test]
    fn nan_integrand_fails() {
        let r = integrate(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-10, 0.0);
        assert!(r.is_err());
    }
}
