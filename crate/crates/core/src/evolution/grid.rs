//! Graded radial nodes for the similarity variable.

use crate::cutoff::cutoff_xi;
use crate::profiles::RadialProfiles;

/// An interval of `y` on which the node density is raised by `factor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub factor: f64,
}

/// Transition width of a band edge, in the stretched coordinate.
const BLEND: f64 = 0.05;
const CORE: f64 = 1.0;

fn stretch(y: f64) -> f64 {
    (y / CORE).asinh()
}

/// `n + 1` nodes `0 = y_0 < ... < y_n = y_max`, uniform in `asinh(y)` (so
/// uniform near the origin and geometric far out) apart from the bands.
pub fn graded_nodes(y_max: f64, n: usize, bands: &[Band]) -> Vec<f64> {
    let xi_max = stretch(y_max);
    let edges: Vec<(f64, f64, f64)> = bands
        .iter()
        .filter(|b| b.hi > 0.0 && b.lo < y_max)
        .map(|b| (stretch(b.lo.max(0.0)), stretch(b.hi.min(y_max)), b.factor))
        .collect();
    let density = |xi: f64| {
        1.0 + edges
            .iter()
            .map(|&(a, b, f)| (f - 1.0) * cutoff_xi((a - xi) / BLEND, 0) * cutoff_xi((xi - b) / BLEND, 0))
            .sum::<f64>()
    };
    // cumulative mass on a fine uniform grid, inverted by linear interpolation
    let m = 64 * n;
    let h = xi_max / m as f64;
    let mut mass = vec![0.0; m + 1];
    let mut prev = density(0.0);
    for k in 1..=m {
        let d = density(k as f64 * h);
        mass[k] = mass[k - 1] + 0.5 * h * (prev + d);
        prev = d;
    }
    let total = mass[m];
    let mut nodes = Vec::with_capacity(n + 1);
    let mut k = 0;
    for i in 0..=n {
        let target = total * i as f64 / n as f64;
        while k + 1 < m && mass[k + 1] < target {
            k += 1;
        }
        let frac = ((target - mass[k]) / (mass[k + 1] - mass[k])).clamp(0.0, 1.0);
        nodes.push(CORE * ((k as f64 + frac) * h).sinh());
    }
    nodes[0] = 0.0;
    nodes[n] = y_max;
    nodes
}

/// Bands for a profile family: the `phi` window four-fold, and the unit-width
/// `f` and `h` windows sixteen-fold.
pub fn profile_bands(p: &RadialProfiles) -> Vec<Band> {
    let (a, b) = p.phi_window();
    let (fa, fb) = p.f_window();
    let (ha, hb) = p.h_window();
    vec![
        Band { lo: a, hi: b, factor: 4.0 },
        Band { lo: fa - 1.0, hi: fb + 1.0, factor: 16.0 },
        Band { lo: ha - 1.0, hi: hb + 1.0, factor: 16.0 },
    ]
}
