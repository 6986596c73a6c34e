//! Blowup rates fitted from a trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{SeriesRow, Trajectory};
use crate::params::Variant;
use crate::report::{linear_fit, Check, Section};

pub const MIN_DECADES: f64 = 2.0;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
pub const LIPSCHITZ_TOL: f64 = 0.05;
pub const SUP_REL_TOL: f64 = 0.1;

/// Least-squares `value ∝ (-t)^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub ci95: f64,
    pub expected: f64,
    pub t_first: f64,
    pub t_last: f64,
    pub points: usize,
    /// `"full"`, or `"peak_inside_b1"` when only times with the profile peak
    /// inside `B_1` were used.
    pub window: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub variant: Variant,
    pub r0: f64,
    pub epsilon: f64,
    pub decades: f64,
    pub sup: ExponentFit,
    pub lipschitz: ExponentFit,
    /// Extremes of `osc u(., t)` over `B_sqrt(-t)` along the trajectory.
    pub osc_min: f64,
    pub osc_max: f64,
    /// Whether the sup-norm confidence interval is narrow enough to resolve
    /// the expected exponent to ten percent.
    pub sup_resolvable: bool,
    pub max_rel_error: f64,
}

fn decades(rows: &[SeriesRow]) -> f64 {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.t / b.t).abs().log10().abs(),
        _ => 0.0,
    }
}

fn fit(rows: &[SeriesRow], value: impl Fn(&SeriesRow) -> f64, expected: f64, window: &str) -> ExponentFit {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, value(r))).filter(|p| p.1 > 0.0).collect();
    let base = ExponentFit {
        exponent: 0.0,
        ci95: 0.0,
        expected,
        t_first: rows.first().map_or(f64::NAN, |r| r.t),
        t_last: rows.last().map_or(f64::NAN, |r| r.t),
        points: rows.len(),
        window: window.into(),
    };
    let (lo, hi) = pts.iter().fold((f64::INFINITY, 0.0f64), |(l, h), p| (l.min(p.1), h.max(p.1)));
    // constant (or identically zero) series: exponent exactly zero
    if pts.len() < 3 || hi - lo <= 4.0 * f64::EPSILON * hi {
        return base;
    }
    let lx: Vec<f64> = pts.iter().map(|p| (-p.0).ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, _, se) = linear_fit(&lx, &ly);
    ExponentFit { exponent: slope, ci95: Z95 * se, ..base }
}

pub fn blowup_metrics(tr: &Trajectory) -> Result<BlowupReport> {
    let rows = &tr.series;
    let span = decades(rows);
    if span < MIN_DECADES - 1e-9 {
        return Err(Error::InsufficientSpan { decades: span, needed: MIN_DECADES });
    }
    let eps = tr.epsilon;
    // the sup over B_1 only scales like the solution once B_1 holds the peak
    let inside: Vec<SeriesRow> =
        rows.iter().filter(|r| (-r.t).sqrt() * tr.profile_peak <= 1.0).copied().collect();
    let sup = if decades(&inside) >= MIN_DECADES - 1e-9 {
        fit(&inside, |r| r.sup_b1, -0.5 * eps, "peak_inside_b1")
    } else {
        fit(rows, |r| r.sup_b1, -0.5 * eps, "full")
    };
    let lipschitz = fit(rows, |r| r.lip_b1, -0.5 * (1.0 + eps), "full");
    let sup_resolvable = if eps > 0.0 { sup.ci95 < SUP_REL_TOL * 0.5 * eps } else { sup.ci95 < LIPSCHITZ_TOL };
    // the first row is the initial datum, before any step
    let osc = rows.iter().skip(1).map(|r| r.osc_parabolic);
    Ok(BlowupReport {
        variant: tr.variant,
        r0: tr.r0,
        epsilon: eps,
        decades: span,
        sup,
        lipschitz,
        osc_min: osc.clone().fold(f64::INFINITY, f64::min),
        osc_max: osc.fold(0.0, f64::max),
        sup_resolvable,
        max_rel_error: tr.max_rel_error,
    })
}

impl BlowupReport {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("blowup");
        s.push(Check::at_most(
            "lipschitz_exponent_gap",
            (self.lipschitz.exponent - self.lipschitz.expected).abs(),
            LIPSCHITZ_TOL,
        ));
        if self.epsilon > 0.0 {
            s.push(
                Check::at_most(
                    "sup_exponent_relative_gap",
                    (self.sup.exponent / self.sup.expected - 1.0).abs(),
                    SUP_REL_TOL,
                )
                .with_note(format!(
                    "fit {:.4e} ± {:.1e} vs {:.4e}, window {}",
                    self.sup.exponent, self.sup.ci95, self.sup.expected, self.sup.window
                )),
            );
        } else {
            s.push(Check::flag("sup_exponent", true, self.sup.exponent));
        }
        s.push(Check::flag("sup_resolvable", true, if self.sup_resolvable { 1.0 } else { 0.0 }));
        s.push(Check::at_least("osc_min", self.osc_min, 1e-3));
        s.with_data(serde_json::to_value(self).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{InitialData, SolverMode};

    fn synthetic(f: impl Fn(f64) -> f64, t_end: f64) -> Trajectory {
        let series = (0..=40)
            .map(|k| {
                let t = -(10f64).powf(t_end.abs().log10() * k as f64 / 40.0);
                let v = f(t);
                SeriesRow { t, sup_b1: v, lip_b1: v, osc_parabolic: v, rel_error: 0.0 }
            })
            .collect();
        Trajectory {
            mode: SolverMode::Radial,
            variant: Variant::Bounded,
            r0: 50.0,
            epsilon: 0.0,
            initial: InitialData::Exact,
            steps: 40,
            nodes: 0,
            profile_peak: 1.0,
            series,
            snapshots: vec![],
            max_rel_error: 0.0,
            cross_validation: None,
        }
    }

    #[test]
    fn constant_solution_has_zero_exponents() {
        let rep = blowup_metrics(&synthetic(|_| 0.7, -1e-3)).unwrap();
        assert_eq!(rep.sup.exponent, 0.0);
        assert_eq!(rep.lipschitz.exponent, 0.0);
        let zero = blowup_metrics(&synthetic(|_| 0.0, -1e-3)).unwrap();
        assert_eq!(zero.lipschitz.exponent, 0.0);
    }

    #[test]
    fn power_law_recovered() {
        let rep = blowup_metrics(&synthetic(|t| 3.0 * (-t).powf(-0.37), -1e-3)).unwrap();
        assert!((rep.sup.exponent + 0.37).abs() < 1e-12);
        assert!(rep.sup.ci95 < 1e-10);
    }

    #[test]
    fn short_span_rejected() {
        let tr = synthetic(|_| 1.0, -0.05);
        assert!(matches!(blowup_metrics(&tr), Err(Error::InsufficientSpan { .. })));
    }
}
