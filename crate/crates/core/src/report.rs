//! Structured verification results shared by every suite and by the CLI.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Threshold the measurement was compared against, if any.
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= bound,
            measured,
            bound: Some(bound),
            note: String::new(),
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured >= bound,
            measured,
            bound: Some(bound),
            note: String::new(),
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool, measured: f64) -> Self {
        Self { name: name.into(), passed, measured, bound: None, note: String::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub data: serde_json::Value,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), passed: true, checks: Vec::new(), data: serde_json::Value::Null }
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn with_data(mut self, data: serde_json::Value) -> Self {
        self.data = data;
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Log-spaced grid of `n` points on `[a, b]`, `a > 0`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn lin_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Least-squares slope and intercept of `y` against `x`, with the standard
/// error of the slope.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, intercept, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, c, se) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-14 && (c - 3.0).abs() < 1e-13 && se < 1e-12);
    }

    #[test]
    fn section_pass_is_conjunction() {
        let mut s = Section::new("x");
        s.push(Check::at_most("a", 1.0, 2.0));
        assert!(s.passed);
        s.push(Check::at_least("b", 1.0, 2.0));
        assert!(!s.passed);
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = log_grid(1.0, 1e4, 5);
        assert!((g[4] - 1e4).abs() < 1e-9 && (g[2] - 100.0).abs() < 1e-10);
        assert_eq!(lin_grid(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }
}
