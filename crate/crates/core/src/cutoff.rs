//! The smooth monotone step used for every gluing window.
//!
//! `xi(s) = sigma(1 - s) / (sigma(s) + sigma(1 - s))` with `sigma(s) = exp(-1/s)`
//! for `s > 0` and `0` otherwise. It is identically 1 for `s <= 0`, identically 0
//! for `s >= 1`, non-increasing, and C-infinity.

use crate::jet::Jet;

fn sigma(s: Jet) -> Jet {
    let s0 = s.value();
    // exp(-1/s) underflows long before its derivatives could matter
    if s0 <= 0.0 || 1.0 / s0 > 700.0 {
        Jet::zero()
    } else {
        (-(s.recip())).exp()
    }
}

/// The cutoff applied to a jet argument.
pub fn xi_jet(s: Jet) -> Jet {
    let s0 = s.value();
    if s0 <= 0.0 {
        return Jet::constant(1.0);
    }
    if s0 >= 1.0 {
        return Jet::zero();
    }
    let a = sigma(1.0 - s);
    let b = sigma(s);
    a / (a + b)
}

/// `xi^(deriv_order)(s)` for `deriv_order <= 3`.
pub fn cutoff_xi(s: f64, deriv_order: usize) -> f64 {
    assert!(deriv_order <= 3, "cutoff derivatives are provided up to order 3");
    xi_jet(Jet::variable(s)).deriv(deriv_order)
}

/// `1` for `t <= 1/2`, `0` for `t >= 1`, smooth in between.
pub fn bump_half(t: f64) -> f64 {
    cutoff_xi(2.0 * t - 1.0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_values() {
        assert_eq!(cutoff_xi(-1.0, 0), 1.0);
        assert_eq!(cutoff_xi(2.0, 0), 0.0);
        let m = cutoff_xi(0.5, 0);
        assert!(m > 0.0 && m < 1.0);
        assert!((m - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivatives_vanish_at_window_ends() {
        for &s in &[0.0, 1.0, 1e-3, 1.0 - 1e-3] {
            for k in 1..=3 {
                assert!(cutoff_xi(s, k).abs() < 1e-100, "s={s} k={k}");
            }
        }
    }

    #[test]
    fn non_increasing() {
        let mut prev = 1.0;
        for i in 0..=2000 {
            let s = -0.1 + 1.2 * i as f64 / 2000.0;
            let v = cutoff_xi(s, 0);
            assert!(v <= prev + 1e-16);
            assert!(cutoff_xi(s, 1) <= 0.0);
            prev = v;
        }
    }

    #[test]
    fn symmetric_about_half() {
        for i in 1..100 {
            let s = i as f64 / 100.0;
            assert!((cutoff_xi(s, 0) + cutoff_xi(1.0 - s, 0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        // Richardson slope of the central-difference error must be ~2.
        for &s in &[0.2, 0.37, 0.45, 0.81] {
            for k in 1..=3 {
                let err = |h: f64| {
                    let fd = (cutoff_xi(s + h, k - 1) - cutoff_xi(s - h, k - 1)) / (2.0 * h);
                    (fd - cutoff_xi(s, k)).abs()
                };
                let (e1, e2) = (err(1e-3), err(5e-4));
                let slope = (e1 / e2).log2();
                assert!(slope > 1.9, "s={s} k={k} slope={slope}");
            }
        }
    }
}
