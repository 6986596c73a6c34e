use blowuplab::liouville::{
    caccioppoli_ratio, constant_field, modulus_derivative, monotonicity_scan, radial_field, LogCutoff,
};
use blowuplab::report::log_grid;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cutoff_energy_closed_form(log_r in 1.0f64..6.0) {
        let c = LogCutoff::new(10f64.powf(log_r)).unwrap();
        let q = c.energy_quadrature().unwrap();
        prop_assert!((q / c.energy_closed() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn cutoff_is_monotone_in_unit_interval(log_r in 1.0f64..6.0, a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let c = LogCutoff::new(10f64.powf(log_r)).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(c.value(lo) >= c.value(hi));
        prop_assert!((0.0..=1.0).contains(&c.value(lo)));
    }

    #[test]
    fn constant_fields_have_no_energy(cx in -1.0f64..1.0, cy in -1.0f64..1.0, log_r in 1.0f64..4.0) {
        let row = caccioppoli_ratio(&constant_field([cx, cy]), 10f64.powf(log_r), 1.0).unwrap();
        prop_assert_eq!(row.inner_energy, 0.0);
        prop_assert_eq!(row.ratio, 0.0);
    }

    #[test]
    fn radial_modulus_derivative_is_amplitude_slope(k in 0.1f64..3.0, r in 0.1f64..50.0) {
        // g(r) = tanh(k r), g' = k sech^2(k r)
        let f = radial_field(move |r: f64| ((k * r).tanh(), k / (k * r).cosh().powi(2)));
        let expect = k / (k * r).cosh().powi(2);
        prop_assert!((modulus_derivative(&f, r) - expect).abs() <= 1e-12 * (1.0 + expect));
    }
}

#[test]
fn bump_amplitude_sign_change_is_located() {
    // g(r) = r e^{-r}: increasing up to r = 1
    let f = radial_field(|r: f64| (r * (-r).exp(), (1.0 - r) * (-r).exp()));
    let m = monotonicity_scan(&f, &log_grid(1e-2, 10.0, 200));
    assert!(!m.monotone);
    assert!((m.first_sign_change.unwrap() - 1.0).abs() < 1e-12);
}
