use chaosjump::chaos::{gronwall_envelope, gronwall_g, gronwall_g_inv};
use chaosjump::Error;
use proptest::prelude::*;

#[test]
fn worked_value() {
    let e = std::f64::consts::E;
    let got = gronwall_envelope(0.04, 2.0, 1.0, 0.01).unwrap();
    assert!((got - (1.2 * e - 1.0).powi(2)).abs() < 1e-12);
}

#[test]
fn branches() {
    assert_eq!(gronwall_envelope(0.0, 3.0, 1.0, 0.1).unwrap(), 0.0);
    assert_eq!(gronwall_envelope(0.5, 0.0, 1.0, 0.1).unwrap(), 0.5);
    assert!(matches!(gronwall_envelope(0.05, 1.0, 1.0, 0.1), Err(Error::Domain(_))));
    assert!(matches!(gronwall_envelope(1.0, 1.0, 1.0, 0.0), Err(Error::Domain(_))));
}

#[test]
fn single_precision() {
    let got = gronwall_envelope(0.04f32, 2.0, 1.0, 0.01).unwrap();
    assert!((got as f64 - (1.2 * std::f64::consts::E - 1.0).powi(2)).abs() < 1e-4);
}

proptest! {
    #[test]
    fn inverse_round_trip(log_eps in -8.0..-1.0f64, log_ratio in 0.0..8.0f64) {
        let eps = 10f64.powf(log_eps);
        let u = eps * 10f64.powf(log_ratio);
        let back = gronwall_g_inv(gronwall_g(u, eps), eps);
        prop_assert!((back - u).abs() <= 1e-12 * u);
    }

    #[test]
    fn envelope_is_monotone(a in 0.01..10.0f64, da in 0.0..1.0f64, kt in 0.0..5.0f64, dkt in 0.0..1.0f64) {
        let eps = 1e-3;
        let base = gronwall_envelope(a, kt, 1.0, eps).unwrap();
        prop_assert!(base >= a * (1.0 - 1e-12));
        prop_assert!(gronwall_envelope(a + da, kt, 1.0, eps).unwrap() >= base * (1.0 - 1e-12));
        prop_assert!(gronwall_envelope(a, kt + dkt, 1.0, eps).unwrap() >= base * (1.0 - 1e-12));
    }

    #[test]
    fn envelope_composes_in_time(a in 0.01..10.0f64, s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let eps = 1e-3;
        let once = gronwall_envelope(a, 1.0, s + t, eps).unwrap();
        let twice = gronwall_envelope(gronwall_envelope(a, 1.0, s, eps).unwrap(), 1.0, t, eps).unwrap();
        prop_assert!((once - twice).abs() <= 1e-10 * once.max(1.0));
    }
}
