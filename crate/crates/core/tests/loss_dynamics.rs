use proptest::prelude::*;
use slicer_core::dynfit::*;

fn two_body(alpha: f64, n0: f64, t: f64) -> f64 {
    n0 / (1.0 + alpha * n0 * t)
}

fn three_body(beta: f64, n0: f64, t: f64) -> f64 {
    n0 / (1.0 + 2.0 * beta * n0 * n0 * t).sqrt()
}

fn grid(end: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| end * i as f64 / n as f64).collect()
}

#[test]
fn closed_forms() {
    let t = grid(3.0, 30);
    let c = integrate_loss(&LossParams::new(0.7, 0.0), 1.0, &t).unwrap();
    for &(ti, n) in &c.samples {
        assert!((n - two_body(0.7, 1.0, ti)).abs() <= 1e-6, "{ti}");
    }
    let c = integrate_loss(&LossParams::new(0.0, 0.9), 1.0, &t).unwrap();
    for &(ti, n) in &c.samples {
        assert!((n - three_body(0.9, 1.0, ti)).abs() <= 1e-6, "{ti}");
    }
    // t½ = 1/(α N₀) and 3/(2 β N₀²).
    assert!((half_life(&LossParams::new(0.7, 0.0), 1.0).unwrap() - 1.0 / 0.7).abs() < 1e-6);
    assert!((half_life(&LossParams::new(0.0, 0.9), 1.0).unwrap() - 1.5 / 0.9).abs() < 1e-6);
}

#[test]
fn presets_reproduce_half_lives() {
    let mut previous = f64::INFINITY;
    for preset in LossPreset::ALL {
        let p = preset.calibrated(1.0).unwrap();
        let t = half_life(&p, 1.0).unwrap();
        assert!((t / preset.half_life() - 1.0).abs() < 0.02, "{}: {t}", preset.name());
        assert!(t < previous);
        previous = t;
    }
}

#[test]
fn round_trip_fit() {
    let truth = LossParams::new(0.2, 0.8);
    let curve = integrate_loss(&truth, 1.0, &grid(4.0, 40)).unwrap();
    let fit = fit_loss(&curve).unwrap();
    assert!((fit.params[0] / 0.2 - 1.0).abs() < 0.05, "{:?}", fit.params);
    assert!((fit.params[1] / 0.8 - 1.0).abs() < 0.05, "{:?}", fit.params);
}

#[test]
fn lossless_has_no_half_life() {
    assert!(half_life(&LossParams::none(), 1.0).is_err());
    assert!(calibrate_to_halflife(1.0, 1.0, (0.0, 0.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decay_is_monotone_and_positive(alpha in 0.0f64..2.0, beta in 0.0f64..2.0, n0 in 0.1f64..3.0) {
        let c = integrate_loss(&LossParams::new(alpha, beta), n0, &grid(5.0, 25)).unwrap();
        let mut last = n0;
        for &(_, n) in &c.samples {
            prop_assert!(n >= 0.0 && n <= last + 1e-15);
            last = n;
        }
    }

    #[test]
    fn scaling_rates_shortens_half_life(alpha in 0.01f64..2.0, beta in 0.01f64..2.0, k in 1.0f64..10.0) {
        let p = LossParams::new(alpha, beta);
        let t1 = half_life(&p, 1.0).unwrap();
        let tk = half_life(&p.scaled(k), 1.0).unwrap();
        prop_assert!((tk * k / t1 - 1.0).abs() < 1e-6);
    }
}
