//! Transfer solver against an independent fixed-step RK4 integration of the
//! Schrödinger equation and the Landau–Zener formula.

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use slicer_core::passage::*;

/// RK4 on ψ' = -iHψ with H = π(Ω σx − δ σz), amplitudes as (re, im) pairs.
fn rk4_oracle(p: &Hs1Params, atom: f64, steps: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let half = 0.5 * p.duration;
    let h = p.duration / steps as f64;
    let rhs = |t: f64, s: [f64; 4]| -> [f64; 4] {
        let (d, om) = p.waveform(t.clamp(-half, half)).unwrap();
        let delta = pi * (d - atom);
        let omega = pi * om;
        // H ψ: lower gets -δ·a + Ω·b, upper gets Ω·a + δ·b; then multiply by -i.
        let (ar, ai, br, bi) = (s[0], s[1], s[2], s[3]);
        let hl = (-delta * ar + omega * br, -delta * ai + omega * bi);
        let hu = (omega * ar + delta * br, omega * ai + delta * bi);
        [hl.1, -hl.0, hu.1, -hu.0]
    };
    let mut s = [1.0, 0.0, 0.0, 0.0];
    let mut t = -half;
    for _ in 0..steps {
        let k1 = rhs(t, s);
        let k2 = rhs(t + 0.5 * h, std::array::from_fn(|i| s[i] + 0.5 * h * k1[i]));
        let k3 = rhs(t + 0.5 * h, std::array::from_fn(|i| s[i] + 0.5 * h * k2[i]));
        let k4 = rhs(t + h, std::array::from_fn(|i| s[i] + h * k3[i]));
        s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        t += h;
    }
    s[2] * s[2] + s[3] * s[3]
}

#[test]
fn matches_rk4_oracle() {
    for p in [Hs1Params::transition1(1.0), Hs1Params::transition2(1.0), Hs1Params::imaging_window(), Hs1Params::transition1(0.15)] {
        let solver = TransferSolver::with_default_step(&p).unwrap();
        for atom in [0.0, 1.3, -2.9, 4.0, 9.68] {
            let want = rk4_oracle(&p, atom, 40_000);
            assert_abs_diff_eq!(solver.probability(atom), want, epsilon = 1e-6);
        }
    }
}

#[test]
fn imaging_window_peak() {
    // The 3 kHz window at 1 ms is only partly adiabatic.
    let p = Hs1Params::imaging_window();
    let got = TransferSolver::with_default_step(&p).unwrap().probability(0.0);
    assert_abs_diff_eq!(got, rk4_oracle(&p, 0.0, 40_000), epsilon = 1e-6);
    assert!((0.8..0.9).contains(&got), "{got}");
}

fn lz_closed_form(rabi: f64, rate: f64) -> f64 {
    let pi = std::f64::consts::PI;
    1.0 - (-pi * pi * rabi * rabi / rate).exp()
}

#[test]
fn landau_zener_limit() {
    let reach = 2000.0;
    for rate in [2.2, 4.0, 8.0, 15.0, 30.0, 60.0, 90.0] {
        let window = reach / rate;
        let sweep = LinearSweep { rate, rabi: 1.0, start: -window, end: window };
        let steps = (0.4 * reach * window).ceil() as usize;
        let ev = evolve(&sweep, 0.0, steps);
        let want = lz_closed_form(1.0, rate);
        assert!((ev.upper_population() - want).abs() < 1e-3, "rate {rate}: {} vs {want}", ev.upper_population());
    }
    assert!(lz_closed_form(1.0, 2.2) > 0.98 && lz_closed_form(1.0, 90.0) < 0.11);
}

#[test]
fn step_halving_and_norm() {
    let p = Hs1Params::transition1(1.0);
    for atom in [0.0, 3.0, 5.5] {
        let a = solve_transfer(&p, atom, p.default_step()).unwrap();
        let b = solve_transfer(&p, atom, 0.5 * p.default_step()).unwrap();
        assert!((a.p_transfer - b.p_transfer).abs() <= 1e-6);
        assert!(a.norm_error <= 1e-8 && b.norm_error <= 1e-8);
    }
}

#[test]
fn rejects_coarse_steps() {
    let p = Hs1Params::transition1(1.0);
    assert!(TransferSolver::new(&p, 2e-3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn probability_is_bounded_and_symmetric(atom in 0.0f64..15.0, width in 2.0f64..10.0, t in 0.3f64..3.0) {
        let p = Hs1Params::new(0.0, width, RABI_T1, t);
        let s = TransferSolver::with_default_step(&p).unwrap();
        let (up, down) = (s.solve(atom).unwrap(), s.solve(-atom).unwrap());
        prop_assert!((0.0..=1.0).contains(&up.p_transfer));
        prop_assert!((up.p_transfer - down.p_transfer).abs() <= 1e-6);
        prop_assert!(up.norm_error <= 1e-8);
    }

    #[test]
    fn centre_shift_translates_profile(center in -20.0f64..20.0, atom in -6.0f64..6.0) {
        let base = Hs1Params::transition1(1.0);
        let shifted = base.centered_at(center);
        let a = TransferSolver::with_default_step(&base).unwrap().probability(atom);
        let b = TransferSolver::with_default_step(&shifted).unwrap().probability(atom + center);
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn adiabaticity_scales_inversely_with_duration(t in 0.1f64..10.0) {
        let a = adiabaticity_max(&Hs1Params::transition1(1.0), 0.0, 20_001).unwrap();
        let b = adiabaticity_max(&Hs1Params::transition1(t), 0.0, 20_001).unwrap();
        prop_assert!((b * t / a - 1.0).abs() <= 1e-6);
    }
}
