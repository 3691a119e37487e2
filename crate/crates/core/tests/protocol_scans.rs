use proptest::prelude::*;
use slicer_core::dynfit::{fit_fringe_pair, fit_fringe_period};
use slicer_core::fieldmap::{LatticeGeometry, TransitionId};
use slicer_core::protocol::*;

fn span(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn scan(spins: SpinSelection) -> (ProtocolConfig, Vec<ScanPoint>) {
    let cfg = ProtocolConfig::calibrated(1.0).unwrap();
    let grid = init_grid(&LatticeGeometry::default(), SpinPreset::Scan.up_fraction()).unwrap();
    let shift = cfg.context.shift(&grid.geometry, TransitionId::T1);
    let pts = simulate_layer_scan(&cfg, &grid, spins, &span(-1.5 * shift, 1.5 * shift, 61)).unwrap();
    (cfg, pts)
}

#[test]
fn scan_fringes() {
    let (cfg, up) = scan(SpinSelection::Up);
    let (_, down) = scan(SpinSelection::Down);
    let shift = cfg.context.shift(&LatticeGeometry::default(), TransitionId::T1);
    let xy = |pts: &[ScanPoint]| pts.iter().map(|p| (p.delta1, p.signal)).collect::<Vec<_>>();

    let fit = fit_fringe_period(&xy(&up), 0.9 * shift).unwrap();
    assert!((fit.params[3] / shift - 1.0).abs() < 0.01, "{:?}", fit.params);

    let floor = up.iter().map(|p| p.signal).fold(f64::INFINITY, f64::min);
    assert!((floor - 0.032).abs() < 0.005, "{floor}");

    // Peak heights above the common floor carry the spin split.
    let peak = |pts: &[ScanPoint]| pts.iter().map(|p| p.signal).fold(f64::NEG_INFINITY, f64::max) - floor;
    let share = peak(&up) / (peak(&up) + peak(&down));
    assert!((share - 0.58).abs() < 0.01, "{share}");
}

#[test]
fn synthetic_split_recovered() {
    let channel = |amp: f64| -> Vec<(f64, f64)> {
        span(-14.5, 14.5, 61).into_iter().map(|x| (x, 0.032 + amp * 0.5 * (1.0 + (std::f64::consts::TAU * x / 9.68).cos()))).collect()
    };
    let pair = fit_fringe_pair(&channel(0.58), &channel(0.42), 9.68).unwrap();
    assert!((pair.shares[0] - 0.58).abs() < 0.01, "{:?}", pair.shares);
}

#[test]
fn matching_dip_at_three_quarters() {
    let cfg = ProtocolConfig::calibrated(1.0).unwrap();
    let grid = init_grid(&LatticeGeometry::default(), 1.0).unwrap();
    let delta1 = cfg.context.shift(&grid.geometry, TransitionId::T1);
    let pts = simulate_layer_matching(&cfg, &grid, delta1, &span(0.0, 1.5 * delta1, 121)).unwrap();
    let plateau = pts.iter().map(|p| p.signal).fold(f64::NEG_INFINITY, f64::max);
    let dip = pts.iter().min_by(|a, b| a.signal.total_cmp(&b.signal)).unwrap();
    assert!((dip.delta2 / delta1 - 0.75).abs() < 0.05, "{}", dip.delta2 / delta1);
    assert!(1.0 - dip.signal / plateau >= 0.95, "{} {plateau}", dip.signal);
}

#[test]
fn longer_pulses_lose_more_of_the_mixture() {
    let grid = init_grid(&LatticeGeometry::default(), 0.5).unwrap();
    let total = |t: f64| {
        let mut cfg = ProtocolConfig::calibrated(t).unwrap();
        cfg.repetitions = 1;
        run_protocol(&cfg, &grid).unwrap().f9_in_layer(0) / grid.initial_layer(0)
    };
    assert!(total(10.0) < total(1.0));
}

#[test]
fn single_spin_retention() {
    let grid = init_grid(&LatticeGeometry::default(), 0.5).unwrap();
    let mut cfg = ProtocolConfig::calibrated(1.0).unwrap();
    cfg.repetitions = 1;
    cfg.spins = SpinSelection::Up;
    let out = run_protocol(&cfg, &grid).unwrap();
    assert!(out.get(0, InternalState::UP) / (0.5 * grid.initial_layer(0)) >= 0.96);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lossless_pulses_conserve_atoms(frac in 0.0f64..=1.0, d1 in -15.0f64..15.0, d2 in -15.0f64..15.0) {
        let grid = init_grid(&LatticeGeometry::default(), frac).unwrap();
        let mut cfg = ProtocolConfig::calibrated(1.0).unwrap().with_centers(d1, d2);
        cfg.loss = LossModel::disabled();
        let geom = &grid.geometry;
        let mut g = grid.clone();
        for (t, p) in [(TransitionId::T2, &cfg.pulse_a), (TransitionId::T1, &cfg.pulse_b)] {
            g = apply_microwave(&g, t, p, &cfg.context).unwrap();
        }
        prop_assert!((g.total() - grid.total()).abs() < 1e-9 * grid.total());
        for (_, v) in g.iter() {
            prop_assert!(v.iter().all(|&x| x >= 0.0));
        }
        let after = run_protocol(&cfg, &grid).unwrap();
        prop_assert!(after.total() <= grid.total() * (1.0 + 1e-12));
        prop_assert!(after.layers().eq(geom.layers()));
    }
}
