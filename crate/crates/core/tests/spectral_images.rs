use proptest::prelude::*;
use slicer_core::fieldmap::*;
use slicer_core::passage::Hs1Params;
use slicer_core::specimg::*;

fn model() -> ZeemanModel {
    ZeemanModel::linear_calibrated()
}

fn image(field: &FieldConfig, img: &ImagingConfig, center: f64) -> SpectralImage {
    let map = frequency_map(field, &model(), img).unwrap();
    synthesize_image(&map, &img.window, center, img.layer_depth).unwrap()
}

#[test]
fn displaced_quadrupole_spread() {
    let field = FieldConfig::centered_quadrupole().displaced([100.0, 0.0]);
    let map = frequency_map(&field, &model(), &ImagingConfig { pixels: 65, ..Default::default() }).unwrap();
    // Edge to edge along x: B'·Δx/2 projected on the 29 G axial field.
    let edge = 0.5 * 7.27 * 50.0 * (0.5 * 100.0) / 4000.0 * 2.5028 * (64.0 / 65.0);
    assert!((map.spread() / edge - 1.0).abs() < 0.1, "{} {edge}", map.spread());
}

#[test]
fn resolution_invariance() {
    let field = FieldConfig::centered_quadrupole().displaced([60.0, 25.0]);
    let coarse = image(&field, &ImagingConfig { pixels: 16, ..Default::default() }, 1.0);
    let fine = image(&field, &ImagingConfig { pixels: 48, ..Default::default() }, 1.0);
    for iy in 0..16 {
        for ix in 0..16 {
            assert!((coarse.at(ix, iy) - fine.at(3 * ix + 1, 3 * iy + 1)).abs() < 1e-12);
        }
    }
}

#[test]
fn quarter_turn_rotates_stripes() {
    let img = ImagingConfig { pixels: 96, ..Default::default() };
    let base = FieldConfig::centered_quadrupole();
    for d in [[300.0, 0.0], [200.0, 200.0], [250.0, -90.0]] {
        let a = stripe_metrics(&image(&base.displaced(d), &img, 0.0), 0.4).unwrap();
        let b = stripe_metrics(&image(&base.displaced([-d[1], d[0]]), &img, 0.0), 0.4).unwrap();
        let turn = (b.orientation - a.orientation - 90.0).rem_euclid(180.0);
        assert!(turn.min(180.0 - turn) < 2.0, "{a:?} {b:?}");
        assert_eq!(a.count, b.count);
    }
}

#[test]
fn compensation_recovers_stray_displacement() {
    let img = ImagingConfig::default();
    let floor = transverse_inhomogeneity(&FieldConfig::centered_quadrupole(), img.fov, 101).unwrap();
    for stray in [[100.0, 0.0], [70.0, -40.0]] {
        let field = FieldConfig::centered_quadrupole().displaced(stray);
        let r = compensate(&field, &model(), &img, &CompensationBounds::default()).unwrap();
        assert!(r.residual_inhomogeneity <= 1.2 && r.residual_inhomogeneity <= 2.0 * floor, "{r:?}");
        let err = (r.displacement_estimate[0] - stray[0]).hypot(r.displacement_estimate[1] - stray[1]);
        assert!(err < 10.0, "{r:?}");
        assert!(r.residual_inhomogeneity <= r.initial_inhomogeneity);
    }
}

#[test]
fn centred_field_needs_no_shim() {
    let img = ImagingConfig { pixels: 64, ..Default::default() };
    let r = compensate(&FieldConfig::centered_quadrupole(), &model(), &img, &CompensationBounds::default()).unwrap();
    assert!(r.shim[0].abs() < 2e-3 && r.shim[1].abs() < 2e-3, "{r:?}");
    assert!(r.residual_inhomogeneity <= r.initial_inhomogeneity);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn wider_window_selects_more(extra in 0.5f64..4.0, offsets in prop::collection::vec(-1.0f64..1.0, 8)) {
        let narrow = WindowProfile::new(&Hs1Params::new(0.0, 3.0, 6.1, 1.0)).unwrap();
        let wide = WindowProfile::new(&Hs1Params::new(0.0, 3.0 + extra, 6.1, 1.0)).unwrap();
        for d in offsets {
            prop_assert!(wide.at(d) + 1e-3 >= narrow.at(d), "{d}: {} {}", wide.at(d), narrow.at(d));
        }
    }

    #[test]
    fn fractions_stay_in_unit_interval(dx in -400.0f64..400.0, dy in -400.0f64..400.0, c in -12.0f64..12.0) {
        let img = ImagingConfig { pixels: 24, ..Default::default() };
        let im = image(&FieldConfig::centered_quadrupole().displaced([dx, dy]), &img, c);
        prop_assert!(im.fraction.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(im.freq.iter().all(|f| f.is_finite()));
    }
}
