//! WebAssembly bindings for the browser demo in `www/`.

use wasm_bindgen::prelude::*;

use slicer_core::fieldmap::{FieldConfig, LatticeGeometry, TransitionId, ZeemanModel};
use slicer_core::passage::{adiabaticity_max, linspace, Hs1Params, TransferSolver};
use slicer_core::protocol::{init_grid, simulate_layer_scan, ProtocolConfig, SpinSelection};
use slicer_core::specimg::{frequency_map, stripe_metrics, synthesize_image, ImagingConfig};

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Transition 1 transfer probability on `points` detunings spanning
/// ±`span_khz`, for a pulse of `duration_ms`.
#[wasm_bindgen]
pub fn transfer_profile(duration_ms: f64, span_khz: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let solver = TransferSolver::with_default_step(&Hs1Params::transition1(duration_ms)).map_err(js)?;
    Ok(linspace(-span_khz, span_khz, points).into_iter().map(|d| solver.probability(d)).collect())
}

#[wasm_bindgen]
pub fn adiabaticity(duration_ms: f64) -> Result<f64, JsError> {
    adiabaticity_max(&Hs1Params::transition1(duration_ms), 0.0, 4001).map_err(js)
}

/// Layer-scan fluorescence, interleaved as `[δ₁, signal, δ₁, signal, ...]`,
/// over ±1.5 layer shifts. `mode` is `up`, `down` or `both`.
#[wasm_bindgen]
pub fn layer_scan(mode: &str, duration_ms: f64, spin_up_fraction: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let spins: SpinSelection = mode.parse().map_err(js)?;
    let cfg = ProtocolConfig::calibrated(duration_ms).map_err(js)?;
    let geom = LatticeGeometry::default();
    let grid = init_grid(&geom, spin_up_fraction).map_err(js)?;
    let d1 = cfg.context.shift(&geom, TransitionId::T1);
    let scan = simulate_layer_scan(&cfg, &grid, spins, &linspace(-1.5 * d1, 1.5 * d1, points)).map_err(js)?;
    Ok(scan.iter().flat_map(|p| [p.delta1, p.signal]).collect())
}

#[wasm_bindgen]
pub struct FieldImage {
    pixels: usize,
    fraction: Vec<f64>,
    stripes: usize,
    spacing: f64,
    orientation: f64,
}

#[wasm_bindgen]
impl FieldImage {
    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> usize {
        self.pixels
    }

    /// Transferred fraction, row-major.
    #[wasm_bindgen(getter)]
    pub fn fraction(&self) -> Vec<f64> {
        self.fraction.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn stripes(&self) -> usize {
        self.stripes
    }

    /// µm; infinite with fewer than two stripes.
    #[wasm_bindgen(getter)]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[wasm_bindgen(getter)]
    pub fn orientation(&self) -> f64 {
        self.orientation
    }
}

/// Spectral image of a quadrupole displaced by `stray` (µm) with transverse
/// shims (G) applied.
#[wasm_bindgen]
pub fn field_image(stray_x: f64, stray_y: f64, shim_x: f64, shim_y: f64, pixels: usize) -> Result<FieldImage, JsError> {
    let field = FieldConfig::centered_quadrupole().displaced([stray_x, stray_y]).with_shim([shim_x, shim_y]);
    let img = ImagingConfig { pixels, ..ImagingConfig::default() };
    let map = frequency_map(&field, &ZeemanModel::linear_calibrated(), &img).map_err(js)?;
    let im = synthesize_image(&map, &img.window, 0.0, img.layer_depth).map_err(js)?;
    let m = stripe_metrics(&im, 0.5).map_err(js)?;
    Ok(FieldImage { pixels, fraction: im.fraction, stripes: m.count, spacing: m.spacing, orientation: m.orientation })
}
