//! Spectral images of the transverse field: which atoms a narrow HS1
//! window selects across the imaging plane, stripe analysis of the result,
//! and shim optimisation driven only by the images.
//!
//! Atoms are frozen in a 3D lattice, so every pixel column holds one site
//! per layer. Layer `n` sits `n·Δ` higher in frequency, and the selected
//! fraction of a pixel is the sum of the window's transfer probability over
//! the column. The window is narrower than Δ, so at most one layer per
//! column is selected and the fraction stays within [0, 1].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynfit::{simplex_minimize, SimplexOptions};
use crate::fieldmap::{layer_shift, transverse_inhomogeneity, FieldConfig, LatticeGeometry, TransitionId, ZeemanModel};
use crate::passage::{Hs1Params, TransferSolver};
use crate::{Error, Result};

/// Node spacing of the cached transfer profile, kHz.
const PROFILE_STEP: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagingConfig {
    /// Side of the square field of view, µm.
    pub fov: f64,
    pub pixels: usize,
    pub window: Hs1Params,
    pub transition: TransitionId,
    /// Layers on either side of the focus that contribute to each column.
    pub layer_depth: usize,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            fov: 50.0,
            pixels: 128,
            window: Hs1Params::imaging_window(),
            transition: TransitionId::T1,
            layer_depth: 25,
        }
    }
}

impl ImagingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov.is_finite()) {
            return Err(Error::InvalidParameter(format!("fov must be > 0, got {}", self.fov)));
        }
        if self.pixels < 8 {
            return Err(Error::InvalidParameter(format!("pixels must be >= 8, got {}", self.pixels)));
        }
        self.window.validate()
    }

    /// Pixel-centre coordinate along one axis, µm.
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.fov + (i as f64 + 0.5) * self.fov / self.pixels as f64
    }
}

/// Square map stored row-major: `values[iy * pixels + ix]`, with x along rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMap {
    pub pixels: usize,
    pub fov: f64,
    /// Transition frequency minus its value at the FOV centre, kHz.
    pub values: Vec<f64>,
    /// Frequency step between adjacent layers, kHz.
    pub layer_shift: f64,
}

impl FrequencyMap {
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        hi - lo
    }

    /// Map with constant value `v` (for tests and calibration).
    pub fn flat(pixels: usize, fov: f64, v: f64, layer_shift: f64) -> Self {
        Self { pixels, fov, values: vec![v; pixels * pixels], layer_shift }
    }
}

/// Transition frequency over the imaging plane at z = 0.
pub fn frequency_map(field: &FieldConfig, model: &ZeemanModel, img: &ImagingConfig) -> Result<FrequencyMap> {
    field.validate()?;
    img.validate()?;
    let t = img.transition;
    let f0 = model.transition_frequency(t, field.magnitude_at([0.0; 3]))?;
    let n = img.pixels;
    let mut values = Vec::with_capacity(n * n);
    for iy in 0..n {
        let y = img.coordinate(iy);
        for ix in 0..n {
            let x = img.coordinate(ix);
            let f = model.transition_frequency(t, field.magnitude_at([x, y, 0.0]))?;
            values.push((f - f0) * 1000.0);
        }
    }
    let shift = layer_shift(model, &LatticeGeometry::default(), field, t);
    Ok(FrequencyMap { pixels: n, fov: img.fov, values, layer_shift: shift })
}

/// Transfer profile of one window on a fixed grid of detunings `k·h`,
/// linearly interpolated, zero beyond the tabulated range.
#[derive(Clone, Debug)]
pub struct WindowProfile {
    window: Hs1Params,
    h: f64,
    k0: i64,
    values: Vec<f64>,
}

impl WindowProfile {
    pub fn new(window: &Hs1Params) -> Result<Self> {
        let w = window.centered_at(0.0);
        let reach = (4.0 * w.sweep_width).max(0.5 * w.sweep_width + 8.0);
        let k0 = -(reach / PROFILE_STEP).ceil() as i64;
        let count = (2 * -k0 + 1) as usize;
        let solver = TransferSolver::with_default_step(&w)?;
        let detunings: Vec<f64> = (0..count).map(|i| (k0 + i as i64) as f64 * PROFILE_STEP).collect();
        #[cfg(feature = "parallel")]
        let values = {
            use rayon::prelude::*;
            detunings.par_iter().map(|&d| solver.probability(d)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let values = detunings.iter().map(|&d| solver.probability(d)).collect();
        Ok(Self { window: w, h: PROFILE_STEP, k0, values })
    }

    pub fn window(&self) -> &Hs1Params {
        &self.window
    }

    /// Transfer probability at `d` kHz from the window centre.
    pub fn at(&self, d: f64) -> f64 {
        let u = d / self.h - self.k0 as f64;
        if !(u >= 0.0) || u >= (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = u.floor() as usize;
        let frac = u - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Positive detuning where the profile falls through one half.
    pub fn half_max_edge(&self) -> f64 {
        let mid = (-self.k0) as usize;
        for i in mid..self.values.len() - 1 {
            let (a, b) = (self.values[i], self.values[i + 1]);
            if a >= 0.5 && b < 0.5 {
                return (self.k0 + i as i64) as f64 * self.h + self.h * (a - 0.5) / (a - b);
            }
        }
        0.5 * self.window.sweep_width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralImage {
    pub pixels: usize,
    pub fov: f64,
    /// Selected fraction per pixel, row-major.
    pub fraction: Vec<f64>,
    /// Frequency offset per pixel, kHz.
    pub freq: Vec<f64>,
}

impl SpectralImage {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.fraction[iy * self.pixels + ix]
    }

    pub fn mean(&self) -> f64 {
        self.fraction.iter().sum::<f64>() / self.fraction.len() as f64
    }

    /// Mean absolute difference between neighbouring pixels along both axes.
    /// Symmetric under reflections of the grid.
    pub fn total_variation(&self) -> f64 {
        let n = self.pixels;
        let mut sum = 0.0;
        for a in 0..n {
            for b in 0..n - 1 {
                sum += (self.at(b + 1, a) - self.at(b, a)).abs();
                sum += (self.at(a, b + 1) - self.at(a, b)).abs();
            }
        }
        sum / (2 * n * (n - 1)) as f64
    }
}

/// Image of the atoms selected by a window centred at `window_center` kHz,
/// summing `depth` layers on either side of the focus.
pub fn synthesize_with(map: &FrequencyMap, profile: &WindowProfile, window_center: f64, depth: usize) -> SpectralImage {
    let d = depth as i64;
    let fraction = map
        .values
        .iter()
        .map(|&f| {
            let s: f64 = (-d..=d).map(|n| profile.at(f + n as f64 * map.layer_shift - window_center)).sum();
            s.clamp(0.0, 1.0)
        })
        .collect();
    SpectralImage { pixels: map.pixels, fov: map.fov, fraction, freq: map.values.clone() }
}

/// [`synthesize_with`] building the profile cache for `window` first.
pub fn synthesize_image(map: &FrequencyMap, window: &Hs1Params, window_center: f64, depth: usize) -> Result<SpectralImage> {
    if !window_center.is_finite() {
        return Err(Error::NonFinite("window centre"));
    }
    Ok(synthesize_with(map, &WindowProfile::new(window)?, window_center, depth))
}

/// Multiply every pixel by `1 + sigma·N(0, 1)` from a seeded generator and
/// clamp to [0, 1].
pub fn add_noise(img: &mut SpectralImage, sigma: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut img.fraction {
        *p = (*p * (1.0 + normal.sample(&mut rng))).clamp(0.0, 1.0);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripeMetrics {
    /// Mean distance between neighbouring bands along the stripe normal, µm;
    /// infinite for a single band.
    pub spacing: f64,
    /// Direction of the stripe normal, degrees in [0, 180).
    pub orientation: f64,
    pub count: usize,
}

/// Threshold the image, label 4-connected bands and measure them.
/// Bands smaller than 0.2 % of the image are ignored.
pub fn stripe_metrics(img: &SpectralImage, threshold: f64) -> Result<StripeMetrics> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let n = img.pixels;
    let mask: Vec<bool> = img.fraction.iter().map(|&p| p > threshold).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyImage(threshold));
    }

    let mut label = vec![usize::MAX; n * n];
    let mut bands: Vec<(usize, f64, f64)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n * n {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = bands.len();
        let (mut count, mut sx, mut sy) = (0usize, 0.0, 0.0);
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (ix, iy) = (i % n, i / n);
            count += 1;
            sx += ix as f64;
            sy += iy as f64;
            let mut visit = |j: usize| {
                if mask[j] && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if ix > 0 {
                visit(i - 1);
            }
            if ix + 1 < n {
                visit(i + 1);
            }
            if iy > 0 {
                visit(i - n);
            }
            if iy + 1 < n {
                visit(i + n);
            }
        }
        bands.push((count, sx / count as f64, sy / count as f64));
    }
    let min_size = ((n * n) as f64 * 0.002).ceil() as usize;
    let mut bands: Vec<_> = bands.into_iter().filter(|b| b.0 >= min_size.max(1)).collect();
    if bands.is_empty() {
        return Err(Error::EmptyImage(threshold));
    }

    // Structure tensor of the raw image gives the normal direction.
    let (mut jxx, mut jyy, mut jxy) = (0.0, 0.0, 0.0);
    for iy in 1..n - 1 {
        for ix in 1..n - 1 {
            let gx = 0.5 * (img.at(ix + 1, iy) - img.at(ix - 1, iy));
            let gy = 0.5 * (img.at(ix, iy + 1) - img.at(ix, iy - 1));
            jxx += gx * gx;
            jyy += gy * gy;
            jxy += gx * gy;
        }
    }
    let theta = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
    let mut orientation = theta.to_degrees().rem_euclid(180.0);
    if orientation >= 180.0 {
        orientation = 0.0;
    }

    let count = bands.len();
    let pixel = img.fov / n as f64;
    let spacing = if count < 2 {
        f64::INFINITY
    } else {
        let (c, s) = (theta.cos(), theta.sin());
        let mut along: Vec<f64> = bands.iter().map(|b| (b.1 * c + b.2 * s) * pixel).collect();
        along.sort_by(f64::total_cmp);
        bands.clear();
        (along[count - 1] - along[0]) / (count - 1) as f64
    };
    Ok(StripeMetrics { spacing, orientation, count })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationBounds {
    /// Largest |shim| per axis, G.
    pub shim_limit: [f64; 2],
    /// Starting simplex edge for the coarse stage, G.
    pub initial_step: f64,
    pub max_iterations: usize,
}

impl Default for CompensationBounds {
    fn default() -> Self {
        Self { shim_limit: [1.0, 1.0], initial_step: 0.05, max_iterations: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationResult {
    /// G.
    pub shim: [f64; 2],
    /// Quadrupole-axis offset implied by the shim, µm.
    pub displacement_estimate: [f64; 2],
    /// Peak-to-peak |B| over the FOV with the final shim, mG.
    pub residual_inhomogeneity: f64,
    /// Same before compensation, mG.
    pub initial_inhomogeneity: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Find shim fields that flatten the images of `true_field`.
///
/// Coarse stage: minimise the image's total variation (inverse stripe
/// spacing) with the window centred on the FOV centre. Fine stage: move the
/// window centre onto the profile's half-maximum edge, where every residual
/// gradient shows up as grey-level slope, and minimise again. The hidden
/// field spread is evaluated only for the report.
pub fn compensate(
    true_field: &FieldConfig,
    model: &ZeemanModel,
    img: &ImagingConfig,
    bounds: &CompensationBounds,
) -> Result<CompensationResult> {
    img.validate()?;
    true_field.validate()?;
    if bounds.shim_limit.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidParameter("shim limits must be > 0".into()));
    }
    let profile = WindowProfile::new(&img.window)?;
    let edge = profile.half_max_edge();
    let start = true_field.shim;

    let cost = |s: &[f64], center: f64| -> f64 {
        if s.iter().zip(&bounds.shim_limit).any(|(v, l)| v.abs() > *l) {
            return f64::INFINITY;
        }
        match frequency_map(&true_field.with_shim([s[0], s[1]]), model, img) {
            Ok(map) => synthesize_with(&map, &profile, center, img.layer_depth).total_variation(),
            Err(_) => f64::INFINITY,
        }
    };

    let coarse_opts = SimplexOptions {
        initial_step: vec![bounds.initial_step; 2],
        x_tolerance: 1e-4,
        f_tolerance: 1e-9,
        max_iterations: bounds.max_iterations,
        restarts: 1,
    };
    let coarse = simplex_minimize(|s| cost(s, 0.0), &start, &coarse_opts);

    let fine_opts = SimplexOptions {
        initial_step: vec![0.2 * bounds.initial_step; 2],
        x_tolerance: 1e-7,
        f_tolerance: 1e-14,
        max_iterations: bounds.max_iterations,
        restarts: 2,
    };
    let fine = simplex_minimize(|s| cost(s, edge), &coarse.params, &fine_opts);

    let mut shim = [fine.params[0], fine.params[1]];
    if cost(&shim, edge) > cost(&start, edge) {
        shim = start;
    }
    let fov_inhomogeneity = |s: [f64; 2]| transverse_inhomogeneity(&true_field.with_shim(s), img.fov, 101);
    let per_gauss = 2000.0 / true_field.quad_strength;
    Ok(CompensationResult {
        shim,
        displacement_estimate: [-per_gauss * shim[0], -per_gauss * shim[1]],
        residual_inhomogeneity: fov_inhomogeneity(shim)?,
        initial_inhomogeneity: fov_inhomogeneity(start)?,
        iterations: coarse.iterations + fine.iterations,
        converged: coarse.converged && fine.converged,
    })
}

/// Largest field spread a single flat-top window can hide, mG: δ⁰/κ.
pub fn detection_bound(window: &Hs1Params, model: &ZeemanModel, t: TransitionId, b: f64) -> f64 {
    window.sweep_width / model.slope(t, b)
}
