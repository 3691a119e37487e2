//! HS1 adiabatic passage on an effective two-level system.
//!
//! Frequencies are ordinary frequencies in kHz and times in ms; the
//! integrator converts to angular units internally. The Hamiltonian in the
//! rotating frame is
//!
//! ```text
//! H(t) = π·[ -δ_rel(t)   Ω(t)     ]     δ_rel = δ(t) - atom_detuning
//!          [  Ω(t)       δ_rel(t) ]
//! ```
//!
//! and is propagated with the fourth-order Magnus (Gauss–Legendre) scheme.
//! Each step is an exact SU(2) rotation, so the state norm is preserved to
//! rounding error.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

type C64 = Complex<f64>;

/// τ/T giving a smooth switch-on (sech(5) ≈ 1.3 % at the pulse edges).
pub const DEFAULT_TAU_RATIO: f64 = 0.2;
/// Default number of integration steps per pulse.
pub const DEFAULT_STEP_DIVISIONS: usize = 4000;
/// Minimum number of steps per pulse accepted by [`solve_transfer`].
pub const MIN_STEP_DIVISIONS: usize = 1000;

/// Measured Rabi frequency on transition 1, kHz.
pub const RABI_T1: f64 = 6.1;

/// Ratio Ω₂/Ω₁ from the Clebsch–Gordan coefficients of the two σ⁺ transitions.
pub fn clebsch_gordan_ratio() -> f64 {
    (7.0f64 / 9.0).sqrt()
}

/// One hyperbolic-secant pulse: detuning `δᶜ + (δ⁰/2)·tanh(2t/τ)` and
/// coupling `Ω·sech(2t/τ)` for `-T/2 ≤ t ≤ T/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hs1Params {
    /// δᶜ, kHz.
    pub delta_center: f64,
    /// δ⁰, kHz.
    pub sweep_width: f64,
    /// Ω, kHz.
    pub rabi_peak: f64,
    /// T, ms.
    pub duration: f64,
    pub tau_ratio: f64,
}

impl Hs1Params {
    pub fn new(delta_center: f64, sweep_width: f64, rabi_peak: f64, duration: f64) -> Self {
        Self { delta_center, sweep_width, rabi_peak, duration, tau_ratio: DEFAULT_TAU_RATIO }
    }

    /// Transition 1 addressing pulse: δ⁰ = 7 kHz, Ω = 6.1 kHz.
    pub fn transition1(duration: f64) -> Self {
        Self::new(0.0, 7.0, RABI_T1, duration)
    }

    /// Transition 2 addressing pulse: δ⁰ = 5.25 kHz, Ω = √(7/9)·6.1 kHz.
    pub fn transition2(duration: f64) -> Self {
        Self::new(0.0, 5.25, RABI_T1 * clebsch_gordan_ratio(), duration)
    }

    /// Narrow 3 kHz window used for spectral imaging.
    pub fn imaging_window() -> Self {
        Self::new(0.0, 3.0, RABI_T1, 1.0)
    }

    pub fn centered_at(&self, delta_center: f64) -> Self {
        Self { delta_center, ..self.clone() }
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        Self { duration, ..self.clone() }
    }

    pub fn tau(&self) -> f64 {
        self.tau_ratio * self.duration
    }

    pub fn default_step(&self) -> f64 {
        self.duration / DEFAULT_STEP_DIVISIONS as f64
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.delta_center, self.sweep_width, self.rabi_peak, self.duration, self.tau_ratio];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("HS1 parameters"));
        }
        if self.sweep_width <= 0.0 {
            return Err(Error::InvalidParameter(format!("sweep width must be > 0, got {}", self.sweep_width)));
        }
        if self.rabi_peak < 0.0 {
            return Err(Error::InvalidParameter(format!("Rabi frequency must be >= 0, got {}", self.rabi_peak)));
        }
        if self.duration <= 0.0 {
            return Err(Error::InvalidParameter(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.tau_ratio > 0.0 && self.tau_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!("tau/T must be in (0, 1], got {}", self.tau_ratio)));
        }
        Ok(())
    }

    /// (detuning, Rabi frequency) in kHz at time `t` (ms).
    pub fn waveform(&self, t: f64) -> Result<(f64, f64)> {
        let half = 0.5 * self.duration;
        if !(t.abs() <= half * (1.0 + 1e-12)) {
            return Err(Error::OutsidePulseWindow { t, half });
        }
        Ok((self.detuning(t), self.rabi(t)))
    }

    /// (dδ/dt, dΩ/dt) in kHz/ms.
    fn derivatives(&self, t: f64) -> (f64, f64) {
        let x = 2.0 * t / self.tau();
        let sech = 1.0 / x.cosh();
        let rate = 2.0 / self.tau();
        (
            0.5 * self.sweep_width * rate * sech * sech,
            -self.rabi_peak * rate * sech * x.tanh(),
        )
    }
}

/// A time-dependent two-level drive: detuning and Rabi frequency (kHz) over a
/// finite window (ms).
pub trait Drive {
    fn window(&self) -> (f64, f64);
    fn detuning(&self, t: f64) -> f64;
    fn rabi(&self, t: f64) -> f64;
}

impl Drive for Hs1Params {
    fn window(&self) -> (f64, f64) {
        (-0.5 * self.duration, 0.5 * self.duration)
    }

    fn detuning(&self, t: f64) -> f64 {
        self.delta_center + 0.5 * self.sweep_width * (2.0 * t / self.tau()).tanh()
    }

    fn rabi(&self, t: f64) -> f64 {
        self.rabi_peak / (2.0 * t / self.tau()).cosh()
    }
}

/// Constant coupling with a linear detuning sweep `rate·t` over `[start, end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSweep {
    /// kHz/ms.
    pub rate: f64,
    /// kHz.
    pub rabi: f64,
    pub start: f64,
    pub end: f64,
}

impl Drive for LinearSweep {
    fn window(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    fn detuning(&self, t: f64) -> f64 {
        self.rate * t
    }

    fn rabi(&self, _t: f64) -> f64 {
        self.rabi
    }
}

/// Final state of a two-level evolution started in the lower level.
#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub lower: C64,
    pub upper: C64,
    /// Largest | |c₀|² + |c₁|² - 1 | seen at any step.
    pub norm_error: f64,
    pub steps: usize,
}

impl Evolution {
    pub fn upper_population(&self) -> f64 {
        self.upper.norm_sqr()
    }
}

/// Drive samples at the two Gauss–Legendre nodes of every step. They do not
/// depend on the atom detuning, so one table serves a whole detuning scan.
#[derive(Clone, Debug)]
struct SampledDrive {
    h: f64,
    /// (δ₁, Ω₁, δ₂, Ω₂) per step, kHz.
    nodes: Vec<[f64; 4]>,
}

impl SampledDrive {
    fn new<D: Drive + ?Sized>(drive: &D, steps: usize) -> Self {
        let (t0, t1) = drive.window();
        let h = (t1 - t0) / steps as f64;
        let off = 3f64.sqrt() / 6.0;
        let nodes = (0..steps)
            .map(|k| {
                let t = t0 + k as f64 * h;
                let ta = t + (0.5 - off) * h;
                let tb = t + (0.5 + off) * h;
                [drive.detuning(ta), drive.rabi(ta), drive.detuning(tb), drive.rabi(tb)]
            })
            .collect();
        Self { h, nodes }
    }

    fn propagate(&self, atom_detuning: f64) -> Evolution {
        let h = self.h;
        let c2 = 3f64.sqrt() * h * h / 6.0;
        let mut c0 = C64::new(1.0, 0.0);
        let mut c1 = C64::new(0.0, 0.0);
        let mut norm_error = 0.0f64;
        for &[da, oa, db, ob] in &self.nodes {
            // Pauli vectors (x, z) of H at the two nodes; y components vanish.
            let (ax, az) = (PI * oa, -PI * (da - atom_detuning));
            let (bx, bz) = (PI * ob, -PI * (db - atom_detuning));
            // v = h/2 (a + b) + √3 h²/6 (b × a); (b × a) has only a y part.
            let vx = 0.5 * h * (ax + bx);
            let vy = c2 * (bz * ax - bx * az);
            let vz = 0.5 * h * (az + bz);
            let angle = (vx * vx + vy * vy + vz * vz).sqrt();
            if angle == 0.0 {
                continue;
            }
            let (s, c) = angle.sin_cos();
            let k = s / angle;
            // exp(-i v·σ) = cos|v| - i sin|v| v̂·σ
            let u00 = C64::new(c, -k * vz);
            let u11 = C64::new(c, k * vz);
            let u01 = C64::new(-k * vy, -k * vx);
            let u10 = C64::new(k * vy, -k * vx);
            let n0 = u00 * c0 + u01 * c1;
            let n1 = u10 * c0 + u11 * c1;
            c0 = n0;
            c1 = n1;
            norm_error = norm_error.max((c0.norm_sqr() + c1.norm_sqr() - 1.0).abs());
        }
        Evolution { lower: c0, upper: c1, norm_error, steps: self.nodes.len() }
    }
}

/// Integrate `drive` from the lower level with `steps` fixed Magnus steps.
pub fn evolve<D: Drive + ?Sized>(drive: &D, atom_detuning: f64, steps: usize) -> Evolution {
    SampledDrive::new(drive, steps.max(1)).propagate(atom_detuning)
}

/// Outcome of one HS1 transfer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub p_transfer: f64,
    /// Maximum of the adiabaticity metric over the step grid; infinite when
    /// Ω = 0 and the sweep crosses resonance.
    pub adiabaticity_max: f64,
    pub norm_error: f64,
    pub steps_used: usize,
}

/// Uniform-grid samples of δ, Ω and their analytic derivatives.
#[derive(Clone, Debug)]
struct AdiabaticityGrid {
    rows: Vec<[f64; 4]>,
}

impl AdiabaticityGrid {
    fn new(p: &Hs1Params, samples: usize) -> Self {
        let t0 = -0.5 * p.duration;
        let rows = (0..samples)
            .map(|k| {
                let t = t0 + p.duration * k as f64 / (samples - 1) as f64;
                let (dd, dr) = p.derivatives(t);
                [p.detuning(t), p.rabi(t), dd, dr]
            })
            .collect();
        Self { rows }
    }

    fn max_metric(&self, atom_detuning: f64) -> f64 {
        let mut best = 0.0f64;
        for &[d, o, dd, dr] in &self.rows {
            let d = d - atom_detuning;
            let num = (dd * o - d * dr).abs();
            let den = (d * d + o * o).powf(1.5);
            let m = if den == 0.0 {
                if num == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                num / den
            };
            best = best.max(m);
        }
        // Angular units: numerator scales with (2π)², denominator with (2π)³.
        best / (2.0 * PI)
    }
}

fn crosses_resonance(p: &Hs1Params, atom_detuning: f64) -> bool {
    let (t0, t1) = p.window();
    let a = p.detuning(t0) - atom_detuning;
    let b = p.detuning(t1) - atom_detuning;
    a * b <= 0.0
}

/// Maximum over `samples` uniformly spaced times of
/// `|δ̇Ω − δΩ̇| / (δ² + Ω²)^{3/2}` in angular units, with δ measured from the
/// atom's resonance.
pub fn adiabaticity_max(p: &Hs1Params, atom_detuning: f64, samples: usize) -> Result<f64> {
    p.validate()?;
    if !atom_detuning.is_finite() {
        return Err(Error::NonFinite("atom detuning"));
    }
    if samples < 100 {
        return Err(Error::TooFewSamples { need: 100, got: samples });
    }
    if p.rabi_peak == 0.0 {
        if crosses_resonance(p, atom_detuning) {
            return Err(Error::NonAdiabatic);
        }
        return Ok(0.0);
    }
    Ok(AdiabaticityGrid::new(p, samples).max_metric(atom_detuning))
}

/// Reusable solver for one pulse shape over many atom detunings.
#[derive(Clone, Debug)]
pub struct TransferSolver {
    params: Hs1Params,
    drive: SampledDrive,
    adiabaticity: AdiabaticityGrid,
}

impl TransferSolver {
    pub fn new(p: &Hs1Params, step: f64) -> Result<Self> {
        p.validate()?;
        if !step.is_finite() {
            return Err(Error::NonFinite("integration step"));
        }
        let max = p.duration / MIN_STEP_DIVISIONS as f64;
        if step <= 0.0 || step > max * (1.0 + 1e-9) {
            return Err(Error::StepTooLarge { step, max });
        }
        let ratio = p.duration / step;
        let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio { ratio.round() } else { ratio.ceil() };
        let steps = steps as usize;
        Ok(Self {
            params: p.clone(),
            drive: SampledDrive::new(p, steps),
            adiabaticity: AdiabaticityGrid::new(p, steps + 1),
        })
    }

    /// Solver at the default step T/4000.
    pub fn with_default_step(p: &Hs1Params) -> Result<Self> {
        Self::new(p, p.default_step())
    }

    pub fn params(&self) -> &Hs1Params {
        &self.params
    }

    pub fn solve(&self, atom_detuning: f64) -> Result<TransferResult> {
        if !atom_detuning.is_finite() {
            return Err(Error::NonFinite("atom detuning"));
        }
        let ev = self.drive.propagate(atom_detuning);
        let adiabaticity_max = if self.params.rabi_peak == 0.0 {
            if crosses_resonance(&self.params, atom_detuning) { f64::INFINITY } else { 0.0 }
        } else {
            self.adiabaticity.max_metric(atom_detuning)
        };
        Ok(TransferResult {
            p_transfer: ev.upper_population(),
            adiabaticity_max,
            norm_error: ev.norm_error,
            steps_used: ev.steps,
        })
    }

    /// Transfer probability only.
    pub fn probability(&self, atom_detuning: f64) -> f64 {
        self.drive.propagate(atom_detuning).upper_population()
    }
}

/// Integrate one HS1 pulse for an atom whose resonance sits at
/// `atom_detuning` (kHz) with fixed step `step` (ms, at most T/1000).
pub fn solve_transfer(p: &Hs1Params, atom_detuning: f64, step: f64) -> Result<TransferResult> {
    TransferSolver::new(p, step)?.solve(atom_detuning)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub detuning: f64,
    pub result: TransferResult,
}

/// [`solve_transfer`] over a list of atom detunings, in input order.
pub fn transfer_profile(p: &Hs1Params, detunings: &[f64], step: f64) -> Result<Vec<ProfilePoint>> {
    let solver = TransferSolver::new(p, step)?;
    let solve = |&d: &f64| solver.solve(d).map(|result| ProfilePoint { detuning: d, result });
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        detunings.par_iter().map(solve).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        detunings.iter().map(solve).collect()
    }
}

/// `n` evenly spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Widest contiguous run of profile points with probability above
/// `threshold`, as (low edge, high edge) in kHz.
pub fn flat_top(points: &[ProfilePoint], threshold: f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for pt in points {
        if pt.result.p_transfer > threshold {
            start.get_or_insert(pt.detuning);
            last = pt.detuning;
        } else if let Some(s) = start.take() {
            if best.map_or(true, |(a, b)| last - s > b - a) {
                best = Some((s, last));
            }
        }
    }
    if let Some(s) = start {
        if best.map_or(true, |(a, b)| last - s > b - a) {
            best = Some((s, last));
        }
    }
    best
}
