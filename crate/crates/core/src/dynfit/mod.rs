//! Collisional loss `dN/dt = −αN² − βN³`, half-life calibration, decay and
//! fringe fitting, and the shared Nelder–Mead minimiser.
//!
//! `N` is dimensionless: an absolute count divided by [`LossParams::n_unit`].
//! Curves may be given in either convention as long as `n_unit` matches.

mod fringe;
mod simplex;

pub use fringe::{fit_fringe, fit_fringe_pair, fit_fringe_period, FringePair};
pub use simplex::{simplex_minimize, FitResult, SimplexOptions};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest `h·(αN + βN²)` taken by a single RK4 step.
pub const DEFAULT_RESOLUTION: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Two-body coefficient, 1/s per unit N.
    pub alpha: f64,
    /// Three-body coefficient, 1/s per unit N².
    pub beta: f64,
    pub n_unit: f64,
}

impl LossParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, n_unit: 1.0 }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.n_unit.is_finite()) {
            return Err(Error::NonFinite("loss parameters"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "loss coefficients must be >= 0, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.n_unit <= 0.0 {
            return Err(Error::InvalidParameter(format!("n_unit must be > 0, got {}", self.n_unit)));
        }
        Ok(())
    }

    pub fn is_lossless(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }

    /// Both coefficients multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self { alpha: k * self.alpha, beta: k * self.beta, n_unit: self.n_unit }
    }

    /// Per-atom loss rate αx + βx² at normalised population x.
    fn rate(&self, x: f64) -> f64 {
        self.alpha * x + self.beta * x * x
    }

    fn rhs(&self, x: f64) -> f64 {
        -x * self.rate(x)
    }

    fn rk4(&self, x: f64, h: f64) -> f64 {
        let k1 = self.rhs(x);
        let k2 = self.rhs(x + 0.5 * h * k1);
        let k3 = self.rhs(x + 0.5 * h * k2);
        let k4 = self.rhs(x + h * k3);
        (x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0)
    }

    fn advance_normalized(&self, x: f64, duration: f64, resolution: f64) -> f64 {
        if duration <= 0.0 || x <= 0.0 || self.is_lossless() {
            return x;
        }
        // The rate is largest at the start, so this bound holds throughout.
        let steps = (duration * self.rate(x) / resolution).ceil().max(1.0) as usize;
        let h = duration / steps as f64;
        (0..steps).fold(x, |x, _| self.rk4(x, h))
    }

    /// Population after `duration` seconds starting from `n` (same units as
    /// the curve, i.e. `n / n_unit` is the normalised value).
    pub fn evolve(&self, n: f64, duration: f64) -> f64 {
        self.advance_normalized(n / self.n_unit, duration, DEFAULT_RESOLUTION) * self.n_unit
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// (t in s, n) pairs.
    pub samples: Vec<(f64, f64)>,
    pub n0: f64,
}

impl DecayCurve {
    pub fn validate(&self) -> Result<()> {
        if self.samples.iter().any(|(t, n)| !t.is_finite() || !n.is_finite()) || !self.n0.is_finite() {
            return Err(Error::NonFinite("decay curve"));
        }
        if self.samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParameter("decay curve times must be strictly increasing".into()));
        }
        if self.n0 < 0.0 || self.samples.iter().any(|s| s.1 < 0.0) {
            return Err(Error::InvalidParameter("decay curve values must be >= 0".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }
}

/// Integrate from `n0` at t = 0 to every time in `t_grid`.
pub fn integrate_loss(p: &LossParams, n0: f64, t_grid: &[f64]) -> Result<DecayCurve> {
    integrate_loss_resolved(p, n0, t_grid, DEFAULT_RESOLUTION)
}

/// [`integrate_loss`] with an explicit step bound `h·rate ≤ resolution`.
pub fn integrate_loss_resolved(p: &LossParams, n0: f64, t_grid: &[f64], resolution: f64) -> Result<DecayCurve> {
    p.validate()?;
    if !n0.is_finite() || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("loss integration input"));
    }
    if n0 < 0.0 {
        return Err(Error::InvalidParameter(format!("initial population must be >= 0, got {n0}")));
    }
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(Error::InvalidParameter(format!("resolution must be in (0, 0.1], got {resolution}")));
    }
    if t_grid.first().is_some_and(|&t| t < 0.0) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be non-negative and strictly increasing".into()));
    }
    let mut x = n0 / p.n_unit;
    let mut t = 0.0;
    let samples = t_grid
        .iter()
        .map(|&ti| {
            x = p.advance_normalized(x, ti - t, resolution);
            t = ti;
            (ti, x * p.n_unit)
        })
        .collect();
    Ok(DecayCurve { samples, n0 })
}

/// Time for the population to fall from `n0` to `n0/2`, seconds.
pub fn half_life(p: &LossParams, n0: f64) -> Result<f64> {
    p.validate()?;
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::InvalidParameter(format!("initial population must be > 0, got {n0}")));
    }
    if p.is_lossless() {
        return Err(Error::NoDecay);
    }
    let x0 = n0 / p.n_unit;
    let target = 0.5 * x0;
    let h = DEFAULT_RESOLUTION / p.rate(x0);
    let (mut t, mut x) = (0.0, x0);
    loop {
        let next = p.rk4(x, h);
        if next <= target {
            break;
        }
        x = next;
        t += h;
    }
    // Bisect on the length of the final partial step.
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if p.rk4(x, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(t + 0.5 * (lo + hi))
}

/// Scale the weighting `(α, β)` so that the half-life from `n0` equals
/// `target` seconds.
pub fn calibrate_to_halflife(target: f64, n0: f64, ratio: (f64, f64)) -> Result<LossParams> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::UnreachableTarget(target));
    }
    let (a, b) = ratio;
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 || a + b == 0.0 {
        return Err(Error::UnreachableTarget(target));
    }
    let norm = a.max(b);
    let unit = LossParams::new(a / norm, b / norm);
    // t½ is inversely proportional to a common scale factor, so the root of
    // t½(k) = target is found directly; one correction pass absorbs rounding.
    let mut k = half_life(&unit, n0)? / target;
    for _ in 0..3 {
        let t = half_life(&unit.scaled(k), n0)?;
        if ((t - target) / target).abs() <= 1e-9 {
            break;
        }
        k *= t / target;
    }
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::UnreachableTarget(target));
    }
    Ok(unit.scaled(k))
}

/// A quoted value with its one-sigma uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quoted {
    pub value: f64,
    pub sigma: f64,
}

/// Measured loss samples: spin-polarised −7/2, spin-polarised −5/2 and the
/// −7/2/−5/2 mixture in F = 7/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossPreset {
    M7h,
    M5h,
    Mixture,
}

impl LossPreset {
    pub const ALL: [LossPreset; 3] = [LossPreset::M7h, LossPreset::M5h, LossPreset::Mixture];

    pub fn name(self) -> &'static str {
        match self {
            LossPreset::M7h => "m7h",
            LossPreset::M5h => "m5h",
            LossPreset::Mixture => "mixture",
        }
    }

    /// Measured half-life, seconds.
    pub fn half_life(self) -> f64 {
        match self {
            LossPreset::M7h => 2.0,
            LossPreset::M5h => 0.7,
            LossPreset::Mixture => 0.05,
        }
    }

    /// Fitted (α, β) as quoted. These are not mutually consistent with the
    /// half-lives under any simple normalisation of N and serve only as the
    /// α:β weighting for calibration.
    pub fn quoted(self) -> (Quoted, Quoted) {
        let q = |value, sigma| Quoted { value, sigma };
        match self {
            LossPreset::M7h => (q(0.4e-3, 0.2e-3), q(0.1, 0.2)),
            LossPreset::M5h => (q(6e-4, 3e-4), q(1.2e-3, 0.5e-3)),
            LossPreset::Mixture => (q(0.0, 2e-3), q(2.9e-2, 0.4e-2)),
        }
    }

    /// Coefficients with the quoted α:β weighting, scaled to the measured
    /// half-life from N = `n0`.
    pub fn calibrated(self, n0: f64) -> Result<LossParams> {
        let (a, b) = self.quoted();
        calibrate_to_halflife(self.half_life(), n0, (a.value, b.value))
    }
}

impl std::str::FromStr for LossPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown loss preset '{s}' (m7h, m5h, mixture)")))
    }
}

/// Least-squares fit of (α, β) to a decay curve, in normalised units with
/// `n_unit = 1`. `params` = [α, β]; `residual_ss` is in units of N².
pub fn fit_loss(curve: &DecayCurve) -> Result<FitResult> {
    curve.validate()?;
    if curve.samples.len() < 5 {
        return Err(Error::TooFewSamples { need: 5, got: curve.samples.len() });
    }
    let times = curve.times();
    let n0 = curve.n0;
    let cost = |u: &[f64]| -> f64 {
        let p = LossParams::new(u[0] * u[0], u[1] * u[1]);
        match integrate_loss(&p, n0, &times) {
            Ok(c) => c.samples.iter().zip(&curve.samples).map(|(m, d)| (m.1 - d.1).powi(2)).sum(),
            Err(_) => f64::INFINITY,
        }
    };

    // Effective two-body rate from the end points seeds both coefficients.
    let (t_end, n_end) = *curve.samples.last().unwrap();
    let k = if n0 > 0.0 && n_end > 0.0 && t_end > 0.0 { ((1.0 / n_end - 1.0 / n0) / t_end).max(0.0) } else { 0.0 };
    let x0 = if k > 0.0 { vec![(0.5 * k).sqrt(), (0.5 * k / n0).sqrt()] } else { vec![0.0, 0.0] };
    let opts = SimplexOptions {
        f_tolerance: 1e-22,
        x_tolerance: 1e-12,
        restarts: 4,
        initial_step: x0.iter().map(|v| if *v > 0.0 { 0.3 * v } else { 1e-3 }).collect(),
        ..Default::default()
    };
    let r = simplex_minimize(cost, &x0, &opts);
    Ok(FitResult {
        params: vec![r.params[0] * r.params[0], r.params[1] * r.params[1]],
        residual_ss: r.residual_ss,
        iterations: r.iterations,
        converged: r.converged,
    })
}
