//! Raised-cosine fringe fits with a fixed period.
//!
//! The model `y = offset + A·(1 + cos(2π(x − φ)/P))/2` is linear in the
//! offset and amplitudes, so those are solved exactly for every trial phase
//! and only φ is searched (coarse scan, then simplex refinement).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::{simplex_minimize, FitResult, SimplexOptions};
use crate::{Error, Result};

const PHASE_SCAN: usize = 64;
const MIN_POINTS: usize = 8;

fn raised_cosine(x: f64, phase: f64, period: f64) -> f64 {
    0.5 * (1.0 + (2.0 * PI * (x - phase) / period).cos())
}

fn check_channel(scan: &[(f64, f64)], period: f64) -> Result<()> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidParameter(format!("fringe period must be > 0, got {period}")));
    }
    if scan.len() < MIN_POINTS {
        return Err(Error::TooFewSamples { need: MIN_POINTS, got: scan.len() });
    }
    if scan.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("fringe data"));
    }
    let lo = scan.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = scan.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < period * (1.0 - 1e-9) {
        return Err(Error::Degenerate(format!("scan spans {} but period is {period}", hi - lo)));
    }
    Ok(())
}

/// Linear least squares for channel amplitudes and a shared offset at fixed
/// phase. Returns (coefficients [offset, A₀, A₁, …], residual sum of squares).
fn solve_linear(channels: &[&[(f64, f64)]], phase: f64, period: f64) -> (Vec<f64>, f64) {
    let rows: usize = channels.iter().map(|c| c.len()).sum();
    let cols = 1 + channels.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut y = DVector::<f64>::zeros(rows);
    let mut r = 0;
    for (k, ch) in channels.iter().enumerate() {
        for &(x, v) in ch.iter() {
            a[(r, 0)] = 1.0;
            a[(r, 1 + k)] = raised_cosine(x, phase, period);
            y[r] = v;
            r += 1;
        }
    }
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(cols));
    let resid = (&a * &coef - &y).norm_squared();
    (coef.iter().copied().collect(), resid)
}

fn fit_phase(channels: &[&[(f64, f64)]], period: f64) -> (f64, Vec<f64>, f64, usize, bool) {
    let mut best = (0.0, f64::INFINITY);
    for k in 0..PHASE_SCAN {
        let phase = period * k as f64 / PHASE_SCAN as f64;
        let (_, ss) = solve_linear(channels, phase, period);
        if ss < best.1 {
            best = (phase, ss);
        }
    }
    let opts = SimplexOptions {
        initial_step: vec![period / PHASE_SCAN as f64],
        x_tolerance: 1e-12 * period,
        f_tolerance: 0.0,
        ..Default::default()
    };
    let res = simplex_minimize(|p| solve_linear(channels, p[0], period).1, &[best.0], &opts);
    let phase = res.params[0];
    let (coef, ss) = solve_linear(channels, phase, period);
    (phase, coef, ss, res.iterations, res.converged)
}

/// Flip negative amplitudes into the equivalent positive form and wrap the
/// phase into `[0, P)`. Only valid when all amplitudes share a sign.
fn canonical(mut phase: f64, mut coef: Vec<f64>, period: f64) -> (f64, Vec<f64>) {
    let total: f64 = coef[1..].iter().sum();
    if total < 0.0 {
        phase += 0.5 * period;
        coef[0] += total;
        for a in &mut coef[1..] {
            *a = -*a;
        }
    }
    (phase.rem_euclid(period), coef)
}

/// Fit one channel. `params` = [amplitude, phase, offset].
pub fn fit_fringe(scan: &[(f64, f64)], period: f64) -> Result<FitResult> {
    check_channel(scan, period)?;
    let (phase, coef, ss, iterations, converged) = fit_phase(&[scan], period);
    let (phase, coef) = canonical(phase, coef, period);
    Ok(FitResult { params: vec![coef[1], phase, coef[0]], residual_ss: ss, iterations, converged })
}

/// Fit one channel with the period free as well, starting from `guess`.
/// `params` = [amplitude, phase, offset, period].
pub fn fit_fringe_period(scan: &[(f64, f64)], guess: f64) -> Result<FitResult> {
    check_channel(scan, guess)?;
    let opts = SimplexOptions {
        initial_step: vec![0.02 * guess],
        x_tolerance: 1e-10 * guess,
        f_tolerance: 0.0,
        ..Default::default()
    };
    let cost = |p: &[f64]| {
        if !(p[0] > 0.5 * guess && p[0] < 2.0 * guess) {
            return f64::INFINITY;
        }
        fit_phase(&[scan], p[0]).2
    };
    let res = simplex_minimize(cost, &[guess], &opts);
    let period = res.params[0];
    let (phase, coef, ss, _, _) = fit_phase(&[scan], period);
    let (phase, coef) = canonical(phase, coef, period);
    Ok(FitResult {
        params: vec![coef[1], phase, coef[0], period],
        residual_ss: ss,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Two channels with a common phase and offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringePair {
    pub amplitudes: [f64; 2],
    pub phase: f64,
    pub offset: f64,
    /// Each amplitude as a fraction of their sum.
    pub shares: [f64; 2],
    pub fit: FitResult,
}

pub fn fit_fringe_pair(a: &[(f64, f64)], b: &[(f64, f64)], period: f64) -> Result<FringePair> {
    check_channel(a, period)?;
    check_channel(b, period)?;
    let (phase, coef, ss, iterations, converged) = fit_phase(&[a, b], period);
    let (phase, coef) = canonical(phase, coef, period);
    let sum = coef[1] + coef[2];
    if sum == 0.0 {
        return Err(Error::Degenerate("both fringe amplitudes vanish".into()));
    }
    Ok(FringePair {
        amplitudes: [coef[1], coef[2]],
        phase,
        offset: coef[0],
        shares: [coef[1] / sum, coef[2] / sum],
        fit: FitResult { params: vec![coef[1], coef[2], phase, coef[0]], residual_ss: ss, iterations, converged },
    })
}
