//! Five-step single-layer preparation on a per-layer population grid.
//!
//! Steps: A (transition 2), B (transition 1), C (removal of F = 9/2),
//! D (transition 1 back), E (transition 2 back), then an optical repump.
//! Populations rather than amplitudes are carried between steps; each pulse
//! moves population between its two endpoint states with the probability
//! returned by [`crate::passage`] for that layer's resonance offset.

use serde::{Deserialize, Serialize};

use crate::dynfit::{LossParams, LossPreset};
use crate::fieldmap::{layer_shift, Envelope, FieldConfig, LatticeGeometry, TransitionId, ZeemanModel};
use crate::passage::{Hs1Params, TransferSolver};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InternalState {
    /// |9/2, −9/2⟩ = ↑
    G9m9h,
    /// |9/2, −7/2⟩ = ↓
    G9m7h,
    G9m5h,
    G7m7h,
    G7m5h,
    /// Out-of-focus atoms that survived a removal pulse by decaying to F = 7/2.
    Bg,
}

pub const STATE_COUNT: usize = 6;

impl InternalState {
    pub const ALL: [InternalState; STATE_COUNT] = [
        InternalState::G9m9h,
        InternalState::G9m7h,
        InternalState::G9m5h,
        InternalState::G7m7h,
        InternalState::G7m5h,
        InternalState::Bg,
    ];
    pub const UP: InternalState = InternalState::G9m9h;
    pub const DOWN: InternalState = InternalState::G9m7h;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_f9(self) -> bool {
        matches!(self, InternalState::G9m9h | InternalState::G9m7h | InternalState::G9m5h)
    }

    pub fn name(self) -> &'static str {
        match self {
            InternalState::G9m9h => "G9_m9h",
            InternalState::G9m7h => "G9_m7h",
            InternalState::G9m5h => "G9_m5h",
            InternalState::G7m7h => "G7_m7h",
            InternalState::G7m5h => "G7_m5h",
            InternalState::Bg => "BG",
        }
    }
}

/// (F = 9/2 state, F = 7/2 state) coupled by a microwave transition.
pub fn transition_states(t: TransitionId) -> (InternalState, InternalState) {
    match t {
        TransitionId::T1 => (InternalState::G9m9h, InternalState::G7m7h),
        TransitionId::T2 => (InternalState::G9m7h, InternalState::G7m5h),
        TransitionId::T3 => (InternalState::G9m5h, InternalState::G7m7h),
    }
}

/// Named initial spin compositions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinPreset {
    Equal,
    /// Composition of the layer-scan data set.
    Scan,
    /// Composition of the transfer-characterisation data set.
    Transfer,
}

impl SpinPreset {
    pub fn up_fraction(self) -> f64 {
        match self {
            SpinPreset::Equal => 0.5,
            SpinPreset::Scan => 0.58,
            SpinPreset::Transfer => 0.52,
        }
    }
}

impl std::str::FromStr for SpinPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(SpinPreset::Equal),
            "scan" => Ok(SpinPreset::Scan),
            "transfer" => Ok(SpinPreset::Transfer),
            _ => Err(Error::InvalidParameter(format!("unknown spin preset '{s}' (equal, scan, transfer)"))),
        }
    }
}

/// Populations by layer and internal state, as fractions of the initial
/// total atom number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationGrid {
    pub geometry: LatticeGeometry,
    pub spin_up_fraction: f64,
    initial: Vec<f64>,
    values: Vec<[f64; STATE_COUNT]>,
}

fn envelope_weights(geom: &LatticeGeometry) -> Vec<f64> {
    let raw: Vec<f64> = geom
        .layers()
        .map(|n| match geom.envelope {
            Envelope::Uniform => 1.0,
            Envelope::Gaussian { sigma } => {
                let d = (n - geom.focus) as f64 / sigma;
                (-0.5 * d * d).exp()
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Distribute unit population over the register by the envelope, split
/// between ↑ and ↓.
pub fn init_grid(geom: &LatticeGeometry, spin_up_fraction: f64) -> Result<PopulationGrid> {
    geom.validate()?;
    if !(0.0..=1.0).contains(&spin_up_fraction) {
        return Err(Error::InvalidParameter(format!("spin_up_fraction must be in [0, 1], got {spin_up_fraction}")));
    }
    let initial = envelope_weights(geom);
    let values = initial
        .iter()
        .map(|&w| {
            let mut v = [0.0; STATE_COUNT];
            v[InternalState::UP.index()] = w * spin_up_fraction;
            v[InternalState::DOWN.index()] = w * (1.0 - spin_up_fraction);
            v
        })
        .collect();
    Ok(PopulationGrid { geometry: geom.clone(), spin_up_fraction, initial, values })
}

impl PopulationGrid {
    pub fn layers(&self) -> std::ops::RangeInclusive<i32> {
        self.geometry.layers()
    }

    fn slot(&self, n: i32) -> Option<usize> {
        let lo = *self.layers().start();
        let i = n - lo;
        (i >= 0 && (i as usize) < self.values.len()).then_some(i as usize)
    }

    /// Populations of layer `n`; zero outside the register.
    pub fn layer(&self, n: i32) -> [f64; STATE_COUNT] {
        self.slot(n).map_or([0.0; STATE_COUNT], |i| self.values[i])
    }

    pub fn get(&self, n: i32, s: InternalState) -> f64 {
        self.layer(n)[s.index()]
    }

    /// Population of layer `n` before any operation.
    pub fn initial_layer(&self, n: i32) -> f64 {
        self.slot(n).map_or(0.0, |i| self.initial[i])
    }

    /// Initial population of the focus layer; the loss model's unit density.
    pub fn reference_population(&self) -> f64 {
        self.initial_layer(self.geometry.focus)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    pub fn state_total(&self, s: InternalState) -> f64 {
        self.values.iter().map(|v| v[s.index()]).sum()
    }

    pub fn layer_total(&self, n: i32) -> f64 {
        self.layer(n).iter().sum()
    }

    /// F = 9/2 population of layer `n`.
    pub fn f9_in_layer(&self, n: i32) -> f64 {
        let v = self.layer(n);
        InternalState::ALL.iter().filter(|s| s.is_f9()).map(|s| v[s.index()]).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &[f64; STATE_COUNT])> {
        self.layers().zip(self.values.iter())
    }

    fn map_layers(&self, mut f: impl FnMut(i32, &mut [f64; STATE_COUNT])) -> Self {
        let mut out = self.clone();
        let lo = *self.layers().start();
        for (i, v) in out.values.iter_mut().enumerate() {
            f(lo + i as i32, v);
        }
        out
    }
}

/// Field and Zeeman model that convert layer index into resonance offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldContext {
    pub field: FieldConfig,
    pub zeeman: ZeemanModel,
}

impl FieldContext {
    pub fn calibrated() -> Self {
        Self { field: FieldConfig::calibrated(), zeeman: ZeemanModel::linear_calibrated() }
    }

    /// Δ for transition `t`, kHz per layer.
    pub fn shift(&self, geom: &LatticeGeometry, t: TransitionId) -> f64 {
        layer_shift(&self.zeeman, geom, &self.field, t)
    }
}

/// Per-layer transfer probabilities of one pulse, ordered as the register.
pub fn layer_probabilities(
    geom: &LatticeGeometry,
    t: TransitionId,
    p: &Hs1Params,
    ctx: &FieldContext,
    ideal: bool,
) -> Result<Vec<f64>> {
    p.validate()?;
    let shift = ctx.shift(geom, t);
    if !shift.is_finite() {
        return Err(Error::NonFinite("layer shift"));
    }
    let offsets = geom.layers().map(|n| (n - geom.focus) as f64 * shift - p.delta_center);
    if ideal {
        let half = 0.5 * p.sweep_width;
        return Ok(offsets.map(|d| if d.abs() < half { 1.0 } else { 0.0 }).collect());
    }
    let solver = TransferSolver::with_default_step(&p.centered_at(0.0))?;
    Ok(offsets.map(|d| solver.probability(d)).collect())
}

/// Exchange population between the endpoints of `t` with the given
/// per-layer probabilities (symmetric in both directions).
pub fn apply_transfer(grid: &PopulationGrid, t: TransitionId, probs: &[f64]) -> PopulationGrid {
    let (a, b) = transition_states(t);
    let (a, b) = (a.index(), b.index());
    let lo = *grid.layers().start();
    grid.map_layers(|n, v| {
        let p = probs[(n - lo) as usize];
        let (x, y) = (v[a], v[b]);
        v[a] = (1.0 - p) * x + p * y;
        v[b] = p * x + (1.0 - p) * y;
    })
}

/// One HS1 pulse on transition `t` across every layer.
pub fn apply_microwave(
    grid: &PopulationGrid,
    t: TransitionId,
    p: &Hs1Params,
    ctx: &FieldContext,
) -> Result<PopulationGrid> {
    let probs = layer_probabilities(&grid.geometry, t, p, ctx, false)?;
    Ok(apply_transfer(grid, t, &probs))
}

/// Removal light: every F = 9/2 population is lost except a fraction `p_bg`
/// that decays into the F = 7/2 background.
pub fn apply_removal(grid: &PopulationGrid, p_bg: f64) -> PopulationGrid {
    grid.map_layers(|_, v| {
        let mut f9 = 0.0;
        for s in InternalState::ALL.into_iter().filter(|s| s.is_f9()) {
            f9 += v[s.index()];
            v[s.index()] = 0.0;
        }
        v[InternalState::Bg.index()] += p_bg * f9;
    })
}

/// Optical repump F = 7/2 → F = 9/2: G7_m7h → ↑, G7_m5h → ↓ and background
/// → ↑, each with the given efficiency.
pub fn apply_repump(grid: &PopulationGrid, efficiency: f64) -> PopulationGrid {
    let moves = [
        (InternalState::G7m7h, InternalState::G9m9h),
        (InternalState::G7m5h, InternalState::G9m7h),
        (InternalState::Bg, InternalState::G9m9h),
    ];
    grid.map_layers(|_, v| {
        for (from, to) in moves {
            let dn = efficiency * v[from.index()];
            v[from.index()] -= dn;
            v[to.index()] += dn;
        }
    })
}

/// Loss coefficients for F = 7/2 populations. The loss equation runs on
/// `N = population / reference_population · density_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub m7h: LossParams,
    pub m5h: LossParams,
    pub mixture: LossParams,
    pub density_scale: f64,
    /// A G7 state counts as occupied above this share of the layer's G7
    /// population; mixture rates apply when both are occupied.
    pub occupancy_threshold: f64,
    pub enabled: bool,
}

impl LossModel {
    /// Each sample calibrated to its measured half-life at N = 1.
    pub fn calibrated() -> Result<Self> {
        Ok(Self {
            m7h: LossPreset::M7h.calibrated(1.0)?,
            m5h: LossPreset::M5h.calibrated(1.0)?,
            mixture: LossPreset::Mixture.calibrated(1.0)?,
            density_scale: 1.0,
            occupancy_threshold: 0.05,
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        Self {
            m7h: LossParams::none(),
            m5h: LossParams::none(),
            mixture: LossParams::none(),
            density_scale: 1.0,
            occupancy_threshold: 0.05,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.m7h, &self.m5h, &self.mixture] {
            p.validate()?;
        }
        if !(self.density_scale > 0.0 && self.density_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("density_scale must be > 0, got {}", self.density_scale)));
        }
        if !(0.0..1.0).contains(&self.occupancy_threshold) {
            return Err(Error::InvalidParameter(format!(
                "occupancy_threshold must be in [0, 1), got {}",
                self.occupancy_threshold
            )));
        }
        Ok(())
    }
}

/// Two/three-body loss on the G7 populations of every layer for
/// `duration` ms.
pub fn apply_loss_interval(grid: &PopulationGrid, duration: f64, loss: &LossModel) -> PopulationGrid {
    if !loss.enabled || duration <= 0.0 {
        return grid.clone();
    }
    let reference = grid.reference_population();
    if reference <= 0.0 {
        return grid.clone();
    }
    let (i7, i5) = (InternalState::G7m7h.index(), InternalState::G7m5h.index());
    let seconds = duration * 1e-3;
    grid.map_layers(|_, v| {
        let (a, b) = (v[i7], v[i5]);
        let sum = a + b;
        if sum <= 0.0 {
            return;
        }
        let cut = loss.occupancy_threshold * sum;
        let params = match (a > cut, b > cut) {
            (true, true) => &loss.mixture,
            (true, false) => &loss.m7h,
            _ => &loss.m5h,
        };
        let n = sum / reference * loss.density_scale;
        let kept = params.evolve(n, seconds) / n;
        v[i7] = a * kept;
        v[i5] = b * kept;
    })
}

/// Which spin components a run addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinSelection {
    /// Steps B, C, D.
    Up,
    /// Steps A, C, E.
    Down,
    /// All five steps.
    Both,
}

impl SpinSelection {
    pub const ALL: [SpinSelection; 3] = [SpinSelection::Up, SpinSelection::Down, SpinSelection::Both];

    pub fn name(self) -> &'static str {
        match self {
            SpinSelection::Up => "up",
            SpinSelection::Down => "down",
            SpinSelection::Both => "both",
        }
    }

    fn up(self) -> bool {
        self != SpinSelection::Down
    }

    fn down(self) -> bool {
        self != SpinSelection::Up
    }
}

impl std::str::FromStr for SpinSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpinSelection::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown spin selection '{s}' (up, down, both)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Transition 2, ↓ out.
    pub pulse_a: Hs1Params,
    /// Transition 1, ↑ out.
    pub pulse_b: Hs1Params,
    /// Transition 1, ↑ back.
    pub pulse_d: Hs1Params,
    /// Transition 2, ↓ back.
    pub pulse_e: Hs1Params,
    pub removal_survival: f64,
    /// ms; counts toward loss exposure only.
    pub removal_duration: f64,
    pub repump_efficiency: f64,
    pub repetitions: u32,
    pub spins: SpinSelection,
    pub loss: LossModel,
    pub context: FieldContext,
    /// Replace solved pulses by a rectangular window of width δ⁰.
    pub ideal_pulses: bool,
    /// Weight of out-of-focus F = 9/2 atoms in the fluorescence signal.
    pub background_weight: f64,
    /// When set, layer scans replace `background_weight` by the value that
    /// puts the signal minimum between two layers at this level.
    pub background_level: Option<f64>,
    /// δ₂ᶜ/δ₁ᶜ in two-spin layer scans.
    pub both_ratio: f64,
}

impl ProtocolConfig {
    pub fn calibrated(duration: f64) -> Result<Self> {
        let t1 = Hs1Params::transition1(duration);
        let t2 = Hs1Params::transition2(duration);
        Ok(Self {
            pulse_a: t2.clone(),
            pulse_b: t1.clone(),
            pulse_d: t1,
            pulse_e: t2,
            removal_survival: 0.003,
            removal_duration: 0.5,
            repump_efficiency: 1.0,
            repetitions: 2,
            spins: SpinSelection::Both,
            loss: LossModel::calibrated()?,
            context: FieldContext::calibrated(),
            ideal_pulses: false,
            background_weight: 1.0,
            background_level: Some(0.032),
            both_ratio: 0.75,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.pulse_a, &self.pulse_b, &self.pulse_d, &self.pulse_e] {
            p.validate()?;
        }
        if !(0.0..=0.01).contains(&self.removal_survival) {
            return Err(Error::InvalidParameter(format!(
                "removal_survival must be in [0, 0.01], got {}",
                self.removal_survival
            )));
        }
        if !(self.removal_duration >= 0.0 && self.removal_duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("removal_duration must be >= 0, got {}", self.removal_duration)));
        }
        if !(0.0..=1.0).contains(&self.repump_efficiency) {
            return Err(Error::InvalidParameter(format!(
                "repump_efficiency must be in [0, 1], got {}",
                self.repump_efficiency
            )));
        }
        if !(1..=2).contains(&self.repetitions) {
            return Err(Error::InvalidParameter(format!("repetitions must be 1 or 2, got {}", self.repetitions)));
        }
        if !(self.background_weight >= 0.0 && self.background_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("background_weight must be >= 0, got {}", self.background_weight)));
        }
        if let Some(level) = self.background_level {
            if !(0.0..1.0).contains(&level) {
                return Err(Error::InvalidParameter(format!("background_level must be in [0, 1), got {level}")));
            }
        }
        if !(self.both_ratio > 0.0 && self.both_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("both_ratio must be > 0, got {}", self.both_ratio)));
        }
        self.loss.validate()?;
        self.context.field.validate()?;
        self.context.zeeman.validate()
    }

    /// Centre the transition 1 pulses at `delta1` and transition 2 at `delta2`.
    pub fn with_centers(&self, delta1: f64, delta2: f64) -> Self {
        let mut c = self.clone();
        c.pulse_b.delta_center = delta1;
        c.pulse_d.delta_center = delta1;
        c.pulse_a.delta_center = delta2;
        c.pulse_e.delta_center = delta2;
        c
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        let mut c = self.clone();
        for p in [&mut c.pulse_a, &mut c.pulse_b, &mut c.pulse_d, &mut c.pulse_e] {
            p.duration = duration;
        }
        c
    }

    fn probabilities(&self, geom: &LatticeGeometry, t: TransitionId, p: &Hs1Params) -> Result<Vec<f64>> {
        layer_probabilities(geom, t, p, &self.context, self.ideal_pulses)
    }
}

/// Execute the preparation sequence `repetitions` times.
///
/// Loss exposure starts when the first pulse of a repetition completes; each
/// later step then contributes its own duration, applied to the state it
/// leaves behind.
pub fn run_protocol(config: &ProtocolConfig, grid: &PopulationGrid) -> Result<PopulationGrid> {
    config.validate()?;
    let geom = &grid.geometry;
    let (up, down) = (config.spins.up(), config.spins.down());
    let probs_a = if down { Some(config.probabilities(geom, TransitionId::T2, &config.pulse_a)?) } else { None };
    let probs_e = match &probs_a {
        Some(a) if config.pulse_e == config.pulse_a => Some(a.clone()),
        Some(_) => Some(config.probabilities(geom, TransitionId::T2, &config.pulse_e)?),
        None => None,
    };
    let probs_b = if up { Some(config.probabilities(geom, TransitionId::T1, &config.pulse_b)?) } else { None };
    let probs_d = match &probs_b {
        Some(b) if config.pulse_d == config.pulse_b => Some(b.clone()),
        Some(_) => Some(config.probabilities(geom, TransitionId::T1, &config.pulse_d)?),
        None => None,
    };

    let mut g = grid.clone();
    for _ in 0..config.repetitions {
        let mut exposed = false;
        let step = |g: PopulationGrid, duration: f64, exposed: &mut bool| {
            let out = if *exposed { apply_loss_interval(&g, duration, &config.loss) } else { g };
            *exposed = true;
            out
        };
        if let Some(p) = &probs_a {
            g = step(apply_transfer(&g, TransitionId::T2, p), config.pulse_a.duration, &mut exposed);
        }
        if let Some(p) = &probs_b {
            g = step(apply_transfer(&g, TransitionId::T1, p), config.pulse_b.duration, &mut exposed);
        }
        g = step(apply_removal(&g, config.removal_survival), config.removal_duration, &mut exposed);
        if let Some(p) = &probs_d {
            g = step(apply_transfer(&g, TransitionId::T1, p), config.pulse_d.duration, &mut exposed);
        }
        if let Some(p) = &probs_e {
            g = step(apply_transfer(&g, TransitionId::T2, p), config.pulse_e.duration, &mut exposed);
        }
        g = apply_repump(&g, config.repump_efficiency);
    }
    Ok(g)
}

/// (F = 9/2 population of the imaged layer, everything else that can
/// scatter light).
pub fn fluorescence_parts(grid: &PopulationGrid, focus: i32) -> (f64, f64) {
    let mut signal = 0.0;
    let mut background = 0.0;
    for (n, v) in grid.iter() {
        let f9: f64 = InternalState::ALL.iter().filter(|s| s.is_f9()).map(|s| v[s.index()]).sum();
        if n == focus {
            signal += f9;
        } else {
            background += f9;
        }
        background += v[InternalState::Bg.index()];
    }
    (signal, background)
}

/// Fluorescence proxy: F = 9/2 atoms in the imaged layer plus
/// `background_weight` times out-of-focus F = 9/2 and background atoms.
pub fn fluorescence_signal(grid: &PopulationGrid, focus: i32, background_weight: f64) -> f64 {
    let (s, b) = fluorescence_parts(grid, focus);
    s + background_weight * b
}

/// Normalised (imaged-layer, background) parts of one scan point.
struct ScanParts {
    delta2: f64,
    layer: i32,
    focus: f64,
    background: f64,
}

fn scan_parts(
    config: &ProtocolConfig,
    grid0: &PopulationGrid,
    spins: SpinSelection,
    centers: &[f64],
) -> Result<Vec<ScanParts>> {
    let geom = &grid0.geometry;
    let shift1 = config.context.shift(geom, TransitionId::T1);
    let shift2 = config.context.shift(geom, TransitionId::T2);
    if !(shift1 > 0.0) {
        return Err(Error::InvalidParameter("transition 1 layer shift vanishes".into()));
    }
    let run = |&delta1: &f64| -> Result<ScanParts> {
        let delta2 = match spins {
            SpinSelection::Both => config.both_ratio * delta1,
            _ => delta1 * shift2 / shift1,
        };
        let mut cfg = config.with_centers(delta1, delta2);
        cfg.spins = spins;
        let out = run_protocol(&cfg, grid0)?;
        let layer = geom.focus + (delta1 / shift1).round() as i32;
        let norm = grid0.initial_layer(layer);
        let (f, b) = fluorescence_parts(&out, layer);
        let (focus, background) = if norm > 0.0 { (f / norm, b / norm) } else { (0.0, 0.0) };
        Ok(ScanParts { delta2, layer, focus, background })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        centers.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        centers.iter().map(run).collect()
    }
}

/// Samples per layer period used by [`calibrate_background_weight`].
pub const BACKGROUND_SAMPLES: usize = 97;

/// Background weight `w` for which the scan signal `focus + w·background`
/// has its minimum over one layer period (δ₁ᶜ ∈ [0, Δ₁]) at `level`.
/// Zero when the imaged layer alone already exceeds `level`.
pub fn calibrate_background_weight(
    config: &ProtocolConfig,
    grid0: &PopulationGrid,
    spins: SpinSelection,
    level: f64,
) -> Result<f64> {
    let shift1 = config.context.shift(&grid0.geometry, TransitionId::T1);
    let centers: Vec<f64> = (0..BACKGROUND_SAMPLES)
        .map(|i| shift1 * i as f64 / (BACKGROUND_SAMPLES - 1) as f64)
        .collect();
    let parts = scan_parts(config, grid0, spins, &centers)?;
    let floor = |w: f64| parts.iter().map(|p| p.focus + w * p.background).fold(f64::INFINITY, f64::min);
    if floor(0.0) >= level {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while floor(hi) < level {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Degenerate("no background to calibrate against".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if floor(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub delta1: f64,
    pub delta2: f64,
    /// Layer addressed by transition 1 and imaged.
    pub layer: i32,
    /// Fluorescence normalised to that layer's initial population.
    pub signal: f64,
    /// Imaged-layer F = 9/2 part of `signal`, same normalisation.
    pub focus: f64,
    /// Unweighted out-of-focus and background part, same normalisation.
    pub background: f64,
}

/// One protocol run per transition 1 centre frequency. The imaged layer
/// follows the addressed one. Transition 2 is centred at `Δ₂/Δ₁·δ₁ᶜ` for a
/// ↓-only scan and at `both_ratio·δ₁ᶜ` for a two-spin scan.
pub fn simulate_layer_scan(
    config: &ProtocolConfig,
    grid0: &PopulationGrid,
    spins: SpinSelection,
    centers: &[f64],
) -> Result<Vec<ScanPoint>> {
    config.validate()?;
    let w = match config.background_level {
        Some(level) => calibrate_background_weight(config, grid0, spins, level)?,
        None => config.background_weight,
    };
    Ok(scan_parts(config, grid0, spins, centers)?
        .into_iter()
        .zip(centers)
        .map(|(p, &delta1)| ScanPoint {
            delta1,
            delta2: p.delta2,
            layer: p.layer,
            signal: p.focus + w * p.background,
            focus: p.focus,
            background: p.background,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPoint {
    pub delta2: f64,
    /// Layer whose transition 3 resonance is nearest to `delta2`.
    pub nearest_layer: i32,
    pub signal: f64,
}

/// Layer matching: B at `delta1`, a transition 3 pulse (shaped like pulse E)
/// at each `delta2`, removal, repump. Atoms the transition 3 pulse catches
/// are removed, so the signal dips where both pulses address one layer.
/// The grid must hold ↑ atoms only. With `background_level` set, the
/// background weight is chosen so that the background alone reads that
/// level on the plateau.
pub fn simulate_layer_matching(
    config: &ProtocolConfig,
    grid0: &PopulationGrid,
    delta1: f64,
    delta2: &[f64],
) -> Result<Vec<MatchPoint>> {
    config.validate()?;
    if grid0.state_total(InternalState::DOWN) > 0.0 {
        return Err(Error::InvalidParameter("layer matching starts from a ↑-only grid".into()));
    }
    let geom = &grid0.geometry;
    let shift1 = config.context.shift(geom, TransitionId::T1);
    let shift3 = config.context.shift(geom, TransitionId::T3);
    if !(shift1 > 0.0 && shift3 > 0.0) {
        return Err(Error::InvalidParameter("layer shift vanishes".into()));
    }
    let pulse_b = config.pulse_b.centered_at(delta1);
    let after_b = apply_transfer(grid0, TransitionId::T1, &config.probabilities(geom, TransitionId::T1, &pulse_b)?);
    let layer = geom.focus + (delta1 / shift1).round() as i32;
    let norm = grid0.initial_layer(layer);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter(format!("layer {layer} holds no atoms")));
    }

    // One solver serves every δ₂ᶜ: only the offset changes.
    let t3 = config.pulse_e.centered_at(0.0);
    let solver = if config.ideal_pulses { None } else { Some(TransferSolver::with_default_step(&t3)?) };
    let finish = |probs: Option<Vec<f64>>| -> (f64, f64) {
        let mut g = match probs {
            Some(p) => apply_transfer(&after_b, TransitionId::T3, &p),
            None => after_b.clone(),
        };
        g = apply_loss_interval(&g, t3.duration, &config.loss);
        g = apply_removal(&g, config.removal_survival);
        g = apply_loss_interval(&g, config.removal_duration, &config.loss);
        g = apply_repump(&g, config.repump_efficiency);
        let (f, b) = fluorescence_parts(&g, layer);
        (f / norm, b / norm)
    };
    // Without the transition 3 pulse the background is the plateau's.
    let w = match config.background_level {
        Some(level) => {
            let (_, b) = finish(None);
            if b > 0.0 { level / b } else { 0.0 }
        }
        None => config.background_weight,
    };
    let run = |&d2: &f64| -> MatchPoint {
        let probs: Vec<f64> = geom
            .layers()
            .map(|n| {
                let off = (n - geom.focus) as f64 * shift3 - d2;
                match &solver {
                    Some(s) => s.probability(off),
                    None => f64::from(u8::from(off.abs() < 0.5 * t3.sweep_width)),
                }
            })
            .collect();
        let (f, b) = finish(Some(probs));
        MatchPoint { delta2: d2, nearest_layer: geom.focus + (d2 / shift3).round() as i32, signal: f + w * b }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(delta2.par_iter().map(run).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(delta2.iter().map(run).collect())
    }
}
