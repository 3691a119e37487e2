//! TOML run configuration. Every key is optional; missing keys take the
//! calibrated presets, unknown keys are errors.

use serde::{Deserialize, Serialize};
use slicer_core::fieldmap::{
    Envelope, FieldConfig, LatticeGeometry, TransitionId, ZeemanModel, Vec3, CALIBRATED_GRADIENT,
    COIL_DISTANCE,
};
use slicer_core::passage::Hs1Params;
use slicer_core::protocol::{FieldContext, LossModel, ProtocolConfig, SpinPreset, SpinSelection};
use slicer_core::specimg::{CompensationBounds, ImagingConfig};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldSection,
    pub zeeman: ZeemanSection,
    pub lattice: LatticeSection,
    pub pulse: PulseSections,
    pub protocol: ProtocolSection,
    pub loss: LossSection,
    pub imaging: ImagingSection,
    pub profile: ProfileSection,
    pub scan: ScanSection,
    #[serde(rename = "match")]
    pub matching: MatchSection,
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldPreset {
    /// Bias plus quadrupole: 11.60 G and 7.27 mG/µm at the atoms.
    #[default]
    Calibrated,
    /// Quadrupole alone, zero 4 mm above the atoms.
    PureQuadrupole,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub preset: FieldPreset,
    /// G.
    pub bias: Option<Vec3>,
    /// mG/µm.
    pub quad_strength: Option<f64>,
    /// µm.
    pub quad_center: Option<Vec3>,
    /// G.
    pub shim: Option<[f64; 2]>,
    /// Hidden transverse displacement of the quadrupole zero, µm.
    pub stray: Option<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeemanName {
    #[default]
    Linear,
    BreitRabi,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeemanSection {
    pub mode: ZeemanName,
    /// kHz/mG per transition (linear mode only).
    pub kappa: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    /// µm.
    pub spacing: Option<f64>,
    pub layer_count: Option<usize>,
    pub focus: Option<i32>,
    /// Gaussian occupation width in layers; uniform when absent.
    pub envelope_sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    /// kHz.
    pub delta_center: Option<f64>,
    /// kHz.
    pub sweep_width: Option<f64>,
    /// kHz.
    pub rabi_peak: Option<f64>,
    /// ms.
    pub duration: Option<f64>,
    pub tau_ratio: Option<f64>,
}

impl PulseSection {
    fn apply(&self, mut p: Hs1Params) -> Hs1Params {
        p.delta_center = self.delta_center.unwrap_or(p.delta_center);
        p.sweep_width = self.sweep_width.unwrap_or(p.sweep_width);
        p.rabi_peak = self.rabi_peak.unwrap_or(p.rabi_peak);
        p.duration = self.duration.unwrap_or(p.duration);
        p.tau_ratio = self.tau_ratio.unwrap_or(p.tau_ratio);
        p
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSections {
    #[serde(rename = "A")]
    pub a: PulseSection,
    #[serde(rename = "B")]
    pub b: PulseSection,
    #[serde(rename = "D")]
    pub d: PulseSection,
    #[serde(rename = "E")]
    pub e: PulseSection,
    pub imaging: PulseSection,
}

/// A spin-up fraction given as a number or a preset name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpinFraction {
    Value(f64),
    Preset(String),
}

impl SpinFraction {
    pub fn resolve(&self) -> Result<f64, CliError> {
        match self {
            SpinFraction::Value(v) => Ok(*v),
            SpinFraction::Preset(name) => name
                .parse::<SpinPreset>()
                .map(SpinPreset::up_fraction)
                .map_err(|e| CliError::Usage(e.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Default duration of every pulse, ms.
    pub duration: f64,
    pub spin_up_fraction: SpinFraction,
    pub repetitions: u32,
    pub removal_survival: f64,
    /// ms.
    pub removal_duration: f64,
    pub repump_efficiency: f64,
    pub ideal_pulses: bool,
    /// Signal level between layer peaks, fraction of one layer.
    pub background_level: f64,
    /// Choose the background weight from `background_level` (otherwise use
    /// `background_weight` as given).
    pub calibrate_background: bool,
    pub background_weight: f64,
    pub both_ratio: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            duration: 1.0,
            spin_up_fraction: SpinFraction::Preset("equal".into()),
            repetitions: 2,
            removal_survival: 0.003,
            removal_duration: 0.5,
            repump_efficiency: 1.0,
            ideal_pulses: false,
            background_level: 0.032,
            calibrate_background: true,
            background_weight: 1.0,
            both_ratio: 0.75,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSynthesis {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub enabled: bool,
    pub density_scale: f64,
    pub occupancy_threshold: f64,
    /// Decay curve for `slicer loss`: m7h, m5h or mixture.
    pub preset: String,
    /// CSV with `t_s,n` columns to fit instead of a preset.
    pub input: Option<String>,
    pub samples: usize,
    /// Curve length in half-lives.
    pub span_half_lives: f64,
    pub n0: f64,
    pub synthesize: Option<LossSynthesis>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            enabled: true,
            density_scale: 1.0,
            occupancy_threshold: 0.05,
            preset: "mixture".into(),
            input: None,
            samples: 40,
            span_half_lives: 3.0,
            n0: 1.0,
            synthesize: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagingField {
    /// Pure quadrupole with the configured gradient, zero and shim.
    #[default]
    PureQuadrupole,
    /// The `[field]` configuration as given.
    Config,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShimSweep {
    /// "x" or "y".
    pub axis: String,
    /// G.
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSection {
    pub fov: f64,
    pub pixels: usize,
    pub layer_depth: usize,
    pub transition: String,
    /// kHz.
    pub window_center: f64,
    pub threshold: f64,
    pub field: ImagingField,
    /// Multiplicative noise; needs a seed.
    pub noise_sigma: f64,
    pub seed: Option<u64>,
    /// G.
    pub shim_limit: f64,
    pub initial_step: f64,
    pub max_iterations: usize,
    pub sweep: Option<ShimSweep>,
}

impl Default for ImagingSection {
    fn default() -> Self {
        let d = ImagingConfig::default();
        let b = CompensationBounds::default();
        Self {
            fov: d.fov,
            pixels: d.pixels,
            layer_depth: d.layer_depth,
            transition: "T1".into(),
            window_center: 0.0,
            threshold: 0.5,
            field: ImagingField::PureQuadrupole,
            noise_sigma: 0.0,
            seed: None,
            shim_limit: b.shim_limit[0],
            initial_step: b.initial_step,
            max_iterations: b.max_iterations,
            sweep: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub transition: String,
    /// ms.
    pub durations: Vec<f64>,
    /// Detuning grid half-width, kHz.
    pub span: f64,
    pub points: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { transition: "T1".into(), durations: vec![1.0], span: 15.0, points: 121 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub mode: String,
    pub points: usize,
    /// Grid width in layer periods.
    pub periods: f64,
    /// Overrides the protocol spin fraction for scans.
    pub spin_up_fraction: SpinFraction,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { mode: "both".into(), points: 61, periods: 3.0, spin_up_fraction: SpinFraction::Preset("scan".into()) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    /// Transition 1 centre, kHz.
    pub delta1: f64,
    /// Centre of the transition 3 grid, kHz.
    pub center: f64,
    /// Half-width of the transition 3 grid, kHz.
    pub span: f64,
    pub points: usize,
}

impl Default for MatchSection {
    fn default() -> Self {
        Self { delta1: 0.0, center: 0.0, span: 15.0, points: 121 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub plot: bool,
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn parse_transition(name: &str) -> Result<TransitionId, CliError> {
    name.parse().map_err(usage)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn field(&self) -> Result<FieldConfig, CliError> {
        let f = &self.field;
        let mut c = match f.preset {
            FieldPreset::Calibrated => FieldConfig::calibrated(),
            FieldPreset::PureQuadrupole => FieldConfig::centered_quadrupole(),
        };
        if let Some(b) = f.bias {
            c.bias = b;
        }
        c.quad_strength = f.quad_strength.unwrap_or(c.quad_strength);
        c.quad_center = f.quad_center.unwrap_or(c.quad_center);
        c.shim = f.shim.unwrap_or(c.shim);
        if let Some(d) = f.stray {
            c = c.displaced(d);
        }
        c.validate().map_err(usage)?;
        Ok(c)
    }

    /// Field seen by the imaging plane.
    pub fn imaging_field(&self) -> Result<FieldConfig, CliError> {
        let base = self.field()?;
        Ok(match self.imaging.field {
            ImagingField::Config => base,
            ImagingField::PureQuadrupole => {
                let f = &self.field;
                let strength = f.quad_strength.unwrap_or(CALIBRATED_GRADIENT);
                let center = f.quad_center.unwrap_or([0.0, 0.0, COIL_DISTANCE]);
                let mut c = FieldConfig::pure_quadrupole(strength, center);
                c.shim = f.shim.unwrap_or([0.0, 0.0]);
                c.displaced(f.stray.unwrap_or([0.0, 0.0]))
            }
        })
    }

    pub fn zeeman(&self) -> Result<ZeemanModel, CliError> {
        let mut m = match self.zeeman.mode {
            ZeemanName::Linear => ZeemanModel::linear_calibrated(),
            ZeemanName::BreitRabi => ZeemanModel::breit_rabi(),
        };
        if let Some(k) = self.zeeman.kappa {
            m.kappa = k;
        }
        m.validate().map_err(usage)?;
        Ok(m)
    }

    pub fn lattice(&self) -> Result<LatticeGeometry, CliError> {
        let l = &self.lattice;
        let d = LatticeGeometry::default();
        let g = LatticeGeometry {
            spacing: l.spacing.unwrap_or(d.spacing),
            layer_count: l.layer_count.unwrap_or(d.layer_count),
            focus: l.focus.unwrap_or(d.focus),
            envelope: l.envelope_sigma.map_or(Envelope::Uniform, |sigma| Envelope::Gaussian { sigma }),
        };
        g.validate().map_err(usage)?;
        Ok(g)
    }

    pub fn loss_model(&self) -> Result<LossModel, CliError> {
        if !self.loss.enabled {
            return Ok(LossModel::disabled());
        }
        let mut m = LossModel::calibrated().map_err(usage)?;
        m.density_scale = self.loss.density_scale;
        m.occupancy_threshold = self.loss.occupancy_threshold;
        m.validate().map_err(usage)?;
        Ok(m)
    }

    /// Transition 1 pulse (B) and transition 2 pulse (A) as configured.
    pub fn pulse_for(&self, t: TransitionId) -> Result<Hs1Params, CliError> {
        let d = self.protocol.duration;
        match t {
            TransitionId::T1 => Ok(self.pulse.b.apply(Hs1Params::transition1(d))),
            TransitionId::T2 => Ok(self.pulse.a.apply(Hs1Params::transition2(d))),
            TransitionId::T3 => Err(CliError::Usage("transition 3 has no preparation pulse; use T1 or T2".into())),
        }
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, CliError> {
        let p = &self.protocol;
        let mut c = ProtocolConfig::calibrated(p.duration).map_err(usage)?;
        c.pulse_a = self.pulse.a.apply(c.pulse_a);
        c.pulse_b = self.pulse.b.apply(c.pulse_b);
        c.pulse_d = self.pulse.d.apply(c.pulse_d);
        c.pulse_e = self.pulse.e.apply(c.pulse_e);
        c.removal_survival = p.removal_survival;
        c.removal_duration = p.removal_duration;
        c.repump_efficiency = p.repump_efficiency;
        c.repetitions = p.repetitions;
        c.ideal_pulses = p.ideal_pulses;
        c.background_weight = p.background_weight;
        c.background_level = p.calibrate_background.then_some(p.background_level);
        c.both_ratio = p.both_ratio;
        c.loss = self.loss_model()?;
        c.context = FieldContext { field: self.field()?, zeeman: self.zeeman()? };
        c.validate().map_err(usage)?;
        Ok(c)
    }

    pub fn scan_mode(&self) -> Result<SpinSelection, CliError> {
        self.scan.mode.parse().map_err(usage)
    }

    pub fn imaging(&self) -> Result<ImagingConfig, CliError> {
        let i = &self.imaging;
        let c = ImagingConfig {
            fov: i.fov,
            pixels: i.pixels,
            window: self.pulse.imaging.apply(Hs1Params::imaging_window()),
            transition: parse_transition(&i.transition)?,
            layer_depth: i.layer_depth,
        };
        c.validate().map_err(usage)?;
        if !(i.threshold > 0.0 && i.threshold < 1.0) {
            return Err(CliError::Usage(format!("imaging.threshold must be in (0, 1), got {}", i.threshold)));
        }
        Ok(c)
    }

    pub fn compensation_bounds(&self) -> CompensationBounds {
        let i = &self.imaging;
        CompensationBounds {
            shim_limit: [i.shim_limit; 2],
            initial_step: i.initial_step,
            max_iterations: i.max_iterations,
        }
    }
}
