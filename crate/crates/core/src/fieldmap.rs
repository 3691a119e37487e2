//! Magnetic field model and Zeeman-shifted microwave transitions.
//!
//! Lengths are in µm, field magnitudes in G at the API boundary (mG for
//! gradients and inhomogeneities), frequencies in kHz unless a function name
//! says otherwise.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// Vertical gradient of |B| at the atoms, mG/µm.
pub const CALIBRATED_GRADIENT: f64 = 7.27;
/// Field magnitude at the atoms, G.
pub const CALIBRATED_FIELD: f64 = 11.60;
/// Vertical lattice spacing (half of the 1064 nm lattice wavelength), µm.
pub const LATTICE_SPACING: f64 = 0.532;
/// Layer-to-layer frequency shifts of transitions 1 and 2, kHz.
pub const LAYER_SHIFTS: [f64; 2] = [9.68, 7.37];
/// Splitting between transitions 1 and 2 at the calibrated field, MHz.
pub const TRANSITION_SPLITTING: f64 = 7.0;
/// Vertical distance from the atoms to the quadrupole centre, µm.
pub const COIL_DISTANCE: f64 = 4000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Quadrupole plus shim only; the bias vector is ignored.
    PureQuadrupole,
    BiasPlusQuadrupole,
}

/// Coil configuration. The quadrupole is the ideal linear field
/// `B'·(-(x-xc)/2, -(y-yc)/2, z-zc)`; the shim is a uniform transverse field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Uniform bias, G.
    pub bias: Vec3,
    /// Quadrupole axial gradient B', mG/µm.
    pub quad_strength: f64,
    /// Quadrupole zero, µm relative to the atom-plane origin.
    pub quad_center: Vec3,
    /// Transverse shim field (x, y), G.
    pub shim: [f64; 2],
    pub mode: FieldMode,
}

impl FieldConfig {
    /// Bias-plus-quadrupole geometry reproducing |B| = 11.60 G and
    /// d|B|/dz = 7.27 mG/µm at the origin with the quadrupole zero 4 mm above.
    ///
    /// A pure quadrupole cannot satisfy both numbers at that distance (it would
    /// give 29.08 G), so the bias absorbs the difference along z.
    pub fn calibrated() -> Self {
        let quad_at_origin = -CALIBRATED_GRADIENT * COIL_DISTANCE / 1000.0;
        Self {
            bias: [0.0, 0.0, CALIBRATED_FIELD - quad_at_origin],
            quad_strength: CALIBRATED_GRADIENT,
            quad_center: [0.0, 0.0, COIL_DISTANCE],
            shim: [0.0, 0.0],
            mode: FieldMode::BiasPlusQuadrupole,
        }
    }

    pub fn pure_quadrupole(quad_strength: f64, quad_center: Vec3) -> Self {
        Self {
            bias: [0.0; 3],
            quad_strength,
            quad_center,
            shim: [0.0, 0.0],
            mode: FieldMode::PureQuadrupole,
        }
    }

    /// Pure quadrupole at the calibrated gradient, centred 4 mm above the atoms.
    pub fn centered_quadrupole() -> Self {
        Self::pure_quadrupole(CALIBRATED_GRADIENT, [0.0, 0.0, COIL_DISTANCE])
    }

    pub fn uniform(bias: Vec3) -> Self {
        Self {
            bias,
            quad_strength: 0.0,
            quad_center: [0.0; 3],
            shim: [0.0, 0.0],
            mode: FieldMode::BiasPlusQuadrupole,
        }
    }

    pub fn with_shim(&self, shim: [f64; 2]) -> Self {
        Self { shim, ..self.clone() }
    }

    /// Same coils with the quadrupole zero displaced transversally by `d` µm.
    pub fn displaced(&self, d: [f64; 2]) -> Self {
        let mut c = self.clone();
        c.quad_center[0] += d[0];
        c.quad_center[1] += d[1];
        c
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .bias
            .iter()
            .chain(self.quad_center.iter())
            .chain(self.shim.iter())
            .chain(std::iter::once(&self.quad_strength));
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field configuration"));
        }
        if self.quad_strength < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "quadrupole strength must be >= 0, got {}",
                self.quad_strength
            )));
        }
        Ok(())
    }

    fn bias_vec(&self) -> Vec3 {
        match self.mode {
            FieldMode::PureQuadrupole => [0.0; 3],
            FieldMode::BiasPlusQuadrupole => self.bias,
        }
    }

    /// Field vector at `r` (µm), G.
    pub fn field_at(&self, r: Vec3) -> Vec3 {
        let g = self.quad_strength / 1000.0;
        let c = self.quad_center;
        let b = self.bias_vec();
        [
            b[0] + self.shim[0] - 0.5 * g * (r[0] - c[0]),
            b[1] + self.shim[1] - 0.5 * g * (r[1] - c[1]),
            b[2] + g * (r[2] - c[2]),
        ]
    }

    /// |B| at `r`, G.
    pub fn magnitude_at(&self, r: Vec3) -> f64 {
        norm(self.field_at(r))
    }

    /// Analytic d|B|/dz at `r`, mG/µm. Zero where the field vanishes.
    pub fn gradient_z_at(&self, r: Vec3) -> f64 {
        let b = self.field_at(r);
        let m = norm(b);
        if m == 0.0 {
            return 0.0;
        }
        b[2] * self.quad_strength / m
    }
}

/// Free-function form of [`FieldConfig::field_at`].
pub fn field_at(config: &FieldConfig, r: Vec3) -> Vec3 {
    config.field_at(r)
}

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Peak-to-peak |B| in mG over a circular field of view of diameter `fov`
/// (µm) at z = 0, sampled on the points of a `grid`×`grid` mesh spanning the
/// bounding square that fall inside the circle.
pub fn transverse_inhomogeneity(config: &FieldConfig, fov: f64, grid: usize) -> Result<f64> {
    if grid < 2 {
        return Err(Error::InvalidParameter(format!("grid must be >= 2, got {grid}")));
    }
    if !(fov > 0.0) {
        return Err(Error::InvalidParameter(format!("fov must be > 0, got {fov}")));
    }
    let half = 0.5 * fov;
    let r2max = half * half * (1.0 + 1e-12);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..grid {
        let y = -half + fov * i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let x = -half + fov * j as f64 / (grid - 1) as f64;
            if x * x + y * y > r2max {
                continue;
            }
            let m = config.magnitude_at([x, y, 0.0]) * 1000.0;
            lo = lo.min(m);
            hi = hi.max(m);
        }
    }
    Ok(hi - lo)
}

/// Hyperfine sublevel label `(F, m_F)` stored as twice the half-integer values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Sublevel {
    pub twice_f: i8,
    pub twice_m: i8,
}

impl Sublevel {
    pub const fn new(twice_f: i8, twice_m: i8) -> Self {
        Self { twice_f, twice_m }
    }

    pub fn f(&self) -> f64 {
        self.twice_f as f64 / 2.0
    }

    pub fn m(&self) -> f64 {
        self.twice_m as f64 / 2.0
    }
}

/// The three microwave transitions used by the preparation sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionId {
    /// (9/2, -9/2) ↔ (7/2, -7/2), σ⁺.
    T1,
    /// (9/2, -7/2) ↔ (7/2, -5/2), σ⁺.
    T2,
    /// (7/2, -7/2) ↔ (9/2, -5/2), σ⁻; degenerate with T2 to first order.
    T3,
}

impl TransitionId {
    pub const ALL: [TransitionId; 3] = [TransitionId::T1, TransitionId::T2, TransitionId::T3];

    /// (F = 9/2 sublevel, F = 7/2 sublevel).
    pub fn endpoints(self) -> (Sublevel, Sublevel) {
        match self {
            TransitionId::T1 => (Sublevel::new(9, -9), Sublevel::new(7, -7)),
            TransitionId::T2 => (Sublevel::new(9, -7), Sublevel::new(7, -5)),
            TransitionId::T3 => (Sublevel::new(9, -5), Sublevel::new(7, -7)),
        }
    }

    pub fn is_sigma_plus(self) -> bool {
        !matches!(self, TransitionId::T3)
    }

    pub fn index(self) -> usize {
        match self {
            TransitionId::T1 => 0,
            TransitionId::T2 => 1,
            TransitionId::T3 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransitionId::T1 => "T1",
            TransitionId::T2 => "T2",
            TransitionId::T3 => "T3",
        }
    }
}

impl std::str::FromStr for TransitionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" | "1" => Ok(TransitionId::T1),
            "T2" | "2" => Ok(TransitionId::T2),
            "T3" | "3" => Ok(TransitionId::T3),
            _ => Err(Error::InvalidParameter(format!("unknown transition '{s}'"))),
        }
    }
}

/// Ground-state constants entering the Breit–Rabi Hamiltonian
/// `A I·J + μ_B B (g_J J_z + g_I I_z)` for a J = 1/2 alkali.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomConstants {
    /// Magnetic dipole constant A, MHz (negative for an inverted hyperfine structure).
    pub hyperfine_a: f64,
    pub g_j: f64,
    pub g_i: f64,
    pub nuclear_spin: f64,
    /// μ_B / h, MHz/G.
    pub bohr_magneton: f64,
}

impl AtomConstants {
    /// Potassium-40 ground state.
    pub fn potassium_40() -> Self {
        Self {
            hyperfine_a: -285.7308,
            g_j: 2.00229421,
            g_i: -0.000176490,
            nuclear_spin: 4.0,
            bohr_magneton: 1.39962449,
        }
    }

    /// Energy of `level` at field `b` (G), MHz.
    ///
    /// Within each m_F block the 2×2 Hamiltonian is diagonalised in closed
    /// form; F = I + 1/2 is the branch that connects to A·I/2 at zero field.
    pub fn energy(&self, level: Sublevel, b: f64) -> f64 {
        let i = self.nuclear_spin;
        let a = self.hyperfine_a;
        let m = level.m();
        let mub = self.bohr_magneton * b;
        if (m.abs() - (i + 0.5)).abs() < 1e-9 {
            let mj = 0.5 * m.signum();
            let mi = m - mj;
            return a * mi * mj + mub * (self.g_j * mj + self.g_i * mi);
        }
        let d1 = 0.5 * a * (m - 0.5) + mub * (0.5 * self.g_j + self.g_i * (m - 0.5));
        let d2 = -0.5 * a * (m + 0.5) + mub * (-0.5 * self.g_j + self.g_i * (m + 0.5));
        let off = 0.5 * a * ((i + 0.5).powi(2) - m * m).sqrt();
        let mean = 0.5 * (d1 + d2);
        let root = (0.25 * (d1 - d2).powi(2) + off * off).sqrt();
        let upper_f = (level.f() - (i + 0.5)).abs() < 1e-9;
        let sign = if upper_f { a.signum() } else { -a.signum() };
        mean + sign * root
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeemanMode {
    LinearCalibrated,
    BreitRabi,
}

/// Transition frequencies as a function of |B|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeemanModel {
    pub mode: ZeemanMode,
    /// Linear slopes κ₁..κ₃, kHz/mG.
    pub kappa: [f64; 3],
    /// f₁⁰ and f₂⁰ at the reference field, MHz. T3 shares f₂⁰.
    pub base: [f64; 2],
    /// Reference field B₀, G.
    pub reference_field: f64,
    pub atom: AtomConstants,
}

impl Default for ZeemanModel {
    fn default() -> Self {
        Self::linear_calibrated()
    }
}

impl ZeemanModel {
    /// Slopes pinned to the measured layer shifts at 7.27 mG/µm and 532 nm,
    /// base frequencies 7 MHz apart with the ⁴⁰K ordering (f₁ > f₂).
    pub fn linear_calibrated() -> Self {
        let per_layer = CALIBRATED_GRADIENT * LATTICE_SPACING;
        let k1 = LAYER_SHIFTS[0] / per_layer;
        let k2 = LAYER_SHIFTS[1] / per_layer;
        let f1 = 1314.764;
        Self {
            mode: ZeemanMode::LinearCalibrated,
            kappa: [k1, k2, k2],
            base: [f1, f1 - TRANSITION_SPLITTING],
            reference_field: CALIBRATED_FIELD,
            atom: AtomConstants::potassium_40(),
        }
    }

    pub fn breit_rabi() -> Self {
        Self { mode: ZeemanMode::BreitRabi, ..Self::linear_calibrated() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa.iter().chain(self.base.iter()).any(|v| !v.is_finite())
            || !self.reference_field.is_finite()
        {
            return Err(Error::NonFinite("zeeman model"));
        }
        if self.mode == ZeemanMode::LinearCalibrated && self.kappa[1] != self.kappa[2] {
            return Err(Error::InvalidParameter(
                "linear model requires kappa2 == kappa3 (T2/T3 degeneracy)".into(),
            ));
        }
        Ok(())
    }

    fn base_of(&self, t: TransitionId) -> f64 {
        match t {
            TransitionId::T1 => self.base[0],
            TransitionId::T2 | TransitionId::T3 => self.base[1],
        }
    }

    /// Transition frequency at field magnitude `b` (G), MHz.
    pub fn transition_frequency(&self, t: TransitionId, b: f64) -> Result<f64> {
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::NonPositiveField(b));
        }
        Ok(self.frequency_unchecked(t, b))
    }

    fn frequency_unchecked(&self, t: TransitionId, b: f64) -> f64 {
        match self.mode {
            // κ in kHz/mG is numerically MHz/G.
            ZeemanMode::LinearCalibrated => {
                self.base_of(t) + self.kappa[t.index()] * (b - self.reference_field)
            }
            ZeemanMode::BreitRabi => {
                let (lower, upper) = t.endpoints();
                (self.atom.energy(upper, b) - self.atom.energy(lower, b)).abs()
            }
        }
    }

    /// df/d|B| at `b`, kHz/mG.
    pub fn slope(&self, t: TransitionId, b: f64) -> f64 {
        match self.mode {
            ZeemanMode::LinearCalibrated => self.kappa[t.index()],
            ZeemanMode::BreitRabi => {
                let h = 1e-4;
                (self.frequency_unchecked(t, b + h) - self.frequency_unchecked(t, b - h)) / (2.0 * h)
            }
        }
    }
}

/// Free-function form of [`ZeemanModel::transition_frequency`].
pub fn transition_frequency(model: &ZeemanModel, t: TransitionId, b_mag: f64) -> Result<f64> {
    model.transition_frequency(t, b_mag)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Uniform,
    /// Gaussian occupation with width in layers, centred on the focus layer.
    Gaussian { sigma: f64 },
}

/// Vertical lattice register. Layer `n` sits at z = (n - focus)·spacing, so the
/// focus layer is at the atom-plane origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub spacing: f64,
    pub layer_count: usize,
    pub focus: i32,
    pub envelope: Envelope,
}

impl Default for LatticeGeometry {
    fn default() -> Self {
        Self { spacing: LATTICE_SPACING, layer_count: 50, focus: 0, envelope: Envelope::Uniform }
    }
}

impl LatticeGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::InvalidParameter(format!("spacing must be > 0, got {}", self.spacing)));
        }
        if self.layer_count == 0 {
            return Err(Error::InvalidParameter("layer_count must be >= 1".into()));
        }
        if let Envelope::Gaussian { sigma } = self.envelope {
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("gaussian sigma must be > 0, got {sigma}")));
            }
        }
        Ok(())
    }

    /// Layer indices of the register, centred on 0 (one extra layer on the
    /// positive side for even counts).
    pub fn layers(&self) -> std::ops::RangeInclusive<i32> {
        let lo = -((self.layer_count as i32 - 1) / 2);
        lo..=lo + self.layer_count as i32 - 1
    }

    pub fn z_of(&self, n: i32) -> f64 {
        (n - self.focus) as f64 * self.spacing
    }
}

/// Per-layer frequency shift Δᵢ = κᵢ·|d|B|/dz|·spacing at the focus, kHz.
pub fn layer_shift(
    model: &ZeemanModel,
    geom: &LatticeGeometry,
    field: &FieldConfig,
    t: TransitionId,
) -> f64 {
    let origin = [0.0; 3];
    let b = field.magnitude_at(origin);
    model.slope(t, b) * field.gradient_z_at(origin).abs() * geom.spacing
}

/// Resonance offset of layer `n` relative to the focus layer, kHz.
pub fn layer_detuning(
    model: &ZeemanModel,
    geom: &LatticeGeometry,
    field: &FieldConfig,
    t: TransitionId,
    n: i32,
) -> f64 {
    (n - geom.focus) as f64 * layer_shift(model, geom, field, t)
}

/// Height (µm) at which a pulse tuned to `pulse_on` in the focus layer is
/// resonant with `resonant_with` instead.
pub fn crosstalk_distance(
    model: &ZeemanModel,
    field: &FieldConfig,
    pulse_on: TransitionId,
    resonant_with: TransitionId,
) -> Result<f64> {
    if pulse_on == resonant_with {
        return Err(Error::IdenticalTransitions(pulse_on));
    }
    for t in [pulse_on, resonant_with] {
        if !t.is_sigma_plus() {
            return Err(Error::NotSigmaPlus(t));
        }
    }
    let origin = [0.0; 3];
    let b = field.magnitude_at(origin);
    let split_khz = (model.transition_frequency(pulse_on, b)?
        - model.transition_frequency(resonant_with, b)?)
        .abs()
        * 1000.0;
    let per_um = model.slope(resonant_with, b) * field.gradient_z_at(origin).abs();
    if !(per_um > 0.0) {
        return Err(Error::InvalidParameter("vertical field gradient vanishes".into()));
    }
    Ok(split_khz / per_um)
}
