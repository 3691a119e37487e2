use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("field magnitude must be positive, got {0} G")]
    NonPositiveField(f64),

    #[error("time {t} ms outside pulse window [-{half}, {half}] ms")]
    OutsidePulseWindow { t: f64, half: f64 },

    #[error("integration step {step} ms exceeds the limit {max} ms")]
    StepTooLarge { step: f64, max: f64 },

    /// Zero coupling while the sweep crosses the atomic resonance.
    #[error("non-adiabatic by construction: zero Rabi frequency with a resonance crossing")]
    NonAdiabatic,

    #[error("transitions must differ, got {0:?} twice")]
    IdenticalTransitions(crate::fieldmap::TransitionId),

    #[error("{0:?} is not a sigma+ transition")]
    NotSigmaPlus(crate::fieldmap::TransitionId),

    #[error("no decay: both loss coefficients are zero")]
    NoDecay,

    #[error("half-life target {0} s cannot be reached")]
    UnreachableTarget(f64),

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("image has no pixel above threshold {0}")]
    EmptyImage(f64),
}
