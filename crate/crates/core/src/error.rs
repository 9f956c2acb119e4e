use thiserror::Error;

/// Errors raised by the element model, channel generation and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular impedance: denominator magnitude {0:e} below 1e-12")]
    SingularImpedance(f64),

    #[error("impedance pair is not passive-lossless realizable (non-zero real part)")]
    NotRealizable,

    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),

    #[error("amplitude constraint violated at element {index}: beta_t={beta_t}, beta_r={beta_r}")]
    InvalidAmplitude { index: usize, beta_t: f64, beta_r: f64 },

    #[error("invalid wavelength {0} m (must be positive)")]
    InvalidWavelength(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("SINR targets cannot be met: {0}")]
    InfeasibleTargets(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("degenerate channel gain {0:e}")]
    DegenerateChannel(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
