use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },
    #[error("FFT size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("coincident source and microphone")]
    CoincidentSourceMic,
    #[error("unreachable T60 {t60_s} s: absorption {absorption} >= 1")]
    UnreachableT60 { t60_s: f64, absorption: f64 },
    #[error("zero-power {0} signal")]
    ZeroPower(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("interval [{onset}, {onset}+{duration}) out of range for length {len}")]
    InvalidInterval { onset: usize, duration: usize, len: usize },
    #[error("degenerate truncation: cut lies {0:.2} standard deviations above the mean")]
    DegenerateTruncation(f64),
    #[error("insufficient material: {0}")]
    InsufficientMaterial(String),
    #[error("could not place non-overlapping drops after {0} attempts")]
    OverlapRetries(usize),
    #[error("bin-count mismatch: pattern has {pattern} bins, region has {region}")]
    BinMismatch { pattern: usize, region: usize },
    #[error("spectrogram too short: {0}")]
    SpectrogramTooShort(String),
    #[error("no reference traces to combine")]
    NoReferences,
    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy { kind: &'static str, name: String, available: String },
    #[error("wav: {0}")]
    Wav(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), reason: reason.into() }
    }
}
