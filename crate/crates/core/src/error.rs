use std::fmt;

/// Pipeline stage named in shape errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    PreLayer(usize),
    Expansion,
    Coding,
    Head,
    Loss,
    Parameters,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Input => write!(f, "input"),
            Stage::PreLayer(l) => write!(f, "pre-layer {l}"),
            Stage::Expansion => write!(f, "expansion"),
            Stage::Coding => write!(f, "coding"),
            Stage::Head => write!(f, "head"),
            Stage::Loss => write!(f, "loss"),
            Stage::Parameters => write!(f, "parameters"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid degree {degree}: must lie in 1..={n_in}")]
    InvalidDegree { degree: usize, n_in: usize },
    #[error("invalid shape at {stage}: expected {expected}, got {got}")]
    InvalidShape {
        stage: Stage,
        expected: usize,
        got: usize,
    },
    #[error("invalid coding level {0}: must lie in (0, 1]")]
    InvalidCoding(f64),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("missing baseline: {0}")]
    MissingBaseline(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss at task {task}, step {step}")]
    NonFinite { task: usize, step: usize },
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(stage: Stage, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::InvalidShape {
            stage,
            expected,
            got,
        })
    }
}
