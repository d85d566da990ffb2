//! Process-level error type. Every failure carries one of three kinds that
//! map onto the documented exit codes, and prints as a single JSON line on
//! stderr so callers can parse failures mechanically.

use std::fmt;

use tags2v_core::baseline::BaselineError;
use tags2v_core::model::ModelError;
use tags2v_core::pairs::PairError;
use tags2v_core::phrase::PhraseError;
use tags2v_core::scoring::ScoringError;
use tags2v_core::stats::StatsError;
use tags2v_core::synth::SynthError;
use tags2v_core::train::TrainError;

/// Failure class. Exit codes: usage 2, data 3, numeric 4 (0 is success).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct AppError {
    pub kind: ErrorKind,
    pub msg: String,
}

impl AppError {
    pub fn usage(msg: impl Into<String>) -> Self {
        AppError { kind: ErrorKind::Usage, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        AppError { kind: ErrorKind::Data, msg: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        AppError { kind: ErrorKind::Numeric, msg: msg.into() }
    }

    /// The single-line stderr form: `{"error":"...","kind":"data"}`.
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"error\":{},\"kind\":\"{}\"}}",
            serde_json::to_string(&self.msg).expect("string encodes"),
            self.kind.as_str()
        )
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for AppError {}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::data(format!("i/o error: {e}"))
    }
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        let kind = match &e {
            ModelError::Config { .. } | ModelError::Threshold { .. } => ErrorKind::Usage,
            ModelError::FeatureDim { .. }
            | ModelError::SpanOutOfRange { .. }
            | ModelError::EmptyPhrase => ErrorKind::Data,
            ModelError::Tensor(_) | ModelError::Graph(_) => ErrorKind::Numeric,
        };
        AppError { kind, msg: e.to_string() }
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        if let TrainError::Model(inner) = e {
            return AppError::from(inner);
        }
        let kind = match &e {
            TrainError::Config { .. } => ErrorKind::Usage,
            TrainError::EmptyDataset => ErrorKind::Data,
            _ => ErrorKind::Numeric,
        };
        AppError { kind, msg: e.to_string() }
    }
}

impl From<PhraseError> for AppError {
    fn from(e: PhraseError) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<ScoringError> for AppError {
    fn from(e: ScoringError) -> Self {
        let kind = match &e {
            ScoringError::ProbeMismatch { .. } => ErrorKind::Usage,
            ScoringError::Model(ModelError::Tensor(_) | ModelError::Graph(_)) => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Data,
        };
        AppError { kind, msg: e.to_string() }
    }
}

impl From<BaselineError> for AppError {
    fn from(e: BaselineError) -> Self {
        let kind = match &e {
            BaselineError::BadN { .. } => ErrorKind::Usage,
            _ => ErrorKind::Data,
        };
        AppError { kind, msg: e.to_string() }
    }
}

impl From<StatsError> for AppError {
    fn from(e: StatsError) -> Self {
        AppError::numeric(e.to_string())
    }
}

impl From<PairError> for AppError {
    fn from(e: PairError) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        AppError::usage(e.to_string())
    }
}
