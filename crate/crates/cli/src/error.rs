use std::fmt;

use mtpath::attn_ot::OtError;
use mtpath::combiner::CombinerError;
use mtpath::eval::EvalError;
use mtpath::model::CorpusError;
use mtpath::scores::TableError;
use mtpath::selection::SelectionError;
use mtpath::sentence::DetectorError;
use mtpath::synth::SynthError;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
    Computation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Computation(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Validation(_) => "validation",
            Failure::Computation(_) => "computation",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Computation(m) => m,
        }
    }

    /// One-line JSON form written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.exit_code(), "message": self.message() }).to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Context for I/O failures on output files.
pub fn write_failure(path: &std::path::Path, e: impl fmt::Display) -> Failure {
    Failure::Computation(format!("cannot write {}: {e}", path.display()))
}

pub fn read_failure(path: &std::path::Path, e: impl fmt::Display) -> Failure {
    Failure::Validation(format!("cannot read {}: {e}", path.display()))
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<DetectorError> for Failure {
    fn from(e: DetectorError) -> Self {
        Failure::Computation(e.to_string())
    }
}

impl From<OtError> for Failure {
    fn from(e: OtError) -> Self {
        Failure::Computation(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownDetector(_) | EvalError::UnknownTask(_) => Failure::Usage(e.to_string()),
            _ => Failure::Computation(e.to_string()),
        }
    }
}

impl From<CombinerError> for Failure {
    fn from(e: CombinerError) -> Self {
        match e {
            CombinerError::MissingFeature(_) => Failure::Validation(e.to_string()),
            _ => Failure::Computation(e.to_string()),
        }
    }
}

impl From<SelectionError> for Failure {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::MissingScores { .. } => Failure::Validation(e.to_string()),
            SelectionError::NoDetectors | SelectionError::UnknownStrategy(_) => Failure::Usage(e.to_string()),
            SelectionError::NotEnoughRecords { .. } => Failure::Computation(e.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => Failure::Validation(e.to_string()),
            SynthError::InvalidSpec(_) => Failure::Computation(e.to_string()),
        }
    }
}
