use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Corpus,
    Extract,
    Vocab,
    Features,
    Train,
    Crossval,
    Report,
    Gradcheck,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Corpus => "corpus",
            Stage::Extract => "extract",
            Stage::Vocab => "vocab",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Crossval => "crossval",
            Stage::Report => "report",
            Stage::Gradcheck => "gradcheck",
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("[{stage}] data error: {message}")]
    Data { stage: Stage, message: String },
    #[error("[{stage}] compute failure: {message}")]
    Compute { stage: Stage, message: String },
}

pub type RunResult<T> = std::result::Result<T, RunError>;

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data { .. } => 3,
            RunError::Compute { .. } => 4,
        }
    }

    pub fn data(stage: Stage, message: impl fmt::Display) -> Self {
        RunError::Data {
            stage,
            message: message.to_string(),
        }
    }

    pub fn compute(stage: Stage, message: impl fmt::Display) -> Self {
        RunError::Compute {
            stage,
            message: message.to_string(),
        }
    }

    /// File and format problems are data errors; everything else is a compute failure.
    pub fn from_core(stage: Stage, e: surgskill_core::Error) -> Self {
        use surgskill_core::Error as E;
        match e {
            E::Io { .. } | E::Image { .. } | E::Parse { .. } => RunError::data(stage, e),
            _ => RunError::compute(stage, e),
        }
    }

    pub fn from_neural(stage: Stage, e: surgskill_neural::NeuralError) -> Self {
        use surgskill_neural::NeuralError as E;
        match e {
            E::Io { .. } | E::Parse(_) => RunError::data(stage, e),
            E::Config(m) => RunError::Config(m),
            _ => RunError::compute(stage, e),
        }
    }

    pub fn io(stage: Stage, path: &std::path::Path, e: std::io::Error) -> Self {
        RunError::data(stage, format!("{}: {e}", path.display()))
    }
}
