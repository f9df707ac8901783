use std::path::PathBuf;

use crate::scenario::AgentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("scenario {scenario_id}: {message}")]
    Invalid { scenario_id: String, message: String },

    #[error("duplicate prediction for ({scenario_id}, {variant}) on lines {first_line} and {second_line}")]
    DuplicatePrediction {
        scenario_id: String,
        variant: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("duplicate label entry for scenario {0}")]
    DuplicateLabelEntry(String),

    #[error("unlabeled scenario {0}")]
    UnlabeledScenario(String),

    #[error("scenario {scenario_id}: refusing to delete the AV (agent {av_agent_id})")]
    DeleteAv {
        scenario_id: String,
        av_agent_id: AgentId,
    },

    #[error("agent {0} has no valid states")]
    NoValidStates(AgentId),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("synthetic generation failed after {attempts} attempts: {reason}")]
    Infeasible { attempts: usize, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(scenario_id: &str, message: impl Into<String>) -> Self {
        Error::Invalid {
            scenario_id: scenario_id.to_string(),
            message: message.into(),
        }
    }
}
