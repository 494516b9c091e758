//! Turn orchestration: transcription, patient reply, synthesis, and
//! sentiment classification off the reply path.

mod conversation;
mod latency;
mod state;
mod turn;

pub use conversation::{
    Conversation, EventSink, PendingSentiment, PipelineEvent, PipelineOptions, TurnInput, TurnOutcome,
};
pub use latency::{latency_report, nearest_rank, LatencyReport, StageSummary, DEFAULT_BUDGET_S};
pub use state::{is_legal_path, IllegalTransition, TurnEvent, TurnState};
pub use turn::{transcript_digest, FailureKind, SentimentRecord, Stage, StageTimings, Turn, TurnFailure, TurnStatus};

use thiserror::Error;

use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty input")]
    EmptyInput,
    #[error("turn id {0} is not increasing")]
    NonMonotoneTurnId(u64),
    #[error("no successful turns")]
    NoSuccessfulTurns,
    #[error("invalid latency budget {0}")]
    InvalidBudget(f64),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
