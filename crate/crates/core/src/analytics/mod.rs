//! Post-session reports and survey statistics.

mod agreement;
mod report;
mod stats;
mod survey;
mod table;

pub use agreement::{agreement_matrix, entropy_table, AgreementMatrix, EntropyRow};
pub use report::{session_report, Debrief, SessionLog, SessionReport, TimelineEntry};
pub use stats::{
    descriptive_stats, wilcoxon_signed_rank, Alternative, DescriptiveStats, LikertVector, PMethod,
    WilcoxonResult, DEFAULT_MU0, EXACT_MAX_N, LIKERT_MAX, LIKERT_MIN,
};
pub use survey::read_survey;
pub use table::{fmt_f, Table};

use thiserror::Error;

use crate::pipeline::PipelineError;
use crate::sentiment::SentimentError;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("item `{0}` has no responses")]
    EmptyVector(String),
    #[error("item `{item}`: value {value} is outside 1..=5")]
    OutOfRange { item: String, value: i64 },
    #[error("item `{0}`: every response equals the reference value")]
    AllDifferencesZero(String),
    #[error("reference value {0} is not finite")]
    InvalidMu0(f64),
    #[error("unknown alternative `{0}` (expected greater, less or two_sided)")]
    UnknownAlternative(String),
    #[error("need at least two models, got {0}")]
    TooFewModels(usize),
    #[error("model `{0}` has no predictions")]
    EmptyPredictions(String),
    #[error("model `{model}` has {found} predictions, expected {expected}")]
    LengthMismatch { model: String, expected: usize, found: usize },
    #[error("session {0} is still open")]
    SessionOpen(String),
    #[error("session {0} has no successful turns")]
    EmptySession(String),
    #[error("survey row {row}: {message}")]
    Survey { row: usize, message: String },
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
