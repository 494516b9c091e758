use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sentiment::SentimentLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Transcription,
    Generation,
    Synthesis,
    Sentiment,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Transcription => "transcription",
            Stage::Generation => "generation",
            Stage::Synthesis => "synthesis",
            Stage::Sentiment => "sentiment",
        })
    }
}

/// Per-stage wall time in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stt_s: f64,
    pub llm_s: f64,
    pub tts_s: f64,
    pub sentiment_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub fn critical_path_s(&self) -> f64 {
        self.stt_s + self.llm_s + self.tts_s
    }

    pub fn is_valid(&self) -> bool {
        let all = [self.stt_s, self.llm_s, self.tts_s, self.sentiment_s, self.total_s];
        all.iter().all(|v| v.is_finite() && *v >= 0.0) && self.total_s + 1e-9 >= self.critical_path_s()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Timeout,
    Protocol,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnFailure {
    pub stage: Stage,
    pub kind: FailureKind,
    pub cause: String,
}

impl fmt::Display for TurnFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.cause)
    }
}

/// Sentiment outcome for one doctor utterance, produced off the reply path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentRecord {
    pub turn_id: u64,
    pub label: Option<SentimentLabel>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unparsed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub sentiment_s: f64,
}

/// One doctor utterance and the patient reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: u64,
    pub doctor_text: String,
    /// `None` exactly when the turn failed.
    pub patient_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
    pub timings: StageTimings,
    #[serde(default)]
    pub doctor_sentiment: Option<SentimentLabel>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sentiment_unparsed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_error: Option<String>,
    pub status: TurnStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnFailure>,
}

impl Turn {
    pub fn is_ok(&self) -> bool {
        self.status == TurnStatus::Ok
    }

    pub fn attach_sentiment(&mut self, rec: &SentimentRecord) {
        debug_assert_eq!(rec.turn_id, self.turn_id);
        self.doctor_sentiment = rec.label;
        self.sentiment_unparsed = rec.unparsed;
        self.sentiment_error = rec.error.clone();
        self.timings.sentiment_s = rec.sentiment_s;
    }
}

/// SHA-256 over the turn ids, texts and statuses, one JSON line per turn.
/// Timings and sentiment are excluded.
pub fn transcript_digest(turns: &[Turn]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for t in turns {
        let line = serde_json::json!([t.turn_id, t.doctor_text, t.patient_text, t.status]);
        h.update(line.to_string().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
