use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::knowledge_base::ScenarioSpec;
use crate::pipeline::{latency_report, LatencyReport, Turn, DEFAULT_BUDGET_S};
use crate::scenario::PersonaProfile;
use crate::sentiment::{class_distribution, entropy, ClassDistribution, SentimentLabel};

/// Everything recorded for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub scenario: ScenarioSpec,
    pub persona: PersonaProfile,
    pub turns: Vec<Turn>,
    pub closed: bool,
    #[serde(default = "default_budget")]
    pub budget_s: f64,
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub turn_id: u64,
    /// `None` when classification failed for this turn.
    pub label: Option<SentimentLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Debrief {
    pub syndrome: String,
    pub symptoms: Vec<String>,
    pub persona: PersonaProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub turn_count: usize,
    pub failed_turns: usize,
    pub timeline: Vec<TimelineEntry>,
    /// Over turns with a label; absent when none was labelled.
    pub distribution: Option<ClassDistribution>,
    pub entropy_bits: Option<f64>,
    pub latency: LatencyReport,
    pub debrief: Debrief,
}

/// Post-session debrief over the successful turns of a closed session.
pub fn session_report(log: &SessionLog) -> Result<SessionReport, AnalyticsError> {
    if !log.closed {
        return Err(AnalyticsError::SessionOpen(log.session_id.clone()));
    }
    let ok: Vec<&Turn> = log.turns.iter().filter(|t| t.is_ok()).collect();
    if ok.is_empty() {
        return Err(AnalyticsError::EmptySession(log.session_id.clone()));
    }
    let timeline: Vec<TimelineEntry> = ok
        .iter()
        .map(|t| TimelineEntry {
            turn_id: t.turn_id,
            label: t.doctor_sentiment,
        })
        .collect();
    let labels: Vec<SentimentLabel> = timeline.iter().filter_map(|e| e.label).collect();
    let distribution = if labels.is_empty() {
        None
    } else {
        Some(class_distribution(&labels)?)
    };
    let latency = latency_report(&log.turns, log.budget_s)?;
    Ok(SessionReport {
        session_id: log.session_id.clone(),
        turn_count: ok.len(),
        failed_turns: log.turns.len() - ok.len(),
        entropy_bits: distribution.as_ref().map(entropy),
        distribution,
        timeline,
        latency,
        debrief: Debrief {
            syndrome: log.scenario.syndrome_name.clone(),
            symptoms: log.scenario.symptoms.clone(),
            persona: log.persona.clone(),
        },
    })
}
