use serde::{Deserialize, Serialize};

use super::turn::Turn;
use super::PipelineError;

/// Default end-to-end latency budget in seconds.
pub const DEFAULT_BUDGET_S: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
}

impl StageSummary {
    fn of(values: &mut [f64]) -> StageSummary {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mean_s = values.iter().sum::<f64>() / n as f64;
        let median_s = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        StageSummary {
            mean_s,
            median_s,
            p95_s: nearest_rank(values, 0.95),
        }
    }
}

/// Nearest-rank percentile of sorted values.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub turns: usize,
    pub failed_turns: usize,
    pub stt: StageSummary,
    pub llm: StageSummary,
    pub tts: StageSummary,
    pub sentiment: StageSummary,
    pub total: StageSummary,
    pub budget_s: f64,
    pub budget_met: bool,
}

/// Summarises successful turns. Failed turns are counted but not timed.
pub fn latency_report(turns: &[Turn], budget_s: f64) -> Result<LatencyReport, PipelineError> {
    if !(budget_s.is_finite() && budget_s > 0.0) {
        return Err(PipelineError::InvalidBudget(budget_s));
    }
    let ok: Vec<&Turn> = turns.iter().filter(|t| t.is_ok()).collect();
    if ok.is_empty() {
        return Err(PipelineError::NoSuccessfulTurns);
    }
    let column = |f: fn(&Turn) -> f64| -> StageSummary {
        let mut v: Vec<f64> = ok.iter().map(|t| f(t)).collect();
        StageSummary::of(&mut v)
    };
    let total = column(|t| t.timings.total_s);
    Ok(LatencyReport {
        turns: ok.len(),
        failed_turns: turns.len() - ok.len(),
        stt: column(|t| t.timings.stt_s),
        llm: column(|t| t.timings.llm_s),
        tts: column(|t| t.timings.tts_s),
        sentiment: column(|t| t.timings.sentiment_s),
        budget_met: total.mean_s <= budget_s,
        total,
        budget_s,
    })
}
