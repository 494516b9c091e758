//! Three-class tone labels for trainee utterances, the classifiers that
//! produce them and the aggregate statistics computed over them.

mod classify;
mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{
    classify_rule_based, parse_label, ClassificationPrompt, ClassifyError, DelayedClassifier, Lexicon, ModelClassifier,
    RuleBasedClassifier, SentimentClassifier, SentimentOutcome,
};
pub use metrics::{evaluate, ConfusionMatrix, MetricsReport, AVERAGING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = SentimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" => Ok(SentimentLabel::Negative),
            "neutral" | "neu" => Ok(SentimentLabel::Neutral),
            "positive" | "pos" => Ok(SentimentLabel::Positive),
            _ => Err(SentimentError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SentimentError {
    #[error("unknown sentiment label `{0}`")]
    UnknownLabel(String),
    #[error("input is empty")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid distribution {0:?}: {1}")]
    InvalidDistribution([f64; 3], String),
}

/// Tolerance on the probability sum of a computed distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Label frequencies in `[negative, neutral, positive]` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub p_neg: f64,
    pub p_neu: f64,
    pub p_pos: f64,
}

impl ClassDistribution {
    pub fn new(p_neg: f64, p_neu: f64, p_pos: f64) -> Result<Self, SentimentError> {
        Self::with_tolerance([p_neg, p_neu, p_pos], SUM_TOLERANCE)
    }

    /// For published tables whose entries were rounded to `decimals` places:
    /// the sum may be off by up to half a unit in the last place per entry.
    pub fn from_rounded(values: [f64; 3], decimals: u32) -> Result<Self, SentimentError> {
        let tol = 3.0 * 0.5 * 10f64.powi(-(decimals as i32)) + SUM_TOLERANCE;
        Self::with_tolerance(values, tol)
    }

    pub fn with_tolerance(values: [f64; 3], tolerance: f64) -> Result<Self, SentimentError> {
        if values.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(SentimentError::InvalidDistribution(values, "entry outside [0, 1]".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(SentimentError::InvalidDistribution(
                values,
                format!("sum {sum} differs from 1 by more than {tolerance}"),
            ));
        }
        Ok(ClassDistribution {
            p_neg: values[0],
            p_neu: values[1],
            p_pos: values[2],
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_neg, self.p_neu, self.p_pos]
    }

    pub fn get(&self, label: SentimentLabel) -> f64 {
        self.as_array()[label.index()]
    }
}

/// Empirical label frequencies.
pub fn class_distribution(preds: &[SentimentLabel]) -> Result<ClassDistribution, SentimentError> {
    if preds.is_empty() {
        return Err(SentimentError::Empty);
    }
    let mut counts = [0usize; 3];
    for p in preds {
        counts[p.index()] += 1;
    }
    let n = preds.len() as f64;
    let p_neg = counts[0] as f64 / n;
    let p_neu = counts[1] as f64 / n;
    let p_pos = counts[2] as f64 / n;
    ClassDistribution::with_tolerance([p_neg, p_neu, p_pos], SUM_TOLERANCE)
}

/// Shannon entropy in bits, with `0 · log2 0 = 0`.
pub fn entropy(dist: &ClassDistribution) -> f64 {
    dist.as_array()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Cohen's κ, or `Undefined` when chance agreement is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Kappa {
    Value(f64),
    Undefined,
}

impl Kappa {
    pub fn value(self) -> Option<f64> {
        match self {
            Kappa::Value(v) => Some(v),
            Kappa::Undefined => None,
        }
    }

    pub fn is_undefined(self) -> bool {
        matches!(self, Kappa::Undefined)
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Value(v) => write!(f, "{v:.3}"),
            Kappa::Undefined => f.write_str("undef"),
        }
    }
}

/// `κ = (p_o − p_e) / (1 − p_e)` with `p_e` from the marginal products.
pub fn cohen_kappa(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<Kappa, SentimentError> {
    if a.len() != b.len() {
        return Err(SentimentError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(SentimentError::Empty);
    }
    let n = a.len();
    let mut ca = [0usize; 3];
    let mut cb = [0usize; 3];
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        ca[x.index()] += 1;
        cb[y.index()] += 1;
        if x == y {
            agree += 1;
        }
    }
    // Integer arithmetic: p_e = 1 exactly when Σ ca·cb = n².
    let expected_num: usize = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let n2 = n * n;
    if expected_num == n2 {
        return Ok(Kappa::Undefined);
    }
    let p_o = agree as f64 / n as f64;
    let p_e = expected_num as f64 / n2 as f64;
    Ok(Kappa::Value((p_o - p_e) / (1.0 - p_e)))
}
