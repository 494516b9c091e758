use serde::{Deserialize, Serialize};

use super::{SentimentError, SentimentLabel};

/// Averaging scheme recorded in every report.
pub const AVERAGING: &str = "weighted";

/// `counts[gold][pred]` over the three labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(golds: &[SentimentLabel], preds: &[SentimentLabel]) -> Result<Self, SentimentError> {
        if golds.len() != preds.len() {
            return Err(SentimentError::LengthMismatch {
                left: golds.len(),
                right: preds.len(),
            });
        }
        if golds.is_empty() {
            return Err(SentimentError::Empty);
        }
        let mut m = ConfusionMatrix::default();
        for (g, p) in golds.iter().zip(preds) {
            m.counts[g.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, gold: SentimentLabel) -> usize {
        self.counts[gold.index()].iter().sum()
    }

    pub fn predicted(&self, pred: SentimentLabel) -> usize {
        self.counts.iter().map(|row| row[pred.index()]).sum()
    }

    pub fn correct(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn precision(&self, label: SentimentLabel) -> f64 {
        ratio(self.counts[label.index()][label.index()], self.predicted(label))
    }

    pub fn recall(&self, label: SentimentLabel) -> f64 {
        ratio(self.counts[label.index()][label.index()], self.support(label))
    }

    pub fn f1(&self, label: SentimentLabel) -> f64 {
        let (p, r) = (self.precision(label), self.recall(label));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus support-weighted precision, recall and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n: usize,
    pub averaging: String,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(golds: &[SentimentLabel], preds: &[SentimentLabel]) -> Result<MetricsReport, SentimentError> {
    let cm = ConfusionMatrix::from_pairs(golds, preds)?;
    let n = cm.total();
    let weighted = |f: &dyn Fn(SentimentLabel) -> f64| -> f64 {
        SentimentLabel::ALL
            .iter()
            .map(|&l| cm.support(l) as f64 * f(l))
            .sum::<f64>()
            / n as f64
    };
    let precision = weighted(&|l| cm.precision(l));
    let f1 = weighted(&|l| cm.f1(l));
    // Σ support·(tp/support) / n collapses to correct / n.
    let accuracy = cm.correct() as f64 / n as f64;
    let recall = accuracy;
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        n,
        averaging: AVERAGING.to_string(),
        confusion: cm,
    })
}
