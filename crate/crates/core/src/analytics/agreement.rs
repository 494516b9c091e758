use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::sentiment::{class_distribution, cohen_kappa, entropy, ClassDistribution, Kappa, SentimentLabel};

/// Pairwise κ between models, rows and columns in model-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub model_ids: Vec<String>,
    pub kappa: Vec<Vec<Kappa>>,
}

impl AgreementMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<Kappa> {
        let i = self.model_ids.iter().position(|m| m == a)?;
        let j = self.model_ids.iter().position(|m| m == b)?;
        Some(self.kappa[i][j])
    }
}

fn is_constant(labels: &[SentimentLabel]) -> bool {
    labels.windows(2).all(|w| w[0] == w[1])
}

/// Cohen's κ for every pair of models. Any cell involving a model that
/// predicts a single class throughout is reported as undefined.
pub fn agreement_matrix(
    preds_by_model: &BTreeMap<String, Vec<SentimentLabel>>,
) -> Result<AgreementMatrix, AnalyticsError> {
    if preds_by_model.len() < 2 {
        return Err(AnalyticsError::TooFewModels(preds_by_model.len()));
    }
    let mut lens = preds_by_model.iter().map(|(m, p)| (m, p.len()));
    let (first_model, n) = lens.next().expect("at least two models");
    if n == 0 {
        return Err(AnalyticsError::EmptyPredictions(first_model.clone()));
    }
    for (m, len) in lens {
        if len != n {
            return Err(AnalyticsError::LengthMismatch {
                model: m.clone(),
                expected: n,
                found: len,
            });
        }
    }
    let model_ids: Vec<String> = preds_by_model.keys().cloned().collect();
    let seqs: Vec<&Vec<SentimentLabel>> = preds_by_model.values().collect();
    let constant: Vec<bool> = seqs.iter().map(|s| is_constant(s)).collect();
    let k = seqs.len();
    let mut kappa = vec![vec![Kappa::Undefined; k]; k];
    for i in 0..k {
        for j in i..k {
            let cell = if constant[i] || constant[j] {
                Kappa::Undefined
            } else {
                cohen_kappa(seqs[i], seqs[j])?
            };
            kappa[i][j] = cell;
            kappa[j][i] = cell;
        }
    }
    Ok(AgreementMatrix { model_ids, kappa })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub model_id: String,
    pub n: usize,
    pub distribution: ClassDistribution,
    pub entropy_bits: f64,
}

/// One row per model in model-id order.
pub fn entropy_table(
    preds_by_model: &BTreeMap<String, Vec<SentimentLabel>>,
) -> Result<Vec<EntropyRow>, AnalyticsError> {
    if preds_by_model.is_empty() {
        return Err(AnalyticsError::TooFewModels(0));
    }
    preds_by_model
        .iter()
        .map(|(model, preds)| {
            if preds.is_empty() {
                return Err(AnalyticsError::EmptyPredictions(model.clone()));
            }
            let distribution = class_distribution(preds)?;
            Ok(EntropyRow {
                model_id: model.clone(),
                n: preds.len(),
                entropy_bits: entropy(&distribution),
                distribution,
            })
        })
        .collect()
}
