use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalyticsError;

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;
/// Largest `n_used` for which the exact null distribution is enumerated.
pub const EXACT_MAX_N: usize = 20;
pub const DEFAULT_MU0: f64 = 3.0;

/// Responses to one 1..=5 agreement item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertVector {
    item_label: String,
    values: Vec<u8>,
}

impl LikertVector {
    pub fn new(item_label: impl Into<String>, values: Vec<u8>) -> Result<Self, AnalyticsError> {
        let item_label = item_label.into();
        if values.is_empty() {
            return Err(AnalyticsError::EmptyVector(item_label));
        }
        if let Some(&v) = values.iter().find(|v| !(LIKERT_MIN..=LIKERT_MAX).contains(*v)) {
            return Err(AnalyticsError::OutOfRange { item: item_label, value: v as i64 });
        }
        Ok(LikertVector { item_label, values })
    }

    pub fn item_label(&self) -> &str {
        &self.item_label
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
}

/// Mean, median and sample (n - 1) standard deviation. A single response
/// has standard deviation 0.
pub fn descriptive_stats(v: &LikertVector) -> DescriptiveStats {
    let mut xs: Vec<f64> = v.values.iter().map(|&x| f64::from(x)).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    };
    let std_dev = if n < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    DescriptiveStats { count: n, mean, median, std_dev }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    Greater,
    Less,
    TwoSided,
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::Greater => "greater",
            Alternative::Less => "less",
            Alternative::TwoSided => "two_sided",
        })
    }
}

impl FromStr for Alternative {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            "two_sided" | "twosided" => Ok(Alternative::TwoSided),
            other => Err(AnalyticsError::UnknownAlternative(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w: f64,
    pub p: f64,
    /// Z / sqrt(n_used), Z continuity-corrected.
    pub r: f64,
    pub z: f64,
    pub n_used: usize,
    pub alternative: Alternative,
    pub method: PMethod,
}

/// Average ranks of `xs` (1-based), returned doubled so they stay integral.
pub(crate) fn doubled_ranks(xs: &[f64]) -> Vec<u32> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0u32; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // Average of ranks i+1 ..= j+1, doubled.
        let r2 = (i + 1 + j + 1) as u32;
        for &k in &idx[i..=j] {
            out[k] = r2;
        }
        i = j + 1;
    }
    out
}

/// One-sample signed-rank test of the values against `mu0`.
///
/// Zero differences are dropped and tied magnitudes share the average rank.
/// For `n_used <= 20` the p-value is exact over all sign assignments of the
/// realised ranks; above that a continuity-corrected normal approximation
/// with tie correction is used. Two-sided p is twice the smaller tail,
/// capped at 1.
pub fn wilcoxon_signed_rank(
    v: &LikertVector,
    mu0: f64,
    alternative: Alternative,
) -> Result<WilcoxonResult, AnalyticsError> {
    if !mu0.is_finite() {
        return Err(AnalyticsError::InvalidMu0(mu0));
    }
    let diffs: Vec<f64> = v
        .values
        .iter()
        .map(|&x| f64::from(x) - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(AnalyticsError::AllDifferencesZero(v.item_label.clone()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs);
    let w2: u32 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let w = f64::from(w2) / 2.0;

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes(&abs).map(|t| t.powi(3) - t).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let sd = var.sqrt();
    let dev = w - mean;
    let z = if dev.abs() <= 0.5 { 0.0 } else { (dev - 0.5 * dev.signum()) / sd };

    let (p, method) = if n <= EXACT_MAX_N {
        let (ge, le) = exact_tails(&ranks2, w2);
        let p = match alternative {
            Alternative::Greater => ge,
            Alternative::Less => le,
            Alternative::TwoSided => (2.0 * ge.min(le)).min(1.0),
        };
        (p, PMethod::Exact)
    } else {
        let normal = Normal::standard();
        let p = match alternative {
            Alternative::Greater => normal.sf((dev - 0.5) / sd),
            Alternative::Less => normal.cdf((dev + 0.5) / sd),
            Alternative::TwoSided => (2.0 * normal.sf(z.abs())).min(1.0),
        };
        (p, PMethod::Normal)
    };

    Ok(WilcoxonResult {
        w,
        p: p.clamp(0.0, 1.0),
        r: z / nf.sqrt(),
        z,
        n_used: n,
        alternative,
        method,
    })
}

fn tie_sizes(xs: &[f64]) -> impl Iterator<Item = f64> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|x| **x == sorted[i]).count();
        sizes.push(j as f64);
        i += j;
    }
    sizes.into_iter()
}

/// `(P(W >= w), P(W <= w))` under the null, by counting sign subsets per
/// doubled rank sum.
fn exact_tails(ranks2: &[u32], w2: u32) -> (f64, f64) {
    let max: usize = ranks2.iter().map(|&r| r as usize).sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for &r in ranks2 {
        let r = r as usize;
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = (1u64 << ranks2.len()) as f64;
    let w2 = w2 as usize;
    let ge: u64 = counts[w2..].iter().sum();
    let le: u64 = counts[..=w2].iter().sum();
    (ge as f64 / total, le as f64 / total)
}
