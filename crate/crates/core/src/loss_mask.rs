//! Weighted cross-entropy for SFT with down-weighted reasoning spans.
//!
//! Every label row is scanned for `<think>` token ids; each one is paired with
//! the first `</think>` at or after it and the span (tags included) gets the
//! reduced weight. The loss is the weighted mean of next-token cross-entropy,
//! normalized by the sum of active weights rather than the active count.

use ndarray::{Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

pub const IGNORE_INDEX: i64 = -100;
pub const DEFAULT_THINK_WEIGHT: f64 = 0.1;
pub const EFFECTIVE_SUM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossMaskError {
    #[error("shape mismatch: labels {labels:?} vs logits {logits:?}")]
    ShapeMismatch { labels: Vec<usize>, logits: Vec<usize> },
    #[error("weight must lie in [0, 1], got {0}")]
    BadWeight(f64),
    #[error("label {label} out of range for vocab {vocab}")]
    LabelOutOfRange { label: i64, vocab: usize },
    #[error("empty vocabulary")]
    EmptyVocab,
    #[error("ragged {0} array")]
    Ragged(&'static str),
    #[error("batch file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub labels: Array2<i64>,
    pub logits: Array3<f64>,
    pub think_start_id: i64,
    pub think_end_id: i64,
    pub weight: f64,
    pub ignore_index: i64,
}

impl TokenBatch {
    pub fn new(
        labels: Array2<i64>,
        logits: Array3<f64>,
        think_start_id: i64,
        think_end_id: i64,
    ) -> Result<Self, LossMaskError> {
        let batch = Self {
            labels,
            logits,
            think_start_id,
            think_end_id,
            weight: DEFAULT_THINK_WEIGHT,
            ignore_index: IGNORE_INDEX,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self, LossMaskError> {
        self.weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), LossMaskError> {
        let (b, s) = self.labels.dim();
        let (lb, ls, v) = self.logits.dim();
        if b != lb || s != ls {
            return Err(LossMaskError::ShapeMismatch {
                labels: vec![b, s],
                logits: vec![lb, ls, v],
            });
        }
        if v == 0 {
            return Err(LossMaskError::EmptyVocab);
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(LossMaskError::BadWeight(self.weight));
        }
        Ok(())
    }

    pub fn vocab(&self) -> usize {
        self.logits.dim().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub effective_sum: f64,
    pub masked_token_count: usize,
}

pub fn build_weight_mask(labels: &Array2<i64>, think_start_id: i64, think_end_id: i64, weight: f64) -> Array2<f64> {
    let mut mask = Array2::<f64>::ones(labels.dim());
    for (i, row) in labels.axis_iter(Axis(0)).enumerate() {
        for s in (0..row.len()).filter(|&s| row[s] == think_start_id) {
            if let Some(rel) = row.iter().skip(s).position(|&t| t == think_end_id) {
                for j in s..=s + rel {
                    mask[[i, j]] = weight;
                }
            }
        }
    }
    mask
}

fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn token_cross_entropy(logit_row: ArrayView1<f64>, label: i64) -> Result<f64, LossMaskError> {
    let vocab = logit_row.len();
    if vocab == 0 {
        return Err(LossMaskError::EmptyVocab);
    }
    let idx = usize::try_from(label)
        .ok()
        .filter(|&i| i < vocab)
        .ok_or(LossMaskError::LabelOutOfRange { label, vocab })?;
    Ok(log_sum_exp(logit_row) - logit_row[idx])
}

/// Positions that contribute to the loss: `(row, logit position, label, weight)`.
fn active_positions(batch: &TokenBatch) -> Vec<(usize, usize, i64, f64)> {
    let mask = build_weight_mask(&batch.labels, batch.think_start_id, batch.think_end_id, batch.weight);
    let (b, s) = batch.labels.dim();
    let mut out = Vec::new();
    for i in 0..b {
        for t in 0..s.saturating_sub(1) {
            let label = batch.labels[[i, t + 1]];
            if label != batch.ignore_index {
                out.push((i, t, label, mask[[i, t + 1]]));
            }
        }
    }
    out
}

pub fn weighted_sft_loss(batch: &TokenBatch) -> Result<LossReport, LossMaskError> {
    batch.validate()?;
    let mut numerator = 0.0;
    let mut effective_sum = 0.0;
    let positions = active_positions(batch);
    for &(i, t, label, w) in &positions {
        let ce = token_cross_entropy(batch.logits.slice(ndarray::s![i, t, ..]), label)?;
        numerator += ce * w;
        effective_sum += w;
    }
    let loss = if effective_sum > EFFECTIVE_SUM_EPS {
        numerator / effective_sum
    } else {
        0.0
    };
    Ok(LossReport {
        loss,
        effective_sum,
        masked_token_count: positions.len(),
    })
}

/// d loss / d logits: `(softmax - onehot) * w / effective_sum` at each active
/// position, zero elsewhere (and everywhere when the guard returns 0).
pub fn weighted_sft_loss_grad(batch: &TokenBatch) -> Result<Array3<f64>, LossMaskError> {
    batch.validate()?;
    let mut grad = Array3::<f64>::zeros(batch.logits.dim());
    let positions = active_positions(batch);
    let effective_sum: f64 = positions.iter().map(|p| p.3).sum();
    if effective_sum <= EFFECTIVE_SUM_EPS {
        return Ok(grad);
    }
    for &(i, t, label, w) in &positions {
        let row = batch.logits.slice(ndarray::s![i, t, ..]);
        token_cross_entropy(row, label)?;
        let lse = log_sum_exp(row);
        let scale = w / effective_sum;
        for (k, &x) in row.iter().enumerate() {
            let onehot = if k as i64 == label { 1.0 } else { 0.0 };
            grad[[i, t, k]] = ((x - lse).exp() - onehot) * scale;
        }
    }
    Ok(grad)
}

/// JSON form of a batch: nested arrays plus the tag ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFile {
    pub labels: Vec<Vec<i64>>,
    pub logits: Vec<Vec<Vec<f64>>>,
    pub think_start_id: i64,
    pub think_end_id: i64,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_ignore")]
    pub ignore_index: i64,
}

fn default_weight() -> f64 {
    DEFAULT_THINK_WEIGHT
}

fn default_ignore() -> i64 {
    IGNORE_INDEX
}

impl TryFrom<BatchFile> for TokenBatch {
    type Error = LossMaskError;

    fn try_from(f: BatchFile) -> Result<Self, Self::Error> {
        let b = f.labels.len();
        let s = f.labels.first().map_or(0, Vec::len);
        if f.labels.iter().any(|r| r.len() != s) {
            return Err(LossMaskError::Ragged("labels"));
        }
        let v = f.logits.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if f.logits.iter().any(|r| r.len() != s || r.iter().any(|c| c.len() != v)) || f.logits.len() != b {
            return Err(LossMaskError::ShapeMismatch {
                labels: vec![b, s],
                logits: vec![f.logits.len(), f.logits.first().map_or(0, Vec::len), v],
            });
        }
        let labels = Array2::from_shape_vec((b, s), f.labels.into_iter().flatten().collect())
            .map_err(|e| LossMaskError::Parse(e.to_string()))?;
        let logits = Array3::from_shape_vec((b, s, v), f.logits.into_iter().flatten().flatten().collect())
            .map_err(|e| LossMaskError::Parse(e.to_string()))?;
        let batch = TokenBatch {
            labels,
            logits,
            think_start_id: f.think_start_id,
            think_end_id: f.think_end_id,
            weight: f.weight,
            ignore_index: f.ignore_index,
        };
        batch.validate()?;
        Ok(batch)
    }
}

pub fn parse_batch_json(text: &str) -> Result<TokenBatch, LossMaskError> {
    let file: BatchFile = serde_json::from_str(text).map_err(|e| LossMaskError::Parse(e.to_string()))?;
    TokenBatch::try_from(file)
}
