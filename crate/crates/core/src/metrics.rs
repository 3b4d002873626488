//! Softmax cross-entropy and classification metrics.

use crate::error::{Result, SkanError};
use crate::tensor::{Matrix, Real};

/// Which split a metrics row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub split: Split,
    /// Mean cross-entropy over the split.
    pub loss: f64,
    pub accuracy: f64,
    /// Macro-averaged F1.
    pub f1: f64,
    /// Wall time of the training epoch, evaluation excluded.
    pub epoch_time_s: f64,
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot) / batch`.
///
/// Logits are shifted by their row maximum before exponentiation; the loss is
/// accumulated in f64 regardless of `T`.
pub fn softmax_xent<T: Real>(logits: &Matrix<T>, labels: &[u8]) -> Result<(f64, Matrix<T>)> {
    let (batch, classes) = logits.shape();
    if batch == 0 {
        return Err(SkanError::Contract {
            op: "softmax_xent",
            detail: "empty batch".into(),
        });
    }
    if labels.len() != batch {
        return Err(SkanError::shape(
            "softmax_xent",
            format!("{batch} labels"),
            format!("{} labels", labels.len()),
        ));
    }
    let scale = 1.0 / batch as f64;
    let mut grad = Matrix::zeros(batch, classes);
    let mut total = 0.0;
    let mut probs = vec![0.0f64; classes];
    for (b, (row, &label)) in logits.iter_rows().zip(labels).enumerate() {
        let label = label as usize;
        if label >= classes {
            return Err(SkanError::Contract {
                op: "softmax_xent",
                detail: format!("label {label} at row {b} is outside [0, {classes})"),
            });
        }
        let top = argmax(row);
        let max = row[top].as_f64();
        // The max term contributes exactly 1; the rest goes through ln_1p.
        let mut rest = 0.0;
        for (c, (p, v)) in probs.iter_mut().zip(row).enumerate() {
            *p = (v.as_f64() - max).exp();
            if c != top {
                rest += *p;
            }
        }
        let sum = 1.0 + rest;
        total += rest.ln_1p() - (row[label].as_f64() - max);
        for (c, (g, p)) in grad.row_mut(b).iter_mut().zip(&probs).enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            *g = T::from_f64((p / sum - onehot) * scale);
        }
    }
    Ok((total * scale, grad))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise [`argmax`] of a logits matrix.
pub fn predictions<T: Real>(logits: &Matrix<T>) -> Vec<u8> {
    logits.iter_rows().map(|r| argmax(r) as u8).collect()
}

fn check_pair(op: &'static str, preds: &[u8], labels: &[u8]) -> Result<()> {
    if preds.is_empty() {
        return Err(SkanError::Contract {
            op,
            detail: "no predictions".into(),
        });
    }
    if preds.len() != labels.len() {
        return Err(SkanError::shape(
            op,
            format!("{} labels", preds.len()),
            format!("{} labels", labels.len()),
        ));
    }
    Ok(())
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_pair("accuracy", preds, labels)?;
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Unweighted mean over `classes` of per-class F1. A class that is never
/// predicted and never present contributes 0.
pub fn macro_f1(preds: &[u8], labels: &[u8], classes: usize) -> Result<f64> {
    check_pair("macro_f1", preds, labels)?;
    if classes == 0 {
        return Err(SkanError::Contract {
            op: "macro_f1",
            detail: "zero classes".into(),
        });
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (i, (&p, &l)) in preds.iter().zip(labels).enumerate() {
        let (p, l) = (p as usize, l as usize);
        if p >= classes || l >= classes {
            return Err(SkanError::Contract {
                op: "macro_f1",
                detail: format!("class id out of range at index {i} (pred {p}, label {l})"),
            });
        }
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let total: f64 = (0..classes)
        .map(|c| {
            // 2PR/(P+R) = 2TP / (2TP + FP + FN)
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / classes as f64)
}
