use std::ops::{Add, AddAssign};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::finetune::compute_logits;
use crate::recognize::argmax;
use crate::types::Gallery;

/// One count per deployment session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `100 (TP + TN) / (TP + TN + FP + FN)`.
    pub fn accuracy(&self) -> Result<f64> {
        percentage(self.tp + self.tn, self.total(), "accuracy with no sessions")
    }

    /// `100 FP / (FP + TN)`.
    pub fn fpr(&self) -> Result<f64> {
        percentage(self.fp, self.fp + self.tn, "FPR with FP + TN = 0")
    }

    /// `100 FN / (FN + TP)`.
    pub fn fnr(&self) -> Result<f64> {
        percentage(self.fn_, self.fn_ + self.tp, "FNR with FN + TP = 0")
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

fn percentage(num: u64, den: u64, what: &'static str) -> Result<f64> {
    if den == 0 {
        return Err(Error::UndefinedMetric(what));
    }
    Ok((100 * num) as f64 / den as f64)
}

/// Closed-set accuracy (percent) of held-out embeddings: argmax over the
/// gallery, no threshold.
pub fn training_accuracy(embeddings: &Array2<f64>, labels: &[usize], gallery: &Gallery) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset("test split has no embeddings".into()));
    }
    if embeddings.nrows() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: embeddings.nrows(),
        });
    }
    let logits = compute_logits(embeddings, gallery)?;
    let correct = logits
        .0
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &label)| argmax(&row.to_vec()) == label)
        .count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}
