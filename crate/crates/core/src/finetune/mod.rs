//! Single-shot fine-tuning of the per-class prompt embeddings against frozen
//! image embeddings.

pub mod checkpoint;
mod loss;
mod optim;
mod prompts;
mod schedule;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingCache;
use crate::error::{Error, Result};
use crate::preprocess::Split;
use crate::recognize::argmax;
use crate::rng::SplitMix64;
use crate::types::{Gallery, HyperParams, TargetBatch};

pub use checkpoint::{load_gallery, read_gallery, save_gallery, write_gallery};
pub use loss::{compute_logits, cross_entropy_loss, logit_gradient, loss_gradient};
pub use optim::{adamw_step, adamw_update, OptimizerState};
pub use prompts::{
    build_prompts, init_gallery, InitSource, PromptEmbeddingFile, DEFAULT_TEMPLATE, PLACEHOLDER,
};
pub use schedule::cosine_lr;

/// Normalized image embeddings with their identity ids.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub embeddings: Array2<f64>,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(embeddings: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if embeddings.nrows() != labels.len() {
            return Err(Error::invalid(
                "training set",
                format!("{} rows but {} labels", embeddings.nrows(), labels.len()),
            ));
        }
        Ok(Self { embeddings, labels })
    }

    /// The train split of a cache.
    pub fn from_cache(cache: &EmbeddingCache) -> Result<Self> {
        let (embeddings, labels) = cache.matrix(Some(Split::Train))?;
        Self::new(embeddings, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    /// Loss on the batch before the update.
    pub loss: f64,
    /// Fraction of the batch whose argmax class was correct before the update.
    pub batch_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        for record in &self.steps {
            writer.serialize(record).map_err(csv_error)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let steps = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<Vec<StepRecord>, _>>()
            .map_err(csv_error)?;
        Ok(Self { steps })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Mean loss over each quarter of training (fewer than four steps give
    /// fewer groups).
    pub fn quarter_means(&self) -> Vec<f64> {
        let n = self.steps.len();
        if n == 0 {
            return Vec::new();
        }
        let size = n.div_ceil(4);
        self.steps
            .chunks(size)
            .map(|c| c.iter().map(|s| s.loss).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid("training history", e.to_string())
}

pub fn total_steps(n_train: usize, batch_size: usize, epochs: usize) -> usize {
    epochs * n_train.div_ceil(batch_size)
}

/// Trains the gallery rows with AdamW under a cosine schedule, one seeded
/// shuffle per epoch, keeping the last partial batch.
pub fn finetune_single_shot(
    train: &TrainingSet,
    gallery: Gallery,
    hp: &HyperParams,
    seed: u64,
) -> Result<(Gallery, TrainHistory)> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split has no embeddings".into()));
    }
    let classes = gallery.num_classes();
    if classes < 2 {
        return Err(Error::InsufficientClasses(classes));
    }
    if train.embeddings.ncols() != gallery.dim() {
        return Err(Error::Dimension {
            expected: gallery.dim(),
            actual: train.embeddings.ncols(),
        });
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(
            "training set",
            format!("label {bad} outside the gallery's {classes} classes"),
        ));
    }

    let mut gallery = gallery;
    let n = train.len();
    let total = total_steps(n, hp.batch_size, hp.epochs);
    let mut state = OptimizerState::new(classes, gallery.dim());
    let mut rng = SplitMix64::new(seed);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..hp.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(hp.batch_size) {
            let step = history.steps.len();
            let lr = cosine_lr(step, total, hp.learning_rate_initial, hp.lr_min)?;
            let images = train.embeddings.select(Axis(0), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let targets = TargetBatch::from_indices(&labels, classes)?;
            let logits = compute_logits(&images, &gallery)?;
            let loss = cross_entropy_loss(&logits, &targets)?;
            let correct = logits
                .0
                .rows()
                .into_iter()
                .zip(&labels)
                .filter(|(row, &label)| argmax(row.as_slice().expect("standard layout")) == label)
                .count();
            let grads = loss_gradient(&logits, &targets, &images, &gallery)?;
            adamw_step(&mut gallery, &grads, &mut state, hp, lr)?;
            history.steps.push(StepRecord {
                step,
                lr,
                loss,
                batch_accuracy: correct as f64 / batch.len() as f64,
            });
        }
    }
    log::debug!(
        "trained {} steps, final batch loss {:.4}",
        history.steps.len(),
        history.steps.last().map_or(f64::NAN, |s| s.loss)
    );
    Ok((gallery, history))
}
