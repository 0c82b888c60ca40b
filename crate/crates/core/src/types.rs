//! Shared domain types and the two numeric primitives every stage relies on.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the Euclidean norm of a normalized vector.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdentityLabel {
    pub id: usize,
    pub name: String,
}

impl IdentityLabel {
    pub fn new(id: usize, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::invalid("identity label", "name is empty"));
        }
        Ok(Self { id, name })
    }

    /// Labels with dense ids assigned in the given order.
    pub fn dense<S: AsRef<str>>(names: &[S]) -> Result<Vec<Self>> {
        names
            .iter()
            .enumerate()
            .map(|(id, name)| Self::new(id, name.as_ref()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Wraps a raw (not normalized) vector.
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Scales `v` to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<Embedding> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerics("l2_normalize input"));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Normalization);
    }
    Ok(Embedding {
        values: v.iter().map(|x| x / norm).collect(),
        normalized: true,
    })
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if !a.normalized || !b.normalized {
        return Err(Error::invalid(
            "embedding",
            "cosine similarity needs normalized embeddings",
        ));
    }
    Ok(dot(&a.values, &b.values).clamp(-1.0, 1.0))
}

/// Sequential left-to-right dot product. The fixed summation order keeps
/// every caller bit-reproducible and symmetric in its arguments.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub(crate) fn row_norm(row: ArrayView1<'_, f64>) -> f64 {
    row.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

/// The trainable object: one unit-norm class embedding per enrolled identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Gallery {
    pub class_embeddings: Array2<f64>,
    pub labels: Vec<IdentityLabel>,
    pub prompts: Vec<String>,
    pub logit_scale: f64,
}

impl Gallery {
    /// Builds a gallery, normalizing every row.
    pub fn new(
        rows: Array2<f64>,
        labels: Vec<IdentityLabel>,
        prompts: Vec<String>,
        logit_scale: f64,
    ) -> Result<Self> {
        if rows.nrows() != labels.len() || labels.len() != prompts.len() {
            return Err(Error::invalid(
                "gallery",
                format!(
                    "{} rows, {} labels and {} prompts",
                    rows.nrows(),
                    labels.len(),
                    prompts.len()
                ),
            ));
        }
        if !(logit_scale > 0.0 && logit_scale.is_finite()) {
            return Err(Error::invalid("gallery", "logit scale must be positive"));
        }
        if rows.ncols() == 0 {
            return Err(Error::invalid("gallery", "embedding dimension is zero"));
        }
        let mut gallery = Self {
            class_embeddings: rows,
            labels,
            prompts,
            logit_scale,
        };
        gallery.renormalize()?;
        Ok(gallery)
    }

    pub fn num_classes(&self) -> usize {
        self.class_embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.class_embeddings.ncols()
    }

    pub fn label(&self, id: usize) -> Option<&IdentityLabel> {
        self.labels.get(id)
    }

    /// Projects every row back onto the unit sphere.
    pub fn renormalize(&mut self) -> Result<()> {
        for mut row in self.class_embeddings.rows_mut() {
            let norm = row_norm(row.view());
            if !norm.is_finite() {
                return Err(Error::Numerics("gallery row"));
            }
            if norm == 0.0 {
                return Err(Error::Normalization);
            }
            row.mapv_inplace(|x| x / norm);
        }
        Ok(())
    }
}

/// Scaled-cosine logits `x[n, c]`, one row per image in the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits(pub Array2<f64>);

impl Logits {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() < 2 {
            return Err(Error::invalid(
                "logits",
                format!("shape {}x{} (need N >= 1, C >= 2)", values.nrows(), values.ncols()),
            ));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerics("logits"));
        }
        Ok(Self(values))
    }

    pub fn batch_size(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }
}

/// Targets `y[n, c]` with per-class weights `w[c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBatch {
    targets: Array2<f64>,
    weights: Vec<f64>,
}

impl TargetBatch {
    /// One-hot targets with unit class weights.
    pub fn from_indices(indices: &[usize], num_classes: usize) -> Result<Self> {
        let mut targets = Array2::zeros((indices.len(), num_classes));
        for (n, &c) in indices.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::invalid(
                    "target batch",
                    format!("class {c} out of range for {num_classes} classes"),
                ));
            }
            targets[[n, c]] = 1.0;
        }
        Self::new(targets, vec![1.0; num_classes])
    }

    /// Arbitrary target rows; each row must be non-negative and sum to 1.
    pub fn new(targets: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != targets.ncols() {
            return Err(Error::Dimension {
                expected: targets.ncols(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("class weights", "all weights must be positive"));
        }
        for row in targets.rows() {
            if row.iter().any(|y| !(*y >= 0.0)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("target batch", "each row must sum to 1"));
            }
        }
        Ok(Self { targets, weights })
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.targets, weights)
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Training and decision hyperparameters. Defaults reproduce the reference
/// configuration (AdamW, lr 5e-6, weight decay 1e-3, batch 16, one pass,
/// 80% confidence).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub learning_rate_initial: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_min: f64,
    pub confidence_threshold: f64,
    pub logit_scale: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate_initial: 5e-6,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            epochs: 1,
            lr_min: 0.0,
            confidence_threshold: 0.80,
            logit_scale: 100.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(Error::invalid("hyperparameters", reason));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return fail("beta1 must lie in (0, 1)");
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return fail("beta2 must lie in (0, 1)");
        }
        if !(self.learning_rate_initial > 0.0 && self.learning_rate_initial.is_finite()) {
            return fail("learning_rate_initial must be positive");
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.learning_rate_initial) {
            return fail("lr_min must lie in [0, learning_rate_initial]");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return fail("confidence_threshold must lie in (0, 1)");
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return fail("logit_scale must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let e = l2_normalize(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(e.values()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(e.values()[1], 0.8, epsilon = 1e-15);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap().values(), &[1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::Normalization)));
    }

    #[test]
    fn cosine_examples() {
        let a = l2_normalize(&[0.3, -1.2, 2.0]).unwrap();
        let neg = l2_normalize(&[-0.3, 1.2, -2.0]).unwrap();
        assert_abs_diff_eq!(cosine_similarity(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_similarity(&a, &neg).unwrap(), -1.0, epsilon = 1e-15);
        let x = l2_normalize(&[1.0, 0.0]).unwrap();
        let y = l2_normalize(&[0.0, 2.0]).unwrap();
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&x, &a),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn gallery_checks_shapes_and_normalizes() {
        let labels = IdentityLabel::dense(&["a", "b"]).unwrap();
        let prompts = vec!["a".to_string(), "b".to_string()];
        let g = Gallery::new(array![[2.0, 0.0], [1.0, 1.0]], labels.clone(), prompts.clone(), 100.0)
            .unwrap();
        for row in g.class_embeddings.rows() {
            assert_abs_diff_eq!(row_norm(row), 1.0, epsilon = 1e-12);
        }
        assert!(Gallery::new(array![[1.0, 0.0]], labels.clone(), prompts.clone(), 100.0).is_err());
        assert!(Gallery::new(array![[1.0, 0.0], [0.0, 1.0]], labels, prompts, 0.0).is_err());
    }

    #[test]
    fn target_rows_must_sum_to_one() {
        assert!(TargetBatch::new(array![[0.5, 0.4]], vec![1.0, 1.0]).is_err());
        assert!(TargetBatch::from_indices(&[0, 1], 2)
            .unwrap()
            .with_weights(vec![1.0, 0.0])
            .is_err());
        assert!(TargetBatch::from_indices(&[2], 2).is_err());
    }

    #[test]
    fn empty_label_name_rejected() {
        assert!(IdentityLabel::new(0, "").is_err());
    }

    #[test]
    fn default_hyperparams_are_valid() {
        HyperParams::default().validate().unwrap();
        let bad = HyperParams {
            confidence_threshold: 1.0,
            ..HyperParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn normalized_vectors_have_unit_norm(v in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            prop_assume!(v.iter().any(|x| *x != 0.0));
            let e = l2_normalize(&v).unwrap();
            let norm = e.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        }

        #[test]
        fn cosine_is_symmetric_and_bounded(
            pair in (1usize..32).prop_flat_map(|d| (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            ))
        ) {
            let (a, b) = pair;
            prop_assume!(a.iter().any(|x| *x != 0.0) && b.iter().any(|x| *x != 0.0));
            let a = l2_normalize(&a).unwrap();
            let b = l2_normalize(&b).unwrap();
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab.abs() <= 1.0 + 1e-9);
        }
    }
}
