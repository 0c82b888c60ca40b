//! Open-set decisions: the softmax maximum over the gallery is the
//! confidence, and anything below the threshold is Unknown.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::finetune::compute_logits;
use crate::types::{Embedding, Gallery};

/// Slack for the `confidence >= threshold` comparison, so a probability
/// that equals the threshold mathematically is not rejected by the last
/// bit of rounding.
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Identified { class: usize, confidence: f64 },
    Unknown { top: usize, top_confidence: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecognitionDecision {
    pub outcome: Outcome,
    pub probabilities: Vec<f64>,
}

impl RecognitionDecision {
    pub fn from_probabilities(probabilities: Vec<f64>, threshold: f64) -> Self {
        let top = argmax(&probabilities);
        let confidence = probabilities[top];
        let outcome = if confidence >= threshold - THRESHOLD_TOLERANCE {
            Outcome::Identified {
                class: top,
                confidence,
            }
        } else {
            Outcome::Unknown {
                top,
                top_confidence: confidence,
            }
        };
        Self {
            outcome,
            probabilities,
        }
    }

    pub fn identified(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Identified { class, .. } => Some(class),
            Outcome::Unknown { .. } => None,
        }
    }

    pub fn confidence(&self) -> f64 {
        match self.outcome {
            Outcome::Identified { confidence, .. } => confidence,
            Outcome::Unknown { top_confidence, .. } => top_confidence,
        }
    }

    /// `"<label|UNKNOWN> <confidence>"` with four decimals.
    pub fn render_line(&self, gallery: &Gallery) -> String {
        match self.outcome {
            Outcome::Identified { class, confidence } => {
                let name = gallery.label(class).map_or("?", |l| l.name.as_str());
                format!("{name} {confidence:.4}")
            }
            Outcome::Unknown { top_confidence, .. } => format!("UNKNOWN {top_confidence:.4}"),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax input", "no logits"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerics("softmax input"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn predict_logits(logits: ArrayView1<'_, f64>, threshold: f64) -> Result<RecognitionDecision> {
    let p = softmax(&logits.to_vec())?;
    Ok(RecognitionDecision::from_probabilities(p, threshold))
}

pub fn predict(emb: &Embedding, gallery: &Gallery, threshold: f64) -> Result<RecognitionDecision> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold", format!("{threshold} outside (0, 1)")));
    }
    let row = ndarray::Array2::from_shape_vec((1, emb.dim()), emb.values().to_vec())
        .expect("one row");
    let logits = compute_logits(&row, gallery)?;
    predict_logits(logits.0.row(0), threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{l2_normalize, IdentityLabel};
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn gallery(rows: Array2<f64>) -> Gallery {
        let names: Vec<String> = (0..rows.nrows()).map(|i| format!("p{i}")).collect();
        Gallery::new(rows, IdentityLabel::dense(&names).unwrap(), names, 100.0).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p[0] > 1.0 - 1e-15 && p[1] < 1e-300);
        // Direct evaluation: e^k / (e + e^2 + e^3).
        let e = std::f64::consts::E;
        let z = e + e * e + e * e * e;
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (k, pk) in p.iter().enumerate() {
            assert!((pk - e.powi(k as i32 + 1) / z).abs() < 1e-12);
        }
        assert!(matches!(softmax(&[f64::INFINITY, 0.0]), Err(Error::Numerics(_))));
    }

    #[test]
    fn saturated_identification() {
        let g = gallery(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let emb = l2_normalize(&[0.0, 0.0, 1.0]).unwrap();
        let d = predict(&emb, &g, 0.8).unwrap();
        match d.outcome {
            Outcome::Identified { class, confidence } => {
                assert_eq!(class, 2);
                assert!(confidence > 1.0 - 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(d.render_line(&g), "p2 1.0000");
    }

    #[test]
    fn below_threshold_is_unknown() {
        let d = RecognitionDecision::from_probabilities(vec![0.79, 0.21], 0.80);
        assert_eq!(
            d.outcome,
            Outcome::Unknown {
                top: 0,
                top_confidence: 0.79
            }
        );
        let g = gallery(array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(d.render_line(&g), "UNKNOWN 0.7900");
    }

    #[test]
    fn exact_threshold_is_identified() {
        // Two classes, logit gap ln 4 gives p = 4/5. With scale 100 the image
        // must satisfy 100 (cos a - cos b) = ln 4 against orthogonal rows.
        let gap = 4f64.ln() / 100.0;
        // Unit vector (x, y) with x - y = gap.
        let x = (gap + (2.0 - gap * gap).sqrt()) / 2.0;
        let y = x - gap;
        let g = gallery(array![[1.0, 0.0], [0.0, 1.0]]);
        let emb = l2_normalize(&[x, y]).unwrap();
        let d = predict(&emb, &g, 0.80).unwrap();
        assert!((d.confidence() - 0.8).abs() < 1e-12);
        assert_eq!(d.identified(), Some(0));
    }

    #[test]
    fn ties_go_to_lowest_class() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        let d = RecognitionDecision::from_probabilities(vec![0.5, 0.5], 0.4);
        assert_eq!(d.identified(), Some(0));
    }

    #[test]
    fn dimension_mismatch() {
        let g = gallery(array![[1.0, 0.0], [0.0, 1.0]]);
        let emb = l2_normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(predict(&emb, &g, 0.8), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn shift_invariance(
            logits in prop::collection::vec(-50.0f64..50.0, 2..8),
            shift in -100.0f64..100.0,
            threshold in 0.05f64..0.95,
        ) {
            let a = RecognitionDecision::from_probabilities(softmax(&logits).unwrap(), threshold);
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let b = RecognitionDecision::from_probabilities(softmax(&shifted).unwrap(), threshold);
            prop_assert_eq!(a.identified(), b.identified());
            prop_assert!((a.confidence() - b.confidence()).abs() < 1e-9);
            let sum: f64 = a.probabilities.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn threshold_monotone(
            logits in prop::collection::vec(-20.0f64..20.0, 2..8),
            t1 in 0.01f64..0.99,
            t2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let p = softmax(&logits).unwrap();
            let at_lo = RecognitionDecision::from_probabilities(p.clone(), lo);
            let at_hi = RecognitionDecision::from_probabilities(p.clone(), hi);
            if at_lo.identified().is_none() {
                prop_assert!(at_hi.identified().is_none());
            }
            if let Some(c) = at_lo.identified() {
                prop_assert_eq!(c, argmax(&p));
            }
        }
    }
}
