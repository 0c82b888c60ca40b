use std::fmt;

use super::EmbeddingCache;
use crate::error::{Error, Result};
use crate::types::dot;

/// Number of equal-width histogram bins over `[-1, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct SimilaritySummary {
    pub pairs: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Cosine similarity between cached embeddings. `cross_identity` covers pairs
/// of images of different people only; `all_pairs` covers every unordered
/// pair of distinct images.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineStats {
    pub cross_identity: SimilaritySummary,
    pub all_pairs: SimilaritySummary,
    /// Cross-identity pair counts per bin; bin `i` covers
    /// `[-1 + i * 0.1, -1 + (i + 1) * 0.1)`, the last bin includes 1.
    pub histogram: [u64; HISTOGRAM_BINS],
}

struct Accumulator {
    pairs: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            pairs: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.pairs += 1;
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn finish(self) -> SimilaritySummary {
        SimilaritySummary {
            pairs: self.pairs,
            mean: self.sum / self.pairs as f64,
            min: self.min,
            max: self.max,
        }
    }
}

pub fn histogram_bin(similarity: f64) -> usize {
    let scaled = (similarity + 1.0) / 2.0 * HISTOGRAM_BINS as f64;
    (scaled.floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn pairwise_cosine_stats(cache: &EmbeddingCache) -> Result<CosineStats> {
    let (rows, labels) = cache.matrix(None)?;
    let mut present = labels.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::InsufficientClasses(present.len()));
    }
    let mut cross = Accumulator::new();
    let mut all = Accumulator::new();
    let mut histogram = [0u64; HISTOGRAM_BINS];
    let rows: Vec<Vec<f64>> = rows.rows().into_iter().map(|r| r.to_vec()).collect();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let s = dot(&rows[i], &rows[j]).clamp(-1.0, 1.0);
            all.push(s);
            if labels[i] != labels[j] {
                cross.push(s);
                histogram[histogram_bin(s)] += 1;
            }
        }
    }
    Ok(CosineStats {
        cross_identity: cross.finish(),
        all_pairs: all.finish(),
        histogram,
    })
}

impl fmt::Display for CosineStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, s) in [("cross-identity", &self.cross_identity), ("all pairs", &self.all_pairs)] {
            writeln!(
                f,
                "{name:<15} pairs={:<8} mean={:.4} min={:.4} max={:.4}",
                s.pairs, s.mean, s.min, s.max
            )?;
        }
        writeln!(f, "cross-identity histogram:")?;
        for (i, count) in self.histogram.iter().enumerate() {
            let lo = -1.0 + i as f64 * 2.0 / HISTOGRAM_BINS as f64;
            writeln!(f, "  [{lo:+.1}, {:+.1}) {count}", lo + 2.0 / HISTOGRAM_BINS as f64)?;
        }
        Ok(())
    }
}
