//! Frozen image encoders, the on-disk embedding cache and embedding-space
//! diagnostics.
//!
//! Backends only produce raw vectors; normalization happens here, once, in
//! [`embed_image`] and when cached vectors are loaded.

pub(crate) mod cache;
mod diagnostics;
mod manifest;
mod mock;
#[cfg(feature = "onnx")]
mod onnx;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{CacheRecord, EmbeddingCache};
pub use diagnostics::{pairwise_cosine_stats, CosineStats, SimilaritySummary, HISTOGRAM_BINS};
pub use manifest::{load_backend, BackendKind, BackendManifest};
pub use mock::{equiangular_centers, MockBackend, MockConfig, BARCODE_MAGIC};
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;

use crate::error::{Error, Result};
use crate::preprocess::{load_face, DatasetIndex, FaceImage, Warning, ALIGNED_SIZE};
use crate::types::{l2_normalize, Embedding};

/// A frozen image encoder. Implementations must be pure: the same pixels
/// always give the same output, and concurrent calls from several threads
/// are allowed.
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Output dimension `D`.
    fn dim(&self) -> usize;

    /// Raw (not normalized) embedding of a 224x224 RGB image.
    fn embed_raw(&self, image: &FaceImage) -> Result<Vec<f32>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelOrder {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "BGR")]
    Bgr,
}

/// Pixel-to-tensor conversion: `(pixel / 255 - mean[c]) / std[c]`, laid out
/// as a `1x3x224x224` planar tensor in `order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub channel_order: ChannelOrder,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Preprocessing {
    pub fn to_tensor(&self, image: &FaceImage) -> Result<Vec<f32>> {
        check_shape(image)?;
        let plane = (ALIGNED_SIZE * ALIGNED_SIZE) as usize;
        let mut out = vec![0f32; 3 * plane];
        let order = match self.channel_order {
            ChannelOrder::Rgb => [0, 1, 2],
            ChannelOrder::Bgr => [2, 1, 0],
        };
        for (i, px) in image.pixels.chunks_exact(3).enumerate() {
            for (c, &src) in order.iter().enumerate() {
                out[c * plane + i] = (px[src] as f32 / 255.0 - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }
}

fn check_shape(image: &FaceImage) -> Result<()> {
    if image.is_aligned_shape() && image.pixels.len() == (ALIGNED_SIZE * ALIGNED_SIZE * 3) as usize
    {
        Ok(())
    } else {
        Err(image.shape_error())
    }
}

/// Embeds one aligned face and normalizes it to unit length.
pub fn embed_image(backend: &dyn EncoderBackend, image: &FaceImage) -> Result<Embedding> {
    let raw = embed_checked(backend, image)?;
    let raw: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
    l2_normalize(&raw)
}

fn embed_checked(backend: &dyn EncoderBackend, image: &FaceImage) -> Result<Vec<f32>> {
    check_shape(image)?;
    let raw = backend.embed_raw(image)?;
    if raw.len() != backend.dim() {
        return Err(Error::Dimension {
            expected: backend.dim(),
            actual: raw.len(),
        });
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerics("encoder output"));
    }
    if raw.iter().all(|&x| x == 0.0) {
        return Err(Error::Normalization);
    }
    Ok(raw)
}

/// Embeds every image of `index`. Images are loaded, aligned and encoded in
/// parallel; records keep index order. Per-image failures become warnings.
pub fn embed_dataset(
    backend: &dyn EncoderBackend,
    index: &DatasetIndex,
) -> Result<(EmbeddingCache, Vec<Warning>)> {
    if index.is_empty() {
        return Err(Error::EmptyDataset("dataset index has no entries".into()));
    }
    let results: Vec<_> = index
        .entries
        .par_iter()
        .map(|entry| {
            let path = index.absolute_path(entry);
            let outcome = load_face(&path, index.subject(entry))
                .and_then(|(face, warning)| Ok((embed_checked(backend, &face)?, warning)));
            (entry, path, outcome)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(results.len());
    for (entry, path, outcome) in results {
        match outcome {
            Ok((raw, warning)) => {
                warnings.extend(warning);
                records.push(CacheRecord {
                    path: entry.path.to_string_lossy().into_owned(),
                    label: entry.label,
                    split: entry.split,
                    raw,
                });
            }
            Err(e) => warnings.push(Warning::new(path, e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset("no image could be embedded".into()));
    }
    let cache = EmbeddingCache {
        dim: backend.dim(),
        backend: backend.name().to_string(),
        fingerprint: index.fingerprint(),
        labels: index.labels.clone(),
        records,
    };
    Ok((cache, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{ingest_dataset, split_dataset, Split};
    use std::fs;

    #[test]
    fn embed_image_is_deterministic_and_unit_norm() {
        let backend = MockBackend::new(MockConfig::projection(3, 32)).unwrap();
        let img = MockBackend::render(4, 17);
        let a = embed_image(&backend, &img).unwrap();
        let b = embed_image(&backend, &img).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 32);
        let norm = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_shape_rejected() {
        let backend = MockBackend::new(MockConfig::projection(3, 8)).unwrap();
        let img = FaceImage::new(vec![0; 100 * 100 * 3], 100, 100, 3).unwrap();
        assert!(matches!(embed_image(&backend, &img), Err(Error::Shape { .. })));
    }

    #[test]
    fn preprocessing_normalizes_planes() {
        let pre = Preprocessing {
            channel_order: ChannelOrder::Bgr,
            mean: [0.5, 0.5, 0.5],
            std: [0.5, 0.25, 0.5],
        };
        let mut pixels = vec![0u8; 224 * 224 * 3];
        pixels[0] = 255; // red of the first pixel
        let img = FaceImage::new(pixels, 224, 224, 3).unwrap();
        let t = pre.to_tensor(&img).unwrap();
        let plane = 224 * 224;
        assert_eq!(t.len(), 3 * plane);
        // BGR: red lands in the last plane.
        assert_eq!(t[2 * plane], 1.0);
        assert_eq!(t[0], -1.0);
        assert_eq!(t[plane], -2.0);
    }

    #[test]
    fn embed_dataset_records_every_image() {
        let dir = tempfile::tempdir().unwrap();
        for id in 0..3u16 {
            let d = dir.path().join(format!("person_{id}"));
            fs::create_dir_all(&d).unwrap();
            for n in 0..5u32 {
                MockBackend::render(id, n).save_png(&d.join(format!("{n}.png"))).unwrap();
            }
        }
        fs::write(dir.path().join("person_0/bad.png"), b"junk").unwrap();
        let (index, _) = ingest_dataset(dir.path()).unwrap();
        let (index, _) = split_dataset(&index, 0.8, 42).unwrap();
        let backend = MockBackend::new(MockConfig::default()).unwrap();
        let (cache, warnings) = embed_dataset(&backend, &index).unwrap();
        assert_eq!(cache.records.len(), 15);
        assert!(warnings.is_empty());
        assert_eq!(cache.fingerprint, index.fingerprint());
        assert_eq!(cache.records_in(Split::Test).count(), 3);
    }

    #[test]
    fn empty_index_rejected() {
        let backend = MockBackend::new(MockConfig::default()).unwrap();
        let index = DatasetIndex {
            root: "/nowhere".into(),
            labels: vec![],
            entries: vec![],
            split: None,
        };
        assert!(matches!(
            embed_dataset(&backend, &index),
            Err(Error::EmptyDataset(_))
        ));
    }
}
