//! Dataset ingestion, five-point face alignment and the train/test split.
//!
//! Dataset layout on disk is `root/<identity name>/<image files>`. An image
//! may carry a landmarks sidecar next to it with the same basename and the
//! extension `.lm5`: five lines of `x y` pixel coordinates (left eye, right
//! eye, nose tip, left mouth corner, right mouth corner). Images with a
//! sidecar are aligned onto [`TEMPLATE_224`]; images without one are
//! center-cropped and resized, and a warning is recorded.

mod align;
mod dataset;
mod split;
mod transform;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

pub use align::{align_face, center_crop_resize};
pub use dataset::{ingest_dataset, DatasetIndex, IndexEntry, Split};
pub use split::split_dataset;
pub use transform::{
    estimate_similarity_transform, Landmarks5, Point, SimilarityTransform, TEMPLATE_224,
};

use crate::error::{Error, Result};
use crate::types::IdentityLabel;

/// Side length of aligned face crops.
pub const ALIGNED_SIZE: u32 = 224;

pub const LANDMARKS_EXTENSION: &str = "lm5";

/// Whom an image shows, when known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Subject {
    Known(IdentityLabel),
    Unknown,
}

/// An interleaved 8-bit pixel buffer with provenance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceImage {
    pub pixels: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub source: Option<PathBuf>,
    pub subject: Subject,
}

impl FaceImage {
    pub fn new(pixels: Vec<u8>, width: u32, height: u32, channels: u8) -> Result<Self> {
        if pixels.len() != width as usize * height as usize * channels as usize {
            return Err(Error::invalid(
                "image",
                format!(
                    "{} bytes for a {width}x{height}x{channels} buffer",
                    pixels.len()
                ),
            ));
        }
        Ok(Self {
            pixels,
            width,
            height,
            channels,
            source: None,
            subject: Subject::Unknown,
        })
    }

    /// Decodes an image file into RGB.
    pub fn open(path: &Path) -> Result<Self> {
        let rgb = image::open(path)?.to_rgb8();
        let (width, height) = rgb.dimensions();
        let mut img = Self::new(rgb.into_raw(), width, height, 3)?;
        img.source = Some(path.to_path_buf());
        Ok(img)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if self.channels != 3 {
            return Err(self.shape_error());
        }
        image::save_buffer(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }

    pub fn is_aligned_shape(&self) -> bool {
        self.width == ALIGNED_SIZE && self.height == ALIGNED_SIZE && self.channels == 3
    }

    pub fn with_subject(mut self, subject: Subject) -> Self {
        self.subject = subject;
        self
    }

    pub(crate) fn shape_error(&self) -> Error {
        Error::Shape {
            width: self.width,
            height: self.height,
            channels: self.channels,
        }
    }
}

/// A non-fatal problem with one file, rendered as `WARN <path> <reason>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub path: PathBuf,
    pub reason: String,
}

impl Warning {
    pub fn new(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WARN {} {}", self.path.display(), self.reason)
    }
}

pub fn render_warnings(warnings: &[Warning]) -> String {
    warnings.iter().map(|w| format!("{w}\n")).collect()
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension(LANDMARKS_EXTENSION)
}

pub fn parse_landmarks(text: &str) -> std::result::Result<Landmarks5, String> {
    let mut points = Vec::with_capacity(5);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match coords.as_slice() {
            [x, y] => points.push([*x, *y]),
            _ => return Err(format!("expected `x y`, got {line:?}")),
        }
    }
    let points: [[f64; 2]; 5] = points
        .try_into()
        .map_err(|p: Vec<_>| format!("expected 5 points, got {}", p.len()))?;
    let lm = Landmarks5(points);
    if !lm.is_finite() {
        return Err("non-finite coordinate".into());
    }
    Ok(lm)
}

pub fn render_landmarks(lm: &Landmarks5) -> String {
    lm.points().iter().map(|[x, y]| format!("{x} {y}\n")).collect()
}

pub fn read_landmarks(path: &Path) -> Result<Landmarks5> {
    let text = fs::read_to_string(path)?;
    parse_landmarks(&text).map_err(|reason| Error::format("landmarks", path, reason))
}

/// Loads an image and brings it to the 224x224 encoder input: aligned via its
/// `.lm5` sidecar when present, center-cropped otherwise (with a warning).
pub fn load_face(path: &Path, subject: Subject) -> Result<(FaceImage, Option<Warning>)> {
    let img = FaceImage::open(path)?.with_subject(subject);
    let sidecar = sidecar_path(path);
    if sidecar.is_file() {
        let lm = read_landmarks(&sidecar)?;
        let (aligned, _) = align_face(&img, &lm, &TEMPLATE_224)?;
        Ok((aligned, None))
    } else {
        let warning = (!img.is_aligned_shape())
            .then(|| Warning::new(path, "no landmarks sidecar; center-cropped"));
        Ok((center_crop_resize(&img)?, warning))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landmarks_text_round_trip() {
        let text = render_landmarks(&TEMPLATE_224);
        assert_eq!(parse_landmarks(&text).unwrap(), TEMPLATE_224);
    }

    #[test]
    fn malformed_landmarks() {
        assert!(parse_landmarks("1 2\n3 4\n").is_err());
        assert!(parse_landmarks("1 2 3\n1 2\n1 2\n1 2\n1 2\n").is_err());
        assert!(parse_landmarks("a b\n1 2\n1 2\n1 2\n1 2\n").is_err());
    }

    #[test]
    fn warning_format() {
        let w = Warning::new("data/alice/1.png", "unreadable");
        assert_eq!(w.to_string(), "WARN data/alice/1.png unreadable");
    }

    #[test]
    fn load_face_uses_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.png");
        let img = FaceImage::new(vec![90; 300 * 260 * 3], 300, 260, 3).unwrap();
        img.save_png(&path).unwrap();

        let (plain, warning) = load_face(&path, Subject::Unknown).unwrap();
        assert!(plain.is_aligned_shape());
        assert!(warning.is_some());

        let shifted = Landmarks5(TEMPLATE_224.0.map(|[x, y]| [x + 20.0, y + 10.0]));
        fs::write(sidecar_path(&path), render_landmarks(&shifted)).unwrap();
        let (aligned, warning) = load_face(&path, Subject::Unknown).unwrap();
        assert!(aligned.is_aligned_shape());
        assert!(warning.is_none());
    }
}
