use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChannelOrder, EncoderBackend, MockBackend, MockConfig, Preprocessing};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Onnx,
    Mock,
}

/// Encoder backend manifest, a `key = value` text file:
///
/// ```text
/// backend = "onnx"                 # or "mock"
/// model = "image_encoder.onnx"     # relative to the manifest's directory
/// dim = 1024
/// channel_order = "RGB"
/// mean = [0.48145466, 0.4578275, 0.40821073]
/// std = [0.26862954, 0.26130258, 0.27577711]
/// source = "checkpoint identifier"
///
/// [mock]                           # only for backend = "mock"
/// seed = 42
/// centers = 12
/// separation_deg = 60.0
/// noise_deg = 5.0
/// ```
///
/// ONNX models must take a `1x3x224x224` float tensor and return `D` floats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendManifest {
    #[serde(default = "default_kind")]
    pub backend: BackendKind,
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub dim: usize,
    #[serde(default = "default_order")]
    pub channel_order: ChannelOrder,
    #[serde(default = "default_mean")]
    pub mean: [f32; 3],
    #[serde(default = "default_std")]
    pub std: [f32; 3],
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub mock: Option<MockConfig>,
}

fn default_kind() -> BackendKind {
    BackendKind::Onnx
}

fn default_order() -> ChannelOrder {
    ChannelOrder::Rgb
}

fn default_mean() -> [f32; 3] {
    [0.481_454_66, 0.457_827_5, 0.408_210_73]
}

fn default_std() -> [f32; 3] {
    [0.268_629_54, 0.261_302_58, 0.275_777_11]
}

impl BackendManifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::BackendLoad(format!("manifest: {}", e.message())))
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("manifest serializes to TOML")
    }

    pub fn for_mock(config: MockConfig) -> Self {
        Self {
            backend: BackendKind::Mock,
            model: None,
            dim: config.dim,
            channel_order: default_order(),
            mean: default_mean(),
            std: default_std(),
            source: None,
            mock: Some(config),
        }
    }

    pub fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            channel_order: self.channel_order,
            mean: self.mean,
            std: self.std,
        }
    }

    /// Instantiates the backend; relative model paths resolve against `base`.
    pub fn instantiate(&self, base: &Path) -> Result<Box<dyn EncoderBackend>> {
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::BackendLoad("manifest std must be positive".into()));
        }
        match self.backend {
            BackendKind::Mock => {
                let mut config = self.mock.clone().unwrap_or_default();
                config.dim = self.dim;
                let backend =
                    MockBackend::new(config).map_err(|e| Error::BackendLoad(e.to_string()))?;
                Ok(Box::new(backend))
            }
            BackendKind::Onnx => {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::BackendLoad("manifest names no model file".into()))?;
                let path = base.join(model);
                load_onnx(&path, self)
            }
        }
    }
}

#[cfg(feature = "onnx")]
fn load_onnx(path: &Path, manifest: &BackendManifest) -> Result<Box<dyn EncoderBackend>> {
    Ok(Box::new(super::OnnxBackend::load(
        path,
        manifest.dim,
        manifest.preprocessing(),
    )?))
}

#[cfg(not(feature = "onnx"))]
fn load_onnx(path: &Path, _: &BackendManifest) -> Result<Box<dyn EncoderBackend>> {
    Err(Error::BackendLoad(format!(
        "{}: built without ONNX support",
        path.display()
    )))
}

/// Reads a manifest file and instantiates its backend.
pub fn load_backend(manifest_path: &Path) -> Result<Box<dyn EncoderBackend>> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::BackendLoad(format!("{}: {e}", manifest_path.display())))?;
    let manifest = BackendManifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.instantiate(base)
}
