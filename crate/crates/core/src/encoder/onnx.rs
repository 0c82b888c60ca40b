use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{EncoderBackend, Preprocessing};
use crate::error::{Error, Result};
use crate::preprocess::{FaceImage, ALIGNED_SIZE};

type Plan = Arc<TypedRunnableModel>;

/// Image encoder exported to ONNX, run on the CPU through tract.
///
/// Each call spawns its own execution state from the shared optimized plan,
/// so one backend can serve several threads.
pub struct OnnxBackend {
    name: String,
    dim: usize,
    preprocessing: Preprocessing,
    plan: Plan,
}

impl OnnxBackend {
    pub fn load(model_path: &Path, dim: usize, preprocessing: Preprocessing) -> Result<Self> {
        let side = ALIGNED_SIZE as usize;
        let plan = tract_onnx::onnx()
            .model_for_path(model_path)
            .and_then(|m| {
                m.with_input_fact(0, f32::fact([1, 3, side, side]).into())?
                    .into_optimized()?
                    .into_runnable()
            })
            .map_err(|e| Error::BackendLoad(format!("{}: {e:#}", model_path.display())))?;
        let name = model_path
            .file_stem()
            .map(|s| format!("onnx:{}", s.to_string_lossy()))
            .unwrap_or_else(|| "onnx".to_string());
        let backend = Self {
            name,
            dim,
            preprocessing,
            plan,
        };
        // Probe once so a model whose output width disagrees with the
        // manifest fails at load time.
        let probe = FaceImage::new(vec![0; side * side * 3], ALIGNED_SIZE, ALIGNED_SIZE, 3)?;
        let out = backend
            .run(&probe)
            .map_err(|e| Error::BackendLoad(e.to_string()))?;
        if out.len() != dim {
            return Err(Error::BackendLoad(format!(
                "model outputs {} values but the manifest declares dim = {dim}",
                out.len()
            )));
        }
        Ok(backend)
    }

    fn run(&self, image: &FaceImage) -> Result<Vec<f32>> {
        let side = ALIGNED_SIZE as usize;
        let input = self.preprocessing.to_tensor(image)?;
        let tensor = tract_ndarray::Array4::from_shape_vec((1, 3, side, side), input)
            .expect("preprocessed tensor has the model input shape")
            .into_tensor();
        let outputs = self
            .plan
            .run(tvec!(tensor.into()))
            .map_err(|e| Error::BackendLoad(format!("inference failed: {e:#}")))?;
        let view = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::BackendLoad(format!("model output is not f32: {e}")))?;
        Ok(view.iter().copied().collect())
    }
}

impl EncoderBackend for OnnxBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, image: &FaceImage) -> Result<Vec<f32>> {
        self.run(image)
    }
}
