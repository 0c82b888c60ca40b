//! A small end-to-end experiment on the mock encoder: ten enrolled identities
//! with thirty images each, split 24/6, one gallery trained for a single
//! pass, then one five-frame deployment session per enrolled identity plus
//! sessions from two people who were never enrolled.
//!
//! The mock encoder places identity `k` at an equiangular center, so the
//! separation angle sets how alike different people look. Frames and
//! training images of one identity differ only by the per-image noise.

use std::fs;
use std::path::{Path, PathBuf};

use crate::encoder::{embed_image, equiangular_centers, EncoderBackend, MockBackend, MockConfig};
use crate::error::Result;
use crate::evaluate::{score_sessions, training_accuracy, EvaluationReport, Participant, Session};
use crate::finetune::{
    build_prompts, finetune_single_shot, init_gallery, InitSource, PromptEmbeddingFile,
    TrainHistory, TrainingSet, DEFAULT_TEMPLATE,
};
use crate::preprocess::{split_dataset, DatasetIndex, IndexEntry, Split};
use crate::rng::mix64;
use crate::types::{Gallery, HyperParams, IdentityLabel};

/// Factor applied to the default learning rate in the synthetic regime.
///
/// The default rate suits a pretrained encoder whose prompt embeddings
/// already sit within a few degrees of the matching images. The mock prompt
/// embeddings are placed independently of the image centers, so each row
/// has to travel tens of degrees in fifteen steps.
pub const SYNTHETIC_LR_SCALE: f64 = 1e3;

/// Nonce offset separating deployment frames from dataset images.
pub const FRAME_NONCE_BASE: u32 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticProtocol {
    pub known: usize,
    pub unknown: usize,
    pub images_per_identity: usize,
    pub train_ratio: f64,
    pub frames_per_session: usize,
    pub dim: usize,
    pub separation_deg: f64,
    pub noise_deg: f64,
    pub seed: u64,
    /// Cosine similarity between any two mock prompt embeddings; `None`
    /// initializes the gallery with independent random unit vectors.
    pub prompt_similarity: Option<f64>,
    pub hp: HyperParams,
}

impl Default for SyntheticProtocol {
    fn default() -> Self {
        let defaults = HyperParams::default();
        Self {
            known: 10,
            unknown: 2,
            images_per_identity: 30,
            train_ratio: 0.8,
            frames_per_session: 5,
            dim: 64,
            separation_deg: 60.0,
            noise_deg: 5.0,
            seed: 42,
            prompt_similarity: Some(0.98),
            hp: HyperParams {
                learning_rate_initial: defaults.learning_rate_initial * SYNTHETIC_LR_SCALE,
                ..defaults
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticOutcome {
    pub gallery: Gallery,
    pub history: TrainHistory,
    pub report: EvaluationReport,
}

/// Stand-in for text-encoder prompt embeddings: every prompt shares the
/// template, so the rows are equiangular with pairwise cosine `similarity`,
/// placed on directions drawn independently of the image centers.
pub fn mock_prompt_embeddings(
    count: usize,
    dim: usize,
    similarity: f64,
    seed: u64,
) -> Result<PromptEmbeddingFile> {
    let separation = similarity.clamp(0.0, 1.0).acos().to_degrees();
    let rows = equiangular_centers(count, dim, separation, mix64(seed ^ 0x5445_5854))?;
    let flat: Vec<f32> = rows.iter().flatten().map(|&x| x as f32).collect();
    Ok(PromptEmbeddingFile {
        template: DEFAULT_TEMPLATE.to_string(),
        rows: ndarray::Array2::from_shape_vec((count, dim), flat).expect("count * dim values"),
    })
}

pub fn person_name(k: usize) -> String {
    format!("person_{k:02}")
}

pub fn stranger_name(k: usize) -> String {
    format!("stranger_{k:02}")
}

impl SyntheticProtocol {
    pub fn mock_config(&self) -> MockConfig {
        MockConfig {
            seed: self.seed,
            dim: self.dim,
            centers: self.known + self.unknown,
            separation_deg: self.separation_deg,
            noise_deg: self.noise_deg,
        }
    }

    pub fn backend(&self) -> Result<MockBackend> {
        MockBackend::new(self.mock_config())
    }

    fn labels(&self) -> Result<Vec<IdentityLabel>> {
        let names: Vec<String> = (0..self.known).map(person_name).collect();
        IdentityLabel::dense(&names)
    }

    /// The dataset index the on-disk layout would produce, already split.
    pub fn index(&self) -> Result<DatasetIndex> {
        let labels = self.labels()?;
        let entries = (0..self.known)
            .flat_map(|k| {
                (0..self.images_per_identity).map(move |i| IndexEntry {
                    path: PathBuf::from(person_name(k)).join(format!("img_{i:02}.png")),
                    label: k,
                    split: Split::Train,
                })
            })
            .collect();
        let index = DatasetIndex {
            root: PathBuf::from("dataset"),
            labels,
            entries,
            split: None,
        };
        Ok(split_dataset(&index, self.train_ratio, self.seed)?.0)
    }

    /// Runs the whole experiment in memory.
    pub fn run(&self) -> Result<SyntheticOutcome> {
        let backend = self.backend()?;
        let index = self.index()?;
        let image_nonce = |entry: &IndexEntry| -> u32 {
            let stem = entry.path.file_stem().expect("file name").to_string_lossy();
            stem.trim_start_matches("img_").parse().expect("numbered image")
        };
        let mut train_rows = Vec::new();
        let mut train_labels = Vec::new();
        let mut test_rows = Vec::new();
        let mut test_labels = Vec::new();
        for entry in &index.entries {
            let image = MockBackend::render(entry.label as u16, image_nonce(entry));
            let emb = embed_image(&backend, &image)?;
            let (rows, labels) = match entry.split {
                Split::Train => (&mut train_rows, &mut train_labels),
                Split::Test => (&mut test_rows, &mut test_labels),
            };
            rows.extend_from_slice(emb.values());
            labels.push(entry.label);
        }
        let to_matrix = |rows: Vec<f64>| {
            let n = rows.len() / self.dim;
            ndarray::Array2::from_shape_vec((n, self.dim), rows).expect("n * dim values")
        };
        let train = TrainingSet::new(to_matrix(train_rows), train_labels)?;
        let test = to_matrix(test_rows);

        let labels = self.labels()?;
        let prompts = build_prompts(&labels, DEFAULT_TEMPLATE)?;
        let source = match self.prompt_similarity {
            Some(similarity) => InitSource::PromptFile(mock_prompt_embeddings(
                self.known, self.dim, similarity, self.seed,
            )?),
            None => InitSource::Random { seed: self.seed },
        };
        let initial = init_gallery(
            labels,
            prompts,
            &source,
            self.dim,
            self.hp.logit_scale,
        )?;
        let (gallery, history) = finetune_single_shot(&train, initial, &self.hp, self.seed)?;

        let sessions = self.sessions(&backend)?;
        let (counts, results) = score_sessions(&sessions, &gallery, self.hp.confidence_threshold)?;
        let report = EvaluationReport {
            model: format!("mock sep={} noise={}", self.separation_deg, self.noise_deg),
            counts,
            training_accuracy: Some(training_accuracy(&test, &test_labels, &gallery)?),
            threshold: self.hp.confidence_threshold,
            sessions: results,
        };
        Ok(SyntheticOutcome {
            gallery,
            history,
            report,
        })
    }

    fn session_identities(&self) -> Vec<(String, u16, Participant)> {
        let known = (0..self.known).map(|k| (person_name(k), k as u16, Participant::Known(k)));
        let unknown = (0..self.unknown)
            .map(|u| (stranger_name(u), (self.known + u) as u16, Participant::Unknown));
        known.chain(unknown).collect()
    }

    fn sessions(&self, backend: &dyn EncoderBackend) -> Result<Vec<Session>> {
        self.session_identities()
            .into_iter()
            .map(|(name, center, participant)| {
                let frames = (0..self.frames_per_session)
                    .map(|f| embed_image(backend, &MockBackend::render(center, FRAME_NONCE_BASE + f as u32)))
                    .collect::<Result<Vec<_>>>()?;
                Session::new(name, participant, frames)
            })
            .collect()
    }

    /// Writes `dir/dataset/<person>/img_NN.png` and
    /// `dir/sessions/<person or stranger>/frame_NN.png`, the layout the
    /// command-line pipeline consumes, plus `dir/prompts.pem` when the
    /// protocol uses mock prompt embeddings.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        if let Some(similarity) = self.prompt_similarity {
            mock_prompt_embeddings(self.known, self.dim, similarity, self.seed)?
                .save(&dir.join("prompts.pem"))?;
        }
        for k in 0..self.known {
            let d = dir.join("dataset").join(person_name(k));
            fs::create_dir_all(&d)?;
            for i in 0..self.images_per_identity {
                MockBackend::render(k as u16, i as u32).save_png(&d.join(format!("img_{i:02}.png")))?;
            }
        }
        for (name, center, _) in self.session_identities() {
            let d = dir.join("sessions").join(&name);
            fs::create_dir_all(&d)?;
            for f in 0..self.frames_per_session {
                MockBackend::render(center, FRAME_NONCE_BASE + f as u32)
                    .save_png(&d.join(format!("frame_{f:02}.png")))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_has_ten_by_thirty_images() {
        let index = SyntheticProtocol::default().index().unwrap();
        assert_eq!(index.len(), 300);
        assert_eq!(index.count(Split::Train), 240);
        assert_eq!(index.count(Split::Test), 60);
    }

    #[test]
    fn written_layout() {
        let dir = tempfile::tempdir().unwrap();
        let protocol = SyntheticProtocol {
            known: 3,
            unknown: 1,
            images_per_identity: 2,
            frames_per_session: 2,
            ..SyntheticProtocol::default()
        };
        protocol.write_to(dir.path()).unwrap();
        assert!(dir.path().join("dataset/person_02/img_01.png").is_file());
        assert!(dir.path().join("sessions/stranger_00/frame_01.png").is_file());
        let prompts = PromptEmbeddingFile::load(&dir.path().join("prompts.pem")).unwrap();
        assert_eq!(prompts.rows.dim(), (3, 64));
        let img = crate::preprocess::FaceImage::open(&dir.path().join("sessions/person_01/frame_00.png")).unwrap();
        assert_eq!(MockBackend::decode(&img), Some((1, FRAME_NONCE_BASE)));
    }

    #[test]
    fn separable_regime_recognizes_and_rejects() {
        let outcome = SyntheticProtocol::default().run().unwrap();
        assert_eq!(outcome.history.steps.len(), 15);
        let report = &outcome.report;
        assert!(report.deployment_accuracy().unwrap() >= 90.0);
        assert!(report.fpr().unwrap() <= 10.0);
        assert!(report.fnr().unwrap() <= 20.0);
    }

    #[test]
    fn mock_prompts_have_requested_similarity() {
        let file = mock_prompt_embeddings(4, 16, 0.9, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f32 = file.rows.row(i).dot(&file.rows.row(j));
                let want = if i == j { 1.0 } else { 0.9 };
                assert!((dot - want).abs() < 1e-5, "{i} {j} {dot}");
            }
        }
    }
}
