//! Prompt templating, the prompt-embedding file produced by the export tool,
//! and gallery initialization.
//!
//! Prompt-embedding file layout (little-endian):
//!
//! ```text
//! magic     4 bytes  "PEM1"
//! classes   u32      C
//! dim       u32      D
//! template  u32 byte length + UTF-8
//! rows      C x D f32, row-major, in the order the names were given
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::cache::{read_string, write_string};
use crate::error::{Error, Result};
use crate::types::{Gallery, IdentityLabel};

pub const PLACEHOLDER: &str = "{}";
pub const DEFAULT_TEMPLATE: &str = "This is the image of a person named {}";

const PEM_MAGIC: &[u8; 4] = b"PEM1";

pub fn build_prompts(labels: &[IdentityLabel], template: &str) -> Result<Vec<String>> {
    if template.matches(PLACEHOLDER).count() != 1 {
        return Err(Error::Template(template.to_string()));
    }
    Ok(labels
        .iter()
        .map(|l| template.replacen(PLACEHOLDER, &l.name, 1))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptEmbeddingFile {
    pub template: String,
    /// `C x D`, not necessarily unit length.
    pub rows: Array2<f32>,
}

impl PromptEmbeddingFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (c, d) = self.rows.dim();
        if self.rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerics("prompt embeddings"));
        }
        w.write_all(PEM_MAGIC)?;
        w.write_u32::<LittleEndian>(c as u32)?;
        w.write_u32::<LittleEndian>(d as u32)?;
        write_string(&mut w, &self.template)?;
        for &x in self.rows.iter() {
            w.write_f32::<LittleEndian>(x)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format("prompt embedding", origin, reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header".into()))?;
        if &magic != PEM_MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let mut body = || -> std::io::Result<(usize, usize, String, Vec<f32>)> {
            let c = r.read_u32::<LittleEndian>()? as usize;
            let d = r.read_u32::<LittleEndian>()? as usize;
            let template = read_string(&mut r)?;
            if c.saturating_mul(d) > 1 << 28 {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("implausible shape {c}x{d}"),
                ));
            }
            let mut data = vec![0f32; c * d];
            r.read_f32_into::<LittleEndian>(&mut data)?;
            Ok((c, d, template, data))
        };
        let (c, d, template, data) = body().map_err(|e| bad(e.to_string()))?;
        if c == 0 || d == 0 {
            return Err(bad(format!("empty shape {c}x{d}")));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite row data".into()));
        }
        let rows = Array2::from_shape_vec((c, d), data).expect("length is c * d");
        Ok(Self { template, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), path)
    }
}

#[derive(Clone, Debug)]
pub enum InitSource {
    PromptFile(PromptEmbeddingFile),
    /// Independent Gaussian directions, normalized.
    Random { seed: u64 },
}

/// Builds the initial gallery with rows of dimension `dim` (the encoder's D).
pub fn init_gallery(
    labels: Vec<IdentityLabel>,
    prompts: Vec<String>,
    source: &InitSource,
    dim: usize,
    logit_scale: f64,
) -> Result<Gallery> {
    let c = labels.len();
    if c < 2 {
        return Err(Error::InsufficientClasses(c));
    }
    let rows = match source {
        InitSource::PromptFile(file) => {
            if file.rows.ncols() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: file.rows.ncols(),
                });
            }
            if file.rows.nrows() != c {
                return Err(Error::invalid(
                    "prompt embedding file",
                    format!("{} rows for {c} identities", file.rows.nrows()),
                ));
            }
            file.rows.mapv(|x| x as f64)
        }
        InitSource::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Array2::from_shape_simple_fn((c, dim), || StandardNormal.sample(&mut rng))
        }
    };
    Gallery::new(rows, labels, prompts, logit_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(n: usize) -> Vec<IdentityLabel> {
        let names: Vec<String> = (0..n).map(|i| format!("person_{i:02}")).collect();
        IdentityLabel::dense(&names).unwrap()
    }

    #[test]
    fn default_template() {
        let l = IdentityLabel::dense(&["Alice"]).unwrap();
        assert_eq!(
            build_prompts(&l, DEFAULT_TEMPLATE).unwrap(),
            vec!["This is the image of a person named Alice"]
        );
        assert_eq!(build_prompts(&l, "{}").unwrap(), vec!["Alice"]);
    }

    #[test]
    fn malformed_templates() {
        let l = labels(2);
        assert!(matches!(build_prompts(&l, "no name"), Err(Error::Template(_))));
        assert!(matches!(build_prompts(&l, "{} and {}"), Err(Error::Template(_))));
    }

    #[test]
    fn prompt_file_round_trip_and_init() {
        let file = PromptEmbeddingFile {
            template: DEFAULT_TEMPLATE.into(),
            rows: array![[3.0f32, 4.0, 0.0], [0.0, 0.0, -2.0]],
        };
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"PEM1");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + DEFAULT_TEMPLATE.len() + 6 * 4);
        let back = PromptEmbeddingFile::read_from(&bytes[..], Path::new("p.pem")).unwrap();
        assert_eq!(back, file);

        let l = labels(2);
        let prompts = build_prompts(&l, &back.template).unwrap();
        let g = init_gallery(l, prompts, &InitSource::PromptFile(back), 3, 100.0).unwrap();
        assert!((g.class_embeddings[[0, 0]] - 0.6).abs() < 1e-12);
        assert!((g.class_embeddings[[0, 1]] - 0.8).abs() < 1e-12);
        assert_eq!(g.class_embeddings[[1, 2]], -1.0);
    }

    #[test]
    fn prompt_file_dimension_mismatch() {
        let file = PromptEmbeddingFile {
            template: "{}".into(),
            rows: Array2::ones((2, 5)),
        };
        let l = labels(2);
        let prompts = build_prompts(&l, "{}").unwrap();
        assert!(matches!(
            init_gallery(l, prompts, &InitSource::PromptFile(file), 4, 100.0),
            Err(Error::Dimension { expected: 4, actual: 5 })
        ));
    }

    #[test]
    fn corrupt_prompt_file() {
        let origin = Path::new("p.pem");
        assert!(PromptEmbeddingFile::read_from(&b"PEM0"[..], origin).is_err());
        let file = PromptEmbeddingFile {
            template: "{}".into(),
            rows: Array2::ones((2, 2)),
        };
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(
            PromptEmbeddingFile::read_from(&bytes[..], origin),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn random_init_is_seeded() {
        let make = |seed| {
            let l = labels(4);
            let p = build_prompts(&l, DEFAULT_TEMPLATE).unwrap();
            init_gallery(l, p, &InitSource::Random { seed }, 16, 100.0).unwrap()
        };
        assert_eq!(make(7), make(7));
        assert_ne!(make(7), make(8));
        for row in make(7).class_embeddings.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
    }
}
