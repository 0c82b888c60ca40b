//! Binary embedding cache.
//!
//! All integers and floats are little-endian; strings are a `u32` byte
//! length followed by UTF-8 bytes.
//!
//! ```text
//! magic        4 bytes  "EMB1"
//! dim          u32      D
//! count        u64      number of records
//! fingerprint  32 bytes SHA-256 of the dataset index text
//! backend      string   encoder backend name
//! classes      u32      C, followed by C identity names (ids 0..C)
//! records      count x {
//!     path     string   image path relative to the dataset root
//!     label    u32      identity id
//!     split    u8       0 = train, 1 = test
//!     raw      D x f32  encoder output before normalization
//! }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::preprocess::Split;
use crate::types::{l2_normalize, IdentityLabel};

const MAGIC: &[u8; 4] = b"EMB1";
const MAX_STRING: u32 = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheRecord {
    pub path: String,
    pub label: usize,
    pub split: Split,
    pub raw: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCache {
    pub dim: usize,
    pub backend: String,
    pub fingerprint: [u8; 32],
    pub labels: Vec<IdentityLabel>,
    pub records: Vec<CacheRecord>,
}

impl EmbeddingCache {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &CacheRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Normalized embeddings (one row each) and labels of the records in
    /// `split`, or of all records when `split` is `None`.
    pub fn matrix(&self, split: Option<Split>) -> Result<(Array2<f64>, Vec<usize>)> {
        let selected: Vec<&CacheRecord> = self
            .records
            .iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .collect();
        let mut rows = Array2::zeros((selected.len(), self.dim));
        let mut labels = Vec::with_capacity(selected.len());
        for (mut row, record) in rows.rows_mut().into_iter().zip(&selected) {
            let raw: Vec<f64> = record.raw.iter().map(|&x| x as f64).collect();
            let unit = l2_normalize(&raw)?;
            row.iter_mut().zip(unit.values()).for_each(|(d, s)| *d = *s);
            labels.push(record.label);
        }
        Ok((rows, labels))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(to_u32(self.dim)?)?;
        w.write_u64::<LittleEndian>(self.records.len() as u64)?;
        w.write_all(&self.fingerprint)?;
        write_string(&mut w, &self.backend)?;
        w.write_u32::<LittleEndian>(to_u32(self.labels.len())?)?;
        for label in &self.labels {
            write_string(&mut w, &label.name)?;
        }
        for record in &self.records {
            if record.raw.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    actual: record.raw.len(),
                });
            }
            write_string(&mut w, &record.path)?;
            w.write_u32::<LittleEndian>(to_u32(record.label)?)?;
            w.write_u8(match record.split {
                Split::Train => 0,
                Split::Test => 1,
            })?;
            for &x in &record.raw {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format("embedding cache", origin, reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        Self::read_body(&mut r).map_err(|e| bad(&e.to_string()))
    }

    fn read_body<R: Read>(mut r: R) -> std::io::Result<Self> {
        let dim = r.read_u32::<LittleEndian>()? as usize;
        if dim == 0 || dim > 1 << 20 {
            return Err(invalid_data(format!("implausible dimension {dim}")));
        }
        let count = r.read_u64::<LittleEndian>()?;
        let mut fingerprint = [0u8; 32];
        r.read_exact(&mut fingerprint)?;
        let backend = read_string(&mut r)?;
        let classes = r.read_u32::<LittleEndian>()? as usize;
        let mut labels = Vec::with_capacity(classes.min(1 << 16));
        for id in 0..classes {
            let name = read_string(&mut r)?;
            labels.push(
                IdentityLabel::new(id, name).map_err(|e| invalid_data(e.to_string()))?,
            );
        }
        let mut records = Vec::new();
        for _ in 0..count {
            let path = read_string(&mut r)?;
            let label = r.read_u32::<LittleEndian>()? as usize;
            if label >= classes {
                return Err(invalid_data(format!("label {label} out of range")));
            }
            let split = match r.read_u8()? {
                0 => Split::Train,
                1 => Split::Test,
                t => return Err(invalid_data(format!("bad split tag {t}"))),
            };
            let mut raw = vec![0f32; dim];
            r.read_f32_into::<LittleEndian>(&mut raw)?;
            records.push(CacheRecord {
                path,
                label,
                split,
                raw,
            });
        }
        Ok(Self {
            dim,
            backend,
            fingerprint,
            labels,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), path)
    }
}

fn invalid_data(msg: String) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg)
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::invalid("embedding cache", format!("{n} exceeds u32")))
}

pub(crate) fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_string<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()?;
    if len > MAX_STRING {
        return Err(invalid_data(format!("string length {len} too large")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| invalid_data(e.to_string()))
}
