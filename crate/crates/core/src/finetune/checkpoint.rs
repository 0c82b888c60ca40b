//! Gallery checkpoint file (little-endian; strings are a `u32` byte length
//! followed by UTF-8):
//!
//! ```text
//! magic        4 bytes  "GAL1"
//! classes      u32      C
//! dim          u32      D
//! logit_scale  f64
//! labels       C strings, identity names for ids 0..C
//! prompts      C strings
//! rows         C x D f64, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::encoder::cache::{read_string, write_string};
use crate::error::{Error, Result};
use crate::types::{Gallery, IdentityLabel, UNIT_NORM_TOLERANCE};

const MAGIC: &[u8; 4] = b"GAL1";

pub fn write_gallery<W: Write>(gallery: &Gallery, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(gallery.num_classes() as u32)?;
    w.write_u32::<LittleEndian>(gallery.dim() as u32)?;
    w.write_f64::<LittleEndian>(gallery.logit_scale)?;
    for label in &gallery.labels {
        write_string(&mut w, &label.name)?;
    }
    for prompt in &gallery.prompts {
        write_string(&mut w, prompt)?;
    }
    for &x in gallery.class_embeddings.iter() {
        w.write_f64::<LittleEndian>(x)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint. Rows are stored unit-norm and are checked, not
/// renormalized, so a loaded gallery is bit-identical to the saved one.
pub fn read_gallery<R: Read>(mut r: R, origin: &Path) -> Result<Gallery> {
    let bad = |reason: String| Error::format("gallery", origin, reason);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let mut body = || -> std::io::Result<(f64, Vec<String>, Vec<String>, Array2<f64>)> {
        let c = r.read_u32::<LittleEndian>()? as usize;
        let d = r.read_u32::<LittleEndian>()? as usize;
        if c.saturating_mul(d) > 1 << 28 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("implausible shape {c}x{d}"),
            ));
        }
        let scale = r.read_f64::<LittleEndian>()?;
        let names = (0..c).map(|_| read_string(&mut r)).collect::<std::io::Result<_>>()?;
        let prompts = (0..c).map(|_| read_string(&mut r)).collect::<std::io::Result<_>>()?;
        let mut data = vec![0f64; c * d];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        Ok((scale, names, prompts, Array2::from_shape_vec((c, d), data).expect("c * d")))
    };
    let (logit_scale, names, prompts, rows) = body().map_err(|e| bad(e.to_string()))?;
    if names.len() < 2 || rows.ncols() == 0 {
        return Err(bad(format!("shape {}x{}", rows.nrows(), rows.ncols())));
    }
    if !(logit_scale > 0.0 && logit_scale.is_finite()) {
        return Err(bad(format!("logit scale {logit_scale}")));
    }
    for (i, row) in rows.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(bad(format!("row {i} has norm {norm}")));
        }
    }
    let labels = IdentityLabel::dense(&names).map_err(|e| bad(e.to_string()))?;
    Ok(Gallery {
        class_embeddings: rows,
        labels,
        prompts,
        logit_scale,
    })
}

pub fn save_gallery(gallery: &Gallery, path: &Path) -> Result<()> {
    write_gallery(gallery, BufWriter::new(File::create(path)?))
}

pub fn load_gallery(path: &Path) -> Result<Gallery> {
    read_gallery(BufReader::new(File::open(path)?), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finetune::{build_prompts, init_gallery, InitSource, DEFAULT_TEMPLATE};

    fn sample() -> Gallery {
        let labels = IdentityLabel::dense(&["ana", "bo", "cy"]).unwrap();
        let prompts = build_prompts(&labels, DEFAULT_TEMPLATE).unwrap();
        init_gallery(labels, prompts, &InitSource::Random { seed: 3 }, 8, 100.0).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.gal");
        let g = sample();
        save_gallery(&g, &path).unwrap();
        assert_eq!(load_gallery(&path).unwrap(), g);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"GAL1");
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 100.0);
    }

    #[test]
    fn rejects_corruption() {
        let origin = Path::new("g.gal");
        let mut bytes = Vec::new();
        write_gallery(&sample(), &mut bytes).unwrap();
        let mut truncated = bytes.clone();
        truncated.truncate(bytes.len() - 1);
        assert!(matches!(read_gallery(&truncated[..], origin), Err(Error::Format { .. })));
        let mut scaled = bytes.clone();
        let n = scaled.len();
        scaled[n - 1] ^= 0x40;
        assert!(read_gallery(&scaled[..], origin).is_err());
        assert!(read_gallery(&b"GAL2"[..], origin).is_err());
    }
}
