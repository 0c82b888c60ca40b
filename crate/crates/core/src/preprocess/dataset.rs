use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::ImageReader;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{sidecar_path, Subject, Warning, ALIGNED_SIZE};
use crate::error::{Error, Result};
use crate::types::IdentityLabel;

const INDEX_HEADER: &str = "# shotface dataset index v1";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    /// Path relative to the dataset root.
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Identity-labeled image references with their train/test assignment.
///
/// Serialized as tab-separated text:
///
/// ```text
/// # shotface dataset index v1
/// root    <dataset root>
/// split   <seed>  <ratio>            (present once the index has been split)
/// label   <id>    <name>             (one per identity, ids dense from 0)
/// entry   <train|test>  <id>  <path relative to root>
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub labels: Vec<IdentityLabel>,
    pub entries: Vec<IndexEntry>,
    /// `(seed, ratio)` of the split that produced the tags, if any.
    pub split: Option<(u64, f64)>,
}

impl DatasetIndex {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn absolute_path(&self, entry: &IndexEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn subject(&self, entry: &IndexEntry) -> Subject {
        Subject::Known(self.labels[entry.label].clone())
    }

    /// `(train, test)` counts per identity id.
    pub fn split_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = vec![(0, 0); self.labels.len()];
        for e in &self.entries {
            match e.split {
                Split::Train => counts[e.label].0 += 1,
                Split::Test => counts[e.label].1 += 1,
            }
        }
        counts
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{INDEX_HEADER}").unwrap();
        writeln!(out, "root\t{}", path_text(&self.root)).unwrap();
        if let Some((seed, ratio)) = self.split {
            writeln!(out, "split\t{seed}\t{ratio}").unwrap();
        }
        for label in &self.labels {
            writeln!(out, "label\t{}\t{}", label.id, label.name).unwrap();
        }
        for e in &self.entries {
            writeln!(
                out,
                "entry\t{}\t{}\t{}",
                e.split.as_str(),
                e.label,
                path_text(&e.path)
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, reason: &str| {
            Error::format("dataset index", origin, format!("line {}: {reason}", line + 1))
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, INDEX_HEADER)) => {}
            _ => return Err(bad(0, "missing header")),
        }
        let mut root = None;
        let mut split = None;
        let mut labels = Vec::new();
        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["root", path] => root = Some(PathBuf::from(path)),
                ["split", seed, ratio] => {
                    let seed = seed.parse().map_err(|_| bad(n, "bad seed"))?;
                    let ratio = ratio.parse().map_err(|_| bad(n, "bad ratio"))?;
                    split = Some((seed, ratio));
                }
                ["label", id, name] => {
                    let id: usize = id.parse().map_err(|_| bad(n, "bad label id"))?;
                    if id != labels.len() {
                        return Err(bad(n, "label ids must be dense and ordered"));
                    }
                    labels.push(IdentityLabel::new(id, *name)?);
                }
                ["entry", tag, id, path] => {
                    let split = Split::parse(tag).ok_or_else(|| bad(n, "bad split tag"))?;
                    let label: usize = id.parse().map_err(|_| bad(n, "bad label id"))?;
                    if label >= labels.len() {
                        return Err(bad(n, "entry references an undeclared label"));
                    }
                    entries.push(IndexEntry {
                        path: PathBuf::from(path),
                        label,
                        split,
                    });
                }
                _ => return Err(bad(n, "unrecognized record")),
            }
        }
        let root = root.ok_or_else(|| bad(0, "missing root record"))?;
        Ok(Self {
            root,
            labels,
            entries,
            split,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// SHA-256 of the serialized index; ties embedding caches to their index.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

fn path_text(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn is_text_safe(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r'])
}

enum Probe {
    Ok,
    NeedsCrop,
    Failed(String),
}

fn probe_image(path: &Path) -> Probe {
    let dims = ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| e.to_string())
        .and_then(|r| r.into_dimensions().map_err(|e| e.to_string()));
    match dims {
        Err(e) => Probe::Failed(format!("unreadable image: {e}")),
        Ok(_) if sidecar_path(path).is_file() => Probe::Ok,
        Ok((w, h)) if w == ALIGNED_SIZE && h == ALIGNED_SIZE => Probe::Ok,
        Ok(_) => Probe::NeedsCrop,
    }
}

/// Indexes `root/<identity>/<images>`; identities get dense ids in sorted name
/// order and images are sorted by file name. All entries start in the train
/// split until [`split_dataset`](super::split_dataset) assigns tags.
///
/// Unreadable files and identities without any readable image are reported as
/// warnings, not errors.
pub fn ingest_dataset(root: &Path) -> Result<(DatasetIndex, Vec<Warning>)> {
    if !root.is_dir() {
        return Err(Error::EmptyDataset(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let mut warnings = Vec::new();
    let mut identities: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for dir in fs::read_dir(root)? {
        let dir = dir?;
        if !dir.file_type()?.is_dir() {
            continue;
        }
        let name = match dir.file_name().into_string() {
            Ok(name) if is_text_safe(&name) && !name.starts_with('.') => name,
            Ok(name) if name.starts_with('.') => continue,
            _ => {
                warnings.push(Warning::new(dir.path(), "identity name is not usable text"));
                continue;
            }
        };
        let mut files = Vec::new();
        for file in fs::read_dir(dir.path())? {
            let path = file?.path();
            if path.is_file() && has_image_extension(&path) {
                files.push(path);
            }
        }
        files.sort();
        identities.insert(name, files);
    }

    // Probing reads only image headers and runs in parallel; results are
    // gathered in the deterministic directory order above.
    let mut labels = Vec::new();
    let mut entries = Vec::new();
    for (name, files) in identities {
        let probes: Vec<Probe> = files.par_iter().map(|p| probe_image(p)).collect();
        let mut accepted = Vec::new();
        for (path, probe) in files.into_iter().zip(probes) {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
            if !is_text_safe(&path_text(&rel)) {
                warnings.push(Warning::new(&path, "path is not usable text"));
                continue;
            }
            match probe {
                Probe::Failed(reason) => warnings.push(Warning::new(&path, reason)),
                Probe::NeedsCrop => {
                    warnings.push(Warning::new(&path, "no landmarks sidecar; will be center-cropped"));
                    accepted.push(rel);
                }
                Probe::Ok => accepted.push(rel),
            }
        }
        if accepted.is_empty() {
            warnings.push(Warning::new(root.join(&name), "identity has no readable images"));
            continue;
        }
        let id = labels.len();
        labels.push(IdentityLabel::new(id, name)?);
        entries.extend(accepted.into_iter().map(|path| IndexEntry {
            path,
            label: id,
            split: Split::Train,
        }));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no identity directories with readable images under {}",
            root.display()
        )));
    }
    Ok((
        DatasetIndex {
            root: root.to_path_buf(),
            labels,
            entries,
            split: None,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::FaceImage;

    fn write_png(path: &Path) {
        FaceImage::new(vec![128; 224 * 224 * 3], 224, 224, 3)
            .unwrap()
            .save_png(path)
            .unwrap();
    }

    fn make_dataset(root: &Path, identities: usize, per_identity: usize) {
        for i in 0..identities {
            let dir = root.join(format!("person_{i:02}"));
            fs::create_dir_all(&dir).unwrap();
            for j in 0..per_identity {
                write_png(&dir.join(format!("img_{j:02}.png")));
            }
        }
    }

    #[test]
    fn indexes_ten_identity_dataset() {
        let dir = tempfile::tempdir().unwrap();
        make_dataset(dir.path(), 10, 30);
        let (index, warnings) = ingest_dataset(dir.path()).unwrap();
        assert_eq!(index.len(), 300);
        assert_eq!(index.num_classes(), 10);
        assert!(warnings.is_empty());
        assert_eq!(index.labels[3].name, "person_03");
        assert!(index.entries.iter().all(|e| index.absolute_path(e).is_file()));
    }

    #[test]
    fn single_image_dataset() {
        let dir = tempfile::tempdir().unwrap();
        make_dataset(dir.path(), 1, 1);
        let (index, _) = ingest_dataset(dir.path()).unwrap();
        assert_eq!((index.len(), index.num_classes()), (1, 1));
    }

    #[test]
    fn empty_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ingest_dataset(dir.path()), Err(Error::EmptyDataset(_))));
        assert!(matches!(
            ingest_dataset(&dir.path().join("missing")),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn unreadable_files_become_warnings() {
        let dir = tempfile::tempdir().unwrap();
        make_dataset(dir.path(), 2, 2);
        fs::write(dir.path().join("person_00/broken.png"), b"not a png").unwrap();
        fs::create_dir(dir.path().join("empty_person")).unwrap();
        let (index, warnings) = ingest_dataset(dir.path()).unwrap();
        assert_eq!(index.len(), 4);
        assert_eq!(index.num_classes(), 2);
        assert_eq!(warnings.len(), 2);
        assert!(warnings.iter().all(|w| w.to_string().starts_with("WARN ")));
        assert!(warnings.iter().any(|w| w.path.ends_with("broken.png")));
        assert!(warnings.iter().any(|w| w.path.ends_with("empty_person")));
    }

    #[test]
    fn identity_ids_follow_sorted_names() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["zoe", "adam", "maria"] {
            fs::create_dir(dir.path().join(name)).unwrap();
            write_png(&dir.path().join(name).join("a.png"));
        }
        let (index, _) = ingest_dataset(dir.path()).unwrap();
        let names: Vec<_> = index.labels.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["adam", "maria", "zoe"]);
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        make_dataset(dir.path(), 3, 4);
        let (mut index, _) = ingest_dataset(dir.path()).unwrap();
        index.split = Some((42, 0.8));
        index.entries[1].split = Split::Test;
        let path = dir.path().join("index.tsv");
        index.save(&path).unwrap();
        let loaded = DatasetIndex::load(&path).unwrap();
        assert_eq!(loaded, index);
        assert_eq!(loaded.fingerprint(), index.fingerprint());
    }

    #[test]
    fn rejects_malformed_index() {
        let origin = Path::new("x.tsv");
        assert!(DatasetIndex::parse("root\t/tmp\n", origin).is_err());
        let text = format!("{INDEX_HEADER}\nroot\t/tmp\nentry\ttrain\t0\ta.png\n");
        assert!(DatasetIndex::parse(&text, origin).is_err());
    }
}
