use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::ConfusionCounts;
use crate::encoder::{embed_image, EncoderBackend};
use crate::error::{Error, Result};
use crate::preprocess::{load_face, Subject, Warning};
use crate::recognize::{argmax, predict, Outcome, RecognitionDecision};
use crate::types::{Embedding, Gallery};

/// Nominal length of one presence in front of the camera.
pub const DEFAULT_SESSION_SECS: f64 = 5.0;

pub const UNKNOWN_MARKER: &str = "UNKNOWN";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Participant {
    /// Enrolled identity id.
    Known(usize),
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub name: String,
    pub participant: Participant,
    pub frames: Vec<Embedding>,
    pub duration_secs: f64,
}

impl Session {
    pub fn new(name: impl Into<String>, participant: Participant, frames: Vec<Embedding>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyDataset("session has no frames".into()));
        }
        if frames.iter().any(|f| !f.is_normalized()) {
            return Err(Error::Normalization);
        }
        Ok(Self {
            name: name.into(),
            participant,
            frames,
            duration_secs: DEFAULT_SESSION_SECS,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::TruePositive => "TP",
            Verdict::TrueNegative => "TN",
            Verdict::FalsePositive => "FP",
            Verdict::FalseNegative => "FN",
        }
    }

    pub fn counts(self) -> ConfusionCounts {
        match self {
            Verdict::TruePositive => ConfusionCounts::new(1, 0, 0, 0),
            Verdict::TrueNegative => ConfusionCounts::new(0, 1, 0, 0),
            Verdict::FalsePositive => ConfusionCounts::new(0, 0, 1, 0),
            Verdict::FalseNegative => ConfusionCounts::new(0, 0, 0, 1),
        }
    }
}

/// A known participant identified correctly is TP and rejected is FN; a
/// known participant identified as someone else is FP. An unknown
/// participant rejected is TN and identified as anyone is FP.
pub fn verdict(participant: &Participant, decision: &RecognitionDecision) -> Verdict {
    match (participant, decision.identified()) {
        (Participant::Known(truth), Some(class)) if *truth == class => Verdict::TruePositive,
        (Participant::Known(_), Some(_)) => Verdict::FalsePositive,
        (Participant::Known(_), None) => Verdict::FalseNegative,
        (Participant::Unknown, None) => Verdict::TrueNegative,
        (Participant::Unknown, Some(_)) => Verdict::FalsePositive,
    }
}

/// Decides each frame, then votes: a class wins only with more than half of
/// the frames, otherwise the session is Unknown. The session confidence is
/// the mean confidence of the winning frames. An Unknown session reports
/// the most frequent per-frame argmax (lowest id on ties) and its mean
/// confidence. The probability vector is the mean over frames.
pub fn decide_session(session: &Session, gallery: &Gallery, threshold: f64) -> Result<RecognitionDecision> {
    if session.frames.is_empty() {
        return Err(Error::EmptyDataset(format!("session {} has no frames", session.name)));
    }
    let frames = session
        .frames
        .iter()
        .map(|f| predict(f, gallery, threshold))
        .collect::<Result<Vec<_>>>()?;
    let c = gallery.num_classes();
    let mut probabilities = vec![0.0; c];
    for d in &frames {
        probabilities.iter_mut().zip(&d.probabilities).for_each(|(a, p)| *a += p);
    }
    let n = frames.len() as f64;
    probabilities.iter_mut().for_each(|p| *p /= n);

    let mut votes = vec![0usize; c];
    for class in frames.iter().filter_map(|d| d.identified()) {
        votes[class] += 1;
    }
    let mean_confidence = |pick: &dyn Fn(&RecognitionDecision) -> bool| {
        let picked: Vec<f64> = frames.iter().filter(|d| pick(d)).map(|d| d.confidence()).collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let winner = votes.iter().position(|&v| 2 * v > frames.len());
    let outcome = match winner {
        Some(class) => Outcome::Identified {
            class,
            confidence: mean_confidence(&|d| d.identified() == Some(class)),
        },
        None => {
            let mut tops = vec![0usize; c];
            for d in &frames {
                tops[argmax(&d.probabilities)] += 1;
            }
            let top = argmax(&tops.iter().map(|&t| t as f64).collect::<Vec<_>>());
            Outcome::Unknown {
                top,
                top_confidence: mean_confidence(&|d| argmax(&d.probabilities) == top),
            }
        }
    };
    Ok(RecognitionDecision {
        outcome,
        probabilities,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionResult {
    pub name: String,
    pub participant: Participant,
    pub decision: RecognitionDecision,
    pub verdict: Verdict,
}

/// Decides every session (in parallel) and tallies one count per session.
pub fn score_sessions(
    sessions: &[Session],
    gallery: &Gallery,
    threshold: f64,
) -> Result<(ConfusionCounts, Vec<SessionResult>)> {
    if sessions.is_empty() {
        return Err(Error::EmptyDataset("no sessions to score".into()));
    }
    let results = sessions
        .par_iter()
        .map(|s| {
            let decision = decide_session(s, gallery, threshold)?;
            Ok(SessionResult {
                name: s.name.clone(),
                participant: s.participant.clone(),
                verdict: verdict(&s.participant, &decision),
                decision,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = results
        .iter()
        .fold(ConfusionCounts::default(), |acc, r| acc + r.verdict.counts());
    Ok((counts, results))
}

/// A session on disk before embedding. `identity` is `None` for a
/// participant outside the gallery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionSpec {
    pub name: String,
    pub identity: Option<String>,
    pub frames: Vec<PathBuf>,
}

/// Parses a session manifest: one session per line,
/// `<identity|UNKNOWN> <frame paths...>`, paths relative to `base`. Blank
/// lines and `#` comments are ignored.
pub fn parse_session_manifest(text: &str, base: &Path, origin: &Path) -> Result<Vec<SessionSpec>> {
    let mut specs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let who = fields.next().expect("non-empty line");
        let frames: Vec<PathBuf> = fields.map(|f| base.join(f)).collect();
        if frames.is_empty() {
            return Err(Error::format(
                "session manifest",
                origin,
                format!("line {}: no frame paths", i + 1),
            ));
        }
        specs.push(SessionSpec {
            name: format!("session_{:02}", specs.len()),
            identity: (who != UNKNOWN_MARKER).then(|| who.to_string()),
            frames,
        });
    }
    if specs.is_empty() {
        return Err(Error::EmptyDataset(format!("{} lists no sessions", origin.display())));
    }
    Ok(specs)
}

/// Reads sessions from either a manifest file or a directory laid out as
/// `<dir>/<name>/frame_*.{png,jpg,jpeg}`. In the directory form a session
/// whose name matches an enrolled identity is that identity; any other name
/// is a participant outside the gallery.
pub fn load_session_specs(path: &Path, gallery: &Gallery) -> Result<Vec<SessionSpec>> {
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        return parse_session_manifest(&text, base, path);
    }
    if !path.is_dir() {
        return Err(Error::EmptyDataset(format!("{} does not exist", path.display())));
    }
    let known: BTreeMap<&str, usize> = gallery.labels.iter().map(|l| (l.name.as_str(), l.id)).collect();
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut specs = Vec::new();
    for dir in dirs {
        let name = dir.file_name().expect("directory entry").to_string_lossy().into_owned();
        let mut frames: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_frame(p))
            .collect();
        frames.sort();
        if frames.is_empty() {
            log::warn!("{}: no frame_* images, skipped", dir.display());
            continue;
        }
        let identity = known.contains_key(name.as_str()).then(|| name.clone());
        specs.push(SessionSpec { name, identity, frames });
    }
    if specs.is_empty() {
        return Err(Error::EmptyDataset(format!("{} holds no sessions", path.display())));
    }
    Ok(specs)
}

fn is_frame(p: &Path) -> bool {
    let stem_ok = p
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("frame_"));
    let ext_ok = p
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"));
    p.is_file() && stem_ok && ext_ok
}

/// Loads, aligns and embeds every frame. Identities named in a manifest must
/// exist in the gallery.
pub fn embed_sessions(
    specs: &[SessionSpec],
    backend: &dyn EncoderBackend,
    gallery: &Gallery,
) -> Result<(Vec<Session>, Vec<Warning>)> {
    let mut sessions = Vec::with_capacity(specs.len());
    let mut warnings = Vec::new();
    for spec in specs {
        let participant = match &spec.identity {
            None => Participant::Unknown,
            Some(name) => Participant::Known(
                gallery
                    .labels
                    .iter()
                    .find(|l| &l.name == name)
                    .map(|l| l.id)
                    .ok_or_else(|| {
                        Error::invalid("session", format!("{}: identity {name:?} is not enrolled", spec.name))
                    })?,
            ),
        };
        let subject = match &participant {
            Participant::Known(id) => Subject::Known(gallery.labels[*id].clone()),
            Participant::Unknown => Subject::Unknown,
        };
        let frames = spec
            .frames
            .par_iter()
            .map(|path| {
                let (image, warning) = load_face(path, subject.clone())?;
                Ok((embed_image(backend, &image)?, warning))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut embeddings = Vec::with_capacity(frames.len());
        for (emb, warning) in frames {
            embeddings.push(emb);
            warnings.extend(warning);
        }
        sessions.push(Session::new(spec.name.clone(), participant, embeddings)?);
    }
    Ok((sessions, warnings))
}
