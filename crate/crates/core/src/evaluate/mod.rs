//! Deployment-protocol evaluation: sessions of frames from enrolled and
//! unenrolled participants, one confusion count per session, and
//! accuracy / FPR / FNR reports.

mod metrics;
mod report;
mod session;

pub use metrics::{training_accuracy, ConfusionCounts};
pub use report::{parse_csv, render_csv, render_table, EvaluationReport};
pub use session::{
    decide_session, embed_sessions, load_session_specs, parse_session_manifest, score_sessions,
    verdict, Participant, Session, SessionResult, SessionSpec, Verdict, DEFAULT_SESSION_SECS,
    UNKNOWN_MARKER,
};
