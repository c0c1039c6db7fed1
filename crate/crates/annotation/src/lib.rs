//! Two-pass human annotation of disagreement quadrants.
//!
//! [`sampler`] draws an even number of tasks from each quadrant of the three
//! modality plots. [`session`] enforces the per-annotator order (flagged
//! modality first, then the full example) and persists judgments to an
//! append-only JSON Lines log that replays into the same state. [`service`]
//! and [`http`] put that behind a concurrent HTTP API.

pub mod http;
pub mod sampler;
pub mod service;
pub mod session;

pub use sampler::{attach_payloads, sample_for_annotation, AnnotationTask, SampleError, DEFAULT_TOTAL};
pub use service::AnnotationService;
pub use session::{
    resume, Ack, AnnotationLog, Session, SessionError, TaskSet, TaskState, TaskView,
};
