//! Concurrent front end over a [`Session`]: lock-free snapshot reads, one
//! serialized writer that logs before it publishes.

use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use mmdl_core::{AnnotationRecord, Label, Pass};

use crate::session::{record, write_jsonl, Ack, AnnotationLog, Session, SessionError, TaskView};

pub type Clock = Box<dyn Fn() -> String + Send + Sync>;

/// UTC wall-clock time, RFC 3339 to the second.
pub fn utc_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub struct AnnotationService {
    snapshot: ArcSwap<Session>,
    writer: Mutex<Option<AnnotationLog>>,
    clock: Clock,
}

impl AnnotationService {
    /// `log` may be `None` for an in-memory service.
    pub fn new(session: Session, log: Option<AnnotationLog>) -> Self {
        Self::with_clock(session, log, Box::new(utc_now))
    }

    pub fn with_clock(session: Session, log: Option<AnnotationLog>, clock: Clock) -> Self {
        AnnotationService {
            snapshot: ArcSwap::from_pointee(session),
            writer: Mutex::new(log),
            clock,
        }
    }

    /// The current session; later submissions do not affect the returned value.
    pub fn snapshot(&self) -> Arc<Session> {
        self.snapshot.load_full()
    }

    pub fn issue_task(&self, annotator: &str) -> Result<TaskView, SessionError> {
        self.snapshot.load().issue_task(annotator)
    }

    pub fn submit_pass1(&self, task_id: &str, annotator: &str, judgment: Label) -> Result<Ack, SessionError> {
        self.submit(task_id, annotator, Pass::Unimodal, judgment)
    }

    pub fn submit_pass2(&self, task_id: &str, annotator: &str, judgment: Label) -> Result<Ack, SessionError> {
        self.submit(task_id, annotator, Pass::Multimodal, judgment)
    }

    fn submit(&self, task_id: &str, annotator: &str, pass: Pass, judgment: Label) -> Result<Ack, SessionError> {
        let mut log = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        // the writer lock makes this snapshot the latest one
        let mut next = Session::clone(&self.snapshot.load());
        let rec = record(task_id, annotator, pass, judgment, (self.clock)());
        next.validate(&rec)?;
        if let Some(log) = log.as_mut() {
            log.append(&rec)?;
        }
        let ack = next.apply(rec)?;
        self.snapshot.store(Arc::new(next));
        log::debug!("{task_id} pass {} by {annotator}", u8::from(pass));
        Ok(ack)
    }

    /// Sorted records, as passed to `kappa_by_quadrant`.
    pub fn export_annotations(&self) -> Vec<AnnotationRecord> {
        self.snapshot.load().export()
    }

    pub fn export_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &self.export_annotations()).expect("writing to memory");
        buf
    }
}
