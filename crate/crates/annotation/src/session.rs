//! Two-pass session state, the append-only judgment log and replay.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mmdl_core::{AnnotationRecord, Label, Modality, Pass};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::AnnotationTask;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("no tasks remaining for annotator `{0}`")]
    NoTasksRemaining(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task_id}` is {state} for `{annotator}`; pass {pass} not accepted")]
    WrongState {
        task_id: String,
        annotator: String,
        state: TaskState,
        pass: u8,
    },
    #[error("task set must name two distinct annotators, got {0:?}")]
    BadAnnotators([String; 2]),
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
    #[error("log line {line}: {detail}")]
    CorruptLog { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Progress of one (task, annotator) pair. Moves only forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Issued,
    Pass1Done,
    Completed,
}

impl std::fmt::Display for TaskState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskState::Issued => "issued",
            TaskState::Pass1Done => "pass1_done",
            TaskState::Completed => "completed",
        })
    }
}

/// A sampled task list together with the two annotators who judge every task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub annotators: [String; 2],
    pub tasks: Vec<AnnotationTask>,
}

impl TaskSet {
    pub fn read_json<R: io::Read>(reader: R) -> Result<Self, SessionError> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), SessionError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// Task id to source quadrant, the shape `kappa_by_quadrant` expects.
    pub fn quadrant_of(&self) -> HashMap<String, mmdl_core::Quadrant> {
        self.tasks
            .iter()
            .map(|t| (t.task_id.clone(), t.quadrant))
            .collect()
    }
}

/// What an annotator sees for a task. Never carries the example id or quadrant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub modality_flag: Modality,
    /// The next pass the annotator must submit.
    pub pass: Pass,
    /// Pass 1: only the flagged modality. Pass 2: every modality.
    pub payload_refs: BTreeMap<Modality, String>,
}

/// Returned after an accepted submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub task_id: String,
    pub state: TaskState,
    /// After pass 1 the full example is unlocked; empty after pass 2.
    pub payload_refs: BTreeMap<Modality, String>,
}

/// In-memory session. State is a pure function of the accepted records.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    set: TaskSet,
    index: HashMap<String, usize>,
    /// Accepted records in acceptance order.
    records: Vec<AnnotationRecord>,
    /// Absent means issued.
    states: HashMap<(usize, usize), TaskState>,
}

impl Session {
    pub fn new(set: TaskSet) -> Result<Self, SessionError> {
        if set.annotators[0] == set.annotators[1] {
            return Err(SessionError::BadAnnotators(set.annotators));
        }
        let mut index = HashMap::with_capacity(set.tasks.len());
        for (i, t) in set.tasks.iter().enumerate() {
            if index.insert(t.task_id.clone(), i).is_some() {
                return Err(SessionError::DuplicateTask(t.task_id.clone()));
            }
        }
        Ok(Session {
            set,
            index,
            records: Vec::new(),
            states: HashMap::new(),
        })
    }

    pub fn task_set(&self) -> &TaskSet {
        &self.set
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    fn annotator_slot(&self, annotator: &str) -> Result<usize, SessionError> {
        self.set
            .annotators
            .iter()
            .position(|a| a == annotator)
            .ok_or_else(|| SessionError::UnknownAnnotator(annotator.to_string()))
    }

    fn task_index(&self, task_id: &str) -> Result<usize, SessionError> {
        self.index
            .get(task_id)
            .copied()
            .ok_or_else(|| SessionError::UnknownTask(task_id.to_string()))
    }

    pub fn state(&self, task_id: &str, annotator: &str) -> Result<TaskState, SessionError> {
        let key = (self.task_index(task_id)?, self.annotator_slot(annotator)?);
        Ok(self.states.get(&key).copied().unwrap_or(TaskState::Issued))
    }

    /// Every (task, annotator) state, keyed by task id then annotator.
    pub fn states(&self) -> BTreeMap<(String, String), TaskState> {
        let mut out = BTreeMap::new();
        for t in &self.set.tasks {
            for a in &self.set.annotators {
                let s = self.state(&t.task_id, a).expect("known task and annotator");
                out.insert((t.task_id.clone(), a.clone()), s);
            }
        }
        out
    }

    /// The annotator's first unfinished task in task-list order. Pure read:
    /// asking twice returns the same task until it is submitted.
    pub fn issue_task(&self, annotator: &str) -> Result<TaskView, SessionError> {
        let slot = self.annotator_slot(annotator)?;
        for (i, task) in self.set.tasks.iter().enumerate() {
            let state = self.states.get(&(i, slot)).copied().unwrap_or(TaskState::Issued);
            let (pass, payload_refs) = match state {
                TaskState::Completed => continue,
                TaskState::Issued => (Pass::Unimodal, flagged_only(task)),
                TaskState::Pass1Done => (Pass::Multimodal, task.payload_refs.clone()),
            };
            return Ok(TaskView {
                task_id: task.task_id.clone(),
                modality_flag: task.modality_flag,
                pass,
                payload_refs,
            });
        }
        Err(SessionError::NoTasksRemaining(annotator.to_string()))
    }

    /// Checks that `record` is the next legal step without changing anything.
    pub fn validate(&self, record: &AnnotationRecord) -> Result<(), SessionError> {
        let i = self.task_index(&record.task_id)?;
        let slot = self.annotator_slot(&record.annotator)?;
        let state = self.states.get(&(i, slot)).copied().unwrap_or(TaskState::Issued);
        let expected = match record.pass {
            Pass::Unimodal => TaskState::Issued,
            Pass::Multimodal => TaskState::Pass1Done,
        };
        if state != expected {
            return Err(SessionError::WrongState {
                task_id: record.task_id.clone(),
                annotator: record.annotator.clone(),
                state,
                pass: record.pass.into(),
            });
        }
        Ok(())
    }

    /// Validates and applies one record.
    pub fn apply(&mut self, record: AnnotationRecord) -> Result<Ack, SessionError> {
        self.validate(&record)?;
        let i = self.index[&record.task_id];
        let slot = self.annotator_slot(&record.annotator)?;
        let (state, payload_refs) = match record.pass {
            Pass::Unimodal => (TaskState::Pass1Done, self.set.tasks[i].payload_refs.clone()),
            Pass::Multimodal => (TaskState::Completed, BTreeMap::new()),
        };
        self.states.insert((i, slot), state);
        let ack = Ack {
            task_id: record.task_id.clone(),
            state,
            payload_refs,
        };
        self.records.push(record);
        Ok(ack)
    }

    /// Rebuilds a session from a task set and a log, rejecting any line the
    /// live service would have refused.
    pub fn replay<R: BufRead>(set: TaskSet, log: R) -> Result<Self, SessionError> {
        let mut session = Session::new(set)?;
        for record in read_log(log)? {
            session.apply(record.1).map_err(|e| SessionError::CorruptLog {
                line: record.0,
                detail: e.to_string(),
            })?;
        }
        Ok(session)
    }

    /// Records sorted by (task id, annotator, pass): independent of arrival order.
    pub fn export(&self) -> Vec<AnnotationRecord> {
        let mut out = self.records.clone();
        out.sort_by(|a, b| {
            (&a.task_id, &a.annotator, a.pass).cmp(&(&b.task_id, &b.annotator, b.pass))
        });
        out
    }
}

fn flagged_only(task: &AnnotationTask) -> BTreeMap<Modality, String> {
    task.payload_refs
        .iter()
        .filter(|(m, _)| **m == task.modality_flag)
        .map(|(m, r)| (*m, r.clone()))
        .collect()
}

/// Parses a JSON Lines log, returning each record with its 1-based line number.
/// Blank lines are skipped.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<(usize, AnnotationRecord)>, SessionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| SessionError::CorruptLog {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Writes records as JSON Lines, one object per line with the log field order.
pub fn write_jsonl<W: Write>(mut writer: W, records: &[AnnotationRecord]) -> Result<(), SessionError> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Append-only judgment log. Every append is flushed and synced before it returns.
#[derive(Debug)]
pub struct AnnotationLog {
    path: PathBuf,
    file: BufWriter<File>,
}

impl AnnotationLog {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AnnotationLog {
            path,
            file: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &AnnotationRecord) -> Result<(), SessionError> {
        serde_json::to_writer(&mut self.file, record)?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        self.file.get_ref().sync_data()?;
        Ok(())
    }
}

/// Opens the log at `path` and replays whatever it already holds.
pub fn resume(set: TaskSet, path: impl AsRef<Path>) -> Result<(Session, AnnotationLog), SessionError> {
    let path = path.as_ref();
    let session = match File::open(path) {
        Ok(f) => Session::replay(set, BufReader::new(f))?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Session::new(set)?,
        Err(e) => return Err(e.into()),
    };
    Ok((session, AnnotationLog::open(path)?))
}

pub fn record(task_id: &str, annotator: &str, pass: Pass, judgment: Label, ts: String) -> AnnotationRecord {
    AnnotationRecord {
        task_id: task_id.to_string(),
        annotator: annotator.to_string(),
        pass,
        judgment,
        ts_iso8601: ts,
    }
}
