//! Canonical data types and on-disk formats.

mod embedding;
mod features;
mod manifest;
mod split;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding::{EmbeddingStore, EMBEDDING_MAGIC, EMBEDDING_VERSION};
pub use features::{au_description, is_au_column, FeatureTable, AU_DESCRIPTIONS, AUDIO_FEATURES};
pub use manifest::{load_manifest, Dataset, DatasetManifest};
pub use split::{split_dataset, split_sizes, DEFAULT_FRACTIONS};
pub use synthetic::{
    generate_synthetic, PlantedConflict, SyntheticConfig, SyntheticDataset, SyntheticLayout,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("id mismatch: `{id}` {detail}")]
    IdMismatch { id: String, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("need at least {min} examples, got {n}")]
    TooFewExamples { n: usize, min: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for DataError {
    fn from(err: csv::Error) -> Self {
        DataError::Format(err.to_string())
    }
}

/// Binary gold label; `Empathetic` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Empathetic,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Empathetic, Label::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Empathetic => "empathetic",
            Label::Neutral => "neutral",
        }
    }

    /// Hard decision from the probability of the positive class. A tie at
    /// exactly 0.5 predicts `Neutral`.
    pub fn from_probability(p_empathetic: f64) -> Label {
        if p_empathetic > 0.5 {
            Label::Empathetic
        } else {
            Label::Neutral
        }
    }

    /// Class index used by the classifiers' two-way softmax.
    pub fn index(self) -> usize {
        match self {
            Label::Empathetic => 0,
            Label::Neutral => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empathetic" => Ok(Label::Empathetic),
            "neutral" => Ok(Label::Neutral),
            other => Err(DataError::Format(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
    Video,
}

impl Modality {
    /// Canonical order; also the tie-break order for max pooling.
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Video];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Modality::Text => 0,
            Modality::Audio => 1,
            Modality::Video => 2,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Modality::Text),
            "audio" => Ok(Modality::Audio),
            "video" => Ok(Modality::Video),
            other => Err(DataError::Format(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DataError::Format(format!("unknown split `{other}`"))),
        }
    }
}

/// One speech segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub label: Label,
    pub split: Split,
    /// Media references per modality; absent entries are allowed.
    #[serde(default)]
    pub payload_refs: BTreeMap<Modality, String>,
}

impl ExampleRecord {
    pub fn new(id: impl Into<String>, label: Label, split: Split) -> Self {
        ExampleRecord {
            id: id.into(),
            label,
            split,
            payload_refs: BTreeMap::new(),
        }
    }
}

/// Annotation pass: 1 judges from the flagged modality only, 2 from the full example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Pass {
    Unimodal,
    Multimodal,
}

impl From<Pass> for u8 {
    fn from(pass: Pass) -> u8 {
        match pass {
            Pass::Unimodal => 1,
            Pass::Multimodal => 2,
        }
    }
}

impl TryFrom<u8> for Pass {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Pass::Unimodal),
            2 => Ok(Pass::Multimodal),
            other => Err(format!("pass must be 1 or 2, got {other}")),
        }
    }
}

/// One immutable human judgment. Field order is the log line schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator: String,
    pub pass: Pass,
    pub judgment: Label,
    pub ts_iso8601: String,
}

/// Reads a labels CSV (`id,label,split`, optionally followed by per-modality
/// payload reference columns named `text`, `audio`, `video`).
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<ExampleRecord>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" || &headers[2] != "split"
    {
        return Err(DataError::Format(format!(
            "labels header must start with id,label,split, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut payload_cols = Vec::new();
    for (i, name) in headers.iter().enumerate().skip(3) {
        payload_cols.push((i, name.parse::<Modality>()?));
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let id = row[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(DataError::IdMismatch {
                id,
                detail: "appears twice in labels".into(),
            });
        }
        let mut record = ExampleRecord::new(id, row[1].parse()?, row[2].parse()?);
        for &(i, modality) in &payload_cols {
            let value = row.get(i).unwrap_or("");
            if !value.is_empty() {
                record.payload_refs.insert(modality, value.to_string());
            }
        }
        out.push(record);
    }
    Ok(out)
}

/// Writes a labels CSV. Payload columns are emitted only when some record has one.
pub fn write_labels<W: Write>(writer: W, examples: &[ExampleRecord]) -> Result<(), DataError> {
    let modalities: Vec<Modality> = Modality::ALL
        .into_iter()
        .filter(|m| examples.iter().any(|e| e.payload_refs.contains_key(m)))
        .collect();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "label", "split"];
    header.extend(modalities.iter().map(|m| m.as_str()));
    wtr.write_record(&header)?;
    for e in examples {
        let mut row = vec![e.id.as_str(), e.label.as_str(), e.split.as_str()];
        for m in &modalities {
            row.push(e.payload_refs.get(m).map(String::as_str).unwrap_or(""));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_with_payloads() {
        let mut a = ExampleRecord::new("a", Label::Empathetic, Split::Train);
        a.payload_refs.insert(Modality::Video, "media/a.mp4".into());
        let b = ExampleRecord::new("b", Label::Neutral, Split::Test);
        let mut buf = Vec::new();
        write_labels(&mut buf, &[a.clone(), b.clone()]).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("id,label,split,video\n"));
        let back = read_labels(&buf[..]).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn labels_reject_unknown_label_and_duplicates() {
        let bad = "id,label,split\nx,happy,train\n";
        assert!(matches!(read_labels(bad.as_bytes()), Err(DataError::Format(_))));
        let dup = "id,label,split\nx,neutral,train\nx,neutral,test\n";
        assert!(matches!(
            read_labels(dup.as_bytes()),
            Err(DataError::IdMismatch { .. })
        ));
    }

    #[test]
    fn tie_predicts_neutral() {
        assert_eq!(Label::from_probability(0.5), Label::Neutral);
        assert_eq!(Label::from_probability(0.5000001), Label::Empathetic);
    }

    #[test]
    fn pass_serializes_as_integer() {
        let r = AnnotationRecord {
            task_id: "t1".into(),
            annotator: "a".into(),
            pass: Pass::Multimodal,
            judgment: Label::Neutral,
            ts_iso8601: "2024-01-01T00:00:00Z".into(),
        };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"task_id":"t1","annotator":"a","pass":2,"judgment":"neutral","ts_iso8601":"2024-01-01T00:00:00Z"}"#
        );
        assert!(serde_json::from_str::<AnnotationRecord>(&line.replace(":2,", ":3,")).is_err());
    }
}
