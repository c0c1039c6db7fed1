//! Confidence quadrants and pairwise disagreement rates.
//!
//! A prediction is correct when its confidence in the gold label is strictly
//! greater than 0.5, so a tie counts as incorrect.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Label, Modality};

#[derive(Debug, Error, PartialEq)]
pub enum DisagreementError {
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("need at least two models, got {0}")]
    TooFewModels(usize),
}

/// A model's probability of the empathetic class for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prob_empathetic: f64,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, prob_empathetic: f64) -> Self {
        PredictionRecord {
            id: id.into(),
            prob_empathetic,
        }
    }

    pub fn predicted(&self) -> Label {
        Label::from_probability(self.prob_empathetic)
    }

    pub fn confidence(&self, gold: Label) -> f64 {
        confidence_in_gold(self.prob_empathetic, gold)
    }
}

/// Reads `id,p_empathetic` rows.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let p: f64 = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| DataError::Format(format!("bad probability for `{}`", &row[0])))?;
        out.push(PredictionRecord::new(&row[0], p));
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(
    writer: W,
    predictions: &[PredictionRecord],
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "p_empathetic"])?;
    for p in predictions {
        wtr.write_record([p.id.clone(), p.prob_empathetic.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrant {
    /// Unimodal correct, fusion incorrect.
    Red,
    /// Fusion correct, unimodal incorrect.
    Green,
    /// Both correct.
    Blue,
    /// Both incorrect.
    Yellow,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Red, Quadrant::Green, Quadrant::Blue, Quadrant::Yellow];
    /// Row order of the annotator-agreement table.
    pub const TABLE_ORDER: [Quadrant; 4] =
        [Quadrant::Red, Quadrant::Blue, Quadrant::Yellow, Quadrant::Green];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::Red => "red",
            Quadrant::Green => "green",
            Quadrant::Blue => "blue",
            Quadrant::Yellow => "yellow",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Quadrant::Red => "Red",
            Quadrant::Green => "Green",
            Quadrant::Blue => "Blue",
            Quadrant::Yellow => "Yellow",
        }
    }

    pub fn is_disagreement(self) -> bool {
        matches!(self, Quadrant::Red | Quadrant::Green)
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "red" => Ok(Quadrant::Red),
            "green" => Ok(Quadrant::Green),
            "blue" => Ok(Quadrant::Blue),
            "yellow" => Ok(Quadrant::Yellow),
            other => Err(DataError::Format(format!("unknown quadrant `{other}`"))),
        }
    }
}

pub fn confidence_in_gold(prob_empathetic: f64, gold: Label) -> f64 {
    match gold {
        Label::Empathetic => prob_empathetic,
        Label::Neutral => 1.0 - prob_empathetic,
    }
}

pub fn is_correct(confidence: f64) -> bool {
    confidence > 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePair {
    pub id: String,
    pub modality: Modality,
    pub c_uni: f64,
    pub c_multi: f64,
}

pub fn assign_quadrant(pair: &ConfidencePair) -> Quadrant {
    match (is_correct(pair.c_uni), is_correct(pair.c_multi)) {
        (true, false) => Quadrant::Red,
        (false, true) => Quadrant::Green,
        (true, true) => Quadrant::Blue,
        (false, false) => Quadrant::Yellow,
    }
}

/// One modality's quadrant plot.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantPartition {
    pub modality: Modality,
    /// In the order of the unimodal predictions.
    pub pairs: Vec<ConfidencePair>,
    pub groups: BTreeMap<Quadrant, Vec<String>>,
}

impl QuadrantPartition {
    pub fn from_pairs(modality: Modality, pairs: Vec<ConfidencePair>) -> Self {
        let mut groups: BTreeMap<Quadrant, Vec<String>> =
            Quadrant::ALL.iter().map(|&q| (q, Vec::new())).collect();
        for p in &pairs {
            groups.get_mut(&assign_quadrant(p)).unwrap().push(p.id.clone());
        }
        QuadrantPartition {
            modality,
            pairs,
            groups,
        }
    }

    pub fn group(&self, quadrant: Quadrant) -> &[String] {
        self.groups.get(&quadrant).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn quadrant_of(&self) -> HashMap<String, Quadrant> {
        self.pairs
            .iter()
            .map(|p| (p.id.clone(), assign_quadrant(p)))
            .collect()
    }

    /// `id,c_uni,c_multi,quadrant`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id", "c_uni", "c_multi", "quadrant"])?;
        for p in &self.pairs {
            wtr.write_record([
                p.id.clone(),
                p.c_uni.to_string(),
                p.c_multi.to_string(),
                assign_quadrant(p).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(modality: Modality, reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut pairs = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64, DataError> {
                row.get(i)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| DataError::Format(format!("bad confidence in row `{}`", &row[0])))
            };
            let pair = ConfidencePair {
                id: row[0].to_string(),
                modality,
                c_uni: num(1)?,
                c_multi: num(2)?,
            };
            let stated: Quadrant = row.get(3).unwrap_or("").parse()?;
            if stated != assign_quadrant(&pair) {
                return Err(DataError::Format(format!(
                    "row `{}` labeled {stated} but confidences say {}",
                    pair.id,
                    assign_quadrant(&pair)
                )));
            }
            pairs.push(pair);
        }
        Ok(QuadrantPartition::from_pairs(modality, pairs))
    }
}

fn unique_index<'a>(
    preds: &'a [PredictionRecord],
    what: &str,
) -> Result<HashMap<&'a str, &'a PredictionRecord>, DisagreementError> {
    let mut index = HashMap::with_capacity(preds.len());
    for p in preds {
        if index.insert(p.id.as_str(), p).is_some() {
            return Err(DisagreementError::IdMismatch(format!(
                "`{}` appears twice in {what}",
                p.id
            )));
        }
    }
    Ok(index)
}

fn same_ids(
    a: &HashMap<&str, &PredictionRecord>,
    b: &HashMap<&str, &PredictionRecord>,
) -> Result<(), DisagreementError> {
    if a.len() != b.len() {
        return Err(DisagreementError::IdMismatch(format!(
            "{} ids vs {} ids",
            a.len(),
            b.len()
        )));
    }
    match a.keys().find(|id| !b.contains_key(*id)) {
        Some(id) => Err(DisagreementError::IdMismatch(format!(
            "`{id}` missing from one model"
        ))),
        None => Ok(()),
    }
}

pub fn quadrant_partition(
    modality: Modality,
    unimodal: &[PredictionRecord],
    multimodal: &[PredictionRecord],
    labels: &HashMap<String, Label>,
) -> Result<QuadrantPartition, DisagreementError> {
    let uni = unique_index(unimodal, "unimodal predictions")?;
    let multi = unique_index(multimodal, "multimodal predictions")?;
    same_ids(&uni, &multi)?;
    let mut pairs = Vec::with_capacity(unimodal.len());
    for u in unimodal {
        let gold = *labels
            .get(&u.id)
            .ok_or_else(|| DisagreementError::IdMismatch(format!("no label for `{}`", u.id)))?;
        pairs.push(ConfidencePair {
            id: u.id.clone(),
            modality,
            c_uni: u.confidence(gold),
            c_multi: multi[u.id.as_str()].confidence(gold),
        });
    }
    Ok(QuadrantPartition::from_pairs(modality, pairs))
}

/// Fraction of shared ids whose hard labels differ.
pub fn disagreement_rate(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
) -> Result<f64, DisagreementError> {
    if a.is_empty() || b.is_empty() {
        return Err(DisagreementError::EmptyInput);
    }
    let ia = unique_index(a, "first model")?;
    let ib = unique_index(b, "second model")?;
    same_ids(&ia, &ib)?;
    let differ = a
        .iter()
        .filter(|p| p.predicted() != ib[p.id.as_str()].predicted())
        .count();
    Ok(differ as f64 / a.len() as f64)
}

/// Models compared in the disagreement table; `Full` is the fusion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKey {
    Text,
    Audio,
    Video,
    Full,
}

impl ModelKey {
    pub const ALL: [ModelKey; 4] = [ModelKey::Text, ModelKey::Audio, ModelKey::Video, ModelKey::Full];

    pub fn title(self) -> &'static str {
        match self {
            ModelKey::Text => "Text",
            ModelKey::Audio => "Audio",
            ModelKey::Video => "Video",
            ModelKey::Full => "Full",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKey::Text => "text",
            ModelKey::Audio => "audio",
            ModelKey::Video => "video",
            ModelKey::Full => "full",
        }
    }
}

impl From<Modality> for ModelKey {
    fn from(m: Modality) -> Self {
        match m {
            Modality::Text => ModelKey::Text,
            Modality::Audio => ModelKey::Audio,
            Modality::Video => ModelKey::Video,
        }
    }
}

/// Symmetric pairwise disagreement rates with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DisagreementMatrix {
    pub models: Vec<ModelKey>,
    pub rates: Vec<Vec<f64>>,
}

impl DisagreementMatrix {
    pub fn rate(&self, a: ModelKey, b: ModelKey) -> Option<f64> {
        let i = self.models.iter().position(|&m| m == a)?;
        let j = self.models.iter().position(|&m| m == b)?;
        Some(self.rates[i][j])
    }

    /// Column header lists the unimodal models; one row per model, with the
    /// fusion model as the last row and `—` on the diagonal.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let columns: Vec<ModelKey> = self
            .models
            .iter()
            .copied()
            .filter(|m| *m != ModelKey::Full)
            .collect();
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["Modality".to_string()];
        header.extend(columns.iter().map(|m| m.title().to_string()));
        wtr.write_record(&header)?;
        for &row in &self.models {
            let mut cells = vec![row.title().to_string()];
            for &col in &columns {
                cells.push(if row == col {
                    "—".to_string()
                } else {
                    format!("{:.3}", self.rate(row, col).unwrap())
                });
            }
            wtr.write_record(&cells)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn disagreement_matrix(
    models: &BTreeMap<ModelKey, Vec<PredictionRecord>>,
) -> Result<DisagreementMatrix, DisagreementError> {
    if models.len() < 2 {
        return Err(DisagreementError::TooFewModels(models.len()));
    }
    let keys: Vec<ModelKey> = models.keys().copied().collect();
    let k = keys.len();
    let mut rates = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = disagreement_rate(&models[&keys[i]], &models[&keys[j]])?;
            rates[i][j] = r;
            rates[j][i] = r;
        }
    }
    Ok(DisagreementMatrix {
        models: keys,
        rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub quadrant: Quadrant,
}

/// Plot data for one confidence scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterData {
    pub modality: Modality,
    pub points: Vec<ScatterPoint>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Positions of the correctness thresholds on both axes.
    pub gridlines: Vec<f64>,
}

pub fn export_scatter(partition: &QuadrantPartition) -> ScatterData {
    ScatterData {
        modality: partition.modality,
        points: partition
            .pairs
            .iter()
            .map(|p| ScatterPoint {
                id: p.id.clone(),
                x: p.c_uni,
                y: p.c_multi,
                quadrant: assign_quadrant(p),
            })
            .collect(),
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        gridlines: vec![0.5],
    }
}

/// Convenience: the set of ids that fall in red or green.
pub fn disagreement_ids(partition: &QuadrantPartition) -> HashSet<String> {
    partition
        .group(Quadrant::Red)
        .iter()
        .chain(partition.group(Quadrant::Green))
        .cloned()
        .collect()
}
