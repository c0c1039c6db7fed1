use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::DataError;

/// Audio feature columns in the order the extraction sidecar writes them.
pub const AUDIO_FEATURES: [&str; 13] = [
    "Mean Pitch",
    "Min Pitch",
    "Max Pitch",
    "Mean Intensity",
    "Min Intensity",
    "Max Intensity",
    "Jitter",
    "Shimmer",
    "HNR",
    "speaking_rate",
    "valence",
    "arousal",
    "dominance",
];

/// FACS names for the 18 action units reported by the video extractor.
pub const AU_DESCRIPTIONS: [(&str, &str); 18] = [
    ("AU01", "Inner Brow Raiser"),
    ("AU02", "Outer Brow Raiser"),
    ("AU04", "Brow Lowerer"),
    ("AU05", "Upper Lid Raiser"),
    ("AU06", "Cheek Raiser"),
    ("AU07", "Lid Tightener"),
    ("AU09", "Nose Wrinkler"),
    ("AU10", "Upper Lip Raiser"),
    ("AU12", "Lip Corner Puller"),
    ("AU14", "Dimpler"),
    ("AU15", "Lip Corner Depressor"),
    ("AU17", "Chin Raiser"),
    ("AU20", "Lip Stretcher"),
    ("AU23", "Lip Tightener"),
    ("AU25", "Lips Part"),
    ("AU26", "Jaw Drop"),
    ("AU28", "Lip Suck"),
    ("AU45", "Blink"),
];

/// True for `AUnn` columns, optionally suffixed (e.g. `AU04_r`).
pub fn is_au_column(name: &str) -> bool {
    let b = name.as_bytes();
    b.len() >= 4
        && &b[..2] == b"AU"
        && b[2].is_ascii_digit()
        && b[3].is_ascii_digit()
        && (b.len() == 4 || !b[4].is_ascii_digit())
}

/// `AU04` -> `AU04: Brow Lowerer`; unknown codes are returned bare.
pub fn au_description(name: &str) -> String {
    let code = if is_au_column(name) { &name[..4] } else { name };
    AU_DESCRIPTIONS
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(c, d)| format!("{c}: {d}"))
        .unwrap_or_else(|| code.to_string())
}

/// Named scalar columns keyed by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<String>,
    columns: Vec<String>,
    /// Column-major values, `values[c][row]`.
    values: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(
        ids: Vec<String>,
        columns: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if values.len() != columns.len() {
            return Err(DataError::Format(format!(
                "{} columns named but {} provided",
                columns.len(),
                values.len()
            )));
        }
        let mut names = HashSet::new();
        for (name, col) in columns.iter().zip(&values) {
            if name == "id" || !names.insert(name.as_str()) {
                return Err(DataError::Format(format!("duplicate column `{name}`")));
            }
            if col.len() != ids.len() {
                return Err(DataError::Format(format!(
                    "column `{name}` has {} cells for {} rows",
                    col.len(),
                    ids.len()
                )));
            }
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(DataError::Format(format!("column `{name}` holds {v}")));
            }
            if is_au_column(name) {
                if let Some(v) = col.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(DataError::Format(format!(
                        "activation rate {v} in `{name}` outside [0,1]"
                    )));
                }
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(DataError::IdMismatch {
                    id: id.clone(),
                    detail: "appears twice in feature table".into(),
                });
            }
        }
        Ok(FeatureTable {
            ids,
            columns,
            values,
            index,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.values[i].as_slice())
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn value(&self, id: &str, column: &str) -> Option<f64> {
        let row = self.row_of(id)?;
        self.column(column).map(|c| c[row])
    }

    pub fn au_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .map(String::as_str)
            .filter(|c| is_au_column(c))
            .collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "id" {
            return Err(DataError::Format("feature table header must start with `id`".into()));
        }
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut values = vec![Vec::new(); columns.len()];
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            ids.push(row[0].to_string());
            for (c, col) in values.iter_mut().enumerate() {
                let cell = row.get(c + 1).unwrap_or("").trim();
                let v: f64 = cell.parse().map_err(|_| {
                    DataError::Format(format!(
                        "row {} column `{}`: cannot parse `{cell}`",
                        line + 1,
                        columns[c]
                    ))
                })?;
                col.push(v);
            }
        }
        FeatureTable::new(ids, columns, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (r, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.values.iter().map(|c| c[r].to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|_| DataError::MissingFile(path.to_path_buf()))?;
        Self::read_csv(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        self.write_csv(File::create(path)?)
    }
}
