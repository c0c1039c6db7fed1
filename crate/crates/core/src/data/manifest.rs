use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_labels, DataError, EmbeddingStore, ExampleRecord, FeatureTable, Label, Modality, Split};

/// JSON manifest tying together one dataset's files. Relative paths resolve
/// against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub labels: PathBuf,
    pub embeddings: BTreeMap<Modality, PathBuf>,
    /// Feature tables keyed by the modality whose quadrant plot they describe
    /// (`audio` for prosodic features, `video` for AU activation rates).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, PathBuf>,
    /// Optional externally computed 2-D coordinates (`id,x,y`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<PathBuf>,
    pub seed: u64,
}

/// A manifest with every referenced file loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub base_dir: PathBuf,
    pub examples: Vec<ExampleRecord>,
    pub stores: BTreeMap<Modality, EmbeddingStore>,
    pub features: BTreeMap<String, FeatureTable>,
    pub projection: Option<FeatureTable>,
}

impl Dataset {
    pub fn labels(&self) -> HashMap<String, Label> {
        self.examples
            .iter()
            .map(|e| (e.id.clone(), e.label))
            .collect()
    }

    pub fn ids_in(&self, split: Split) -> Vec<String> {
        self.examples
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id.clone())
            .collect()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }
}

pub fn load_manifest(path: &Path) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(|_| DataError::MissingFile(path.to_path_buf()))?;
    let manifest: DatasetManifest = serde_json::from_reader(file)
        .map_err(|e| DataError::Format(format!("manifest {}: {e}", path.display())))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let labels_path = base_dir.join(&manifest.labels);
    let labels_file =
        File::open(&labels_path).map_err(|_| DataError::MissingFile(labels_path.clone()))?;
    let examples = read_labels(labels_file)?;
    let known: HashSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();

    let mut stores = BTreeMap::new();
    for (&modality, rel) in &manifest.embeddings {
        let store = EmbeddingStore::load(&base_dir.join(rel))?;
        check_same_ids(&examples, &known, store.ids(), &format!("{modality} embeddings"))?;
        stores.insert(modality, store);
    }

    let mut features = BTreeMap::new();
    for (key, rel) in &manifest.features {
        let table = FeatureTable::load(&base_dir.join(rel))?;
        check_subset(&known, table.ids(), &format!("`{key}` feature table"))?;
        features.insert(key.clone(), table);
    }

    let projection = match &manifest.projection {
        Some(rel) => {
            let table = FeatureTable::load(&base_dir.join(rel))?;
            if table.column("x").is_none() || table.column("y").is_none() {
                return Err(DataError::Format("projection table needs x and y columns".into()));
            }
            check_subset(&known, table.ids(), "projection table")?;
            Some(table)
        }
        None => None,
    };

    Ok(Dataset {
        manifest,
        base_dir,
        examples,
        stores,
        features,
        projection,
    })
}

fn check_same_ids(
    examples: &[ExampleRecord],
    known: &HashSet<&str>,
    ids: &[String],
    what: &str,
) -> Result<(), DataError> {
    let present: HashSet<&str> = ids.iter().map(String::as_str).collect();
    if let Some(e) = examples.iter().find(|e| !present.contains(e.id.as_str())) {
        return Err(DataError::IdMismatch {
            id: e.id.clone(),
            detail: format!("is labeled but missing from {what}"),
        });
    }
    check_subset(known, ids, what)
}

fn check_subset(known: &HashSet<&str>, ids: &[String], what: &str) -> Result<(), DataError> {
    match ids.iter().find(|id| !known.contains(id.as_str())) {
        Some(id) => Err(DataError::IdMismatch {
            id: id.clone(),
            detail: format!("appears in {what} but not in labels"),
        }),
        None => Ok(()),
    }
}
