//! Synthetic datasets with planted cross-modal conflicts.
//!
//! Each modality's embeddings come from two Gaussian clusters centred at
//! `+c_m` (empathetic) and `-c_m` (neutral) with unit isotropic noise, where
//! `|c_m| = separation / 2`. A planted conflict draws exactly one modality
//! from the opposite label's cluster.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    split_dataset, write_labels, DataError, DatasetManifest, EmbeddingStore, ExampleRecord,
    FeatureTable, Label, Modality, AUDIO_FEATURES, AU_DESCRIPTIONS, DEFAULT_FRACTIONS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticLayout {
    /// Every modality carries the label.
    Redundant,
    /// Each modality carries the label for a disjoint third of the examples
    /// and is pure noise elsewhere.
    Complementary,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n: usize,
    pub dim: usize,
    pub conflict_fraction: f64,
    /// Distance between the two cluster centres, in noise standard deviations.
    pub separation: f64,
    pub layout: SyntheticLayout,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 1200,
            dim: 32,
            conflict_fraction: 0.25,
            separation: 6.0,
            layout: SyntheticLayout::Redundant,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedConflict {
    pub id: String,
    pub modality: Modality,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub examples: Vec<ExampleRecord>,
    pub stores: BTreeMap<Modality, EmbeddingStore>,
    pub audio_features: FeatureTable,
    pub au_features: FeatureTable,
    pub planted: Vec<PlantedConflict>,
    /// Empathetic cluster centre per modality; the neutral centre is its negation.
    pub centers: BTreeMap<Modality, Vec<f64>>,
}

impl SyntheticDataset {
    /// The Bayes-optimal rule for one modality under the generator's own
    /// parameters: the sign of the projection on the cluster axis.
    pub fn bayes_label(&self, modality: Modality, embedding: &[f32]) -> Label {
        let dot: f64 = self.centers[&modality]
            .iter()
            .zip(embedding)
            .map(|(c, &x)| c * x as f64)
            .sum();
        if dot > 0.0 {
            Label::Empathetic
        } else {
            Label::Neutral
        }
    }

    /// Writes every file plus `manifest.json` into `dir`; returns the manifest path.
    pub fn write_to_dir(&self, dir: &Path, name: &str) -> Result<PathBuf, DataError> {
        std::fs::create_dir_all(dir)?;
        write_labels(File::create(dir.join("labels.csv"))?, &self.examples)?;
        let mut embeddings = BTreeMap::new();
        for (modality, store) in &self.stores {
            let file = format!("{modality}.mmeb");
            store.save(&dir.join(&file))?;
            embeddings.insert(*modality, PathBuf::from(file));
        }
        self.audio_features.save(&dir.join("audio_features.csv"))?;
        self.au_features.save(&dir.join("au_rates.csv"))?;
        let mut wtr = csv::Writer::from_path(dir.join("planted.csv"))?;
        wtr.write_record(["id", "modality"])?;
        for p in &self.planted {
            wtr.write_record([p.id.as_str(), p.modality.as_str()])?;
        }
        wtr.flush()?;

        let manifest = DatasetManifest {
            name: name.to_string(),
            labels: "labels.csv".into(),
            embeddings,
            features: BTreeMap::from([
                ("audio".to_string(), PathBuf::from("audio_features.csv")),
                ("video".to_string(), PathBuf::from("au_rates.csv")),
            ]),
            projection: None,
            seed: self.config.seed,
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| DataError::Format(e.to_string()))?;
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset, DataError> {
    if config.n < 12 {
        return Err(DataError::BadParams(format!("n must be >= 12, got {}", config.n)));
    }
    if config.dim < 4 {
        return Err(DataError::BadParams(format!("dim must be >= 4, got {}", config.dim)));
    }
    if !(0.0..=1.0).contains(&config.conflict_fraction) {
        return Err(DataError::BadParams(format!(
            "conflict_fraction must lie in [0,1], got {}",
            config.conflict_fraction
        )));
    }
    if !(config.separation.is_finite() && config.separation > 0.0) {
        return Err(DataError::BadParams("separation must be positive".into()));
    }

    let (n, dim) = (config.n, config.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut centers = BTreeMap::new();
    for m in Modality::ALL {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = config.separation / 2.0 / norm;
        centers.insert(m, dir.iter().map(|v| v * scale).collect::<Vec<f64>>());
    }

    let ids: Vec<String> = (0..n).map(|i| format!("ex{i:05}")).collect();
    let labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Label::Empathetic
            } else {
                Label::Neutral
            }
        })
        .collect();

    let n_planted = ((n as f64) * config.conflict_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut conflict: Vec<Option<Modality>> = vec![None; n];
    for &i in &order[..n_planted] {
        conflict[i] = Some(Modality::ALL[rng.random_range(0..3)]);
    }

    let mut data: BTreeMap<Modality, Vec<f32>> = Modality::ALL
        .iter()
        .map(|&m| (m, Vec::with_capacity(n * dim)))
        .collect();
    for i in 0..n {
        let sign = if labels[i] == Label::Empathetic { 1.0 } else { -1.0 };
        for m in Modality::ALL {
            let informative = match config.layout {
                SyntheticLayout::Redundant => true,
                SyntheticLayout::Complementary => i % 3 == m.index(),
            };
            let flipped = conflict[i] == Some(m);
            let weight = match (informative || flipped, flipped) {
                (false, _) => 0.0,
                (true, false) => sign,
                (true, true) => -sign,
            };
            let center = &centers[&m];
            let row = data.get_mut(&m).unwrap();
            for c in center {
                let noise: f64 = rng.sample(StandardNormal);
                row.push((weight * c + noise) as f32);
            }
        }
    }

    let splits = split_dataset(&ids, config.seed, DEFAULT_FRACTIONS)?;
    let examples: Vec<ExampleRecord> = ids
        .iter()
        .zip(labels.iter().zip(&splits))
        .map(|(id, (&label, &split))| {
            let mut e = ExampleRecord::new(id.clone(), label, split);
            e.payload_refs.insert(Modality::Text, format!("media/{id}.txt"));
            e.payload_refs.insert(Modality::Audio, format!("media/{id}.wav"));
            e.payload_refs.insert(Modality::Video, format!("media/{id}.mp4"));
            e
        })
        .collect();

    let mut stores = BTreeMap::new();
    for (m, values) in data {
        stores.insert(m, EmbeddingStore::new(ids.clone(), dim, values)?);
    }

    let audio_features = audio_table(&ids, &labels, &conflict, &mut rng)?;
    let au_features = au_table(&ids, &conflict, &mut rng)?;

    let planted = (0..n)
        .filter_map(|i| {
            conflict[i].map(|modality| PlantedConflict {
                id: ids[i].clone(),
                modality,
            })
        })
        .collect();

    Ok(SyntheticDataset {
        config: config.clone(),
        examples,
        stores,
        audio_features,
        au_features,
        planted,
        centers,
    })
}

fn gauss(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

// Prosodic features with lower affect and pitch on audio-conflicted examples,
// loosely shaped like real segment statistics.
fn audio_table(
    ids: &[String],
    labels: &[Label],
    conflict: &[Option<Modality>],
    rng: &mut ChaCha8Rng,
) -> Result<FeatureTable, DataError> {
    let mut values = vec![Vec::with_capacity(ids.len()); AUDIO_FEATURES.len()];
    for (label, conflict) in labels.iter().zip(conflict) {
        let shift = if *conflict == Some(Modality::Audio) { 1.0 } else { 0.0 };
        let warmth = if *label == Label::Empathetic { 0.2 } else { 0.0 };
        let mean_pitch = gauss(rng, 180.0 - 12.0 * shift, 25.0);
        let row = [
            mean_pitch,
            (mean_pitch - gauss(rng, 70.0, 10.0)).max(50.0),
            mean_pitch + gauss(rng, 90.0, 20.0),
            gauss(rng, 62.0, 4.0),
            gauss(rng, 40.0, 5.0),
            gauss(rng, 78.0, 4.0),
            gauss(rng, 0.020 + 0.004 * shift, 0.005).max(0.0),
            gauss(rng, 0.09, 0.02).max(0.0),
            gauss(rng, 12.0, 3.0),
            gauss(rng, 3.5, 0.6),
            gauss(rng, 0.5 + warmth - 0.08 * shift, 0.1),
            gauss(rng, 0.5 - 0.08 * shift, 0.1),
            gauss(rng, 0.5 - 0.06 * shift, 0.1),
        ];
        for (col, v) in values.iter_mut().zip(row) {
            col.push(v);
        }
    }
    FeatureTable::new(
        ids.to_vec(),
        AUDIO_FEATURES.iter().map(|s| s.to_string()).collect(),
        values,
    )
}

// AU activation rates in [0,1]; brow lowering is more frequent on
// video-conflicted examples.
fn au_table(
    ids: &[String],
    conflict: &[Option<Modality>],
    rng: &mut ChaCha8Rng,
) -> Result<FeatureTable, DataError> {
    let mut values = vec![Vec::with_capacity(ids.len()); AU_DESCRIPTIONS.len()];
    for conflict in conflict {
        let video = *conflict == Some(Modality::Video);
        for (j, col) in values.iter_mut().enumerate() {
            let base = 0.1 + 0.04 * (j % 8) as f64;
            let bump = if video && AU_DESCRIPTIONS[j].0 == "AU04" { 0.2 } else { 0.0 };
            col.push(gauss(rng, base + bump, 0.08).clamp(0.0, 1.0));
        }
    }
    FeatureTable::new(
        ids.to_vec(),
        AU_DESCRIPTIONS.iter().map(|(c, _)| c.to_string()).collect(),
        values,
    )
}
