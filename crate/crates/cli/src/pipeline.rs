//! Stage functions shared by the single-stage subcommands and `pipeline`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use mmdl_core::data::load_manifest;
use mmdl_core::disagreement::{
    disagreement_matrix, export_scatter, quadrant_partition, write_predictions, ModelKey,
    QuadrantPartition,
};
use mmdl_core::fusion::{predict_fusion, train_fusion, write_attention_csv, FusionConfig, FusionModel, FusionPrediction};
use mmdl_core::probe::{evaluate, predict_probe, train_probe, Metrics, ProbeConfig, ProbeModel};
use mmdl_core::projection::{
    boundary_proximity, pca_fit_transform, points_from_table, write_projection_csv, BoundaryReport, Point2,
};
use mmdl_core::stats::{au_activation_compare, group_compare, FeatureComparison, StatsError, DEFAULT_PAIRS};
use mmdl_core::{Dataset, Modality, PredictionRecord, Quadrant, Split};
use serde::Serialize;

use crate::bundle::{hash_file, FileHash, OutputDir};
use crate::error::{at, input, CliError};
use crate::svg::render_scatter_svg;
use crate::tables::{self, DirectionStyle};

/// Everything `pipeline` needs beyond the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub probe: ProbeConfig,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    /// Applies command-line overrides on top of the defaults and validates
    /// both trainer configs before any work starts.
    pub fn new(
        seed: u64,
        epochs: Option<usize>,
        lr: Option<f64>,
        dropout: Option<f64>,
    ) -> Result<Self, CliError> {
        let mut probe = ProbeConfig {
            seed,
            ..ProbeConfig::default()
        };
        let mut fusion = FusionConfig {
            seed,
            ..FusionConfig::default()
        };
        if let Some(e) = epochs {
            probe.epochs = e;
            fusion.epochs = e;
        }
        if let Some(lr) = lr {
            fusion.learning_rate = lr;
        }
        if let Some(d) = dropout {
            fusion.modality_dropout_rate = d;
        }
        probe.validate().map_err(input)?;
        fusion.validate().map_err(input)?;
        Ok(PipelineConfig { seed, probe, fusion })
    }
}

pub fn load(manifest: &Path) -> Result<Dataset, CliError> {
    let ds = load_manifest(manifest).map_err(input)?;
    for m in Modality::ALL {
        if !ds.stores.contains_key(&m) {
            return Err(input(format!("manifest has no {m} embeddings")));
        }
    }
    log::info!("loaded `{}`: {} examples", ds.manifest.name, ds.examples.len());
    Ok(ds)
}

pub fn all_ids(ds: &Dataset) -> Vec<String> {
    ds.examples.iter().map(|e| e.id.clone()).collect()
}

/// Validation and test examples: what the quadrant plots and statistics describe.
pub fn held_out_ids(ds: &Dataset) -> Vec<String> {
    ds.examples
        .iter()
        .filter(|e| e.split != Split::Train)
        .map(|e| e.id.clone())
        .collect()
}

/// Keeps predictions whose id is in `ids`, in `ids` order.
pub fn restrict(preds: &[PredictionRecord], ids: &[String]) -> Result<Vec<PredictionRecord>, CliError> {
    let by_id: HashMap<&str, &PredictionRecord> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|p| (*p).clone())
                .ok_or_else(|| input(format!("no prediction for `{id}`")))
        })
        .collect()
}

fn predictions_csv(preds: &[PredictionRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, preds).expect("writing to memory");
    buf
}

pub struct ProbeRun {
    pub model: ProbeModel,
    /// Over every example, in label-file order.
    pub predictions: Vec<PredictionRecord>,
}

pub fn run_probe(ds: &Dataset, modality: Modality, config: &ProbeConfig, out: &mut OutputDir) -> Result<ProbeRun, CliError> {
    log::info!("training {modality} probe");
    let model = train_probe(&ds.stores[&modality], &ds.examples, config).map_err(at("train-probe"))?;
    let predictions = predict_probe(&model, &ds.stores[&modality], &all_ids(ds)).map_err(at("train-probe"))?;
    let mut ckpt = Vec::new();
    model.write_to(&mut ckpt).map_err(at("train-probe"))?;
    out.write(&format!("models/probe_{modality}.mmpb"), &ckpt)?;
    out.write(&format!("predictions/probe_{modality}.csv"), &predictions_csv(&predictions))?;
    Ok(ProbeRun { model, predictions })
}

pub struct FusionRun {
    pub model: FusionModel,
    pub predictions: Vec<FusionPrediction>,
}

impl FusionRun {
    pub fn records(&self) -> Vec<PredictionRecord> {
        self.predictions.iter().map(FusionPrediction::record).collect()
    }
}

pub fn run_fusion(ds: &Dataset, config: &FusionConfig, out: &mut OutputDir) -> Result<FusionRun, CliError> {
    log::info!("training fusion model");
    let model = train_fusion(&ds.stores, &ds.examples, config).map_err(at("train-fusion"))?;
    let predictions = predict_fusion(&model, &ds.stores, &all_ids(ds), &Modality::ALL).map_err(at("train-fusion"))?;
    let mut ckpt = Vec::new();
    model.write_to(&mut ckpt).map_err(at("train-fusion"))?;
    out.write("models/fusion.mmfu", &ckpt)?;
    let run = FusionRun { model, predictions };
    out.write("predictions/fusion.csv", &predictions_csv(&run.records()))?;
    let mut attn = Vec::new();
    write_attention_csv(&mut attn, &run.predictions).map_err(at("train-fusion"))?;
    out.write("predictions/attention.csv", &attn)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub model: String,
    pub validation: Option<Metrics>,
    pub test: Option<Metrics>,
    pub validation_history: Vec<f64>,
}

pub fn metrics_for(
    ds: &Dataset,
    name: &str,
    preds: &[PredictionRecord],
    history: &[f64],
) -> Result<ModelMetrics, CliError> {
    let labels = ds.labels();
    let score = |split: Split| -> Result<Option<Metrics>, CliError> {
        let ids = ds.ids_in(split);
        if ids.is_empty() {
            return Ok(None);
        }
        evaluate(&restrict(preds, &ids)?, &labels).map(Some).map_err(at("metrics"))
    };
    Ok(ModelMetrics {
        model: name.to_string(),
        validation: score(Split::Validation)?,
        test: score(Split::Test)?,
        validation_history: history.to_vec(),
    })
}

/// One modality's quadrant plot over `ids`, written as CSV plus scatter SVG.
pub fn run_quadrants(
    ds: &Dataset,
    modality: Modality,
    unimodal: &[PredictionRecord],
    multimodal: &[PredictionRecord],
    ids: &[String],
    out: &mut OutputDir,
) -> Result<QuadrantPartition, CliError> {
    let part = quadrant_partition(modality, &restrict(unimodal, ids)?, &restrict(multimodal, ids)?, &ds.labels())
        .map_err(at("quadrants"))?;
    let counts: Vec<String> = Quadrant::ALL.iter().map(|&q| format!("{q} {}", part.group(q).len())).collect();
    log::info!("{modality} quadrants: {}", counts.join(", "));
    let mut buf = Vec::new();
    part.write_csv(&mut buf).map_err(at("quadrants"))?;
    out.write(&format!("quadrants/{modality}.csv"), &buf)?;
    out.write(&format!("figures/scatter_{modality}.svg"), render_scatter_svg(&export_scatter(&part)).as_bytes())?;
    Ok(part)
}

/// Pairwise disagreement over the test split, as CSV and text.
pub fn run_matrix(
    ds: &Dataset,
    models: &BTreeMap<ModelKey, Vec<PredictionRecord>>,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let test = ds.ids_in(Split::Test);
    if test.is_empty() {
        return Err(input("the matrix needs a non-empty test split"));
    }
    let restricted = models
        .iter()
        .map(|(k, v)| Ok((*k, restrict(v, &test)?)))
        .collect::<Result<BTreeMap<_, _>, CliError>>()?;
    let matrix = disagreement_matrix(&restricted).map_err(at("matrix"))?;
    out.write("tables/matrix.csv", &tables::matrix_csv(&matrix))?;
    out.write("tables/matrix.txt", tables::matrix_text(&matrix).as_bytes())?;
    Ok(())
}

/// Feature tables keyed by a modality name are compared within that
/// modality's plot; action-unit columns get AU display names. Returns notices
/// for tables that could not be used.
pub fn run_stats(
    ds: &Dataset,
    partitions: &BTreeMap<Modality, QuadrantPartition>,
    out: &mut OutputDir,
) -> Result<Vec<String>, CliError> {
    let mut notices = Vec::new();
    if ds.features.is_empty() {
        let msg = "stats skipped: the manifest lists no feature tables".to_string();
        log::warn!("{msg}");
        notices.push(msg);
        return Ok(notices);
    }
    for (key, table) in &ds.features {
        let Some(part) = key.parse::<Modality>().ok().and_then(|m| partitions.get(&m)) else {
            let msg = format!("stats skipped for `{key}`: not the name of a modality plot");
            log::warn!("{msg}");
            notices.push(msg);
            continue;
        };
        let au = !table.au_columns().is_empty();
        let (style, first) = if au { (DirectionStyle::Plain, "AU") } else { (DirectionStyle::Mu, "Feature") };
        // one pair at a time so an empty quadrant only blanks its own columns
        let mut comparisons: Vec<FeatureComparison> = Vec::new();
        for pair in DEFAULT_PAIRS {
            let result = if au {
                au_activation_compare(table, &part.groups, &[pair])
            } else {
                group_compare(table, &part.groups, &[pair], None)
            };
            match result {
                Ok(c) => comparisons.extend(c),
                Err(e @ StatsError::EmptyGroup(_)) => {
                    let msg = format!("stats for `{key}`, {} vs {}: {e}", pair.0.title(), pair.1.title());
                    log::warn!("{msg}");
                    notices.push(msg);
                }
                Err(e) => return Err(at("stats")(e)),
            }
        }
        let rows = tables::stats_rows(&comparisons, &DEFAULT_PAIRS, style);
        let significant = rows.iter().filter(|r| r.cells.iter().any(|c| c.significant)).count();
        log::info!("{key} features: {} tested, {significant} significant in some pair", rows.len());
        out.write(&format!("tables/stats_{key}.csv"), &tables::stats_csv(first, &rows, &DEFAULT_PAIRS))?;
        out.write(&format!("tables/stats_{key}.txt"), tables::stats_text(first, &rows, &DEFAULT_PAIRS).as_bytes())?;
    }
    Ok(notices)
}

fn boundary_csv(report: &BoundaryReport) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["quadrant", "mean_distance", "n"]).expect("memory");
    for r in &report.rows {
        wtr.write_record([r.quadrant.to_string(), format!("{}", r.mean_distance), r.n.to_string()])
            .expect("memory");
    }
    wtr.into_inner().expect("memory")
}

fn write_points(
    out: &mut OutputDir,
    name: &str,
    points: &[Point2],
    quadrant_of: &HashMap<String, Quadrant>,
    notices: &mut Vec<String>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_projection_csv(&mut buf, points, quadrant_of).map_err(at("project"))?;
    out.write(&format!("projection/{name}.csv"), &buf)?;
    match boundary_proximity(points, quadrant_of, None) {
        Ok(report) => out.write(&format!("projection/{name}_boundary.csv"), &boundary_csv(&report))?,
        Err(e) => {
            let msg = format!("boundary distances skipped for {name}: {e}");
            log::warn!("{msg}");
            notices.push(msg);
        }
    }
    Ok(())
}

/// 2-D PCA of each modality's held-out embeddings, coloured by that
/// modality's quadrants. External coordinates from the manifest are written
/// alongside, once per modality plot.
pub fn run_projection(
    ds: &Dataset,
    partitions: &BTreeMap<Modality, QuadrantPartition>,
    ids: &[String],
    out: &mut OutputDir,
) -> Result<Vec<String>, CliError> {
    let mut notices = Vec::new();
    for (m, part) in partitions {
        let proj = pca_fit_transform(&ds.stores[m], ids).map_err(at("project"))?;
        log::info!(
            "{m} projection explains {:.3} + {:.3} of variance",
            proj.explained[0],
            proj.explained[1]
        );
        write_points(out, m.as_str(), &proj.points, &part.quadrant_of(), &mut notices)?;
    }
    if let Some(table) = &ds.projection {
        let keep: HashSet<&String> = ids.iter().collect();
        let points: Vec<Point2> = points_from_table(table)
            .map_err(at("project"))?
            .into_iter()
            .filter(|p| keep.contains(&p.id))
            .collect();
        for (m, part) in partitions {
            write_points(out, &format!("external_{m}"), &points, &part.quadrant_of(), &mut notices)?;
        }
    }
    Ok(notices)
}

/// Hashes the manifest and every file it references.
pub fn input_hashes(manifest_path: &Path, ds: &Dataset) -> Result<Vec<FileHash>, CliError> {
    let name = manifest_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = vec![hash_file(manifest_path, &name)?];
    let m = &ds.manifest;
    let mut rels: Vec<&Path> = vec![m.labels.as_path()];
    rels.extend(m.embeddings.values().map(|p| p.as_path()));
    rels.extend(m.features.values().map(|p| p.as_path()));
    rels.extend(m.projection.iter().map(|p| p.as_path()));
    for rel in rels {
        out.push(hash_file(&ds.resolve(rel), &rel.to_string_lossy())?);
    }
    Ok(out)
}

/// Train probes and fusion, then quadrants, matrix, stats and projection, all
/// under `out_dir`, finishing with `bundle.json`.
pub fn run_pipeline(
    manifest: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
) -> Result<crate::bundle::BundleManifest, CliError> {
    let ds = load(manifest)?;
    let inputs = input_hashes(manifest, &ds)?;
    let mut out = OutputDir::create(out_dir)?;
    let mut notices = Vec::new();

    let mut probes = BTreeMap::new();
    for m in Modality::ALL {
        probes.insert(m, run_probe(&ds, m, &config.probe, &mut out)?);
    }
    let fusion = run_fusion(&ds, &config.fusion, &mut out)?;
    let fused = fusion.records();

    let mut metrics = Vec::new();
    for (m, run) in &probes {
        metrics.push(metrics_for(&ds, &format!("probe_{m}"), &run.predictions, &run.model.history.validation_accuracy)?);
    }
    metrics.push(metrics_for(&ds, "fusion", &fused, &fusion.model.history.validation_accuracy)?);
    let json = serde_json::to_string_pretty(&metrics).expect("plain data") + "\n";
    out.write("metrics.json", json.as_bytes())?;

    let held = held_out_ids(&ds);
    if held.is_empty() {
        return Err(input("no validation or test examples to place in quadrants"));
    }
    let mut partitions = BTreeMap::new();
    for (m, run) in &probes {
        partitions.insert(*m, run_quadrants(&ds, *m, &run.predictions, &fused, &held, &mut out)?);
    }

    let mut models: BTreeMap<ModelKey, Vec<PredictionRecord>> =
        probes.iter().map(|(m, r)| (ModelKey::from(*m), r.predictions.clone())).collect();
    models.insert(ModelKey::Full, fused);
    run_matrix(&ds, &models, &mut out)?;

    notices.extend(run_stats(&ds, &partitions, &mut out)?);
    notices.extend(run_projection(&ds, &partitions, &held, &mut out)?);

    let config_json = serde_json::to_value(config).expect("plain data");
    let bundle = out.finish(ds.manifest.name.clone(), config_json, inputs, notices)?;
    log::info!("pipeline wrote {} files to {}", bundle.outputs.len() + 1, out_dir.display());
    Ok(bundle)
}

/// Reads prediction CSVs written by `train-probe` / `train-fusion`.
pub fn read_predictions_file(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    mmdl_core::disagreement::read_predictions(f).map_err(input)
}

/// Reads the `quadrants/<modality>.csv` files under `dir`.
pub fn read_partitions(dir: &Path) -> Result<BTreeMap<Modality, QuadrantPartition>, CliError> {
    let mut out = BTreeMap::new();
    for m in Modality::ALL {
        let path = dir.join(format!("{m}.csv"));
        let f = std::fs::File::open(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        out.insert(m, QuadrantPartition::read_csv(m, f).map_err(input)?);
    }
    Ok(out)
}

