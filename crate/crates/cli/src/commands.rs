//! Argument definitions and per-subcommand dispatch.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmdl_annotation::session::read_log;
use mmdl_annotation::{attach_payloads, resume, sample_for_annotation, AnnotationService, TaskSet, DEFAULT_TOTAL};
use mmdl_core::data::{generate_synthetic, split_dataset, write_labels, SyntheticConfig, SyntheticLayout, DEFAULT_FRACTIONS};
use mmdl_core::disagreement::ModelKey;
use mmdl_core::probe::ProbeConfig;
use mmdl_core::stats::kappa_by_quadrant;
use mmdl_core::{DatasetManifest, Modality, PredictionRecord};

use crate::bundle::OutputDir;
use crate::error::{at, input, CliError};
use crate::pipeline::{self, PipelineConfig};
use crate::tables;

#[derive(Debug, Parser)]
#[command(name = "mmdl", version, about = "Disagreement diagnostics for multimodal empathy classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Redundant,
    Complementary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Text,
    Audio,
    Video,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Modality {
        match m {
            ModalityArg::Text => Modality::Text,
            ModalityArg::Audio => Modality::Audio,
            ModalityArg::Video => Modality::Video,
        }
    }
}

/// Training overrides; unset values fall back to the trainer defaults.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Defaults to the manifest's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate of the model being trained (fusion, under `pipeline`).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Fusion modality dropout rate.
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its manifest.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1200)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.25)]
        conflict: f64,
        #[arg(long, value_enum, default_value_t = LayoutArg::Redundant)]
        layout: LayoutArg,
    },
    /// Reassign train/validation/test (80/10/10) and write a new manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one unimodal probe; writes the checkpoint and predictions.
    TrainProbe {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the fusion model; writes the checkpoint, predictions and attention.
    TrainFusion {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Place held-out examples in one modality's confidence quadrants.
    Quadrants {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        /// Unimodal predictions CSV.
        #[arg(long)]
        uni: PathBuf,
        /// Fusion predictions CSV.
        #[arg(long)]
        multi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise disagreement rates over the test split.
    Matrix {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch t-tests of feature tables across quadrants.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `text.csv`, `audio.csv`, `video.csv` quadrant files.
        #[arg(long)]
        quadrants: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2-D PCA projections coloured by quadrant.
    Project {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        quadrants: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a quadrant-stratified annotation task set.
    SampleAnnotation {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        quadrants: PathBuf,
        /// Output task-set JSON file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOTAL)]
        total: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// The two annotator ids, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        annotators: Vec<String>,
    },
    /// Run the annotation HTTP service.
    Serve {
        #[arg(long)]
        tasks: PathBuf,
        /// Append-only judgment log; replayed on start.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Kappa table from a task set and an annotation export or log.
    Report {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every model and analysis stage, with a hashed bundle manifest.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        /// Must not exist or be empty.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynthetic { out, seed, n, dim, conflict, layout } => {
            let config = SyntheticConfig {
                n,
                dim,
                conflict_fraction: conflict,
                layout: match layout {
                    LayoutArg::Redundant => SyntheticLayout::Redundant,
                    LayoutArg::Complementary => SyntheticLayout::Complementary,
                },
                seed,
                ..SyntheticConfig::default()
            };
            let ds = generate_synthetic(&config).map_err(input)?;
            let path = ds.write_to_dir(&out, "synthetic").map_err(at("gen-synthetic"))?;
            log::info!("wrote {} ({} planted conflicts)", path.display(), ds.planted.len());
        }
        Command::Split { manifest, out, seed } => {
            let ds = pipeline::load(&manifest)?;
            let ids = pipeline::all_ids(&ds);
            let splits = split_dataset(&ids, seed, DEFAULT_FRACTIONS).map_err(input)?;
            let mut examples = ds.examples.clone();
            for (e, s) in examples.iter_mut().zip(splits) {
                e.split = s;
            }
            std::fs::create_dir_all(&out).map_err(at("split"))?;
            write_labels(File::create(out.join("labels.csv")).map_err(at("split"))?, &examples).map_err(at("split"))?;
            // other files stay where they are; point at them absolutely
            let absolute = |p: &Path| -> Result<PathBuf, CliError> { ds.resolve(p).canonicalize().map_err(input) };
            let mut m = ds.manifest.clone();
            m.labels = PathBuf::from("labels.csv");
            for p in m.embeddings.values_mut().chain(m.features.values_mut()).chain(m.projection.iter_mut()) {
                *p = absolute(p)?;
            }
            m.seed = seed;
            let json = serde_json::to_string_pretty(&m).expect("plain data") + "\n";
            std::fs::write(out.join("manifest.json"), json).map_err(at("split"))?;
        }
        Command::TrainProbe { manifest, modality, out, train } => {
            let ds = pipeline::load(&manifest)?;
            let mut config = ProbeConfig {
                seed: train.seed.unwrap_or(ds.manifest.seed),
                ..ProbeConfig::default()
            };
            config.epochs = train.epochs.unwrap_or(config.epochs);
            config.learning_rate = train.lr.unwrap_or(config.learning_rate);
            config.validate().map_err(input)?;
            let mut dir = OutputDir::open(&out)?;
            let run = pipeline::run_probe(&ds, modality.into(), &config, &mut dir)?;
            if let Some(acc) = run.model.history.validation_accuracy.last() {
                log::info!("validation accuracy {acc:.3}");
            }
        }
        Command::TrainFusion { manifest, out, train } => {
            let ds = pipeline::load(&manifest)?;
            let config = PipelineConfig::new(train.seed.unwrap_or(ds.manifest.seed), train.epochs, train.lr, train.dropout)?;
            let mut dir = OutputDir::open(&out)?;
            let run = pipeline::run_fusion(&ds, &config.fusion, &mut dir)?;
            if let Some(acc) = run.model.history.validation_accuracy.last() {
                log::info!("validation accuracy {acc:.3}");
            }
        }
        Command::Quadrants { manifest, modality, uni, multi, out } => {
            let ds = pipeline::load(&manifest)?;
            let uni = pipeline::read_predictions_file(&uni)?;
            let multi = pipeline::read_predictions_file(&multi)?;
            let mut dir = OutputDir::open(&out)?;
            let held = pipeline::held_out_ids(&ds);
            pipeline::run_quadrants(&ds, modality.into(), &uni, &multi, &held, &mut dir)?;
        }
        Command::Matrix { manifest, text, audio, video, full, out } => {
            let ds = pipeline::load(&manifest)?;
            let mut models: BTreeMap<ModelKey, Vec<PredictionRecord>> = BTreeMap::new();
            for (key, path) in [(ModelKey::Text, text), (ModelKey::Audio, audio), (ModelKey::Video, video), (ModelKey::Full, full)] {
                models.insert(key, pipeline::read_predictions_file(&path)?);
            }
            pipeline::run_matrix(&ds, &models, &mut OutputDir::open(&out)?)?;
        }
        Command::Stats { manifest, quadrants, out } => {
            let ds = pipeline::load(&manifest)?;
            let partitions = pipeline::read_partitions(&quadrants)?;
            pipeline::run_stats(&ds, &partitions, &mut OutputDir::open(&out)?)?;
        }
        Command::Project { manifest, quadrants, out } => {
            let ds = pipeline::load(&manifest)?;
            let partitions = pipeline::read_partitions(&quadrants)?;
            let held = pipeline::held_out_ids(&ds);
            pipeline::run_projection(&ds, &partitions, &held, &mut OutputDir::open(&out)?)?;
        }
        Command::SampleAnnotation { manifest, quadrants, out, total, seed, annotators } => {
            let [a, b] = <[String; 2]>::try_from(annotators)
                .map_err(|v| input(format!("expected two annotator ids, got {}", v.len())))?;
            if a == b {
                return Err(input("the two annotators must differ"));
            }
            let ds = pipeline::load(&manifest)?;
            let partitions = pipeline::read_partitions(&quadrants)?;
            let mut tasks = sample_for_annotation(&partitions, total, seed).map_err(input)?;
            let has_payloads = ds.examples.iter().any(|e| !e.payload_refs.is_empty());
            if has_payloads {
                attach_payloads(&mut tasks, &ds.examples).map_err(input)?;
            } else {
                log::warn!("labels carry no payload references; tasks will have none");
            }
            let set = TaskSet {
                annotators: [a, b],
                tasks,
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(at("sample-annotation"))?;
            }
            set.write_json(File::create(&out).map_err(at("sample-annotation"))?)
                .map_err(at("sample-annotation"))?;
            log::info!("wrote {} tasks to {}", set.tasks.len(), out.display());
        }
        Command::Serve { tasks, log, port, host } => {
            let set = TaskSet::read_json(open(&tasks)?).map_err(input)?;
            let (session, appender) = resume(set, &log).map_err(input)?;
            log::info!("replayed {} judgments from {}", session.records().len(), log.display());
            let addr: SocketAddr = format!("{host}:{port}").parse().map_err(input)?;
            let service = Arc::new(AnnotationService::new(session, Some(appender)));
            let rt = tokio::runtime::Runtime::new().map_err(at("serve"))?;
            rt.block_on(mmdl_annotation::http::serve(service, addr)).map_err(at("serve"))?;
        }
        Command::Report { tasks, annotations, out } => {
            let set = TaskSet::read_json(open(&tasks)?).map_err(input)?;
            let records: Vec<_> = read_log(BufReader::new(open(&annotations)?))
                .map_err(input)?
                .into_iter()
                .map(|(_, r)| r)
                .collect();
            let table = kappa_by_quadrant(&records, &set.quadrant_of()).map_err(at("report"))?;
            for task in &table.excluded {
                log::warn!("task {task} lacks a judgment and is left out of both rounds");
            }
            let mut dir = OutputDir::open(&out)?;
            dir.write("kappa.csv", &tables::kappa_csv(&table))?;
            let text = tables::kappa_text(&table);
            dir.write("kappa.txt", text.as_bytes())?;
            print!("{text}");
        }
        Command::Pipeline { manifest, out, train } => {
            let seed = match train.seed {
                Some(s) => s,
                None => {
                    let m: DatasetManifest = serde_json::from_reader(open(&manifest)?).map_err(input)?;
                    m.seed
                }
            };
            let config = PipelineConfig::new(seed, train.epochs, train.lr, train.dropout)?;
            let bundle = pipeline::run_pipeline(&manifest, &out, &config)?;
            for n in &bundle.notices {
                eprintln!("notice: {n}");
            }
        }
    }
    Ok(())
}
