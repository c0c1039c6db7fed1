//! Unimodal classifier heads trained on frozen embeddings.
//!
//! A probe is `softmax(W2 tanh(W1 x + b1) + b2)` trained with mean two-class
//! cross-entropy and momentum SGD. Its probability of the empathetic class
//! stands in for a fine-tuned unimodal backbone's output.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EmbeddingStore, ExampleRecord, Label, Split};
use crate::disagreement::PredictionRecord;
use crate::nn::{self, CheckpointError, ParamLayout, Sgd};
use crate::par::{self, Exec};

pub const PROBE_MAGIC: &[u8; 4] = b"MMPB";

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("training split must contain both classes")]
    SingleClassTrainSet,
    #[error("embedding width {found} does not match model width {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("no gold label for `{0}`")]
    MissingLabel(String),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden_width: 256,
            epochs: 15,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.epochs < 1 {
            return Err(ProbeError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(ProbeError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.hidden_width < 1 {
            return Err(ProbeError::InvalidConfig("hidden_width must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ProbeError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record shared by the probe and fusion trainers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub initial_train_loss: f64,
    pub train_loss: Vec<f64>,
    /// Empty when the dataset has no validation split.
    pub validation_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    input_dim: usize,
    hidden_width: usize,
    layout: ParamLayout,
    params: Vec<f64>,
    pub history: TrainingHistory,
}

fn probe_layout(input_dim: usize, hidden_width: usize) -> ParamLayout {
    let mut layout = ParamLayout::default();
    layout.push("hidden.weight", hidden_width, input_dim);
    layout.push("hidden.bias", hidden_width, 1);
    layout.push("output.weight", 2, hidden_width);
    layout.push("output.bias", 2, 1);
    layout
}

impl ProbeModel {
    pub fn zeros(input_dim: usize, hidden_width: usize) -> Self {
        let layout = probe_layout(input_dim, hidden_width);
        ProbeModel {
            input_dim,
            hidden_width,
            params: vec![0.0; layout.len()],
            layout,
            history: TrainingHistory::default(),
        }
    }

    pub fn random(input_dim: usize, hidden_width: usize, seed: u64) -> Self {
        let mut model = Self::zeros(input_dim, hidden_width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.init(&mut rng);
        model
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let (d, h) = (self.input_dim, self.hidden_width);
        let w1 = self.layout.blocks()[0].range();
        let w2 = self.layout.blocks()[2].range();
        nn::xavier_uniform(rng, d, h, &mut self.params[w1]);
        nn::xavier_uniform(rng, h, 2, &mut self.params[w2]);
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn block(&self, i: usize) -> &[f64] {
        &self.params[self.layout.blocks()[i].range()]
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ProbeError> {
        if x.len() != self.input_dim {
            return Err(ProbeError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden_width];
        nn::affine(self.block(0), self.block(1), x, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        h
    }

    fn logits(&self, h: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        nn::affine(self.block(2), self.block(3), h, &mut out);
        out
    }

    /// `(p_empathetic, p_neutral)`.
    pub fn probabilities(&self, x: &[f64]) -> Result<[f64; 2], ProbeError> {
        self.check_dim(x)?;
        let (p, _) = nn::softmax_xent(self.logits(&self.hidden(x)), 0);
        Ok(p)
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, xs: &[Vec<f64>], labels: &[Label]) -> Result<f64, ProbeError> {
        if xs.is_empty() {
            return Err(ProbeError::EmptyInput);
        }
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(labels) {
            self.check_dim(x)?;
            total += nn::softmax_xent(self.logits(&self.hidden(x)), y.index()).1;
        }
        Ok(total / xs.len() as f64)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        xs: &[Vec<f64>],
        labels: &[Label],
    ) -> Result<(f64, Vec<f64>), ProbeError> {
        if xs.is_empty() {
            return Err(ProbeError::EmptyInput);
        }
        let scale = 1.0 / xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let blocks = self.layout.blocks();
        for (x, y) in xs.iter().zip(labels) {
            self.check_dim(x)?;
            let h = self.hidden(x);
            let (p, loss) = nn::softmax_xent(self.logits(&h), y.index());
            total += loss;
            let mut dlogits = p;
            dlogits[y.index()] -= 1.0;
            dlogits.iter_mut().for_each(|v| *v *= scale);

            let mut dh = vec![0.0; self.hidden_width];
            let (head, tail) = grad.split_at_mut(blocks[2].offset);
            let (dw2, db2) = tail.split_at_mut(blocks[2].len());
            nn::affine_backward(self.block(2), &h, &dlogits, dw2, db2, Some(&mut dh));
            for (g, hv) in dh.iter_mut().zip(&h) {
                *g *= 1.0 - hv * hv;
            }
            let (dw1, db1) = head.split_at_mut(blocks[1].offset);
            nn::affine_backward(self.block(0), x, &dh, dw1, db1, None);
        }
        Ok((total * scale, grad))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), ProbeError> {
        Ok(nn::write_checkpoint(w, PROBE_MAGIC, &self.layout, &self.params)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, ProbeError> {
        let (shapes, params) = nn::read_checkpoint(r, PROBE_MAGIC)?;
        let (hidden, input) = match shapes.first() {
            Some(&s) => s,
            None => return Err(CheckpointError::Layout("no blocks".into()).into()),
        };
        let mut model = ProbeModel::zeros(input, hidden);
        if model.layout.shapes() != shapes {
            return Err(CheckpointError::Layout(format!("{shapes:?}")).into());
        }
        model.params = params;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProbeError> {
        self.write_to(BufWriter::new(File::create(path).map_err(CheckpointError::from)?))
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        Self::read_from(BufReader::new(File::open(path).map_err(CheckpointError::from)?))
    }
}

pub(crate) fn gather(
    store: &EmbeddingStore,
    ids: &[String],
) -> Result<Vec<Vec<f64>>, String> {
    ids.iter()
        .map(|id| store.get_f64(id).ok_or_else(|| id.clone()))
        .collect()
}

pub fn train_probe(
    store: &EmbeddingStore,
    examples: &[ExampleRecord],
    config: &ProbeConfig,
) -> Result<ProbeModel, ProbeError> {
    config.validate()?;
    let pick = |split: Split| -> (Vec<String>, Vec<Label>) {
        examples
            .iter()
            .filter(|e| e.split == split)
            .map(|e| (e.id.clone(), e.label))
            .unzip()
    };
    let (train_ids, train_labels) = pick(Split::Train);
    let (val_ids, val_labels) = pick(Split::Validation);
    if !Label::ALL.iter().all(|l| train_labels.contains(l)) {
        return Err(ProbeError::SingleClassTrainSet);
    }
    let train_x = gather(store, &train_ids).map_err(ProbeError::UnknownId)?;
    let val_x = gather(store, &val_ids).map_err(ProbeError::UnknownId)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ProbeModel::zeros(store.dim(), config.hidden_width);
    model.init(&mut rng);
    let mut opt = Sgd::new(model.params.len(), config.learning_rate, Sgd::DEFAULT_MOMENTUM);

    let mut history = TrainingHistory {
        initial_train_loss: model.loss(&train_x, &train_labels)?,
        ..TrainingHistory::default()
    };
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let ys: Vec<Label> = chunk.iter().map(|&i| train_labels[i]).collect();
            let (_, grad) = model.loss_and_gradient(&xs, &ys)?;
            opt.step(&mut model.params, &grad);
        }
        history.train_loss.push(model.loss(&train_x, &train_labels)?);
        if !val_x.is_empty() {
            let correct = val_x
                .iter()
                .zip(&val_labels)
                .filter(|(x, y)| {
                    model
                        .probabilities(x)
                        .map(|p| Label::from_probability(p[0]) == **y)
                        .unwrap_or(false)
                })
                .count();
            history
                .validation_accuracy
                .push(correct as f64 / val_x.len() as f64);
        }
    }
    nn::round_to_f32(&mut model.params);
    model.history = history;
    Ok(model)
}

pub fn predict_probe(
    model: &ProbeModel,
    store: &EmbeddingStore,
    ids: &[String],
) -> Result<Vec<PredictionRecord>, ProbeError> {
    predict_probe_with(Exec::default(), model, store, ids)
}

pub fn predict_probe_with(
    exec: Exec,
    model: &ProbeModel,
    store: &EmbeddingStore,
    ids: &[String],
) -> Result<Vec<PredictionRecord>, ProbeError> {
    par::try_map_slice(exec, ids, |id| {
        let x = store
            .get_f64(id)
            .ok_or_else(|| ProbeError::UnknownId(id.clone()))?;
        let p = model.probabilities(&x)?;
        Ok(PredictionRecord::new(id.clone(), p[0]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro-F1 under the 0.5 threshold. Macro-F1 averages over the
/// classes that occur in either the gold labels or the predictions.
pub fn evaluate(
    predictions: &[PredictionRecord],
    labels: &HashMap<String, Label>,
) -> Result<Metrics, ProbeError> {
    if predictions.is_empty() {
        return Err(ProbeError::EmptyInput);
    }
    // counts[gold][predicted]
    let mut counts = [[0usize; 2]; 2];
    for p in predictions {
        let gold = labels
            .get(&p.id)
            .ok_or_else(|| ProbeError::MissingLabel(p.id.clone()))?;
        counts[gold.index()][p.predicted().index()] += 1;
    }
    let correct = counts[0][0] + counts[1][1];
    let accuracy = correct as f64 / predictions.len() as f64;
    let mut f1s = Vec::new();
    for c in 0..2 {
        let tp = counts[c][c];
        let fp = counts[1 - c][c];
        let fn_ = counts[c][1 - c];
        if tp + fp + fn_ == 0 {
            continue;
        }
        f1s.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
    }
    let macro_f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
    Ok(Metrics { accuracy, macro_f1 })
}
