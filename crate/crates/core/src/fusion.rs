//! Gated-attention fusion classifier.
//!
//! For every active modality `m` with embedding `e_m`:
//!
//! ```text
//! g_m = sigmoid(Wg_m e_m + bg_m)        elementwise gate
//! u_m = g_m * e_m
//! h_m = tanh(Wp_m u_m + bp_m)           shared k-dim latent space
//! s_m = w_a . h_m + b_a                 attention score
//! a   = softmax(s) over active modalities
//! v_m = a_m h_m
//! z   = elementwise max over m of v_m   (ties go to the earlier modality)
//! ```
//!
//! `z` feeds a three-layer classifier `k -> k/2 -> k/4 -> 2` with tanh between
//! layers. Dropped modalities are removed from the attention softmax and the
//! max pool rather than zeroed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, EmbeddingStore, ExampleRecord, Label, Modality, Split};
use crate::disagreement::PredictionRecord;
use crate::nn::{self, CheckpointError, ParamLayout, Sgd};
use crate::par::{self, Exec};
use crate::probe::TrainingHistory;

pub const FUSION_MAGIC: &[u8; 4] = b"MMFU";

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("no active modality")]
    NoActiveModality,
    #[error("{modality} embedding has width {found}, model expects {expected}")]
    DimensionMismatch {
        modality: Modality,
        expected: usize,
        found: usize,
    },
    #[error("training split must contain both classes")]
    SingleClassTrainSet,
    #[error("no embedding store for {0}")]
    MissingModalityStore(Modality),
    #[error("unknown id `{id}` in {modality} store")]
    UnknownId { id: String, modality: Modality },
    #[error("empty batch")]
    EmptyInput,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub latent_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub modality_dropout_rate: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            latent_width: 256,
            epochs: 10,
            learning_rate: 1e-4,
            batch_size: 8,
            modality_dropout_rate: 0.15,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |msg: &str| Err(FusionError::InvalidConfig(msg.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if self.latent_width < 4 {
            return bad("latent_width must be >= 4");
        }
        if !(0.0..1.0).contains(&self.modality_dropout_rate) {
            return bad("modality_dropout_rate must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ModalityRanges {
    gate_w: Range<usize>,
    gate_b: Range<usize>,
    proj_w: Range<usize>,
    proj_b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Ranges {
    modality: [ModalityRanges; 3],
    attn_w: Range<usize>,
    attn_b: Range<usize>,
    /// `(weight, bias)` for the three classifier layers.
    classifier: [(Range<usize>, Range<usize>); 3],
}

fn fusion_layout(dims: [usize; 3], latent: usize) -> (ParamLayout, Ranges) {
    let mut layout = ParamLayout::default();
    let modality = Modality::ALL.map(|m| {
        let d = dims[m.index()];
        ModalityRanges {
            gate_w: layout.push(format!("{m}.gate.weight"), d, d),
            gate_b: layout.push(format!("{m}.gate.bias"), d, 1),
            proj_w: layout.push(format!("{m}.proj.weight"), latent, d),
            proj_b: layout.push(format!("{m}.proj.bias"), latent, 1),
        }
    });
    let attn_w = layout.push("attention.weight", 1, latent);
    let attn_b = layout.push("attention.bias", 1, 1);
    let widths = [latent, latent / 2, latent / 4, 2];
    let classifier = [0, 1, 2].map(|i| {
        (
            layout.push(format!("classifier.{i}.weight"), widths[i + 1], widths[i]),
            layout.push(format!("classifier.{i}.bias"), widths[i + 1], 1),
        )
    });
    (
        layout,
        Ranges {
            modality,
            attn_w,
            attn_b,
            classifier,
        },
    )
}

/// Adjacent weight and bias gradients as two disjoint mutable slices.
fn pair_mut<'a>(
    grad: &'a mut [f64],
    w: &Range<usize>,
    b: &Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(w.end, b.start);
    grad[w.start..b.end].split_at_mut(w.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    dims: [usize; 3],
    latent: usize,
    layout: ParamLayout,
    ranges: Ranges,
    params: Vec<f64>,
    pub history: TrainingHistory,
}

/// Embeddings indexed by [`Modality::index`]; `None` marks an inactive modality.
pub type FusionInput<'a> = [Option<&'a [f64]>; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTrace {
    pub modality: Modality,
    pub gate: Vec<f64>,
    pub gated: Vec<f64>,
    pub latent: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace {
    /// Active modalities in canonical order.
    pub active: Vec<ModalityTrace>,
    /// Attention weights aligned with `active`.
    pub weights: Vec<f64>,
    pub pooled: Vec<f64>,
    /// For each pooled coordinate, the index into `active` that supplied the max.
    pub argmax: Vec<usize>,
    pub hidden: [Vec<f64>; 2],
    pub logits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    /// `(p_empathetic, p_neutral)`.
    pub probabilities: [f64; 2],
    /// Per modality in canonical order; zero for inactive modalities.
    pub attention: [f64; 3],
    pub trace: FusionTrace,
}

#[derive(Debug, Clone, Copy)]
pub struct FusionExample<'a> {
    pub inputs: FusionInput<'a>,
    pub label: Label,
}

impl FusionModel {
    pub fn zeros(dims: [usize; 3], latent_width: usize) -> Self {
        let (layout, ranges) = fusion_layout(dims, latent_width);
        FusionModel {
            dims,
            latent: latent_width,
            params: vec![0.0; layout.len()],
            layout,
            ranges,
            history: TrainingHistory::default(),
        }
    }

    pub fn random(dims: [usize; 3], latent_width: usize, seed: u64) -> Self {
        let mut model = Self::zeros(dims, latent_width);
        model.init(&mut ChaCha8Rng::seed_from_u64(seed));
        model
    }

    fn init<R: Rng>(&mut self, rng: &mut R) {
        let k = self.latent;
        for m in Modality::ALL {
            let d = self.dims[m.index()];
            let r = self.ranges.modality[m.index()].clone();
            nn::xavier_uniform(rng, d, d, &mut self.params[r.gate_w]);
            nn::xavier_uniform(rng, d, k, &mut self.params[r.proj_w]);
        }
        let attn = self.ranges.attn_w.clone();
        nn::xavier_uniform(rng, k, 1, &mut self.params[attn]);
        let widths = [k, k / 2, k / 4, 2];
        for i in 0..3 {
            let w = self.ranges.classifier[i].0.clone();
            nn::xavier_uniform(rng, widths[i], widths[i + 1], &mut self.params[w]);
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn latent_width(&self) -> usize {
        self.latent
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

    fn p(&self, r: &Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    pub fn forward(&self, inputs: &FusionInput) -> Result<FusionOutput, FusionError> {
        fusion_forward(self, inputs)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), FusionError> {
        Ok(nn::write_checkpoint(w, FUSION_MAGIC, &self.layout, &self.params)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FusionError> {
        let (shapes, params) = nn::read_checkpoint(r, FUSION_MAGIC)?;
        // gate weights are d x d, projection weights are k x d
        let shape = |i: usize| shapes.get(i).copied();
        let (dims, latent) = match (shape(0), shape(4), shape(8), shape(2)) {
            (Some((d0, _)), Some((d1, _)), Some((d2, _)), Some((k, _))) => ([d0, d1, d2], k),
            _ => return Err(CheckpointError::Layout(format!("{shapes:?}")).into()),
        };
        let mut model = FusionModel::zeros(dims, latent);
        if model.layout.shapes() != shapes {
            return Err(CheckpointError::Layout(format!("{shapes:?}")).into());
        }
        model.params = params;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), FusionError> {
        self.write_to(BufWriter::new(File::create(path).map_err(CheckpointError::from)?))
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        Self::read_from(BufReader::new(File::open(path).map_err(CheckpointError::from)?))
    }
}

pub fn fusion_forward(model: &FusionModel, inputs: &FusionInput) -> Result<FusionOutput, FusionError> {
    let k = model.latent;
    let mut active = Vec::with_capacity(3);
    for m in Modality::ALL {
        let Some(e) = inputs[m.index()] else { continue };
        let d = model.dims[m.index()];
        if e.len() != d {
            return Err(FusionError::DimensionMismatch {
                modality: m,
                expected: d,
                found: e.len(),
            });
        }
        let r = &model.ranges.modality[m.index()];
        let mut gate = vec![0.0; d];
        nn::affine(model.p(&r.gate_w), model.p(&r.gate_b), e, &mut gate);
        gate.iter_mut().for_each(|g| *g = nn::sigmoid(*g));
        let gated: Vec<f64> = gate.iter().zip(e).map(|(g, x)| g * x).collect();
        let mut latent = vec![0.0; k];
        nn::affine(model.p(&r.proj_w), model.p(&r.proj_b), &gated, &mut latent);
        latent.iter_mut().for_each(|h| *h = h.tanh());
        let score = model.p(&model.ranges.attn_b)[0]
            + model
                .p(&model.ranges.attn_w)
                .iter()
                .zip(&latent)
                .map(|(w, h)| w * h)
                .sum::<f64>();
        active.push(ModalityTrace {
            modality: m,
            gate,
            gated,
            latent,
            score,
        });
    }
    if active.is_empty() {
        return Err(FusionError::NoActiveModality);
    }

    let scores: Vec<f64> = active.iter().map(|t| t.score).collect();
    let weights = nn::softmax(&scores);
    let mut pooled = vec![f64::NEG_INFINITY; k];
    let mut argmax = vec![0usize; k];
    for (j, t) in active.iter().enumerate() {
        for c in 0..k {
            let v = weights[j] * t.latent[c];
            if v > pooled[c] {
                pooled[c] = v;
                argmax[c] = j;
            }
        }
    }

    let [(w0, b0), (w1, b1), (w2, b2)] = &model.ranges.classifier;
    let mut h0 = vec![0.0; k / 2];
    nn::affine(model.p(w0), model.p(b0), &pooled, &mut h0);
    h0.iter_mut().for_each(|v| *v = v.tanh());
    let mut h1 = vec![0.0; k / 4];
    nn::affine(model.p(w1), model.p(b1), &h0, &mut h1);
    h1.iter_mut().for_each(|v| *v = v.tanh());
    let mut logits = [0.0; 2];
    nn::affine(model.p(w2), model.p(b2), &h1, &mut logits);
    let (probabilities, _) = nn::softmax_xent(logits, 0);

    let mut attention = [0.0; 3];
    for (t, w) in active.iter().zip(&weights) {
        attention[t.modality.index()] = *w;
    }
    Ok(FusionOutput {
        probabilities,
        attention,
        trace: FusionTrace {
            active,
            weights,
            pooled,
            argmax,
            hidden: [h0, h1],
            logits,
        },
    })
}

/// Mean cross-entropy over the batch.
pub fn fusion_loss(model: &FusionModel, batch: &[FusionExample]) -> Result<f64, FusionError> {
    if batch.is_empty() {
        return Err(FusionError::EmptyInput);
    }
    let mut total = 0.0;
    for ex in batch {
        let out = fusion_forward(model, &ex.inputs)?;
        total += nn::softmax_xent(out.trace.logits, ex.label.index()).1;
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy over the batch and its exact gradient with respect to
/// every parameter, in the model's flat layout.
pub fn fusion_backward(
    model: &FusionModel,
    batch: &[FusionExample],
) -> Result<(f64, Vec<f64>), FusionError> {
    if batch.is_empty() {
        return Err(FusionError::EmptyInput);
    }
    let scale = 1.0 / batch.len() as f64;
    let k = model.latent;
    let ranges = &model.ranges;
    let mut grad = vec![0.0; model.params.len()];
    let mut total = 0.0;

    for ex in batch {
        let out = fusion_forward(model, &ex.inputs)?;
        let t = &out.trace;
        let (probs, loss) = nn::softmax_xent(t.logits, ex.label.index());
        total += loss;
        let mut dlogits = probs;
        dlogits[ex.label.index()] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= scale);

        let [(w0, b0), (w1, b1), (w2, b2)] = &ranges.classifier;
        let mut dh1 = vec![0.0; k / 4];
        {
            let (dw, db) = pair_mut(&mut grad, w2, b2);
            nn::affine_backward(model.p(w2), &t.hidden[1], &dlogits, dw, db, Some(&mut dh1));
        }
        for (g, h) in dh1.iter_mut().zip(&t.hidden[1]) {
            *g *= 1.0 - h * h;
        }
        let mut dh0 = vec![0.0; k / 2];
        {
            let (dw, db) = pair_mut(&mut grad, w1, b1);
            nn::affine_backward(model.p(w1), &t.hidden[0], &dh1, dw, db, Some(&mut dh0));
        }
        for (g, h) in dh0.iter_mut().zip(&t.hidden[0]) {
            *g *= 1.0 - h * h;
        }
        let mut dz = vec![0.0; k];
        {
            let (dw, db) = pair_mut(&mut grad, w0, b0);
            nn::affine_backward(model.p(w0), &t.pooled, &dh0, dw, db, Some(&mut dz));
        }

        // max pool routes each coordinate to its argmax modality
        let n_active = t.active.len();
        let mut dweight = vec![0.0; n_active];
        let mut dlatent: Vec<Vec<f64>> = t
            .active
            .iter()
            .enumerate()
            .map(|(j, tr)| {
                let mut dh = vec![0.0; k];
                for c in 0..k {
                    if t.argmax[c] == j {
                        dweight[j] += dz[c] * tr.latent[c];
                        dh[c] = t.weights[j] * dz[c];
                    }
                }
                dh
            })
            .collect();

        let mean: f64 = t.weights.iter().zip(&dweight).map(|(a, g)| a * g).sum();
        let attn_w = model.p(&ranges.attn_w);
        for (j, tr) in t.active.iter().enumerate() {
            let dscore = t.weights[j] * (dweight[j] - mean);
            {
                let (dw, db) = pair_mut(&mut grad, &ranges.attn_w, &ranges.attn_b);
                for (g, h) in dw.iter_mut().zip(&tr.latent) {
                    *g += dscore * h;
                }
                db[0] += dscore;
            }
            for (dh, w) in dlatent[j].iter_mut().zip(attn_w) {
                *dh += dscore * w;
            }
        }

        for (tr, dh) in t.active.iter().zip(dlatent.iter_mut()) {
            let m = tr.modality;
            let e = ex.inputs[m.index()].expect("active modality has input");
            let r = &ranges.modality[m.index()];
            for (g, h) in dh.iter_mut().zip(&tr.latent) {
                *g *= 1.0 - h * h;
            }
            let mut dgated = vec![0.0; e.len()];
            {
                let (dw, db) = pair_mut(&mut grad, &r.proj_w, &r.proj_b);
                nn::affine_backward(model.p(&r.proj_w), &tr.gated, dh, dw, db, Some(&mut dgated));
            }
            let dgate_pre: Vec<f64> = dgated
                .iter()
                .zip(e)
                .zip(&tr.gate)
                .map(|((du, x), g)| du * x * g * (1.0 - g))
                .collect();
            let (dw, db) = pair_mut(&mut grad, &r.gate_w, &r.gate_b);
            nn::affine_backward(model.p(&r.gate_w), e, &dgate_pre, dw, db, None);
        }
    }
    Ok((total * scale, grad))
}

fn check_stores(
    stores: &BTreeMap<Modality, EmbeddingStore>,
    modalities: &[Modality],
) -> Result<(), FusionError> {
    for &m in modalities {
        if !stores.contains_key(&m) {
            return Err(FusionError::MissingModalityStore(m));
        }
    }
    Ok(())
}

fn rows_for(
    stores: &BTreeMap<Modality, EmbeddingStore>,
    id: &str,
    modalities: &[Modality],
) -> Result<[Option<Vec<f64>>; 3], FusionError> {
    let mut rows: [Option<Vec<f64>>; 3] = [None, None, None];
    for &m in modalities {
        let row = stores[&m].get_f64(id).ok_or_else(|| FusionError::UnknownId {
            id: id.to_string(),
            modality: m,
        })?;
        rows[m.index()] = Some(row);
    }
    Ok(rows)
}

fn as_input(rows: &[Option<Vec<f64>>; 3]) -> FusionInput<'_> {
    [0, 1, 2].map(|i| rows[i].as_deref())
}

fn full_batch<'a>(rows: &'a [[Option<Vec<f64>>; 3]], labels: &[Label]) -> Vec<(FusionInput<'a>, Label)> {
    rows.iter().map(as_input).zip(labels.iter().copied()).collect()
}

/// Draws which modalities stay active; at least one always does.
fn dropout_mask<R: Rng>(rng: &mut R, rate: f64) -> [bool; 3] {
    if rate == 0.0 {
        return [true; 3];
    }
    loop {
        let mask = [0, 1, 2].map(|_| rng.random::<f64>() >= rate);
        if mask.iter().any(|&a| a) {
            return mask;
        }
    }
}

pub fn train_fusion(
    stores: &BTreeMap<Modality, EmbeddingStore>,
    examples: &[ExampleRecord],
    config: &FusionConfig,
) -> Result<FusionModel, FusionError> {
    config.validate()?;
    check_stores(stores, &Modality::ALL)?;
    let select = |split: Split| -> Result<(Vec<[Option<Vec<f64>>; 3]>, Vec<Label>), FusionError> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for e in examples.iter().filter(|e| e.split == split) {
            rows.push(rows_for(stores, &e.id, &Modality::ALL)?);
            labels.push(e.label);
        }
        Ok((rows, labels))
    };
    let (train_rows, train_labels) = select(Split::Train)?;
    let (val_rows, val_labels) = select(Split::Validation)?;
    if !Label::ALL.iter().all(|l| train_labels.contains(l)) {
        return Err(FusionError::SingleClassTrainSet);
    }

    let dims = Modality::ALL.map(|m| stores[&m].dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FusionModel::zeros(dims, config.latent_width);
    model.init(&mut rng);
    let mut opt = Sgd::new(model.params.len(), config.learning_rate, Sgd::DEFAULT_MOMENTUM);

    let train_full = full_batch(&train_rows, &train_labels);
    let train_loss = |model: &FusionModel| -> Result<f64, FusionError> {
        let batch: Vec<FusionExample> = train_full
            .iter()
            .map(|&(inputs, label)| FusionExample { inputs, label })
            .collect();
        fusion_loss(model, &batch)
    };

    let mut history = TrainingHistory {
        initial_train_loss: train_loss(&model)?,
        ..TrainingHistory::default()
    };
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let masks: Vec<[bool; 3]> = order
            .iter()
            .map(|_| dropout_mask(&mut rng, config.modality_dropout_rate))
            .collect();
        for (chunk, chunk_masks) in order
            .chunks(config.batch_size)
            .zip(masks.chunks(config.batch_size))
        {
            let batch: Vec<FusionExample> = chunk
                .iter()
                .zip(chunk_masks)
                .map(|(&i, mask)| {
                    let full = as_input(&train_rows[i]);
                    FusionExample {
                        inputs: [0, 1, 2].map(|m| if mask[m] { full[m] } else { None }),
                        label: train_labels[i],
                    }
                })
                .collect();
            let (_, grad) = fusion_backward(&model, &batch)?;
            opt.step(&mut model.params, &grad);
        }
        history.train_loss.push(train_loss(&model)?);
        if !val_rows.is_empty() {
            let correct = par::map_slice(Exec::default(), &full_batch(&val_rows, &val_labels), |(inputs, label)| {
                fusion_forward(&model, inputs)
                    .map(|o| Label::from_probability(o.probabilities[0]) == *label)
                    .unwrap_or(false)
            })
            .into_iter()
            .filter(|&ok| ok)
            .count();
            history
                .validation_accuracy
                .push(correct as f64 / val_rows.len() as f64);
        }
    }
    nn::round_to_f32(&mut model.params);
    model.history = history;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPrediction {
    pub id: String,
    pub prob_empathetic: f64,
    /// Text, audio, video; zero for modalities left out at inference.
    pub attention: [f64; 3],
}

impl FusionPrediction {
    pub fn record(&self) -> PredictionRecord {
        PredictionRecord::new(self.id.clone(), self.prob_empathetic)
    }
}

pub fn predict_fusion(
    model: &FusionModel,
    stores: &BTreeMap<Modality, EmbeddingStore>,
    ids: &[String],
    active: &[Modality],
) -> Result<Vec<FusionPrediction>, FusionError> {
    predict_fusion_with(Exec::default(), model, stores, ids, active)
}

pub fn predict_fusion_with(
    exec: Exec,
    model: &FusionModel,
    stores: &BTreeMap<Modality, EmbeddingStore>,
    ids: &[String],
    active: &[Modality],
) -> Result<Vec<FusionPrediction>, FusionError> {
    if active.is_empty() {
        return Err(FusionError::NoActiveModality);
    }
    check_stores(stores, active)?;
    par::try_map_slice(exec, ids, |id| {
        let rows = rows_for(stores, id, active)?;
        let out = fusion_forward(model, &as_input(&rows))?;
        Ok(FusionPrediction {
            id: id.clone(),
            prob_empathetic: out.probabilities[0],
            attention: out.attention,
        })
    })
}

/// `id,alpha_text,alpha_audio,alpha_video`
pub fn write_attention_csv<W: Write>(
    writer: W,
    predictions: &[FusionPrediction],
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "alpha_text", "alpha_audio", "alpha_video"])?;
    for p in predictions {
        wtr.write_record([
            p.id.clone(),
            p.attention[0].to_string(),
            p.attention[1].to_string(),
            p.attention[2].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
