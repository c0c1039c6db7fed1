//! Small dense-network building blocks shared by the probe and fusion models.
//!
//! Parameters live in one flat `Vec<f64>` described by a [`ParamLayout`], so
//! the optimizer, checkpoints and gradient checks all work on plain slices.

use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng;

/// One named weight matrix (or bias vector when `cols == 1`) inside a flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    len: usize,
}

impl ParamLayout {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Range<usize> {
        let block = Block {
            name: name.into(),
            rows,
            cols,
            offset: self.len,
        };
        self.len += block.len();
        let range = block.range();
        self.blocks.push(block);
        range
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn find(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.rows, b.cols)).collect()
    }
}

/// `out = W x + b` for row-major `W` of shape `rows x x.len()`.
pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// Backward of [`affine`]: `dW += dy x^T`, `db += dy`, and `dx += W^T dy` when requested.
pub fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        db[r] += g;
        if g == 0.0 {
            continue;
        }
        for (d, v) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += g * v;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, a) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *d += g * a;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Two-class softmax probabilities and the cross-entropy against `target`.
pub fn softmax_xent(logits: [f64; 2], target: usize) -> ([f64; 2], f64) {
    let max = logits[0].max(logits[1]);
    let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
    let probs = [(logits[0] - lse).exp(), (logits[1] - lse).exp()];
    (probs, lse - logits[target])
}

/// Glorot-uniform initialisation of one block.
pub fn xavier_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-limit..limit);
    }
}

/// Heavy-ball SGD: `v <- momentum * v - lr * g; p <- p + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(len: usize, learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            velocity: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = self.momentum * *v - self.learning_rate * g;
            *p += *v;
        }
    }
}

/// Rounds every parameter to the nearest f32 so checkpoints reload exactly.
pub fn round_to_f32(params: &mut [f64]) {
    for p in params {
        *p = *p as f32 as f64;
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint layout does not match the model: {0}")]
    Layout(String),
    #[error("non-finite parameter in checkpoint")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Magic, u32 version, u32 block count, `(rows, cols)` u32 pairs, then f32 parameters.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    magic: &[u8; 4],
    layout: &ParamLayout,
    params: &[f64],
) -> Result<(), CheckpointError> {
    w.write_all(magic)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(layout.blocks().len() as u32).to_le_bytes())?;
    for (rows, cols) in layout.shapes() {
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
    }
    for &p in params {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a checkpoint written by [`write_checkpoint`]; returns block shapes and parameters.
pub fn read_checkpoint<R: Read>(
    mut r: R,
    magic: &[u8; 4],
) -> Result<(Vec<(usize, usize)>, Vec<f64>), CheckpointError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(CheckpointError::BadMagic {
            expected: *magic,
            found,
        });
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let blocks = read_u32(&mut r)? as usize;
    let mut shapes = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        shapes.push((rows, cols));
    }
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    let mut raw = vec![0u8; total * 4];
    r.read_exact(&mut raw)?;
    let params: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(CheckpointError::NonFinite);
    }
    Ok((shapes, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_backward_matches_manual() {
        // W = [[1,2],[3,4]], x = [1,-1], dy = [1, 2]
        let w = [1.0, 2.0, 3.0, 4.0];
        let x = [1.0, -1.0];
        let mut y = [0.0; 2];
        affine(&w, &[0.5, -0.5], &x, &mut y);
        assert_eq!(y, [-0.5, -1.5]);
        let (mut dw, mut db, mut dx) = ([0.0; 4], [0.0; 2], [0.0; 2]);
        affine_backward(&w, &x, &[1.0, 2.0], &mut dw, &mut db, Some(&mut dx));
        assert_eq!(dw, [1.0, -1.0, 2.0, -2.0]);
        assert_eq!(db, [1.0, 2.0]);
        assert_eq!(dx, [7.0, 10.0]);
    }

    #[test]
    fn softmax_xent_is_stable() {
        let (p, loss) = softmax_xent([1000.0, 0.0], 1);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!((loss - 1000.0).abs() < 1e-9);
        let (p, loss) = softmax_xent([0.0, 0.0], 0);
        assert_eq!(p, [0.5, 0.5]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = Sgd::new(1, 0.1, 0.9);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0]);
        assert!((p[0] + 0.1).abs() < 1e-15);
        opt.step(&mut p, &[1.0]);
        assert!((p[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut layout = ParamLayout::default();
        layout.push("w", 2, 3);
        layout.push("b", 2, 1);
        let mut params: Vec<f64> = (0..8).map(|i| i as f64 * 0.37 - 1.0).collect();
        round_to_f32(&mut params);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, b"TEST", &layout, &params).unwrap();
        let (shapes, back) = read_checkpoint(&buf[..], b"TEST").unwrap();
        assert_eq!(shapes, vec![(2, 3), (2, 1)]);
        assert_eq!(back, params);
        assert!(matches!(
            read_checkpoint(&buf[..], b"NOPE"),
            Err(CheckpointError::BadMagic { .. })
        ));
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-30.0, -1.0, 0.0, 2.5, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
