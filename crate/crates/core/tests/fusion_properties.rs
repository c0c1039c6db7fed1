mod oracles;

use mmdl_core::fusion::{fusion_forward, FusionInput, FusionModel};
use mmdl_core::Modality;
use oracles::fusion_forward_dense;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: usize = 6;
const K: usize = 4;

fn inputs(seed: u64) -> [Vec<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    [0, 1, 2].map(|_| (0..D).map(|_| rng.random_range(-2.0..2.0)).collect())
}

fn as_input(rows: &[Vec<f64>; 3], mask: [bool; 3]) -> FusionInput<'_> {
    [0, 1, 2].map(|m| mask[m].then(|| rows[m].as_slice()))
}

fn jittered(seed: u64) -> FusionModel {
    let mut model = FusionModel::random([D; 3], K, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
    for p in model.params_mut() {
        *p += rng.random_range(-0.5..0.5);
    }
    model
}

#[test]
fn forward_matches_dense_reimplementation() {
    for seed in 0..50 {
        let model = jittered(seed);
        let rows = inputs(seed);
        for mask in [[true; 3], [true, false, true], [false, true, false]] {
            let ours = fusion_forward(&model, &as_input(&rows, mask)).unwrap();
            let (probs, attention) = fusion_forward_dense(&model, &as_input(&rows, mask));
            for c in 0..2 {
                assert!((ours.probabilities[c] - probs[c]).abs() < 1e-10);
            }
            for m in 0..3 {
                assert!((ours.attention[m] - attention[m]).abs() < 1e-10);
            }
        }
    }
}

/// Model whose modality `m` blocks are the original's `perm[m]` blocks.
fn permuted(model: &FusionModel, perm: [usize; 3]) -> FusionModel {
    let mut out = model.clone();
    for m in Modality::ALL {
        let src = Modality::ALL[perm[m.index()]];
        for part in ["gate.weight", "gate.bias", "proj.weight", "proj.bias"] {
            let to = model.layout().find(&format!("{m}.{part}")).unwrap().range();
            let from = model.layout().find(&format!("{src}.{part}")).unwrap().range();
            out.params_mut()[to].copy_from_slice(&model.params()[from]);
        }
    }
    out
}

#[test]
fn relabeling_modalities_leaves_output_unchanged() {
    let perms = [[1, 2, 0], [2, 0, 1], [0, 2, 1], [1, 0, 2], [2, 1, 0]];
    for seed in 0..30 {
        let model = jittered(seed);
        let rows = inputs(seed);
        let base = fusion_forward(&model, &as_input(&rows, [true; 3])).unwrap();
        for perm in perms {
            let swapped = permuted(&model, perm);
            let moved = [0, 1, 2].map(|m| rows[perm[m]].clone());
            let out = fusion_forward(&swapped, &as_input(&moved, [true; 3])).unwrap();
            assert!((out.probabilities[0] - base.probabilities[0]).abs() < 1e-10);
            for m in 0..3 {
                assert!((out.attention[m] - base.attention[perm[m]]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn identical_modalities_get_equal_attention() {
    let model = jittered(3);
    let shared = permuted(&model, [0, 0, 0]);
    let e: Vec<f64> = (0..D).map(|i| i as f64 * 0.3 - 0.7).collect();
    let rows = [e.clone(), e.clone(), e];
    let out = fusion_forward(&shared, &as_input(&rows, [true; 3])).unwrap();
    for a in out.attention {
        assert!((a - 1.0 / 3.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn attention_lies_on_simplex(
        seed in any::<u64>(),
        scale in 0.1f64..20.0,
        mask in prop::array::uniform3(any::<bool>()).prop_filter("non-empty", |m| m.iter().any(|&a| a)),
    ) {
        let mut model = FusionModel::random([D; 3], K, seed);
        for p in model.params_mut() {
            *p *= scale;
        }
        let rows = inputs(seed);
        let out = fusion_forward(&model, &as_input(&rows, mask)).unwrap();
        let total: f64 = out.attention.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        for m in 0..3 {
            prop_assert!(out.attention[m] >= 0.0);
            if !mask[m] {
                prop_assert_eq!(out.attention[m], 0.0);
            }
        }
        prop_assert!((out.probabilities[0] + out.probabilities[1] - 1.0).abs() < 1e-6);
    }
}
