mod oracles;

use std::collections::BTreeMap;

use mmdl_core::stats::{au_activation_compare, cohen_kappa, group_compare, welch_ttest, DEFAULT_PAIRS};
use mmdl_core::{FeatureTable, Label, Quadrant};
use oracles::{student_t_p_quadrature, welch_t_df};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sample(rng: &mut ChaCha8Rng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

#[test]
fn p_values_match_quadrature_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let na = rng.random_range(3..=200);
        let nb = rng.random_range(3..=200);
        let shift = rng.random_range(-1.5..1.5);
        let (sd_a, sd_b) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let a = sample(&mut rng, na, 0.0, sd_a);
        let b = sample(&mut rng, nb, shift, sd_b);
        let r = welch_ttest(&a, &b).unwrap();
        let (t, df) = welch_t_df(&a, &b);
        assert!((r.t_stat - t).abs() <= 1e-9 * t.abs().max(1.0));
        assert!((r.df - df).abs() <= 1e-9 * df);
        let oracle = student_t_p_quadrature(t, df);
        worst = worst.max((r.p_value - oracle).abs());
        assert!((0.0..=1.0).contains(&r.p_value));
    }
    assert!(worst < 1e-6, "worst |p - oracle| = {worst:e}");
}

#[test]
fn reference_case_against_oracle() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let r = welch_ttest(&a, &b).unwrap();
    assert!((r.t_stat + 1.0).abs() < 1e-12 && (r.df - 8.0).abs() < 1e-12);
    assert!((r.p_value - student_t_p_quadrature(-1.0, 8.0)).abs() < 1e-10);
    assert!((r.p_value - 0.3466).abs() < 1e-4);
}

#[test]
fn planted_au_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let red = sample(&mut rng, 50, 0.8, 0.1);
    let blue = sample(&mut rng, 50, 0.2, 0.1);
    let mut ids = Vec::new();
    let mut groups: BTreeMap<Quadrant, Vec<String>> = BTreeMap::new();
    for (q, n) in [(Quadrant::Red, 50), (Quadrant::Blue, 50), (Quadrant::Green, 10)] {
        for i in 0..n {
            let id = format!("{q}{i}");
            ids.push(id.clone());
            groups.entry(q).or_default().push(id);
        }
    }
    let mut values: Vec<f64> = red.iter().chain(&blue).map(|v| v.clamp(0.0, 1.0)).collect();
    values.extend((0..10).map(|i| 0.1 * (i % 4) as f64));
    let mut columns: Vec<String> = Vec::new();
    let mut data = Vec::new();
    for (code, _) in mmdl_core::data::AU_DESCRIPTIONS {
        columns.push(code.to_string());
        data.push(if code == "AU12" { values.clone() } else { (0..110).map(|i| ((i * 7) % 11) as f64 / 10.0).collect() });
    }
    let table = FeatureTable::new(ids, columns, data).unwrap();
    let out = au_activation_compare(&table, &groups, &DEFAULT_PAIRS).unwrap();
    assert_eq!(out.len(), 36);
    let au12 = out
        .iter()
        .find(|c| c.feature == "AU12" && c.pair == (Quadrant::Red, Quadrant::Blue))
        .unwrap();
    let r = au12.result.as_ref().unwrap();
    assert!(r.p_value < 1e-6);
    assert_eq!(au12.display_name, "AU12: Lip Corner Puller");
    assert_eq!(r.direction_plain(), "red > blue");
    assert_eq!(out[0].feature, "AU12");
}

#[test]
fn group_compare_sorts_by_p() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 60;
    let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let groups: BTreeMap<Quadrant, Vec<String>> = [
        (Quadrant::Red, ids[..20].to_vec()),
        (Quadrant::Blue, ids[20..40].to_vec()),
        (Quadrant::Green, ids[40..].to_vec()),
    ]
    .into_iter()
    .collect();
    let cols: Vec<Vec<f64>> = (0..8)
        .map(|c| {
            let mut v = sample(&mut rng, n, 0.0, 1.0);
            v[..20].iter_mut().for_each(|x| *x += c as f64 * 0.3);
            v
        })
        .collect();
    let names = (0..8).map(|c| format!("f{c}")).collect();
    let table = FeatureTable::new(ids, names, cols).unwrap();
    let out = group_compare(&table, &groups, &DEFAULT_PAIRS, None).unwrap();
    assert_eq!(out.len(), 16);
    let ps: Vec<f64> = out.iter().map(|c| c.p_value().unwrap()).collect();
    assert!(ps.windows(2).all(|w| w[0] <= w[1]));
}

fn labels(bits: &[bool]) -> Vec<Label> {
    bits.iter()
        .map(|&b| if b { Label::Empathetic } else { Label::Neutral })
        .collect()
}

proptest! {
    #[test]
    fn welch_is_antisymmetric(
        a in prop::collection::vec(-100.0f64..100.0, 2..40),
        b in prop::collection::vec(-100.0f64..100.0, 2..40),
    ) {
        if let (Ok(ab), Ok(ba)) = (welch_ttest(&a, &b), welch_ttest(&b, &a)) {
            prop_assert_eq!(ab.t_stat, -ba.t_stat);
            prop_assert_eq!(ab.p_value, ba.p_value);
        }
    }

    #[test]
    fn welch_is_scale_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 3..30),
        b in prop::collection::vec(-10.0f64..10.0, 3..30),
        c in 1e-3f64..1e3,
    ) {
        let base = welch_ttest(&a, &b);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let sa: Vec<f64> = a.iter().map(|x| x * c).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * c).collect();
        let scaled = welch_ttest(&sa, &sb).unwrap();
        prop_assert!((scaled.t_stat - base.t_stat).abs() <= 1e-10 * base.t_stat.abs().max(1.0));
        prop_assert!((scaled.p_value - base.p_value).abs() <= 1e-10);
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let (a, b) = (labels(&a), labels(&b));
        prop_assert_eq!(cohen_kappa(&a, &b), cohen_kappa(&b, &a));
        if let Ok(k) = cohen_kappa(&a, &b) {
            prop_assert!((-1.0..=1.0).contains(&k));
        }
        if a.contains(&Label::Empathetic) && a.contains(&Label::Neutral) {
            prop_assert_eq!(cohen_kappa(&a, &a), Ok(1.0));
        }
    }
}
