//! Independent reference implementations shared by integration tests.
//!
//! Nothing here calls the library's numerical code paths: each oracle
//! recomputes its quantity from the definition by a different route.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mmdl_core::fusion::{FusionInput, FusionModel};
use mmdl_core::Modality;
use nalgebra::{DMatrix, DVector};

/// Two-sided Student-t tail by quadrature in the angle variable.
///
/// Substituting `t = sqrt(df) tan θ` turns the density into `cos^(df-1) θ`, so
/// `p = ∫_{θ0}^{π/2} cos^(df-1) / ∫_0^{π/2} cos^(df-1)` with `θ0 = atan(|t|/sqrt(df))`.
/// No gamma or beta function is involved.
pub fn student_t_p_quadrature(t: f64, df: f64) -> f64 {
    let f = |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / df.sqrt()).atan();
    let total = adaptive_simpson(&f, 0.0, half_pi, 1e-14);
    adaptive_simpson(&f, theta0, half_pi, 1e-14) / total
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Textbook Welch statistic and degrees of freedom, two-pass variances.
pub fn welch_t_df(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let t = (ma - mb) / (va / na + vb / nb).sqrt();
    let df = (va / na + vb / nb).powi(2)
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    (t, df)
}

/// Four-way case analysis on the raw comparison, written without the
/// library's correctness helper.
pub fn brute_quadrant(c_uni: f64, c_multi: f64) -> &'static str {
    if c_uni > 0.5 && c_multi > 0.5 {
        "blue"
    } else if c_uni > 0.5 && c_multi <= 0.5 {
        "red"
    } else if c_uni <= 0.5 && c_multi > 0.5 {
        "green"
    } else {
        "yellow"
    }
}

/// Pairwise disagreement by an explicit double loop over hard labels.
pub fn recount_disagreement(models: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let n = models[0].len() as f64;
    let mut out = vec![vec![0.0; models.len()]; models.len()];
    for i in 0..models.len() {
        for j in 0..models.len() {
            let mut differ = 0usize;
            for e in 0..models[i].len() {
                if models[i][e] != models[j][e] {
                    differ += 1;
                }
            }
            out[i][j] = differ as f64 / n;
        }
    }
    out
}

fn block(model: &FusionModel, name: &str) -> DMatrix<f64> {
    let b = model
        .layout()
        .find(name)
        .unwrap_or_else(|| panic!("missing block {name}"));
    DMatrix::from_row_slice(b.rows, b.cols, &model.params()[b.range()])
}

fn column(model: &FusionModel, name: &str) -> DVector<f64> {
    let m = block(model, name);
    DVector::from_column_slice(m.as_slice())
}

/// Straight-line fusion forward pass over named parameter blocks with dense
/// linear algebra. Returns `(p_empathetic, p_neutral)` and attention.
pub fn fusion_forward_dense(model: &FusionModel, inputs: &FusionInput) -> ([f64; 2], [f64; 3]) {
    let mut latents = Vec::new();
    let mut scores = Vec::new();
    let mut which = Vec::new();
    let wa = column(model, "attention.weight");
    let ba = column(model, "attention.bias")[0];
    for m in Modality::ALL {
        let Some(e) = inputs[m.index()] else { continue };
        let e = DVector::from_column_slice(e);
        let name = m.as_str();
        let g = (block(model, &format!("{name}.gate.weight")) * &e
            + column(model, &format!("{name}.gate.bias")))
        .map(|v| 1.0 / (1.0 + (-v).exp()));
        let u = g.component_mul(&e);
        let h = (block(model, &format!("{name}.proj.weight")) * u
            + column(model, &format!("{name}.proj.bias")))
        .map(f64::tanh);
        scores.push(wa.dot(&h) + ba);
        latents.push(h);
        which.push(m.index());
    }
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let k = latents[0].len();
    let z = DVector::from_fn(k, |c, _| {
        latents
            .iter()
            .zip(&alpha)
            .map(|(h, a)| a * h[c])
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let h0 = (block(model, "classifier.0.weight") * z + column(model, "classifier.0.bias"))
        .map(f64::tanh);
    let h1 = (block(model, "classifier.1.weight") * h0 + column(model, "classifier.1.bias"))
        .map(f64::tanh);
    let logits = block(model, "classifier.2.weight") * h1 + column(model, "classifier.2.bias");
    let top = logits.max();
    let e0 = (logits[0] - top).exp();
    let e1 = (logits[1] - top).exp();
    let mut attention = [0.0; 3];
    for (i, a) in which.iter().zip(&alpha) {
        attention[*i] = *a;
    }
    ([e0 / (e0 + e1), e1 / (e0 + e1)], attention)
}

/// Largest relative discrepancy between `analytic` and central differences
/// of `loss` at `params`, skipping coordinates for which `skip` holds.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// coordinates whose true gradient is zero from dividing noise by noise.
pub fn finite_difference_check(
    params: &[f64],
    analytic: &[f64],
    step: f64,
    floor: f64,
    loss: &dyn Fn(&[f64]) -> f64,
    skip: &dyn Fn(usize, &[f64], &[f64]) -> bool,
) -> FdReport {
    let mut report = FdReport::default();
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + step;
        let plus_params = p.clone();
        let plus = loss(&p);
        p[i] = params[i] - step;
        let minus_params = p.clone();
        let minus = loss(&p);
        p[i] = params[i];
        if skip(i, &plus_params, &minus_params) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((i, a, numeric));
        }
        report.checked += 1;
    }
    report
}

#[derive(Debug, Default, Clone)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub worst: Option<(usize, f64, f64)>,
}

/// Eigenvalues of a symmetric matrix, largest first.
pub fn sorted_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.len();
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Group sizes of a partition, for exhaustiveness checks.
pub fn group_sizes<K: Ord + Clone>(groups: &BTreeMap<K, Vec<String>>) -> usize {
    groups.values().map(Vec::len).sum()
}
