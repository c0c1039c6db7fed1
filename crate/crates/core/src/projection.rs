//! Two-dimensional views of embedding space.
//!
//! Principal components come from the explicit covariance matrix by power
//! iteration with deflation. The result is deterministic: the start vector is
//! fixed and each component's first non-negligible coordinate is positive.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, EmbeddingStore, ExampleRecord, FeatureTable, Label};
use crate::disagreement::Quadrant;
use crate::par::{self, Exec};

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;
const START_SEED: u64 = 0x5eed;
const SIGN_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("need at least 3 examples and 2 dimensions (got {n} x {d})")]
    TooFewExamples { n: usize, d: usize },
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("all points coincide; no direction of variance")]
    ZeroVariance,
    #[error("power iteration did not converge for component {component} in {iterations} iterations")]
    ConvergenceFailure { component: usize, iterations: usize },
    #[error("need at least 2 blue and 2 yellow points (got {blue} and {yellow})")]
    TooFewAnchors { blue: usize, yellow: usize },
    #[error("blue and yellow centroids coincide")]
    DegenerateCentroids,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub mean: Vec<f64>,
    /// Two orthonormal directions in embedding space.
    pub components: [Vec<f64>; 2],
    /// Covariance eigenvalues along each component (n − 1 normalization).
    pub eigenvalues: [f64; 2],
    /// Eigenvalue over total variance; non-increasing.
    pub explained: [f64; 2],
    pub points: Vec<Point2>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn remove_component(v: &mut [f64], u: &[f64]) {
    let c = dot(v, u);
    v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
}

/// Sample covariance of row vectors, returned as `d` rows.
pub fn covariance_with(exec: Exec, rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    // column-major centered data keeps the inner products contiguous
    let centered: Vec<Vec<f64>> = par::map_range(exec, d, |j| {
        rows.iter().map(|r| r[j] - mean[j]).collect()
    });
    let denom = (n as f64 - 1.0).max(1.0);
    let upper: Vec<Vec<f64>> = par::map_range(exec, d, |i| {
        (i..d).map(|j| dot(&centered[i], &centered[j]) / denom).collect()
    });
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for (off, &v) in upper[i].iter().enumerate() {
            cov[i][i + off] = v;
            cov[i + off][i] = v;
        }
    }
    (mean, cov)
}

fn mat_vec(exec: Exec, m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    par::map_slice(exec, m, |row| dot(row, v))
}

/// Leading eigenpair of a symmetric PSD matrix, orthogonal to `against`.
fn power_iteration(
    exec: Exec,
    m: &[Vec<f64>],
    start: &[f64],
    against: &[&[f64]],
    scale: f64,
    component: usize,
) -> Result<(f64, Vec<f64>), ProjectionError> {
    let mut v = start.to_vec();
    for u in against {
        remove_component(&mut v, u);
    }
    normalize(&mut v);
    for _ in 0..POWER_MAX_ITER {
        let mut w = mat_vec(exec, m, &v);
        for u in against {
            remove_component(&mut w, u);
        }
        let lambda = dot(&v, &w);
        let residual: f64 = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= POWER_TOLERANCE * scale {
            return Ok((lambda.max(0.0), v));
        }
        if normalize(&mut w) == 0.0 {
            // remaining spectrum is zero; any unit vector orthogonal to the
            // earlier components is an eigenvector
            return Ok((0.0, v));
        }
        v = w;
    }
    Err(ProjectionError::ConvergenceFailure {
        component,
        iterations: POWER_MAX_ITER,
    })
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top two principal components of `rows` and the projected coordinates.
pub fn pca_rows_with(
    exec: Exec,
    ids: Vec<String>,
    rows: &[Vec<f64>],
) -> Result<Projection2D, ProjectionError> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < 3 || d < 2 {
        return Err(ProjectionError::TooFewExamples { n, d });
    }
    assert_eq!(ids.len(), n, "one id per row");
    let (mean, mut cov) = covariance_with(exec, rows);
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    if trace <= 0.0 {
        return Err(ProjectionError::ZeroVariance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let start: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();

    let (l1, mut c1) = power_iteration(exec, &cov, &start, &[], trace, 0)?;
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x -= l1 * c1[i] * c1[j];
        }
    }
    let (l2, mut c2) = power_iteration(exec, &cov, &start, &[&c1], trace, 1)?;
    fix_sign(&mut c1);
    fix_sign(&mut c2);

    let points = ids
        .into_iter()
        .zip(rows)
        .map(|(id, r)| {
            let centered: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
            Point2 {
                id,
                x: dot(&centered, &c1),
                y: dot(&centered, &c2),
            }
        })
        .collect();
    Ok(Projection2D {
        mean,
        components: [c1, c2],
        eigenvalues: [l1, l2],
        explained: [l1 / trace, l2 / trace],
        points,
    })
}

pub fn pca_fit_transform(
    store: &EmbeddingStore,
    ids: &[String],
) -> Result<Projection2D, ProjectionError> {
    pca_fit_transform_with(Exec::default(), store, ids)
}

pub fn pca_fit_transform_with(
    exec: Exec,
    store: &EmbeddingStore,
    ids: &[String],
) -> Result<Projection2D, ProjectionError> {
    let rows = ids
        .iter()
        .map(|id| store.get_f64(id).ok_or_else(|| ProjectionError::UnknownId(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    pca_rows_with(exec, ids.to_vec(), &rows)
}

/// One projection per gold label, each fitted on that label's examples only.
pub fn project_by_label(
    store: &EmbeddingStore,
    examples: &[ExampleRecord],
) -> Result<BTreeMap<Label, Projection2D>, ProjectionError> {
    let mut out = BTreeMap::new();
    for label in Label::ALL {
        let ids: Vec<String> = examples
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.id.clone())
            .collect();
        out.insert(label, pca_fit_transform(store, &ids)?);
    }
    Ok(out)
}

/// Externally computed coordinates from a table with `x` and `y` columns.
pub fn points_from_table(table: &FeatureTable) -> Result<Vec<Point2>, ProjectionError> {
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| DataError::Format(format!("projection table lacks `{name}`")))
    };
    let (xs, ys) = (col("x")?, col("y")?);
    Ok(table
        .ids()
        .iter()
        .zip(xs.iter().zip(ys))
        .map(|(id, (&x, &y))| Point2 { id: id.clone(), x, y })
        .collect())
}

/// Writes `id,x,y,quadrant`; the quadrant cell is empty for unassigned ids.
pub fn write_projection_csv<W: Write>(
    writer: W,
    points: &[Point2],
    quadrant_of: &HashMap<String, Quadrant>,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "x", "y", "quadrant"])?;
    for p in points {
        let q = quadrant_of.get(&p.id).map_or("", |q| q.as_str());
        w.write_record([p.id.as_str(), &p.x.to_string(), &p.y.to_string(), q])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantDistance {
    pub quadrant: Quadrant,
    pub mean_distance: f64,
    pub n: usize,
}

/// Distances to the perpendicular bisector of the blue and yellow centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub blue_centroid: (f64, f64),
    pub yellow_centroid: (f64, f64),
    /// Quadrants with at least one point, in [`Quadrant::ALL`] order.
    pub rows: Vec<QuadrantDistance>,
}

impl BoundaryReport {
    pub fn row(&self, quadrant: Quadrant) -> Option<&QuadrantDistance> {
        self.rows.iter().find(|r| r.quadrant == quadrant)
    }

    /// Mean distance over the union of the given quadrants.
    pub fn pooled_mean(&self, quadrants: &[Quadrant]) -> Option<f64> {
        let (sum, n) = self
            .rows
            .iter()
            .filter(|r| quadrants.contains(&r.quadrant))
            .fold((0.0, 0), |(s, n), r| (s + r.mean_distance * r.n as f64, n + r.n));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Mean absolute distance per quadrant to the blue/yellow decision line.
///
/// `subset`, when given, restricts every quadrant (anchors included) to
/// those ids, e.g. one gold label.
pub fn boundary_proximity(
    points: &[Point2],
    quadrant_of: &HashMap<String, Quadrant>,
    subset: Option<&HashSet<String>>,
) -> Result<BoundaryReport, ProjectionError> {
    let mut by_q: BTreeMap<Quadrant, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        if subset.is_some_and(|s| !s.contains(&p.id)) {
            continue;
        }
        if let Some(&q) = quadrant_of.get(&p.id) {
            by_q.entry(q).or_default().push((p.x, p.y));
        }
    }
    let count = |q| by_q.get(&q).map_or(0, Vec::len);
    let (nb, ny) = (count(Quadrant::Blue), count(Quadrant::Yellow));
    if nb < 2 || ny < 2 {
        return Err(ProjectionError::TooFewAnchors { blue: nb, yellow: ny });
    }
    let centroid = |q| {
        let pts = &by_q[&q];
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        (sx / n, sy / n)
    };
    let (cb, cy) = (centroid(Quadrant::Blue), centroid(Quadrant::Yellow));
    let (dx, dy) = (cy.0 - cb.0, cy.1 - cb.1);
    let sep = dx.hypot(dy);
    let extent = by_q
        .values()
        .flatten()
        .fold(0.0f64, |m, (x, y)| m.max(x.abs()).max(y.abs()));
    if sep <= 1e-12 * extent.max(1.0) {
        return Err(ProjectionError::DegenerateCentroids);
    }
    let (ux, uy) = (dx / sep, dy / sep);
    let (mx, my) = ((cb.0 + cy.0) / 2.0, (cb.1 + cy.1) / 2.0);
    let rows = Quadrant::ALL
        .into_iter()
        .filter_map(|q| {
            let pts = by_q.get(&q)?;
            let total: f64 = pts.iter().map(|(x, y)| ((x - mx) * ux + (y - my) * uy).abs()).sum();
            Some(QuadrantDistance {
                quadrant: q,
                mean_distance: total / pts.len() as f64,
                n: pts.len(),
            })
        })
        .collect();
    Ok(BoundaryReport {
        blue_centroid: cb,
        yellow_centroid: cy,
        rows,
    })
}
