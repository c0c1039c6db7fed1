use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, Label, Pass};
use crate::disagreement::Quadrant;

use super::StatsError;

/// Cohen's kappa between two raters' labels.
///
/// Counts stay integral until the final division, so the result is exactly
/// symmetric in its arguments and exactly 1 for identical non-constant inputs.
pub fn cohen_kappa(a: &[Label], b: &[Label]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = a.len() as u64;
    let mut agree = 0u64;
    let mut ma = [0u64; 2];
    let mut mb = [0u64; 2];
    for (&x, &y) in a.iter().zip(b) {
        agree += u64::from(x == y);
        ma[x.index()] += 1;
        mb[y.index()] += 1;
    }
    let expected_num = ma[0] * mb[0] + ma[1] * mb[1];
    let nn = n * n;
    if expected_num == nn {
        return Err(StatsError::DegenerateMarginals);
    }
    // (p_o - p_e) / (1 - p_e) with both scaled by n²
    let num = (agree * n) as f64 - expected_num as f64;
    let den = nn as f64 - expected_num as f64;
    Ok(num / den)
}

/// Multimodal minus unimodal agreement.
pub fn kappa_delta(kappa_unimodal: f64, kappa_multimodal: f64) -> f64 {
    kappa_multimodal - kappa_unimodal
}

/// Agreement within one quadrant for one annotation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub quadrant: Quadrant,
    pub round: Pass,
    /// `None` when the cell is empty or its marginals are degenerate.
    pub kappa: Option<f64>,
    pub n_pairs: usize,
}

/// Eight cells (four quadrants by two rounds) in table row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTable {
    pub annotators: [String; 2],
    pub cells: Vec<KappaResult>,
    /// Tasks dropped because some annotator lacks one of the two passes.
    pub excluded: Vec<String>,
}

impl KappaTable {
    pub fn cell(&self, quadrant: Quadrant, round: Pass) -> &KappaResult {
        self.cells
            .iter()
            .find(|c| c.quadrant == quadrant && c.round == round)
            .expect("table holds every quadrant and round")
    }

    pub fn kappa(&self, quadrant: Quadrant, round: Pass) -> Option<f64> {
        self.cell(quadrant, round).kappa
    }

    pub fn delta(&self, quadrant: Quadrant) -> Option<f64> {
        let uni = self.kappa(quadrant, Pass::Unimodal)?;
        let multi = self.kappa(quadrant, Pass::Multimodal)?;
        Some(kappa_delta(uni, multi))
    }
}

/// Per-quadrant, per-round Cohen's kappa between exactly two annotators.
///
/// `quadrant_of` maps task ids to their quadrant. A task enters both rounds
/// only if both annotators judged it in both passes; other tasks are listed
/// in [`KappaTable::excluded`].
pub fn kappa_by_quadrant(
    records: &[AnnotationRecord],
    quadrant_of: &HashMap<String, Quadrant>,
) -> Result<KappaTable, StatsError> {
    let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator.as_str()).collect();
    if annotators.len() != 2 {
        return Err(StatsError::AnnotatorCount(annotators.len()));
    }
    let names: Vec<&str> = annotators.into_iter().collect();
    let slot = |a: &str| usize::from(a == names[1]);

    // task -> [annotator][pass]
    let mut judged: BTreeMap<&str, [[Option<Label>; 2]; 2]> = BTreeMap::new();
    for r in records {
        if !quadrant_of.contains_key(&r.task_id) {
            return Err(StatsError::UnknownTask(r.task_id.clone()));
        }
        let p = usize::from(u8::from(r.pass)) - 1;
        let cell = &mut judged.entry(&r.task_id).or_default()[slot(&r.annotator)][p];
        if cell.is_some() {
            return Err(StatsError::DuplicateJudgment {
                task_id: r.task_id.clone(),
                annotator: r.annotator.clone(),
                pass: r.pass.into(),
            });
        }
        *cell = Some(r.judgment);
    }

    let mut excluded = Vec::new();
    // (quadrant, pass) -> (labels of first annotator, labels of second)
    let mut pairs: HashMap<(Quadrant, usize), (Vec<Label>, Vec<Label>)> = HashMap::new();
    for (task, grid) in &judged {
        let complete = grid.iter().flatten().all(Option::is_some);
        if !complete {
            excluded.push(task.to_string());
            continue;
        }
        let q = quadrant_of[*task];
        for p in 0..2 {
            let entry = pairs.entry((q, p)).or_default();
            entry.0.push(grid[0][p].expect("complete"));
            entry.1.push(grid[1][p].expect("complete"));
        }
    }

    let mut cells = Vec::with_capacity(8);
    for q in Quadrant::TABLE_ORDER {
        for (p, round) in [Pass::Unimodal, Pass::Multimodal].into_iter().enumerate() {
            let (a, b) = pairs.remove(&(q, p)).unwrap_or_default();
            let kappa = match cohen_kappa(&a, &b) {
                Ok(k) => Some(k),
                Err(StatsError::EmptyInput | StatsError::DegenerateMarginals) => None,
                Err(e) => return Err(e),
            };
            cells.push(KappaResult {
                quadrant: q,
                round,
                kappa,
                n_pairs: a.len(),
            });
        }
    }
    Ok(KappaTable {
        annotators: [names[0].to_string(), names[1].to_string()],
        cells,
        excluded,
    })
}
