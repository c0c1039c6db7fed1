use std::collections::BTreeMap;

use crate::data::{au_description, is_au_column, FeatureTable};
use crate::disagreement::Quadrant;
use crate::par::{self, Exec};

use super::ttest::{welch_ttest, TTestResult};
use super::StatsError;

/// Significance level for the `significant` flag. No multiple-comparison correction.
pub const ALPHA: f64 = 0.05;

/// Red vs blue and green vs blue: each disagreement quadrant against the
/// both-correct reference.
pub const DEFAULT_PAIRS: [(Quadrant, Quadrant); 2] =
    [(Quadrant::Red, Quadrant::Blue), (Quadrant::Green, Quadrant::Blue)];

/// One feature tested between one pair of quadrants.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureComparison {
    /// Column name as it appears in the feature table.
    pub feature: String,
    /// Name for reports (`AU04: Brow Lowerer` for action units).
    pub display_name: String,
    pub pair: (Quadrant, Quadrant),
    /// Per-feature failures (e.g. a constant column) do not abort the batch.
    pub result: Result<TTestResult, StatsError>,
}

impl FeatureComparison {
    pub fn p_value(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.p_value)
    }

    pub fn significant(&self) -> bool {
        self.p_value().is_some_and(|p| p < ALPHA)
    }
}

fn group_values(
    table: &FeatureTable,
    groups: &BTreeMap<Quadrant, Vec<String>>,
    quadrant: Quadrant,
) -> Result<Vec<usize>, StatsError> {
    let rows: Vec<usize> = groups
        .get(&quadrant)
        .map(|ids| ids.iter().filter_map(|id| table.row_of(id)).collect())
        .unwrap_or_default();
    if rows.is_empty() {
        return Err(StatsError::EmptyGroup(quadrant));
    }
    Ok(rows)
}

fn compare_columns(
    exec: Exec,
    table: &FeatureTable,
    groups: &BTreeMap<Quadrant, Vec<String>>,
    pairs: &[(Quadrant, Quadrant)],
    columns: &[String],
    display: fn(&str) -> String,
) -> Result<Vec<FeatureComparison>, StatsError> {
    for c in columns {
        if table.column(c).is_none() {
            return Err(StatsError::UnknownFeature(c.clone()));
        }
    }
    let mut jobs = Vec::with_capacity(pairs.len() * columns.len());
    for &(qa, qb) in pairs {
        let rows_a = group_values(table, groups, qa)?;
        let rows_b = group_values(table, groups, qb)?;
        for c in columns {
            jobs.push((qa, qb, c.as_str(), rows_a.clone(), rows_b.clone()));
        }
    }
    let mut out = par::map_slice(exec, &jobs, |(qa, qb, c, rows_a, rows_b)| {
        let col = table.column(c).expect("checked above");
        let a: Vec<f64> = rows_a.iter().map(|&r| col[r]).collect();
        let b: Vec<f64> = rows_b.iter().map(|&r| col[r]).collect();
        let result = welch_ttest(&a, &b).map(|mut r| {
            r.feature = c.to_string();
            r.group_a = qa.as_str().to_string();
            r.group_b = qb.as_str().to_string();
            r
        });
        FeatureComparison {
            feature: c.to_string(),
            display_name: display(c),
            pair: (*qa, *qb),
            result,
        }
    });
    // stable: ties keep pair-then-column order, failures go last
    out.sort_by(|x, y| match (x.p_value(), y.p_value()) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(out)
}

/// Welch tests of every selected column for every quadrant pair, sorted by p.
///
/// `columns = None` tests every column of the table. Ids present in a quadrant
/// but absent from the table are skipped.
pub fn group_compare(
    table: &FeatureTable,
    groups: &BTreeMap<Quadrant, Vec<String>>,
    pairs: &[(Quadrant, Quadrant)],
    columns: Option<&[String]>,
) -> Result<Vec<FeatureComparison>, StatsError> {
    group_compare_with(Exec::default(), table, groups, pairs, columns)
}

pub fn group_compare_with(
    exec: Exec,
    table: &FeatureTable,
    groups: &BTreeMap<Quadrant, Vec<String>>,
    pairs: &[(Quadrant, Quadrant)],
    columns: Option<&[String]>,
) -> Result<Vec<FeatureComparison>, StatsError> {
    let columns = columns.map_or_else(|| table.columns().to_vec(), <[String]>::to_vec);
    compare_columns(exec, table, groups, pairs, &columns, str::to_string)
}

/// [`group_compare`] over the action-unit columns only, with FACS names.
pub fn au_activation_compare(
    table: &FeatureTable,
    groups: &BTreeMap<Quadrant, Vec<String>>,
    pairs: &[(Quadrant, Quadrant)],
) -> Result<Vec<FeatureComparison>, StatsError> {
    au_activation_compare_with(Exec::default(), table, groups, pairs)
}

pub fn au_activation_compare_with(
    exec: Exec,
    table: &FeatureTable,
    groups: &BTreeMap<Quadrant, Vec<String>>,
    pairs: &[(Quadrant, Quadrant)],
) -> Result<Vec<FeatureComparison>, StatsError> {
    let columns: Vec<String> = table
        .columns()
        .iter()
        .filter(|c| is_au_column(c))
        .cloned()
        .collect();
    compare_columns(exec, table, groups, pairs, &columns, au_description)
}
