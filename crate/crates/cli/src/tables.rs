//! CSV and fixed-width text renderings of the matrix, t-test and kappa tables.

use std::collections::BTreeMap;

use mmdl_core::disagreement::DisagreementMatrix;
use mmdl_core::stats::{FeatureComparison, KappaTable};
use mmdl_core::{Pass, Quadrant};

/// How the Direction column names the larger group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionStyle {
    /// `μ_blue > μ_red`, used for prosodic features.
    Mu,
    /// `blue > red`, used for action units.
    Plain,
}

/// One rendered cell group of a stats row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCell {
    pub p_value: Option<f64>,
    pub direction: String,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub feature: String,
    /// Aligned with the `pairs` the table was built for.
    pub cells: Vec<PairCell>,
}

/// `<0.0001` below the four-decimal display floor.
pub fn format_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => "<0.0001".to_string(),
        Some(p) => format!("{p:.4}"),
        None => "NA".to_string(),
    }
}

fn format_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"))
}

/// Regroups per-(feature, pair) results into one row per feature, ordered by
/// the first pair's p-value with untestable features last.
pub fn stats_rows(
    comparisons: &[FeatureComparison],
    pairs: &[(Quadrant, Quadrant)],
    style: DirectionStyle,
) -> Vec<StatsRow> {
    let mut by_feature: BTreeMap<&str, Vec<Option<&FeatureComparison>>> = BTreeMap::new();
    for c in comparisons {
        let Some(slot) = pairs.iter().position(|p| *p == c.pair) else {
            continue;
        };
        by_feature.entry(c.display_name.as_str()).or_insert_with(|| vec![None; pairs.len()])[slot] = Some(c);
    }
    let mut rows: Vec<StatsRow> = by_feature
        .into_iter()
        .map(|(feature, cells)| StatsRow {
            feature: feature.to_string(),
            cells: cells
                .into_iter()
                .map(|c| match c.map(|c| (c, &c.result)) {
                    Some((c, Ok(r))) => PairCell {
                        p_value: Some(r.p_value),
                        direction: match style {
                            DirectionStyle::Mu => r.direction_mu(),
                            DirectionStyle::Plain => r.direction_plain(),
                        },
                        significant: c.significant(),
                    },
                    _ => PairCell {
                        p_value: None,
                        direction: String::new(),
                        significant: false,
                    },
                })
                .collect(),
        })
        .collect();
    let key = |r: &StatsRow| r.cells.first().and_then(|c| c.p_value).unwrap_or(f64::INFINITY);
    rows.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| a.feature.cmp(&b.feature)));
    rows
}

fn stats_header(first: &str, pairs: &[(Quadrant, Quadrant)]) -> Vec<String> {
    let mut header = vec![first.to_string()];
    for (a, b) in pairs {
        let tag = format!("{} vs {}", a.title(), b.title());
        header.push(format!("p ({tag})"));
        header.push(format!("Direction ({tag})"));
        header.push(format!("significant ({tag})"));
    }
    header
}

fn stats_cells(row: &StatsRow) -> Vec<String> {
    let mut cells = vec![row.feature.clone()];
    for c in &row.cells {
        cells.push(format_p(c.p_value));
        cells.push(c.direction.clone());
        cells.push(c.significant.to_string());
    }
    cells
}

/// `first` names the feature column (`Feature` or `AU`).
pub fn stats_csv(first: &str, rows: &[StatsRow], pairs: &[(Quadrant, Quadrant)]) -> Vec<u8> {
    let mut body = vec![stats_header(first, pairs)];
    body.extend(rows.iter().map(stats_cells));
    csv_bytes(&body)
}

/// Significant p-values are marked with `*`.
pub fn stats_text(first: &str, rows: &[StatsRow], pairs: &[(Quadrant, Quadrant)]) -> String {
    let mut header = vec![first.to_string()];
    for (a, b) in pairs {
        header.push(format!("p ({} vs {})", a.title(), b.title()));
        header.push("Direction".to_string());
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.feature.clone()];
            for c in &r.cells {
                let star = if c.significant { "*" } else { "" };
                cells.push(format!("{}{star}", format_p(c.p_value)));
                cells.push(c.direction.clone());
            }
            cells
        })
        .collect();
    text_table(&header, &body)
}

pub const KAPPA_HEADER: [&str; 4] = ["Quadrant", "Unimodal Judgment", "Multimodal Judgment", "Δ"];

fn kappa_body(table: &KappaTable) -> Vec<Vec<String>> {
    Quadrant::TABLE_ORDER
        .iter()
        .map(|&q| {
            vec![
                q.title().to_string(),
                format_opt(table.kappa(q, Pass::Unimodal)),
                format_opt(table.kappa(q, Pass::Multimodal)),
                format_opt(table.delta(q)),
            ]
        })
        .collect()
}

pub fn kappa_csv(table: &KappaTable) -> Vec<u8> {
    let mut body = vec![KAPPA_HEADER.map(String::from).to_vec()];
    body.extend(kappa_body(table));
    csv_bytes(&body)
}

pub fn kappa_text(table: &KappaTable) -> String {
    text_table(&KAPPA_HEADER.map(String::from), &kappa_body(table))
}

pub fn matrix_csv(matrix: &DisagreementMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    matrix.write_csv(&mut buf).expect("writing to memory");
    buf
}

pub fn matrix_text(matrix: &DisagreementMatrix) -> String {
    let bytes = matrix_csv(matrix);
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = rdr.headers().expect("own output").iter().map(String::from).collect();
    let body: Vec<Vec<String>> = rdr
        .records()
        .map(|r| r.expect("own output").iter().map(String::from).collect())
        .collect();
    text_table(&header, &body)
}

fn csv_bytes(rows: &[Vec<String>]) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.write_record(r).expect("writing to memory");
    }
    wtr.into_inner().expect("writing to memory")
}

/// Left-aligned first column, right-aligned others, two-space gutters.
pub fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let width = |i: usize| {
        rows.iter()
            .filter_map(|r| r.get(i))
            .chain(std::iter::once(&header[i]))
            .map(|c| c.chars().count())
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..header.len()).map(width).collect();
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = widths[i].saturating_sub(c.chars().count());
            if i == 0 {
                out.push_str(c);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str("  ");
                out.push_str(&" ".repeat(pad));
                out.push_str(c);
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    let rule: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}
