use std::collections::HashMap;

use mmdl_cli::svg::{region, render_scatter_svg};
use mmdl_cli::tables::{format_p, kappa_csv, kappa_text, matrix_csv, stats_csv, stats_rows, DirectionStyle};
use mmdl_core::disagreement::{disagreement_matrix, ScatterData, ScatterPoint};
use mmdl_core::stats::{group_compare, kappa_by_quadrant, DEFAULT_PAIRS};
use mmdl_core::{AnnotationRecord, FeatureTable, Label, Modality, Pass, PredictionRecord, Quadrant};

fn scatter(points: Vec<ScatterPoint>) -> ScatterData {
    ScatterData {
        modality: Modality::Audio,
        points,
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        gridlines: vec![0.5],
    }
}

fn attr(node: roxmltree::Node, name: &str) -> f64 {
    node.attribute(name).unwrap().parse().unwrap()
}

#[test]
fn empty_scatter_has_axes_and_gridlines_only() {
    let svg = render_scatter_svg(&scatter(vec![]));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("version"), Some("1.1"));
    assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 0);
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("line")).collect();
    assert_eq!(lines.len(), 2);
    // both gridlines cross the middle of the plot
    let x = lines.iter().find(|l| l.attribute("data-axis") == Some("x")).unwrap();
    let y = lines.iter().find(|l| l.attribute("data-axis") == Some("y")).unwrap();
    assert_eq!(attr(*x, "x1"), attr(*x, "x2"));
    assert_eq!(attr(*y, "y1"), attr(*y, "y2"));
    assert_eq!(attr(*x, "x1"), 240.0);
    assert_eq!(attr(*y, "y1"), 240.0);
    assert_eq!(doc.descendants().filter(|n| n.attribute("data-quadrant").is_some()).count(), 4);
}

#[test]
fn each_marker_sits_in_its_tinted_region() {
    let pts = [
        (Quadrant::Red, 0.8, 0.2),
        (Quadrant::Green, 0.3, 0.9),
        (Quadrant::Blue, 0.7, 0.6),
        (Quadrant::Yellow, 0.1, 0.4),
    ];
    let data = scatter(
        pts.iter()
            .map(|&(quadrant, x, y)| ScatterPoint { id: format!("<{quadrant}&>"), x, y, quadrant })
            .collect(),
    );
    let svg = render_scatter_svg(&data);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let regions: HashMap<&str, roxmltree::Node> = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("data-quadrant").is_some())
        .map(|n| (n.attribute("data-quadrant").unwrap(), n))
        .collect();
    let markers: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("circle")).collect();
    assert_eq!(markers.len(), 4);
    for m in markers {
        let q = m.attribute("data-quadrant").unwrap();
        let r = regions[q];
        let (cx, cy) = (attr(m, "cx"), attr(m, "cy"));
        let (x0, y0) = (attr(r, "x"), attr(r, "y"));
        assert!(cx > x0 && cx < x0 + attr(r, "width"), "{q}: cx {cx}");
        assert!(cy > y0 && cy < y0 + attr(r, "height"), "{q}: cy {cy}");
        assert_eq!(m.attribute("data-id").unwrap(), format!("<{q}&>"));
    }
    // region geometry in data space: red is unimodal-right, multimodal-low
    assert_eq!(region(Quadrant::Red), (0.5, 1.0, 0.0, 0.5));
}

#[test]
fn matrix_header_lists_unimodal_models() {
    let ids = ["a", "b", "c", "d"];
    let preds = |ps: [f64; 4]| -> Vec<PredictionRecord> {
        ids.iter().zip(ps).map(|(id, p)| PredictionRecord::new(*id, p)).collect()
    };
    let models = [
        (mmdl_core::disagreement::ModelKey::Text, preds([0.9, 0.9, 0.1, 0.1])),
        (mmdl_core::disagreement::ModelKey::Audio, preds([0.9, 0.1, 0.1, 0.1])),
        (mmdl_core::disagreement::ModelKey::Video, preds([0.9, 0.9, 0.9, 0.1])),
        (mmdl_core::disagreement::ModelKey::Full, preds([0.1, 0.1, 0.1, 0.1])),
    ]
    .into_iter()
    .collect();
    let csv = String::from_utf8(matrix_csv(&disagreement_matrix(&models).unwrap())).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Modality,Text,Audio,Video");
    assert_eq!(lines[1], "Text,—,0.250,0.250");
    assert_eq!(lines[4], "Full,0.500,0.250,0.750");
}

#[test]
fn kappa_table_columns_and_order() {
    // red and blue tasks, both annotators agreeing in both rounds except one
    // multimodal disagreement in blue
    let tasks = [("t0", Quadrant::Red), ("t1", Quadrant::Red), ("t2", Quadrant::Blue), ("t3", Quadrant::Blue)];
    let quadrant_of: HashMap<String, Quadrant> = tasks.iter().map(|(t, q)| (t.to_string(), *q)).collect();
    let mut records = Vec::new();
    for (i, (t, _)) in tasks.iter().enumerate() {
        for who in ["x", "y"] {
            for pass in [Pass::Unimodal, Pass::Multimodal] {
                let mut j = if i % 2 == 0 { Label::Empathetic } else { Label::Neutral };
                if *t == "t3" && who == "y" && pass == Pass::Multimodal {
                    j = Label::Empathetic;
                }
                records.push(AnnotationRecord {
                    task_id: t.to_string(),
                    annotator: who.into(),
                    pass,
                    judgment: j,
                    ts_iso8601: String::new(),
                });
            }
        }
    }
    let table = kappa_by_quadrant(&records, &quadrant_of).unwrap();
    let csv = String::from_utf8(kappa_csv(&table)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Quadrant,Unimodal Judgment,Multimodal Judgment,Δ");
    assert_eq!(lines[1], "Red,1.000,1.000,0.000");
    // blue multimodal: one agreement on e/e, one split → κ = 0
    assert_eq!(lines[2], "Blue,1.000,0.000,-1.000");
    assert_eq!(lines[3], "Yellow,NA,NA,NA");
    assert_eq!(lines[4], "Green,NA,NA,NA");
    assert!(kappa_text(&table).starts_with("Quadrant  Unimodal Judgment"));
}

#[test]
fn stats_tables() {
    assert_eq!(
        String::from_utf8(stats_csv("Feature", &[], &DEFAULT_PAIRS)).unwrap(),
        "Feature,p (Red vs Blue),Direction (Red vs Blue),significant (Red vs Blue),\
         p (Green vs Blue),Direction (Green vs Blue),significant (Green vs Blue)\n"
    );
    assert_eq!(format_p(Some(0.00004)), "<0.0001");
    assert_eq!(format_p(Some(0.01744)), "0.0174");
    assert_eq!(format_p(None), "NA");

    // pitch separates red from blue; hnr is constant and untestable
    let mut ids = Vec::new();
    let mut groups = std::collections::BTreeMap::new();
    let (mut pitch, mut hnr) = (Vec::new(), Vec::new());
    for (q, base) in [(Quadrant::Red, 100.0), (Quadrant::Green, 150.0), (Quadrant::Blue, 150.0)] {
        for i in 0..6 {
            let id = format!("{q}{i}");
            groups.entry(q).or_insert_with(Vec::new).push(id.clone());
            ids.push(id);
            pitch.push(base + i as f64);
            hnr.push(1.0);
        }
    }
    let table = FeatureTable::new(ids, vec!["Mean Pitch".into(), "HNR".into()], vec![pitch, hnr]).unwrap();
    let comparisons = group_compare(&table, &groups, &DEFAULT_PAIRS, None).unwrap();
    let rows = stats_rows(&comparisons, &DEFAULT_PAIRS, DirectionStyle::Mu);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].feature, "Mean Pitch");
    assert!(rows[0].cells[0].significant);
    assert_eq!(rows[0].cells[0].direction, "μ_blue > μ_red");
    assert!(!rows[0].cells[1].significant);
    assert_eq!(rows[1].feature, "HNR");
    assert_eq!(rows[1].cells[0].p_value, None);
    let csv = String::from_utf8(stats_csv("Feature", &rows, &DEFAULT_PAIRS)).unwrap();
    assert_eq!(csv.lines().nth(2).unwrap(), "HNR,NA,,false,NA,,false");
}
