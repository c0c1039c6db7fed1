//! Confidence-quadrant scatter plots as standalone SVG 1.1.

use std::fmt::Write;

use mmdl_core::disagreement::ScatterData;
use mmdl_core::Quadrant;

pub const SIZE: f64 = 480.0;
pub const MARGIN: f64 = 60.0;
pub const PLOT: f64 = SIZE - 2.0 * MARGIN;

/// Background tint and marker colour.
pub fn colours(q: Quadrant) -> (&'static str, &'static str) {
    match q {
        Quadrant::Red => ("#f4cccc", "#cc0000"),
        Quadrant::Green => ("#d9ead3", "#38761d"),
        Quadrant::Blue => ("#cfe2f3", "#1c4587"),
        Quadrant::Yellow => ("#fff2cc", "#bf9000"),
    }
}

/// Data-space rectangle `(x0, x1, y0, y1)` covered by a quadrant. x is the
/// unimodal confidence, y the multimodal one, both split at 0.5.
pub fn region(q: Quadrant) -> (f64, f64, f64, f64) {
    match q {
        Quadrant::Red => (0.5, 1.0, 0.0, 0.5),
        Quadrant::Green => (0.0, 0.5, 0.5, 1.0),
        Quadrant::Blue => (0.5, 1.0, 0.5, 1.0),
        Quadrant::Yellow => (0.0, 0.5, 0.0, 0.5),
    }
}

fn px(x: f64, range: (f64, f64)) -> f64 {
    MARGIN + (x - range.0) / (range.1 - range.0) * PLOT
}

fn py(y: f64, range: (f64, f64)) -> f64 {
    MARGIN + (1.0 - (y - range.0) / (range.1 - range.0)) * PLOT
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_scatter_svg(data: &ScatterData) -> String {
    let (xr, yr) = (data.x_range, data.y_range);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="regions">"#);
    for q in Quadrant::ALL {
        let (x0, x1, y0, y1) = region(q);
        let _ = writeln!(
            s,
            r#"<rect data-quadrant="{q}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            px(x0, xr),
            py(y1, yr),
            px(x1, xr) - px(x0, xr),
            py(y0, yr) - py(y1, yr),
            colours(q).0
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="axes" stroke="#444444" stroke-width="1" fill="none">"##);
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="gridlines" stroke="#666666" stroke-width="1" stroke-dasharray="4 3">"##);
    for &g in &data.gridlines {
        let (gx, gy) = (px(g, xr), py(g, yr));
        let _ = writeln!(
            s,
            r#"<line data-axis="x" x1="{gx:.2}" y1="{MARGIN}" x2="{gx:.2}" y2="{:.2}"/>"#,
            MARGIN + PLOT
        );
        let _ = writeln!(
            s,
            r#"<line data-axis="y" x1="{MARGIN}" y1="{gy:.2}" x2="{:.2}" y2="{gy:.2}"/>"#,
            MARGIN + PLOT
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="labels" font-family="sans-serif" font-size="12" fill="#222222">"##);
    for t in [xr.0, (xr.0 + xr.1) / 2.0, xr.1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            px(t, xr),
            MARGIN + PLOT + 16.0
        );
    }
    for t in [yr.0, (yr.0 + yr.1) / 2.0, yr.1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t}</text>"#,
            MARGIN - 6.0,
            py(t, yr) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} confidence in gold label (unimodal)</text>"#,
        MARGIN + PLOT / 2.0,
        SIZE - 18.0,
        data.modality
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">confidence in gold label (multimodal)</text>"#,
        MARGIN + PLOT / 2.0,
        MARGIN + PLOT / 2.0
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="markers" stroke="white" stroke-width="0.5">"#);
    for p in &data.points {
        let _ = writeln!(
            s,
            r#"<circle data-id="{}" data-quadrant="{}" cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            escape(&p.id),
            p.quadrant,
            px(p.x, xr),
            py(p.y, yr),
            colours(p.quadrant).1
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
