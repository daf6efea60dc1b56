//! Minimal SVG line plots.

use std::fmt::Write;

use crate::table::{Cell, Table};

const W: f64 = 720.0;
const H: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// A vertical dashed line with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub label: String,
    pub x: f64,
}

pub fn branch_color(label: &str) -> &'static str {
    match label {
        "i" => "#1f77b4",
        "ii" => "#2ca02c",
        "iii" => "#000000",
        "iv" => "#ff7f0e",
        "v" => "#9467bd",
        "vi" => "#d62728",
        _ => "#555555",
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Renders the series; non-finite `y` values are clipped to the top edge.
pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series], markers: &[Marker]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|y| y.is_finite());
    let (mut y0, mut y1) = ys.fold((0.0f64, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !x0.is_finite() || x0 == x1 {
        x0 = if x0.is_finite() { x0 - 1.0 } else { 0.0 };
        x1 = x0 + 2.0;
    }
    if !y1.is_finite() || y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += 0.08 * (y1 - y0);
    y0 = y0.min(0.0);

    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| {
        let y = if y.is_finite() { y.min(y1) } else { y1 };
        TOP + (y1 - y) / (y1 - y0) * ph
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));

    for t in nice_ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#eeeeee"/>"##, H - BOTTOM);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, tick_label(t));
    }
    for t in nice_ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eeeeee"/>"##, W - RIGHT);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(t));
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for m in markers.iter().filter(|m| m.x >= x0 && m.x <= x1) {
        let x = px(m.x);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
            H - BOTTOM
        );
        let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" fill="#444444">{}</text>"##, x + 3.0, TOP + 14.0, escape(&m.label));
    }

    for s in series {
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if pts.len() == 1 {
            let (x, y) = s.points[0];
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, px(x), py(y), s.color);
        } else {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="2"{dash} points="{}"><title>{}</title></polyline>"#,
                s.color,
                pts.join(" "),
                escape(&s.name)
            );
        }
    }

    let mut ly = TOP + 14.0;
    for s in series.iter().filter(|s| !s.name.is_empty()) {
        let lx = W - RIGHT - 130.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="{}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0, s.color);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly:.2}">{}</text>"#, lx + 26.0, escape(&s.name));
        ly += 16.0;
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One series per run of consecutive rows sharing a branch label, so each
/// piece of the rate function gets its own color. Adjacent finite pieces
/// share their joining point.
pub fn rate_series(table: &Table) -> Vec<Series> {
    let xs = table.column("x").unwrap_or_default();
    let vs = table.column("value").unwrap_or_default();
    let j = table.header.iter().position(|h| *h == "branch");
    let mut out: Vec<Series> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let label = match j.map(|j| &row[j]) {
            Some(Cell::Text(s)) => s.clone(),
            _ => String::new(),
        };
        let p = (xs[i], vs[i]);
        if labels.last() == Some(&label) {
            out.last_mut().expect("run exists").points.push(p);
            continue;
        }
        let mut points = Vec::new();
        if let Some(prev) = out.last().and_then(|s| s.points.last()) {
            if prev.1.is_finite() && p.1.is_finite() {
                points.push(*prev);
            }
        }
        points.push(p);
        let name = if labels.contains(&label) { String::new() } else { format!("branch ({label})") };
        labels.push(label.clone());
        out.push(Series { name, color: branch_color(&label), points, dashed: false });
    }
    out
}
