//! Bare-bones SVG line plots.

use std::fmt::Write;

use anyhow::{anyhow, Result};

use crate::table::Table;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = ["#000000", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One polyline per distinct combination of the `series` columns, in order of first appearance.
pub fn line_plot(title: &str, table: &Table, x: &str, y: &str, series: &[String]) -> Result<String> {
    let col = |name: &str| table.column(name).ok_or_else(|| anyhow!("plot column {name:?} missing"));
    let (xi, yi) = (col(x)?, col(y)?);
    let si = series.iter().map(|s| col(s)).collect::<Result<Vec<_>>>()?;

    let mut lines: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for row in &table.rows {
        let (Some(px), Some(py)) = (row[xi].as_f64(), row[yi].as_f64()) else { continue };
        let key = si.iter().zip(series).map(|(&i, n)| format!("{n}={}", row[i])).collect::<Vec<_>>().join(", ");
        match lines.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((px, py)),
            None => lines.push((key, vec![(px, py)])),
        }
    }

    let all = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in all {
        x0 = x0.min(a);
        x1 = x1.max(a);
        y0 = y0.min(b);
        y1 = y1.max(b);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<polyline points="{PAD},{PAD} {PAD},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for (v, anchor_x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(s, r#"<text x="{anchor_x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.3}</text>"#, H - PAD + 14.0);
    }
    for (v, anchor_y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{anchor_y:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#, PAD - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y)
    );
    for (k, (key, pts)) in lines.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let dash = if k < COLORS.len() { "" } else { r#" stroke-dasharray="4 3""# };
        let path: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.2},{:.2}", sx(a), sy(b))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"{dash}/>"#, path.join(" "));
        let ly = PAD + 12.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="9" fill="{color}" text-anchor="end">{}</text>"#,
            W - PAD,
            escape(key)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
