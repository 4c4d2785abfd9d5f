//! Minimal SVG 1.1 line plot of normalized curves.

use std::fmt::Write;

use super::compare::NormalizedCurve;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One polyline per curve over step (x) and normalized reward in [-1, 1] (y).
pub fn render_svg(curves: &[NormalizedCurve]) -> String {
    let max_step = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.step))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |step: u64| PAD + (W - 2.0 * PAD) * step as f64 / max_step;
    let y = |v: f64| PAD + (H - 2.0 * PAD) * (1.0 - v) / 2.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#888" stroke-width="1"/>"##,
        y0 = y(0.0),
        x1 = W - PAD
    );
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y1}" stroke="#888" stroke-width="1"/>"##,
        y1 = H - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">step</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="12">normalized reward</text>"#, PAD - 20.0);
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.normalized_reward)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 15.0 * i as f64,
            escape(&c.run_id)
        );
    }
    s.push_str("</svg>\n");
    s
}
