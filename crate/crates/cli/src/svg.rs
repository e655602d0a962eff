//! A small deterministic SVG line-chart writer.
//!
//! Fixed viewbox, panels laid out left to right, straight polylines and
//! optional circle markers. Coordinates are printed with two decimals so
//! the same input always gives the same bytes.

use std::fmt::Write;

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 360.0;
const PAD: f64 = 40.0;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub markers: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

impl Panel {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders panels side by side into one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.0} {PANEL_H:.0}" width="{width:.0}" height="{PANEL_H:.0}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width:.0}" height="{PANEL_H:.0}" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        let left = i as f64 * PANEL_W;
        let (x0, x1, y0, y1) = panel.bounds();
        let (pw, ph) = (PANEL_W - 2.0 * PAD, PANEL_H - 2.0 * PAD);
        let sx = |x: f64| left + PAD + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| PAD + (y1 - y) / (y1 - y0) * ph;
        let _ = writeln!(out, r#"<g id="panel{i}">"#);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{PAD:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
            left + PAD
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
            left + PANEL_W / 2.0,
            PAD * 0.6,
            escape(&panel.title)
        );
        for (v, anchor, y) in [(y0, "end", sy(y0)), (y1, "end", sy(y1))] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{y:.2}" font-size="10" text-anchor="{anchor}">{v:.3}</text>"#,
                left + PAD - 4.0
            );
        }
        for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{v:.2}</text>"#,
                PANEL_H - PAD + 14.0
            );
        }
        if y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
                sx(x0),
                sy(0.0),
                sx(x1),
                sy(0.0)
            );
        }
        for s in &panel.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                s.color,
                pts.join(" "),
                escape(&s.label)
            );
            if s.markers {
                let step = (s.points.len() / 16).max(1);
                for &(x, y) in s.points.iter().step_by(step).filter(|(x, y)| x.is_finite() && y.is_finite()) {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="none" stroke="{}"/>"#,
                        sx(x),
                        sy(y),
                        s.color
                    );
                }
            }
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
