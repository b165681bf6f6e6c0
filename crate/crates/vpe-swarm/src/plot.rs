//! Minimal static SVG output: line charts for error/iteration curves and
//! swarm snapshots in the style of the localization figures (true positions,
//! estimates, error arrows, target outline).

use crate::error::Result;
use crate::vec2::Vec2;
use std::fmt::Write as _;
use std::path::Path;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
}

impl LineChart {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            log_y: false,
        }
    }

    pub fn with_series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn render(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (ml, mr, mt, mb) = (64.0, 16.0, 36.0, 48.0);
        let pw = w - ml - mr;
        let ph = h - mt - mb;

        let transform = |y: f64| if self.log_y { y.max(1e-300).log10() } else { y };
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                let y = transform(y);
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
            y_min = 0.0;
            y_max = 1.0;
        }
        if (x_max - x_min).abs() < 1e-300 {
            x_max = x_min + 1.0;
        }
        if (y_max - y_min).abs() < 1e-300 {
            y_max = y_min + 1.0;
        }
        let y_pad = 0.05 * (y_max - y_min);
        y_min -= y_pad;
        y_max += y_pad;

        let px = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
        let py = |y: f64| mt + ph - (transform(y) - y_min) / (y_max - y_min) * ph;
        let py_raw = |t: f64| mt + ph - (t - y_min) / (y_max - y_min) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(svg, r##"<rect width="{w}" height="{h}" fill="white"/>"##);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        // Axes and ticks.
        let _ = writeln!(
            svg,
            r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for i in 0..=4 {
            let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
            let x = px(fx);
            let _ = writeln!(
                svg,
                r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#ccc" stroke-width="0.5"/>"##,
                mt,
                mt + ph
            );
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                mt + ph + 16.0,
                format_tick(fx)
            );
            let ft = y_min + (y_max - y_min) * i as f64 / 4.0;
            let y = py_raw(ft);
            let label = if self.log_y {
                format!("1e{}", format_tick(ft))
            } else {
                format_tick(ft)
            };
            let _ = writeln!(
                svg,
                r##"<line x1="{ml}" y1="{y}" x2="{}" y2="{y}" stroke="#ccc" stroke-width="0.5"/>"##,
                ml + pw
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
                ml - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            ml + pw / 2.0,
            h - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        // Series.
        for (idx, s) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            );
            let ly = mt + 14.0 + 16.0 * idx as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                ml + pw - 130.0,
                ml + pw - 110.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                ml + pw - 104.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Swarm snapshot: true positions as triangles, estimates as circles with
/// error arrows pointing at the truth, and an optional target outline.
pub fn swarm_snapshot(
    title: &str,
    truth: &[Vec2],
    estimates: Option<&[Vec2]>,
    outline: Option<&[Vec2]>,
) -> String {
    let size = 560.0;
    let margin = 40.0;
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut extend = |p: &Vec2| {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    };
    truth.iter().for_each(&mut extend);
    if let Some(est) = estimates {
        est.iter().for_each(&mut extend);
    }
    if let Some(poly) = outline {
        poly.iter().for_each(&mut extend);
    }
    if !min.x.is_finite() {
        min = Vec2::new(-1.0, -1.0);
        max = Vec2::new(1.0, 1.0);
    }
    let span = (max.x - min.x).max(max.y - min.y).max(1e-9);
    let scale = (size - 2.0 * margin) / span;
    let cx = 0.5 * (min.x + max.x);
    let cy = 0.5 * (min.y + max.y);
    let sx = |p: Vec2| size / 2.0 + (p.x - cx) * scale;
    let sy = |p: Vec2| size / 2.0 - (p.y - cy) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r##"<rect width="{size}" height="{size}" fill="white"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        size / 2.0,
        escape(title)
    );
    if let Some(poly) = outline {
        let mut d = String::new();
        for (i, p) in poly.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if i == 0 { "M" } else { "L" },
                sx(*p),
                sy(*p)
            );
        }
        d.push('Z');
        let _ = writeln!(
            svg,
            r##"<path d="{d}" fill="none" stroke="#555" stroke-width="1.5" stroke-dasharray="6 4"/>"##
        );
    }
    if let Some(est) = estimates {
        for (t, e) in truth.iter().zip(est) {
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1f77b4" stroke-width="1"/>"##,
                sx(*e),
                sy(*e),
                sx(*t),
                sy(*t)
            );
        }
    }
    for t in truth {
        let (x, y) = (sx(*t), sy(*t));
        let _ = writeln!(
            svg,
            r##"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="#2ca02c"/>"##,
            x,
            y - 4.0,
            x - 3.5,
            y + 3.0,
            x + 3.5,
            y + 3.0
        );
    }
    if let Some(est) = estimates {
        for e in est {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#ffbf00" fill-opacity="0.85" stroke="#806000" stroke-width="0.5"/>"##,
                sx(*e),
                sy(*e)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn save_snapshot(
    path: &Path,
    title: &str,
    truth: &[Vec2],
    estimates: Option<&[Vec2]>,
    outline: Option<&[Vec2]>,
) -> Result<()> {
    std::fs::write(path, swarm_snapshot(title, truth, estimates, outline))?;
    Ok(())
}
