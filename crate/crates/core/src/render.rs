//! SVG pole-zero maps.
//!
//! Poles are drawn as ×, zeros as ○, the right half plane is shaded. Only
//! the upper half plane (positive frequencies) is shown unless
//! `full_plane` is set. Output is a self-contained SVG document.

use std::fmt::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::staban::StabilityVerdict;
use crate::sweeps::{PoleCloud, PoleTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisUnit {
    /// Plot `s` as is.
    RadPerSec,
    /// Plot `s / 2π`.
    Hz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleMapStyle {
    pub width: u32,
    pub height: u32,
    pub axis: AxisUnit,
    pub full_plane: bool,
    pub shade_rhp: bool,
}

impl Default for PoleMapStyle {
    fn default() -> Self {
        PoleMapStyle { width: 640, height: 480, axis: AxisUnit::Hz, full_plane: false, shade_rhp: true }
    }
}

/// Everything a map can show. Build it from a report with the `from_*`
/// constructors or fill it directly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoleMapData {
    pub title: String,
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    /// Pole loci; `None` entries break the line.
    pub tracks: Vec<Vec<Option<Complex64>>>,
    pub cloud: Vec<Complex64>,
}

impl PoleMapData {
    /// Surviving poles and the zeros of every port.
    pub fn from_verdict(v: &StabilityVerdict) -> Self {
        let zeros = (0..v.model.ports.len()).filter_map(|n| v.model.zeros(n).ok()).flatten().collect();
        PoleMapData {
            title: format!("order {} ({})", v.selected_order, if v.stable { "stable" } else { "unstable" }),
            poles: v.poles.iter().map(|p| p.value).collect(),
            zeros,
            ..Default::default()
        }
    }

    /// Tracks plus the poles at the last parameter value.
    pub fn from_trajectory(t: &PoleTrajectory) -> Self {
        PoleMapData {
            title: format!("locus vs {}", t.param_name),
            poles: t.tracks.iter().filter_map(|tr| tr.poles.last().copied().flatten()).collect(),
            tracks: t.tracks.iter().map(|tr| tr.poles.clone()).collect(),
            ..Default::default()
        }
    }

    pub fn from_cloud(c: &PoleCloud) -> Self {
        PoleMapData {
            title: format!("{} trials, seed {}", c.trials, c.seed),
            cloud: c.points.iter().map(|p| p.pole).collect(),
            ..Default::default()
        }
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    top: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * self.w
    }
    fn py(&self, y: f64) -> f64 {
        self.top + (self.y1 - y) / (self.y1 - self.y0) * self.h
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Render the map as an SVG document.
pub fn render_pole_map(data: &PoleMapData, style: &PoleMapStyle) -> String {
    let unit = match style.axis {
        AxisUnit::RadPerSec => 1.0,
        AxisUnit::Hz => 1.0 / (2.0 * std::f64::consts::PI),
    };
    let keep = |p: &Complex64| style.full_plane || p.im >= 0.0;
    let map = |p: &Complex64| Complex64::new(p.re * unit, p.im * unit);
    let poles: Vec<Complex64> = data.poles.iter().filter(|p| keep(p)).map(map).collect();
    let zeros: Vec<Complex64> = data.zeros.iter().filter(|p| keep(p)).map(map).collect();
    let cloud: Vec<Complex64> = data.cloud.iter().filter(|p| keep(p)).map(map).collect();
    let tracks: Vec<Vec<Option<Complex64>>> = data
        .tracks
        .iter()
        .map(|t| t.iter().map(|p| p.filter(|p| keep(p)).map(|p| map(&p))).collect())
        .collect();

    let all: Vec<Complex64> = poles
        .iter()
        .chain(&zeros)
        .chain(&cloud)
        .copied()
        .chain(tracks.iter().flatten().flatten().copied())
        .collect();
    let (mut x0, mut x1, mut y1) = (0.0_f64, 0.0_f64, 0.0_f64);
    for p in &all {
        x0 = x0.min(p.re);
        x1 = x1.max(p.re);
        y1 = y1.max(p.im.abs());
    }
    if y1 == 0.0 {
        y1 = (x1 - x0).max(1.0);
    }
    // keep both half planes visible around the axis
    let span = (x1 - x0).max(0.05 * y1);
    x0 -= 0.1 * span;
    x1 += 0.1 * span;
    y1 *= 1.1;
    let y0 = if style.full_plane { -y1 } else { 0.0 };

    let (width, height) = (style.width.max(100) as f64, style.height.max(100) as f64);
    let f = Frame { x0, x1, y0, y1, left: 70.0, top: 30.0, w: width - 90.0, h: height - 80.0 };
    let unit_name = match style.axis {
        AxisUnit::RadPerSec => "rad/s",
        AxisUnit::Hz => "Hz",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = width,
        h = height
    );
    s.push_str(concat!(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\">",
        "<path d=\"M0,0 L10,5 L0,10 z\" fill=\"#1f4e9a\"/></marker></defs>\n"
    ));
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    if !data.title.is_empty() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="18" text-anchor="middle">{}</text>"#, width / 2.0, esc(&data.title));
    }
    let xa = f.px(0.0);
    if style.shade_rhp {
        let _ = writeln!(
            s,
            r##"<rect class="rhp" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#f3c4c4" fill-opacity="0.5"/>"##,
            xa,
            f.top,
            f.left + f.w - xa,
            f.h
        );
    }
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        f.left, f.top, f.w, f.h
    );
    let _ = writeln!(s, r#"<line class="axis" x1="{xa:.2}" y1="{:.2}" x2="{xa:.2}" y2="{:.2}" stroke="gray"/>"#, f.top, f.top + f.h);
    let ya = f.py(0.0);
    let _ = writeln!(s, r#"<line class="axis" x1="{:.2}" y1="{ya:.2}" x2="{:.2}" y2="{ya:.2}" stroke="gray"/>"#, f.left, f.left + f.w);
    for (v, anchor_x) in [(x0, f.left), (x1, f.left + f.w)] {
        let _ = writeln!(s, r#"<text x="{anchor_x:.2}" y="{:.2}" text-anchor="middle">{v:.3e}</text>"#, f.top + f.h + 14.0);
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3e}</text>"#, f.left - 4.0, f.py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Re(s) [{unit_name}]</text>"#, f.left + f.w / 2.0, height - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">Im(s) [{unit_name}]</text>"#,
        f.top + f.h / 2.0,
        f.top + f.h / 2.0
    );

    for p in &cloud {
        let _ = writeln!(
            s,
            r##"<circle class="cloud" cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f4e9a" fill-opacity="0.25"/>"##,
            f.px(p.re),
            f.py(p.im)
        );
    }
    for t in &tracks {
        for seg in t.split(|p| p.is_none()) {
            let pts: Vec<String> = seg.iter().flatten().map(|p| format!("{:.2},{:.2}", f.px(p.re), f.py(p.im))).collect();
            if pts.len() < 2 {
                continue;
            }
            let _ = writeln!(
                s,
                r##"<polyline class="locus" points="{}" fill="none" stroke="#1f4e9a" marker-end="url(#arrow)"/>"##,
                pts.join(" ")
            );
        }
    }
    for z in &zeros {
        let _ = writeln!(
            s,
            r##"<circle class="zero" cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="#0a7d32" stroke-width="1.5"/>"##,
            f.px(z.re),
            f.py(z.im)
        );
    }
    for p in &poles {
        let (x, y) = (f.px(p.re), f.py(p.im));
        let _ = writeln!(
            s,
            r##"<path class="pole" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#b00000" stroke-width="1.8"/>"##,
            x - 4.0,
            y - 4.0,
            x + 4.0,
            y + 4.0,
            x - 4.0,
            y + 4.0,
            x + 4.0,
            y - 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
