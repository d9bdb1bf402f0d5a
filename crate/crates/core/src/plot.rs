//! Minimal SVG output: per-axis trajectory plots and volume projections.

use std::fmt::Write as _;

use crate::lct::AlbedoVolume;

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 150.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One labelled polyline of `(frame, [x, y, z])` points.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(usize, [f64; 3])>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: String, points: Vec<(usize, [f64; 3])>, dashed: bool) -> Self {
        Series {
            label,
            points,
            dashed,
        }
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Three stacked panels, `x`, `y` and `z` against frame index. Truth series
/// are drawn dashed.
pub fn trajectory_svg(series: &[Series]) -> String {
    let width = PANEL_W + 2.0 * MARGIN + 120.0;
    let height = 3.0 * (PANEL_H + MARGIN) + MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (t0, t1) = range(
        series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0 as f64)),
    );
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let top = MARGIN + axis as f64 * (PANEL_H + MARGIN);
        let (v0, v1) = range(
            series
                .iter()
                .flat_map(|s| s.points.iter().map(move |p| p.1[axis])),
        );
        let px = |t: f64| MARGIN + (t - t0) / (t1 - t0) * PANEL_W;
        let py = |v: f64| top + PANEL_H - (v - v0) / (v1 - v0) * PANEL_H;
        writeln!(
            s,
            r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="8" y="{}">{name} (m)</text>"#,
            top + PANEL_H / 2.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v1:.3}</text>"#,
            MARGIN - 4.0,
            top + 10.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v0:.3}</text>"#,
            MARGIN - 4.0,
            top + PANEL_H
        )
        .unwrap();
        for (i, ser) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = ser
                .points
                .iter()
                .map(|(t, p)| format!("{:.2},{:.2}", px(*t as f64), py(p[axis])))
                .collect();
            let dash = if ser.dashed {
                r#" stroke-dasharray="5,3""#
            } else {
                ""
            };
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                pts.join(" ")
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}">frame</text>"#,
        MARGIN + PANEL_W / 2.0,
        height - 12.0
    )
    .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let color = COLORS[i % COLORS.len()];
        writeln!(
            s,
            r#"<text x="{}" y="{y}" fill="{color}">{}</text>"#,
            MARGIN + PANEL_W + 10.0,
            ser.label
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Maximum projections of a volume onto the `x-y` and `x-z` planes as
/// grayscale heatmaps, white at the maximum.
pub fn volume_svg(volume: &AlbedoVolume) -> String {
    let (nx, ny, nz) = volume.values.dim();
    let max = volume.values.iter().fold(0.0f64, |m, v| m.max(*v));
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let cell = (360.0 / nx.max(ny).max(nz) as f64).max(1.0);
    let panel = |a: usize, b: usize| (a as f64 * cell, b as f64 * cell);
    let (w1, h1) = panel(nx, ny);
    let (w2, h2) = panel(nx, nz);
    let width = w1 + w2 + 3.0 * MARGIN;
    let height = h1.max(h2) + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let mut heat = |x0: f64,
                    label: &str,
                    n0: usize,
                    n1: usize,
                    get: &dyn Fn(usize, usize) -> f64| {
        writeln!(s, r#"<text x="{x0}" y="{}">{label}</text>"#, MARGIN - 8.0).unwrap();
        for i in 0..n0 {
            for j in 0..n1 {
                let g = (255.0 * (get(i, j) * scale).clamp(0.0, 1.0)).round() as u8;
                writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g},{g},{g})"/>"#,
                    x0 + i as f64 * cell,
                    MARGIN + (n1 - 1 - j) as f64 * cell
                )
                .unwrap();
            }
        }
    };
    let v = &volume.values;
    heat(MARGIN, "max over z (x right, y up)", nx, ny, &|i, j| {
        (0..nz).fold(0.0f64, |m, k| m.max(v[[i, j, k]]))
    });
    heat(
        2.0 * MARGIN + w1,
        "max over y (x right, z up)",
        nx,
        nz,
        &|i, k| (0..ny).fold(0.0f64, |m, j| m.max(v[[i, j, k]])),
    );
    s.push_str("</svg>\n");
    s
}
