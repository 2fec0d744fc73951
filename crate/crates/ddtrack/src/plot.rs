//! Static figures: DD-map heatmaps (PNG) and line/bar charts (SVG).

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use ddtrack_core::ddmap::DdMap;
use image::{Rgb, RgbImage};

/// Anchor colours of a perceptually ordered dark-to-bright ramp.
const RAMP: [[f64; 3]; 5] = [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];

fn ramp(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - i as f64;
    let c = |j: usize| (RAMP[i][j] + f * (RAMP[i + 1][j] - RAMP[i][j])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Heatmap of `power_db` with `dynamic_range_db` below the peak mapped to
/// the bottom of the ramp. Delay runs down, Doppler to the right.
pub fn dd_heatmap(map: &DdMap, dynamic_range_db: f64) -> RgbImage {
    let peak = map.power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = peak - dynamic_range_db;
    RgbImage::from_fn(map.n_doppler as u32, map.n_delay as u32, |x, y| {
        let v = map.power_db[y as usize * map.n_doppler + x as usize];
        ramp((v - floor) / dynamic_range_db)
    })
}

pub fn save_heatmap(path: &Path, map: &DdMap) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    dd_heatmap(map, 60.0).save(path).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub colour: &'static str,
    pub dashed: bool,
    /// `None` breaks the line.
    pub points: Vec<(f64, Option<f64>)>,
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(title));
    s
}

fn axes(s: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x.0 + f * (x.1 - x.0), y.0 + f * (y.1 - y.0));
        let (px, py) = (x0 + f * (x1 - x0), y0 - f * (y0 - y1));
        let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, py + 4.0, tick(yv));
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{py}" x2="{x1}" y2="{py}" stroke="#ddd"/>"##);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 8.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(s: &mut String, entries: &[(&str, &str, bool)]) {
    for (i, (name, colour, dashed)) in entries.iter().enumerate() {
        let y = TOP + 12.0 + 18.0 * i as f64;
        let x = W - RIGHT + 10.0;
        let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"{dash}/>"#, x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(name));
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xb = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yb = bounds(series.iter().flat_map(|s| s.points.iter().filter_map(|p| p.1)));
    let map = |x: f64, y: f64| {
        (LEFT + (x - xb.0) / (xb.1 - xb.0) * (W - RIGHT - LEFT), H - BOTTOM - (y - yb.0) / (yb.1 - yb.0) * (H - BOTTOM - TOP))
    };
    let mut s = header(title);
    axes(&mut s, xb, yb, x_label, y_label);
    for se in series {
        let dash = if se.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |s: &mut String, run: &mut Vec<(f64, f64)>| {
            if run.len() == 1 {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, run[0].0, run[0].1, se.colour);
            } else if run.len() > 1 {
                let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ =
                    writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"{dash}/>"#, pts.join(" "), se.colour);
            }
            run.clear();
        };
        for &(x, y) in &se.points {
            match y {
                Some(y) => run.push(map(x, y)),
                None => flush(&mut s, &mut run),
            }
        }
        flush(&mut s, &mut run);
    }
    let entries: Vec<(&str, &str, bool)> = series.iter().map(|s| (s.name.as_str(), s.colour, s.dashed)).collect();
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: one group per category, one bar per named series.
/// Non-finite values are drawn as missing.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[(&str, &'static str, Vec<f64>)]) -> String {
    let top = series.iter().flat_map(|s| s.2.iter().copied()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let yb = (0.0, if top > 0.0 { top * 1.1 } else { 1.0 });
    let mut s = header(title);
    axes(&mut s, (0.0, categories.len() as f64), yb, "", y_label);
    let group_w = (W - RIGHT - LEFT) / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (g, cat) in categories.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, gx + group_w / 2.0, H - BOTTOM + 30.0, escape(cat));
        for (i, (_, colour, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(f64::NAN);
            if !v.is_finite() {
                continue;
            }
            let h = v / yb.1 * (H - BOTTOM - TOP);
            let x = gx + group_w * 0.1 + i as f64 * bar_w;
            let _ =
                writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{colour}"/>"#, H - BOTTOM - h, bar_w * 0.95);
        }
    }
    let entries: Vec<(&str, &str, bool)> = series.iter().map(|s| (s.0, s.1, false)).collect();
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}
