//! Minimal SVG charts: scatter clouds, line plots and quartile boxes.

use std::fmt::Write as _;

use crate::stats::Summary;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const BLUE: &str = "#1f77b4";
pub const RED: &str = "#d62728";
pub const GREEN: &str = "#2ca02c";
pub const ORANGE: &str = "#ff7f0e";
pub const PURPLE: &str = "#9467bd";
pub const BROWN: &str = "#8c564b";
pub const PALETTE: [&str; 6] = [BLUE, RED, GREEN, ORANGE, PURPLE, BROWN];

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterSeries {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSeries {
    pub label: String,
    pub color: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxGroup {
    pub label: String,
    pub color: String,
    pub stats: Summary,
}

/// Affine map from data ranges onto the plotting area.
#[derive(Clone, Copy, Debug)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new((x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> Self {
        let widen = |a: f64, b: f64| {
            if (b - a).abs() < 1e-12 {
                let pad = a.abs().max(1.0) * 0.5;
                (a - pad, b + pad)
            } else {
                (a, b)
            }
        };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<(f64, f64)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .unwrap_or((0.0, 1.0))
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Roughly `n` round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) || n == 0 {
        return vec![lo];
    }
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

/// Frame, ticks and axis labels. `ylabel` maps tick values to text.
fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, ytext: &dyn Fn(f64) -> String, yticks: &[f64]) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for x in nice_ticks(f.x0, f.x1, 6) {
        let px = f.px(x);
        let _ = writeln!(out, r#"<line x1="{px:.1}" y1="{b}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 18.0, fmt_tick(x));
    }
    for &y in yticks {
        let py = f.py(y);
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{py:.1}" x2="{l}" y2="{py:.1}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 8.0, py + 4.0, ytext(y));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let _ = writeln!(out, r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 15.0, escape(label));
    }
}

/// Point clouds on shared axes.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, series: &[ScatterSeries]) -> String {
    let xs = padded(range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))));
    let ys = padded(range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
    let f = Frame::new(xs, ys);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, &|v| fmt_tick(v), &nice_ticks(f.y0, f.y1, 6));
    for s in series {
        let _ = writeln!(out, r#"<g fill="{}" fill-opacity="0.6">"#, s.color);
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, f.px(x), f.py(y));
        }
        out.push_str("</g>\n");
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Polylines over shared axes; non-finite points break the line.
pub fn line_svg(title: &str, xlabel: &str, ylabel: &str, series: &[LineSeries]) -> String {
    let xs = range(series.iter().flat_map(|s| s.xs.iter().copied()));
    let ys = padded(range(series.iter().flat_map(|s| s.ys.iter().copied())));
    let f = Frame::new(xs, ys);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, &|v| fmt_tick(v), &nice_ticks(f.y0, f.y1, 6));
    for s in series {
        let mut segments: Vec<Vec<String>> = vec![Vec::new()];
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            if x.is_finite() && y.is_finite() {
                segments.last_mut().expect("non-empty").push(format!("{:.2},{:.2}", f.px(x), f.py(y)));
            } else if !segments.last().expect("non-empty").is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| s.len() > 1) {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                s.color,
                seg.join(" ")
            );
        }
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color.as_str())).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Quartile boxes with min/max whiskers and a median bar, one per group.
/// `reference` draws a dashed horizontal line (e.g. the untrained baseline).
/// With `log_y` values are plotted on a log10 axis; non-positive values are
/// clipped to the smallest positive value present.
pub fn box_svg(title: &str, ylabel: &str, groups: &[BoxGroup], reference: Option<(&str, f64)>, log_y: bool) -> String {
    let mut vals: Vec<f64> = groups
        .iter()
        .flat_map(|g| [g.stats.min, g.stats.max, g.stats.q25, g.stats.q75, g.stats.median])
        .collect();
    if let Some((_, r)) = reference {
        vals.push(r);
    }
    let floor = vals.iter().copied().filter(|v| v.is_finite() && *v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-12 };
    let tf = |v: f64| if log_y { v.max(floor).log10() } else { v };
    let (lo, hi) = padded(range(vals.iter().map(|&v| tf(v))));
    let f = Frame::new((0.0, groups.len().max(1) as f64), (lo, hi));

    let mut out = String::new();
    header(&mut out, title);
    let yticks: Vec<f64> = if log_y {
        (lo.ceil() as i64..=hi.floor() as i64).map(|e| e as f64).collect()
    } else {
        nice_ticks(lo, hi, 6)
    };
    let ytext = |v: f64| if log_y { format!("1e{}", v as i64) } else { fmt_tick(v) };
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, r - l, b - t);
    for &y in &yticks {
        let py = f.py(y);
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{py:.1}" x2="{l}" y2="{py:.1}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 8.0, py + 4.0, ytext(y));
    }
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );

    for (i, g) in groups.iter().enumerate() {
        let cx = f.px(i as f64 + 0.5);
        let half = (f.px(1.0) - f.px(0.0)) * 0.3;
        let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 18.0, escape(&g.label));
        if g.stats.n == 0 {
            let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">all failed</text>"#, (t + b) / 2.0);
            continue;
        }
        let s = &g.stats;
        let (ymin, ymax) = (f.py(tf(s.min)), f.py(tf(s.max)));
        let (y25, y75, ymed) = (f.py(tf(s.q25)), f.py(tf(s.q75)), f.py(tf(s.median)));
        let _ = writeln!(out, r#"<line x1="{cx:.1}" y1="{ymin:.1}" x2="{cx:.1}" y2="{ymax:.1}" stroke="{}"/>"#, g.color);
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{y75:.1}" width="{:.1}" height="{:.1}" fill="{}" fill-opacity="0.35" stroke="{}"/>"#,
            cx - half,
            2.0 * half,
            (y25 - y75).max(0.5),
            g.color,
            g.color
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ymed:.1}" x2="{:.1}" y2="{ymed:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half
        );
        if s.failed > 0 {
            let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="10">{} failed</text>"#, b + 32.0, s.failed);
        }
    }
    if let Some((label, v)) = reference {
        let py = f.py(tf(v));
        let _ = writeln!(out, r#"<line x1="{l}" y1="{py:.1}" x2="{r}" y2="{py:.1}" stroke="gray" stroke-dasharray="6 4"/>"#);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="gray">{}</text>"#, r - 4.0, py - 4.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}
