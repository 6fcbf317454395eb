//! Minimal SVG figures: the shortfall scatter and the average strategies.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::bundle::{fmt_num, BundleData, SCATTER_SVG, STRATEGIES_SVG};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
/// Plot-area inset in pixels, for axis labels.
const INSET: f64 = 48.0;
const MARGIN: f64 = 0.05;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn color(run: usize) -> &'static str {
    PALETTE[run % PALETTE.len()]
}

/// Affine map from data space to pixels, with a fractional margin on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    pub fn fit(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = x;
        for (a, b) in points {
            if !(a.is_finite() && b.is_finite()) {
                continue;
            }
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        if !x.0.is_finite() {
            return Err(Error::EmptyInput("figure with no finite points"));
        }
        let pad = |(lo, hi): (f64, f64)| {
            let span = if hi > lo {
                hi - lo
            } else {
                lo.abs().max(1.0) * 1e-3
            };
            (lo - MARGIN * span, hi + MARGIN * span)
        };
        Ok(Self {
            x: pad(x),
            y: pad(y),
        })
    }

    pub fn px(&self, x: f64) -> f64 {
        INSET + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * INSET)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - INSET - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * INSET)
    }
}

fn p(x: f64) -> String {
    format!("{x:.2}")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">
<title>{}</title>
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (INSET, WIDTH - INSET, INSET, HEIGHT - INSET);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for (x, anchor) in [(f.x.0, "start"), (f.x.1, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            p(f.px(x)),
            b + 14.0,
            fmt_tick(x)
        );
    }
    for y in [f.y.0, f.y.1] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            l - 4.0,
            p(f.py(y) + 4.0),
            fmt_tick(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0,
        escape(xlabel),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(x: f64) -> String {
    fmt_num((x * 1e4).round() / 1e4)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, extra: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{},{}", p(*x), p(*y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" {extra}/>"#,
        coords.join(" ")
    );
}

/// Scatter of per-iteration shortfall pairs with run centroids, the Nash and
/// Pareto points, quadrant lines through Nash, the collusive rectangle and
/// the sampled front.
pub fn scatter_svg(data: &BundleData) -> Result<String> {
    let nash = data.refs.nash_is;
    let pareto = data.refs.pareto_is;
    let f = Frame::fit(
        data.iterations
            .iter()
            .map(|i| (i.1, i.2))
            .chain(data.centroids.iter().map(|c| (c.1, c.2)))
            .chain(data.front.iter().map(|r| (r.1, r.2)))
            .chain([nash, pareto]),
    )?;
    let mut out = String::new();
    open(
        &mut out,
        &format!("Implementation shortfall: {}", data.refs.label),
    );
    axes(&mut out, &f, "IS agent 1", "IS agent 2");

    let _ = writeln!(out, r#"<g id="points" fill-opacity="0.35">"#);
    for (run, a, b) in &data.iterations {
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="1.5" fill="{}"/>"#,
            p(f.px(*a)),
            p(f.py(*b)),
            color(*run)
        );
    }
    let _ = writeln!(out, "</g>");

    let (nx, ny) = (f.px(nash.0), f.py(nash.1));
    let _ = writeln!(
        out,
        r#"<g id="quadrants" stroke="gray" stroke-dasharray="5,4">
<line x1="{}" y1="{}" x2="{}" y2="{}"/>
<line x1="{}" y1="{}" x2="{}" y2="{}"/>
</g>"#,
        p(nx),
        INSET,
        p(nx),
        HEIGHT - INSET,
        INSET,
        p(ny),
        WIDTH - INSET,
        p(ny)
    );
    let (px_, py_) = (f.px(pareto.0), f.py(pareto.1));
    let _ = writeln!(
        out,
        r#"<rect id="collusive" x="{}" y="{}" width="{}" height="{}" fill="green" fill-opacity="0.08" stroke="green"/>"#,
        p(px_),
        p(ny),
        p(nx - px_),
        p(py_ - ny)
    );

    if !data.front.is_empty() {
        let pts: Vec<(f64, f64)> = data.front.iter().map(|r| (f.px(r.1), f.py(r.2))).collect();
        polyline(&mut out, &pts, "black", r#"id="front" stroke-width="1.2""#);
    }

    let _ = writeln!(out, r#"<g id="centroids">"#);
    for (run, a, b, region) in &data.centroids {
        let (x, y) = (f.px(*a), f.py(*b));
        let _ = writeln!(
            out,
            r#"<path d="M{} {} l6 6 M{} {} l-6 6" stroke="{}" stroke-width="2.5"><title>run {run}: {region}</title></path>"#,
            p(x - 3.0),
            p(y - 3.0),
            p(x + 3.0),
            p(y - 3.0),
            color(*run)
        );
    }
    let _ = writeln!(out, "</g>");

    for (id, (x, y), fill, label) in [
        ("nash", nash, "red", "Nash"),
        ("pareto", pareto, "blue", "Pareto"),
    ] {
        let (x, y) = (f.px(x), f.py(y));
        let _ = writeln!(
            out,
            r#"<circle id="{id}" cx="{}" cy="{}" r="5" fill="{fill}" stroke="black"/>
<text x="{}" y="{}" fill="{fill}">{label}</text>"#,
            p(x),
            p(y),
            p(x + 7.0),
            p(y - 7.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Average traded quantity per step of both agents in every run (agent 1
/// solid, agent 2 dashed), with the Nash schedule in black.
pub fn strategies_svg(data: &BundleData) -> Result<String> {
    let nash = &data.refs.nash_schedules;
    let nash_pts: Vec<(f64, f64)> = nash
        .first
        .iter()
        .enumerate()
        .map(|(t, v)| (t as f64, *v))
        .collect();
    let f = Frame::fit(
        data.strategies
            .iter()
            .map(|s| (s.2 as f64, s.3))
            .chain(nash_pts.iter().copied()),
    )?;
    let mut out = String::new();
    open(
        &mut out,
        &format!("Average strategies: {}", data.refs.label),
    );
    axes(&mut out, &f, "t", "shares sold");

    let mut keys: Vec<(usize, usize)> = data.strategies.iter().map(|s| (s.0, s.1)).collect();
    keys.dedup();
    for (run, agent) in keys {
        let pts: Vec<(f64, f64)> = data
            .strategies
            .iter()
            .filter(|s| s.0 == run && s.1 == agent)
            .map(|s| (f.px(s.2 as f64), f.py(s.3)))
            .collect();
        let dash = if agent == 1 {
            ""
        } else {
            r#"stroke-dasharray="4,3""#
        };
        polyline(&mut out, &pts, color(run), dash);
    }
    let pts: Vec<(f64, f64)> = nash_pts.iter().map(|(t, v)| (f.px(*t), f.py(*v))).collect();
    polyline(&mut out, &pts, "black", r#"id="nash" stroke-width="2""#);
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_scatter(data: &BundleData, path: &Path) -> Result<()> {
    fs::write(path, scatter_svg(data)?).map_err(|e| Error::io(path, e))
}

pub fn render_strategies(data: &BundleData, path: &Path) -> Result<()> {
    fs::write(path, strategies_svg(data)?).map_err(|e| Error::io(path, e))
}

/// Writes both figures into `dir`.
pub fn write_figures(data: &BundleData, dir: &Path) -> Result<()> {
    render_scatter(data, &dir.join(SCATTER_SVG))?;
    render_strategies(data, &dir.join(STRATEGIES_SVG))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_margins() {
        let f = Frame::fit([(0.0, 10.0), (10.0, 20.0)]).unwrap();
        assert_eq!(f.x, (-0.5, 10.5));
        assert_eq!(f.y, (9.5, 20.5));
        assert!((f.px(-0.5) - INSET).abs() < 1e-12);
        assert!((f.py(20.5) - INSET).abs() < 1e-12);
        assert!(Frame::fit([(f64::NAN, 1.0)]).is_err());
    }
}
