//! Standalone SVG emission for phase-plane figures.
//!
//! Output is byte-deterministic for identical inputs: coordinates are
//! rendered on a fixed 0.01-pixel grid, colors come from a fixed palette
//! indexed by series order, and nothing environment-dependent (timestamps,
//! locales, randomized ids) is written. Equal input, equal bytes.
//!
//! A figure is a list of [`Series`] in data coordinates. Orbits render as
//! solid polylines, envelopes as dashed polylines, markers as filled dots.
//! The viewport is fitted to the joint bounding box with 5% padding, and
//! axes carry 1-2-2.5-5 stepped ticks.

use std::fmt::Write as _;
use std::path::Path;

use crate::sweep::atomic_write;
use crate::{Error, Result};

/// Rendering style of one series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Solid polyline through the points in order.
    Orbit,
    /// Dashed polyline, for bounding curves.
    Envelope,
    /// One filled dot per point.
    Marker,
}

/// A named curve or point set in data coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub kind: SeriesKind,
    pub points: Vec<[f64; 2]>,
}

impl Series {
    pub fn orbit(label: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Series {
            label: label.into(),
            kind: SeriesKind::Orbit,
            points,
        }
    }

    pub fn envelope(label: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Series {
            label: label.into(),
            kind: SeriesKind::Envelope,
            points,
        }
    }

    pub fn marker(label: impl Into<String>, point: [f64; 2]) -> Self {
        Series {
            label: label.into(),
            kind: SeriesKind::Marker,
            points: vec![point],
        }
    }
}

/// Canvas size and axis annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            width: 640,
            height: 480,
            title: String::new(),
            x_label: "x".into(),
            y_label: "y".into(),
        }
    }
}

/// Closed circle polyline with `n` segments, first point repeated at the end.
pub fn circle(cx: f64, cy: f64, radius: f64, n: usize) -> Vec<[f64; 2]> {
    let n = n.max(3);
    (0..=n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [cx + radius * th.cos(), cy + radius * th.sin()]
        })
        .collect()
}

/// The (U, V) portrait of one orbit: integrated curve, the two trapping
/// circles through the initial point, and the initial point itself.
pub fn uv_portrait(
    p: &crate::fields::RadialProfile,
    b0: f64,
    u0: f64,
    v0: f64,
    r0: f64,
    horizon: f64,
    settings: &crate::characteristics::IntegratorSettings,
) -> Result<(Vec<Series>, PlotStyle)> {
    let mut s = settings.clone();
    s.horizon = horizon;
    let traj = crate::axisym::integrate_point_flow(p, b0, u0, v0, r0, &s)?;
    let n = 800;
    let orbit: Vec<[f64; 2]> = (0..=n)
        .map(|i| {
            let t = traj.t_start + (traj.t_end - traj.t_start) * i as f64 / n as f64;
            let [u, v, _] = traj.eval(t);
            [u, v]
        })
        .collect();
    let bounds = p.bounds();
    let lem = crate::axisym::lemma1_bounds(bounds.s_minus, bounds.s_plus, b0, u0, v0)?;
    // Circle centers live on the canonical side of V = B0/2; reflected
    // initial data gets the mirrored centers.
    let center = |c: f64| {
        let vc = b0 / 4.0 - c;
        if v0 < b0 / 2.0 { b0 - vc } else { vc }
    };
    let series = vec![
        Series::orbit("orbit", orbit),
        Series::envelope(
            "slow-field circle",
            circle(0.0, center(lem.c_minus), lem.r_minus_env, 180),
        ),
        Series::envelope(
            "stiff-field circle",
            circle(0.0, center(lem.c_plus), lem.r_plus_env, 180),
        ),
        Series::marker("start", [u0, v0]),
    ];
    let style = PlotStyle {
        title: "orbit and trapping circles".into(),
        x_label: "U".into(),
        y_label: "V".into(),
        ..PlotStyle::default()
    };
    Ok((series, style))
}

/// The (eta, D) portrait of the moment envelopes: both level-set loops and
/// the initial point. Each loop is the +/- branch pair of its radicand,
/// traced over the contiguous eta-run around eta0 where it is nonnegative.
pub fn moment_portrait(
    env: &crate::axisym::DetaEnvelopes,
    d0: f64,
    eta0: f64,
    eta_max: f64,
) -> Result<(Vec<Series>, PlotStyle)> {
    if !(eta_max > 0.0 && eta0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "portrait needs eta0, eta_max > 0, got {eta0}, {eta_max}"
        )));
    }
    let loop_of = |rad: &dyn Fn(f64) -> f64| -> Vec<[f64; 2]> {
        let n = 600;
        let at = |i: usize| eta_max * i as f64 / n as f64;
        let i0 = ((eta0 / eta_max * n as f64) as usize).min(n);
        if rad(at(i0)) < 0.0 {
            return Vec::new();
        }
        let mut lo = i0;
        while lo > 0 && rad(at(lo - 1)) >= 0.0 {
            lo -= 1;
        }
        let mut hi = i0;
        while hi < n && rad(at(hi + 1)) >= 0.0 {
            hi += 1;
        }
        let mut pts = Vec::with_capacity(2 * (hi - lo) + 3);
        for i in lo..=hi {
            pts.push([at(i), rad(at(i)).max(0.0).sqrt()]);
        }
        for i in (lo..=hi).rev() {
            pts.push([at(i), -rad(at(i)).max(0.0).sqrt()]);
        }
        pts.push(pts[0]);
        pts
    };
    let upper = loop_of(&|e| env.upper_radicand(e));
    let lower = loop_of(&|e| env.lower_radicand(e));
    let mut series = Vec::new();
    if !upper.is_empty() {
        series.push(Series::envelope("upper level set", upper));
    }
    if !lower.is_empty() {
        series.push(Series::envelope("lower level set", lower));
    }
    series.push(Series::marker("start", [eta0, d0]));
    let style = PlotStyle {
        title: "moment envelopes".into(),
        x_label: "eta".into(),
        y_label: "D".into(),
        ..PlotStyle::default()
    };
    Ok((series, style))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
];
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 44.0;

/// Render the figure to an SVG document string.
///
/// Errors on an empty series list, an empty series, or a non-finite
/// coordinate; every accepted input renders without NaN pixels.
pub fn phase_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidParameter(
            "figure needs at least one series".into(),
        ));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        if s.points.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "series {:?} has no points",
                s.label
            )));
        }
        for p in &s.points {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "series {:?} has a non-finite point",
                    s.label
                )));
            }
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
    }
    if style.width < 100 || style.height < 100 {
        return Err(Error::InvalidParameter(format!(
            "canvas {}x{} too small",
            style.width, style.height
        )));
    }
    let (x0, x1) = pad_range(x0, x1);
    let (y0, y1) = pad_range(y0, y1);

    let w = style.width as f64;
    let h = style.height as f64;
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut out = String::with_capacity(1 << 14);
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"Helvetica, Arial, sans-serif\">",
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        style.width, style.height
    );

    // Grid and ticks.
    let (xt, xstep) = ticks(x0, x1);
    let (yt, ystep) = ticks(y0, y1);
    for &x in &xt {
        let gx = fmt_px(px(x));
        let _ = writeln!(
            out,
            "<line x1=\"{gx}\" y1=\"{}\" x2=\"{gx}\" y2=\"{}\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>",
            fmt_px(MARGIN_TOP),
            fmt_px(MARGIN_TOP + plot_h)
        );
        let _ = writeln!(
            out,
            "<text x=\"{gx}\" y=\"{}\" font-size=\"11\" fill=\"#333333\" text-anchor=\"middle\">{}</text>",
            fmt_px(MARGIN_TOP + plot_h + 16.0),
            tick_label(x, xstep)
        );
    }
    for &y in &yt {
        let gy = fmt_px(py(y));
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{gy}\" x2=\"{}\" y2=\"{gy}\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>",
            fmt_px(MARGIN_LEFT),
            fmt_px(MARGIN_LEFT + plot_w)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#333333\" text-anchor=\"end\">{}</text>",
            fmt_px(MARGIN_LEFT - 6.0),
            fmt_px(py(y) + 4.0),
            tick_label(y, ystep)
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
        fmt_px(MARGIN_LEFT),
        fmt_px(MARGIN_TOP),
        fmt_px(plot_w),
        fmt_px(plot_h)
    );

    // Series, clipped to the frame.
    let _ = writeln!(
        out,
        "<clipPath id=\"frame\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></clipPath>",
        fmt_px(MARGIN_LEFT),
        fmt_px(MARGIN_TOP),
        fmt_px(plot_w),
        fmt_px(plot_h)
    );
    let _ = writeln!(out, "<g clip-path=\"url(#frame)\">");
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match s.kind {
            SeriesKind::Marker => {
                for p in &s.points {
                    let _ = writeln!(
                        out,
                        "<circle cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"{color}\"/>",
                        fmt_px(px(p[0])),
                        fmt_px(py(p[1]))
                    );
                }
            }
            kind => {
                let dash = match kind {
                    SeriesKind::Envelope => " stroke-dasharray=\"6 4\"",
                    _ => "",
                };
                let mut pts = String::with_capacity(s.points.len() * 14);
                for p in &s.points {
                    if !pts.is_empty() {
                        pts.push(' ');
                    }
                    let _ = write!(pts, "{},{}", fmt_px(px(p[0])), fmt_px(py(p[1])));
                }
                let _ = writeln!(
                    out,
                    "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>"
                );
            }
        }
    }
    let _ = writeln!(out, "</g>");

    // Legend for labelled series, top-right corner of the frame.
    let labelled: Vec<(usize, &Series)> = series
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.label.is_empty())
        .collect();
    for (row, (i, s)) in labelled.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_TOP + 14.0 + 15.0 * row as f64;
        let lx = MARGIN_LEFT + plot_w - 10.0;
        match s.kind {
            SeriesKind::Marker => {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"{color}\"/>",
                    fmt_px(lx - 28.0 + 11.0),
                    fmt_px(ly - 3.5)
                );
            }
            kind => {
                let dash = match kind {
                    SeriesKind::Envelope => " stroke-dasharray=\"6 4\"",
                    _ => "",
                };
                let _ = writeln!(
                    out,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>",
                    fmt_px(lx - 28.0),
                    fmt_px(ly - 3.5),
                    fmt_px(lx - 6.0),
                    fmt_px(ly - 3.5)
                );
            }
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#333333\" text-anchor=\"end\">{}</text>",
            fmt_px(lx - 32.0),
            fmt_px(ly),
            escape(&s.label)
        );
    }

    // Annotations.
    if !style.title.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"18\" font-size=\"13\" fill=\"#111111\" text-anchor=\"middle\">{}</text>",
            fmt_px(MARGIN_LEFT + plot_w / 2.0),
            escape(&style.title)
        );
    }
    if !style.x_label.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#111111\" text-anchor=\"middle\">{}</text>",
            fmt_px(MARGIN_LEFT + plot_w / 2.0),
            fmt_px(h - 10.0),
            escape(&style.x_label)
        );
    }
    if !style.y_label.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"14\" y=\"{}\" font-size=\"12\" fill=\"#111111\" text-anchor=\"middle\" \
             transform=\"rotate(-90 14 {})\">{}</text>",
            fmt_px(MARGIN_TOP + plot_h / 2.0),
            fmt_px(MARGIN_TOP + plot_h / 2.0),
            escape(&style.y_label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Render and write atomically (temp file + rename).
pub fn emit_phase_svg(series: &[Series], style: &PlotStyle, path: &Path) -> Result<()> {
    let doc = phase_svg(series, style)?;
    atomic_write(path, doc.as_bytes())
}

fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else {
        (0.1 * lo.abs()).max(1.0)
    };
    (lo - pad, hi + pad)
}

/// Tick positions on a 1-2-2.5-5 ladder, aiming for about six intervals.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 6.0;
    let pow = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * pow)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * pow);
    let first = (lo / step).ceil();
    let last = (hi / step).floor();
    let mut out = Vec::new();
    let mut k = first;
    while k <= last + 0.5 {
        out.push(k * step);
        k += 1.0;
    }
    (out, step)
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0).min(6.0) as usize;
    // Snap tiny residue to zero so the label never reads "-0".
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}
