//! Deterministic SVG plots, each with a CSV of exactly the plotted numbers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hndp_core::dmp::Trajectory;
use serde::{Deserialize, Serialize};

use crate::error::{csv_at, Error, Result};
use crate::files;
use crate::metrics::{CurveRow, IterationRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    SuccessVsIteration,
    SuccessVsSteps,
    TrajectoryOverlay,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::SuccessVsIteration => "success-vs-iteration",
            PlotKind::SuccessVsSteps => "success-vs-steps",
            PlotKind::TrajectoryOverlay => "trajectory-overlay",
        }
    }

    fn axes(self) -> (&'static str, &'static str) {
        match self {
            PlotKind::SuccessVsIteration => ("iteration", "success rate"),
            PlotKind::SuccessVsSteps => ("environment steps", "success rate"),
            PlotKind::TrajectoryOverlay => ("x", "y"),
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [PlotKind::SuccessVsIteration, PlotKind::SuccessVsSteps, PlotKind::TrajectoryOverlay]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownPlotKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DataRow<'a> {
    series: &'a str,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotFiles {
    pub svg: PathBuf,
    pub data: PathBuf,
}

/// Train and held-out success per iteration.
pub fn iteration_series(rows: &[IterationRow]) -> Vec<Series> {
    let pick = |f: fn(&IterationRow) -> f64| rows.iter().map(|r| [r.iteration as f64, f(r)]).collect();
    vec![
        Series { label: "train".into(), points: pick(|r| r.train_success) },
        Series { label: "held-out".into(), points: pick(|r| r.heldout_success) },
    ]
}

/// One success curve per (phase, seed), in order of first appearance.
pub fn curve_series(rows: &[CurveRow]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let label = format!("{} seed {}", r.phase, r.seed);
        let point = [r.env_steps as f64, r.success_rate];
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push(point),
            None => out.push(Series { label, points: vec![point] }),
        }
    }
    out
}

/// The planar path of a trajectory.
pub fn path_series(label: &str, traj: &Trajectory) -> Series {
    Series { label: label.into(), points: traj.y.chunks(2).map(|p| [p[0], p[1]]).collect() }
}

/// Reads a companion data file back into series.
pub fn read_series(path: &Path) -> Result<Vec<Series>> {
    #[derive(Deserialize)]
    struct Owned {
        series: String,
        x: f64,
        y: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(csv_at(path))?;
    let mut out: Vec<Series> = Vec::new();
    for row in reader.deserialize::<Owned>() {
        let row = row.map_err(csv_at(path))?;
        match out.iter_mut().find(|s| s.label == row.series) {
            Some(s) => s.points.push([row.x, row.y]),
            None => out.push(Series { label: row.series, points: vec![[row.x, row.y]] }),
        }
    }
    Ok(out)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Shortest decimal that reads well on an axis.
fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo > 1e-12 {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders the plot as SVG text.
pub fn render_svg(kind: PlotKind, title: &str, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::EmptyData(format!("{} needs at least one non-empty series", kind.name())));
    }
    if series.iter().flat_map(|s| &s.points).flatten().any(|v| !v.is_finite()) {
        return Err(Error::EmptyData("non-finite values cannot be plotted".into()));
    }
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1) = span(all().map(|p| p[0]));
    let (mut y0, mut y1) = match kind {
        PlotKind::TrajectoryOverlay => span(all().map(|p| p[1])),
        _ => (0.0, 1.0),
    };
    if kind == PlotKind::TrajectoryOverlay {
        // equal scale on both axes, padded
        let (w, h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let scale = ((x1 - x0) / w).max((y1 - y0) / h) * 1.1;
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        (x0, x1) = (cx - scale * w / 2.0, cx + scale * w / 2.0);
        (y0, y1) = (cy - scale * h / 2.0, cy + scale * h / 2.0);
    }
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - y0) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);
    let (xlabel, ylabel) = kind.axes();

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(w, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(w, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, HEIGHT - BOTTOM, HEIGHT - BOTTOM + 5.0);
        let _ = writeln!(w, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, HEIGHT - BOTTOM + 18.0, tick_label(xv));
        let _ = writeln!(w, r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(w, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, tick_label(yv));
    }
    let _ = writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        w,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(ylabel)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1]))).collect();
        let _ = writeln!(w, r#"<g class="series" data-label="{}">"#, escape(&s.label));
        let _ = writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        if kind != PlotKind::TrajectoryOverlay {
            for p in &s.points {
                let _ = writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(p[0]), sy(p[1]));
            }
        }
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 150.0;
        let _ = writeln!(w, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(w, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(&s.label));
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

/// Renders `series` to `<stem>.svg` and writes the plotted numbers to
/// `<stem>.csv` as `series,x,y` rows.
pub fn emit_plot(stem: &Path, kind: PlotKind, title: &str, series: &[Series]) -> Result<PlotFiles> {
    let svg = render_svg(kind, title, series)?;
    let data = stem.with_extension("csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in series {
        for p in &s.points {
            w.serialize(DataRow { series: &s.label, x: p[0], y: p[1] }).map_err(csv_at(&data))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
    let svg_path = stem.with_extension("svg");
    files::write_atomic(&svg_path, svg.as_bytes())?;
    files::write_atomic(&data, &bytes)?;
    Ok(PlotFiles { svg: svg_path, data })
}
