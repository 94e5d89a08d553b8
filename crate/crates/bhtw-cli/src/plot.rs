//! The `plot` subcommand: quick-look SVG renderings of a run directory.
//!
//! Four plot kinds, each driven purely by the CSV outputs (nothing is
//! recomputed):
//!
//! * `dispersion` — log-log growth of the per-site dispersion above its
//!   initial value, with integer-exponent guide lines fanning out from the
//!   lower-left corner.
//! * `density` — site-by-time heatmap of the vacuum-subtracted mean
//!   occupation.
//! * `spectrum` — log-log occupation power spectrum per site with a
//!   reference line of slope −2.
//! * `entropy` — mixing entropy over log time against its `ln(L)/L` bound.
//!
//! Missing inputs are listed in `plot_report.json` and skipped; a directory
//! with no plottable series at all still gets an explicit empty report and a
//! success exit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::read_manifest;

/// Which plots to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotSelection {
    Dispersion,
    Density,
    Spectrum,
    Entropy,
    All,
}

impl PlotSelection {
    fn wants(&self, kind: PlotSelection) -> bool {
        *self == PlotSelection::All || *self == kind
    }
}

#[derive(Debug, Serialize)]
pub struct SkippedPlot {
    pub kind: String,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct PlotReport {
    pub directory: String,
    pub written: Vec<String>,
    pub skipped: Vec<SkippedPlot>,
    pub empty: bool,
}

/// Renders the selected plots for `dir` into `out` (default `dir/plots`).
pub fn execute_plot(dir: &Path, selection: PlotSelection, out: Option<&Path>) -> Result<PlotReport> {
    if !dir.is_dir() {
        return Err(CliError::invalid(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let out_dir: PathBuf = match out {
        Some(path) => path.to_path_buf(),
        None => dir.join("plots"),
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|err| CliError::invalid(format!("cannot create {}: {err}", out_dir.display())))?;

    let manifest = read_manifest(dir).unwrap_or(None);
    let mut report = PlotReport {
        directory: dir.display().to_string(),
        written: Vec::new(),
        skipped: Vec::new(),
        empty: false,
    };

    let moments = read_moments(&dir.join("moments.csv"));
    let emit = |name: &str,
                    svg: std::result::Result<String, String>,
                    report: &mut PlotReport|
     -> Result<()> {
        match svg {
            Ok(body) => {
                let path = out_dir.join(name);
                std::fs::write(&path, body).map_err(|err| {
                    CliError::invalid(format!("cannot write {}: {err}", path.display()))
                })?;
                report.written.push(name.to_string());
            }
            Err(reason) => report.skipped.push(SkippedPlot {
                kind: name.trim_end_matches(".svg").to_string(),
                reason,
            }),
        }
        Ok(())
    };

    if selection.wants(PlotSelection::Dispersion) {
        let svg = moments
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|table| dispersion_svg(table));
        emit("dispersion.svg", svg, &mut report)?;
    }
    if selection.wants(PlotSelection::Density) {
        let hbar = manifest.as_ref().map(|m| m.core.params.hbar_eff).unwrap_or(1.0);
        let svg = moments
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|table| density_svg(table, hbar));
        emit("density.svg", svg, &mut report)?;
    }
    if selection.wants(PlotSelection::Spectrum) {
        let svg = read_spectrum(&dir.join("observables/spectrum.csv")).and_then(spectrum_svg);
        emit("spectrum.svg", svg, &mut report)?;
    }
    if selection.wants(PlotSelection::Entropy) {
        let bound = manifest
            .as_ref()
            .map(|m| (m.core.params.sites as f64).ln() / m.core.params.sites as f64);
        let svg = read_scalar(&dir.join("observables/entropy.csv"))
            .and_then(|(t, v)| entropy_svg(&t, &v, bound));
        emit("entropy.svg", svg, &mut report)?;
    }

    report.empty = report.written.is_empty();
    let report_value = serde_json::to_value(&report)?;
    let mut text = serde_json::to_string_pretty(&report_value)?;
    text.push('\n');
    let report_path = out_dir.join("plot_report.json");
    std::fs::write(&report_path, text).map_err(|err| {
        CliError::invalid(format!("cannot write {}: {err}", report_path.display()))
    })?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// CSV readers (errors become skip reasons, not failures)

struct MomentsTable {
    times: Vec<f64>,
    /// `[site][time]`
    mean: Vec<Vec<f64>>,
    dispersion: Vec<Vec<f64>>,
}

fn read_moments(path: &Path) -> std::result::Result<MomentsTable, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| format!("{} missing", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("moments.csv is empty")?;
    if !header.starts_with("t,site,mean_I") {
        return Err(format!("unexpected moments.csv header {header:?}"));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut mean: Vec<Vec<f64>> = Vec::new();
    let mut dispersion: Vec<Vec<f64>> = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(format!("moments.csv row {} malformed", k + 2));
        }
        let parse = |i: usize| -> std::result::Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| format!("moments.csv row {} field {}", k + 2, i + 1))
        };
        let t = parse(0)?;
        let site = fields[1]
            .parse::<usize>()
            .map_err(|_| format!("moments.csv row {} site", k + 2))?;
        if site == 0 {
            return Err("moments.csv sites are 1-based".into());
        }
        while mean.len() < site {
            mean.push(Vec::new());
            dispersion.push(Vec::new());
        }
        if site == 1 {
            times.push(t);
        }
        mean[site - 1].push(parse(2)?);
        dispersion[site - 1].push(parse(4)?);
    }
    if times.is_empty() {
        return Err("moments.csv has no data rows".into());
    }
    Ok(MomentsTable {
        times,
        mean,
        dispersion,
    })
}

fn read_scalar(path: &Path) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| format!("{} missing", path.display()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let (Some(t), Some(v)) = (fields.next(), fields.next()) else {
            return Err(format!("malformed row in {}", path.display()));
        };
        times.push(t.parse::<f64>().map_err(|_| "bad time value")?);
        values.push(v.parse::<f64>().map_err(|_| "bad series value")?);
    }
    if times.is_empty() {
        return Err(format!("{} has no data rows", path.display()));
    }
    Ok((times, values))
}

/// `[(site, [(omega, power)])]`, sites in file order.
fn read_spectrum(path: &Path) -> std::result::Result<Vec<(usize, Vec<(f64, f64)>)>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| format!("{} missing", path.display()))?;
    let mut series: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("malformed row in {}", path.display()));
        }
        let w: f64 = fields[0].parse().map_err(|_| "bad frequency")?;
        let site: usize = fields[1].parse().map_err(|_| "bad site index")?;
        let p: f64 = fields[2].parse().map_err(|_| "bad power value")?;
        match series.iter_mut().find(|(s, _)| *s == site) {
            Some((_, points)) => points.push((w, p)),
            None => series.push((site, vec![(w, p)])),
        }
    }
    if series.is_empty() {
        return Err(format!("{} has no data rows", path.display()));
    }
    Ok(series)
}

// ---------------------------------------------------------------------------
// minimal SVG chart scaffolding

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    xlog: bool,
    ylog: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let (a, b, v) = if self.xlog {
            (self.xmin.log10(), self.xmax.log10(), x.log10())
        } else {
            (self.xmin, self.xmax, x)
        };
        MARGIN_LEFT + (v - a) / (b - a) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let (a, b, v) = if self.ylog {
            (self.ymin.log10(), self.ymax.log10(), y.log10())
        } else {
            (self.ymin, self.ymax, y)
        };
        HEIGHT - MARGIN_BOTTOM - (v - a) / (b - a) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }
}

struct Chart {
    body: String,
}

impl Chart {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
             <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            WIDTH / 2.0,
            escape(title)
        );
        Chart { body }
    }

    fn frame_box(&mut self) {
        let _ = write!(
            self.body,
            "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{}\" height=\"{}\" \
             fill=\"none\" stroke=\"#333\"/>\n",
            WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        );
    }

    fn axis_labels(&mut self, xlabel: &str, ylabel: &str) {
        let _ = write!(
            self.body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n\
             <text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 18 {})\">{}</text>\n",
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            HEIGHT - 14.0,
            escape(xlabel),
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            escape(ylabel)
        );
    }

    fn x_ticks(&mut self, frame: &Frame) {
        for (value, label) in ticks(frame.xmin, frame.xmax, frame.xlog) {
            let x = frame.px(value);
            let y = HEIGHT - MARGIN_BOTTOM;
            let _ = write!(
                self.body,
                "<line x1=\"{x:.1}\" y1=\"{y}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#333\"/>\n\
                 <text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{label}</text>\n",
                y + 5.0,
                y + 18.0
            );
        }
    }

    fn y_ticks(&mut self, frame: &Frame) {
        for (value, label) in ticks(frame.ymin, frame.ymax, frame.ylog) {
            let y = frame.py(value);
            let _ = write!(
                self.body,
                "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{MARGIN_LEFT}\" y2=\"{y:.1}\" stroke=\"#333\"/>\n\
                 <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{label}</text>\n",
                MARGIN_LEFT - 5.0,
                MARGIN_LEFT - 8.0,
                y + 4.0
            );
        }
    }

    fn polyline(&mut self, frame: &Frame, points: &[(f64, f64)], color: &str, dashed: bool) {
        if points.len() < 2 {
            return;
        }
        let mut coords = String::new();
        for &(x, y) in points {
            let _ = write!(coords, "{:.2},{:.2} ", frame.px(x), frame.py(y));
        }
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = write!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>\n",
            coords.trim_end()
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, color: &str, content: &str) {
        let _ = write!(
            self.body,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"{size}\" fill=\"{color}\">{}</text>\n",
            escape(content)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = write!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n"
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (0.01..10000.0).contains(&a) {
        let text = format!("{v:.3}");
        let trimmed = text.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        format!("{v:.0e}")
    }
}

/// Tick positions and labels: decades on log axes, five even steps linearly.
fn ticks(min: f64, max: f64, log: bool) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    if log {
        let k0 = min.log10().floor() as i32;
        let k1 = max.log10().ceil() as i32;
        let step = (((k1 - k0) as usize / 9) + 1) as i32;
        let mut k = k0;
        while k <= k1 {
            let v = 10f64.powi(k);
            if v >= min * 0.999 && v <= max * 1.001 {
                out.push((v, format!("1e{k}")));
            }
            k += step;
        }
    } else {
        for i in 0..=4 {
            let v = min + (max - min) * i as f64 / 4.0;
            out.push((v, fmt_tick(v)));
        }
    }
    out
}

/// Clips a power-law guide `y = y0 (x/x0)^slope` to the frame and draws it.
fn guide_line(chart: &mut Chart, frame: &Frame, x0: f64, y0: f64, slope: f64, label: &str) {
    let mut points = Vec::new();
    let n = 64;
    for i in 0..=n {
        let lx = frame.xmin.log10()
            + (frame.xmax.log10() - frame.xmin.log10()) * i as f64 / n as f64;
        let x = 10f64.powf(lx);
        let y = y0 * (x / x0).powf(slope);
        if frame.contains(x, y) {
            points.push((x, y));
        }
    }
    if points.len() >= 2 {
        let (lx, ly) = *points.last().unwrap();
        chart.polyline(frame, &points, "#888", true);
        chart.text(frame.px(lx) - 30.0, frame.py(ly) - 5.0, 11.0, "#666", label);
    }
}

// ---------------------------------------------------------------------------
// the four plot kinds

fn dispersion_svg(table: &MomentsTable) -> std::result::Result<String, String> {
    let mut curves: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (site, d) in table.dispersion.iter().enumerate() {
        let base = d[0];
        let mut points = Vec::new();
        for (&t, &v) in table.times.iter().zip(d) {
            let growth = v - base;
            if t > 0.0 && growth > 0.0 && growth.is_finite() {
                points.push((t, growth));
                xmin = xmin.min(t);
                xmax = xmax.max(t);
                ymin = ymin.min(growth);
                ymax = ymax.max(growth);
            }
        }
        if points.len() >= 2 {
            curves.push((site, points));
        }
    }
    if curves.is_empty() {
        return Err("no positive dispersion growth to plot".into());
    }
    let frame = Frame {
        xmin,
        xmax,
        ymin: ymin * 0.8,
        ymax: ymax * 1.5,
        xlog: true,
        ylog: true,
    };
    let mut chart = Chart::new("site dispersion growth");
    for l in 1..=4 {
        guide_line(
            &mut chart,
            &frame,
            xmin,
            frame.ymin * 1.2,
            l as f64,
            &format!("slope {l}"),
        );
    }
    for (k, (site, points)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart.polyline(&frame, points, color, false);
        if curves.len() <= 12 {
            chart.text(
                MARGIN_LEFT + 10.0,
                MARGIN_TOP + 16.0 + 14.0 * k as f64,
                11.0,
                color,
                &format!("site {}", site + 1),
            );
        }
    }
    chart.frame_box();
    chart.x_ticks(&frame);
    chart.y_ticks(&frame);
    chart.axis_labels("t / t0", "D(t) - D(0)");
    Ok(chart.finish())
}

fn viridis(u: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (0.267, 0.005, 0.329),
        (0.229, 0.322, 0.545),
        (0.127, 0.566, 0.550),
        (0.369, 0.789, 0.383),
        (0.993, 0.906, 0.144),
    ];
    let u = u.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (u.floor() as usize).min(STOPS.len() - 2);
    let f = u - i as f64;
    let lerp = |a: f64, b: f64| a + (b - a) * f;
    let (r, g, b) = (
        lerp(STOPS[i].0, STOPS[i + 1].0),
        lerp(STOPS[i].1, STOPS[i + 1].1),
        lerp(STOPS[i].2, STOPS[i + 1].2),
    );
    format!(
        "#{:02x}{:02x}{:02x}",
        (r * 255.0) as u8,
        (g * 255.0) as u8,
        (b * 255.0) as u8
    )
}

fn density_svg(table: &MomentsTable, hbar: f64) -> std::result::Result<String, String> {
    let sites = table.mean.len();
    let grid = table.times.len();
    if sites == 0 || grid == 0 {
        return Err("no occupation data to plot".into());
    }
    let offset = 0.5 * hbar;
    let max_cols = 360usize;
    let stride = grid.div_ceil(max_cols).max(1);
    let cols: Vec<usize> = (0..grid).step_by(stride).collect();
    let mut vmax = f64::MIN_POSITIVE;
    for &g in &cols {
        for site_mean in &table.mean {
            vmax = vmax.max(site_mean[g] - offset);
        }
    }
    let mut chart = Chart::new("occupation density (vacuum subtracted)");
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let cell_w = plot_w / cols.len() as f64;
    let cell_h = plot_h / sites as f64;
    for (ci, &g) in cols.iter().enumerate() {
        for (site, site_mean) in table.mean.iter().enumerate() {
            let v = ((site_mean[g] - offset) / vmax).max(0.0);
            chart.rect(
                MARGIN_LEFT + ci as f64 * cell_w,
                // site 1 at the bottom row
                MARGIN_TOP + plot_h - (site + 1) as f64 * cell_h,
                cell_w + 0.5,
                cell_h + 0.5,
                &viridis(v),
            );
        }
    }
    chart.frame_box();
    let frame = Frame {
        xmin: table.times[0],
        xmax: *table.times.last().unwrap(),
        ymin: 0.5,
        ymax: sites as f64 + 0.5,
        xlog: false,
        ylog: false,
    };
    chart.x_ticks(&frame);
    for site in 1..=sites {
        if sites <= 12 || site % 5 == 0 || site == 1 {
            let y = MARGIN_TOP + plot_h - (site as f64 - 0.5) * cell_h;
            chart.text(MARGIN_LEFT - 24.0, y + 4.0, 11.0, "#333", &format!("{site}"));
        }
    }
    chart.axis_labels("t / t0", "site");
    Ok(chart.finish())
}

fn spectrum_svg(
    series: Vec<(usize, Vec<(f64, f64)>)>,
) -> std::result::Result<String, String> {
    let mut curves: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (site, points) in series {
        let kept: Vec<(f64, f64)> = points
            .into_iter()
            .filter(|&(w, p)| w > 0.0 && p > 0.0 && p.is_finite())
            .collect();
        for &(w, p) in &kept {
            xmin = xmin.min(w);
            xmax = xmax.max(w);
            ymin = ymin.min(p);
            ymax = ymax.max(p);
        }
        if kept.len() >= 2 {
            curves.push((site, kept));
        }
    }
    if curves.is_empty() {
        return Err("no positive spectrum points to plot".into());
    }
    let frame = Frame {
        xmin,
        xmax,
        ymin: ymin * 0.8,
        ymax: ymax * 1.5,
        xlog: true,
        ylog: true,
    };
    let mut chart = Chart::new("occupation power spectrum");
    let anchor = &curves[0].1;
    let (w0, p0) = anchor[anchor.len() / 2];
    guide_line(&mut chart, &frame, w0, p0 * 3.0, -2.0, "slope -2");
    for (k, (site, points)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart.polyline(&frame, points, color, false);
        if curves.len() <= 12 {
            chart.text(
                WIDTH - MARGIN_RIGHT - 70.0,
                MARGIN_TOP + 16.0 + 14.0 * k as f64,
                11.0,
                color,
                &format!("site {site}"),
            );
        }
    }
    chart.frame_box();
    chart.x_ticks(&frame);
    chart.y_ticks(&frame);
    chart.axis_labels("omega t0", "C(omega)");
    Ok(chart.finish())
}

fn entropy_svg(
    times: &[f64],
    values: &[f64],
    bound: Option<f64>,
) -> std::result::Result<String, String> {
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|&(&t, &v)| t > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v))
        .collect();
    if points.len() < 2 {
        return Err("not enough entropy points to plot".into());
    }
    let xmin = points[0].0;
    let xmax = points.last().unwrap().0;
    let vmax = points.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let ytop = bound.unwrap_or(vmax).max(vmax) * 1.1;
    let frame = Frame {
        xmin,
        xmax,
        ymin: 0.0,
        ymax: ytop.max(1e-12),
        xlog: true,
        ylog: false,
    };
    let mut chart = Chart::new("mixing entropy of the occupation profile");
    if let Some(b) = bound {
        chart.polyline(&frame, &[(xmin, b), (xmax, b)], "#888", true);
        chart.text(
            MARGIN_LEFT + 8.0,
            frame.py(b) - 6.0,
            11.0,
            "#666",
            "ln(L)/L bound",
        );
    }
    chart.polyline(&frame, &points, PALETTE[0], false);
    chart.frame_box();
    chart.x_ticks(&frame);
    chart.y_ticks(&frame);
    chart.axis_labels("t / t0", "S");
    Ok(chart.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_run_config;
    use crate::runner::execute_run;

    fn run_small(dir: &Path) {
        let cfg = parse_run_config(
            &serde_json::json!({
                "sites": 5,
                "u_over_j": 0.5,
                "mu_over_j": 0.0,
                "preset": {"kind": "single_site", "site": 2},
                "trajectories": 8,
                "integrator": {"step": 1.0, "t_final": 1500.0,
                               "output_stride": 5, "conservation_tol": 1e-6},
                "fit_window_ln": [2.5, 7.0],
                "spectrum": {}
            })
            .to_string(),
        )
        .unwrap();
        execute_run(&cfg, Some(dir), Some(1)).unwrap();
    }

    #[test]
    fn plots_render_for_a_complete_run() {
        let dir = tempfile::tempdir().unwrap();
        run_small(dir.path());
        let report = execute_plot(dir.path(), PlotSelection::All, None).unwrap();
        assert!(!report.empty);
        for name in ["dispersion.svg", "density.svg", "spectrum.svg", "entropy.svg"] {
            assert!(
                report.written.iter().any(|w| w == name),
                "{name} not written: {:?}",
                report.skipped
            );
            let body =
                std::fs::read_to_string(dir.path().join("plots").join(name)).unwrap();
            assert!(body.starts_with("<svg"));
            assert!(body.ends_with("</svg>\n"));
        }
        assert!(dir.path().join("plots/plot_report.json").exists());
    }

    #[test]
    fn empty_directory_gets_explicit_report() {
        let dir = tempfile::tempdir().unwrap();
        let report = execute_plot(dir.path(), PlotSelection::All, None).unwrap();
        assert!(report.empty);
        assert!(report.written.is_empty());
        assert_eq!(report.skipped.len(), 4);
        let text =
            std::fs::read_to_string(dir.path().join("plots/plot_report.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["empty"], serde_json::json!(true));
    }

    #[test]
    fn single_kind_selection_only_writes_that_plot() {
        let dir = tempfile::tempdir().unwrap();
        run_small(dir.path());
        let out = dir.path().join("only");
        let report =
            execute_plot(dir.path(), PlotSelection::Entropy, Some(&out)).unwrap();
        assert_eq!(report.written, vec!["entropy.svg".to_string()]);
        assert!(out.join("entropy.svg").exists());
        assert!(!out.join("dispersion.svg").exists());
    }

    #[test]
    fn missing_spectrum_is_listed_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_run_config(
            &serde_json::json!({
                "sites": 4,
                "u_over_j": 0.5,
                "mu_over_j": 0.0,
                "preset": {"kind": "single_site", "site": 1},
                "trajectories": 8,
                "integrator": {"step": 1.0, "t_final": 400.0,
                               "output_stride": 10, "conservation_tol": 1e-6}
            })
            .to_string(),
        )
        .unwrap();
        execute_run(&cfg, Some(dir.path()), Some(1)).unwrap();
        let report = execute_plot(dir.path(), PlotSelection::All, None).unwrap();
        assert!(report.written.iter().any(|w| w == "dispersion.svg"));
        assert!(
            report
                .skipped
                .iter()
                .any(|s| s.kind == "spectrum" && s.reason.contains("missing")),
            "{:?}",
            report.skipped
        );
    }

    #[test]
    fn viridis_endpoints_are_dark_and_bright() {
        assert_eq!(viridis(0.0), "#440153");
        assert_eq!(viridis(1.0), "#fde724");
        assert!(viridis(0.5).starts_with('#'));
    }
}
