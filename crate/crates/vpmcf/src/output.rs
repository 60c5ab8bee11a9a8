//! Output files: `series.csv`, `monitor.jsonl`, SVG snapshots and the
//! diagnostic written on a nonzero exit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use vpmcf_core::convergence::ConvergenceReport;
use vpmcf_core::curve::Topology;
use vpmcf_core::monitor::MonitorReport;
use vpmcf_core::FlowState;

pub const SERIES_FILE: &str = "series.csv";
pub const MONITOR_FILE: &str = "monitor.jsonl";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const SERIES_HEADER: [&str; 19] = [
    "t",
    "step",
    "area",
    "volume",
    "h",
    "sup_H_minus_h",
    "l2_H_minus_h",
    "max_u",
    "max_u_tilde",
    "curve_length",
    "d",
    "e",
    "max_kp_ratio",
    "max_A2",
    "min_cyl_u_alpha_sqrt2",
    "v_tilde_max_cap_sqrt2",
    "H_at_sqrt2_cut",
    "shape_dev",
    "converged",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub step: u64,
    pub area: f64,
    pub volume: f64,
    pub h: f64,
    #[serde(rename = "sup_H_minus_h")]
    pub sup_h_minus_h: f64,
    #[serde(rename = "l2_H_minus_h")]
    pub l2_h_minus_h: f64,
    pub max_u: f64,
    pub max_u_tilde: f64,
    pub curve_length: f64,
    pub d: f64,
    pub e: f64,
    pub max_kp_ratio: f64,
    #[serde(rename = "max_A2")]
    pub max_a2: f64,
    pub min_cyl_u_alpha_sqrt2: f64,
    pub v_tilde_max_cap_sqrt2: f64,
    #[serde(rename = "H_at_sqrt2_cut")]
    pub h_at_sqrt2_cut: f64,
    pub shape_dev: f64,
    pub converged: bool,
}

impl SeriesRow {
    pub fn new(state: &FlowState, monitor: &MonitorReport, conv: &ConvergenceReport) -> Self {
        let m = &monitor.measurements;
        Self {
            t: state.t(),
            step: state.step_index(),
            area: state.area(),
            volume: state.volume(),
            h: state.h(),
            sup_h_minus_h: conv.sup_dev_h,
            l2_h_minus_h: conv.l2_dev_h,
            max_u: m.max_u,
            max_u_tilde: m.max_u_tilde,
            curve_length: m.curve_length,
            d: m.d,
            e: m.e,
            max_kp_ratio: m.max_kp_ratio,
            max_a2: m.max_a2,
            min_cyl_u_alpha_sqrt2: m.min_cyl_u_sqrt2,
            v_tilde_max_cap_sqrt2: m.v_tilde_max_cap_sqrt2,
            h_at_sqrt2_cut: m.h_at_sqrt2_cut,
            shape_dev: conv.shape_dev,
            converged: conv.converged,
        }
    }
}

pub struct SeriesWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl SeriesWriter {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        let file = BufWriter::new(File::create(dir.join(SERIES_FILE))?);
        let inner = csv::WriterBuilder::new().has_headers(true).from_writer(file);
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &SeriesRow) -> std::io::Result<()> {
        self.inner.serialize(row).map_err(std::io::Error::other)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// One JSON object per line.
pub struct JsonLines {
    inner: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            inner: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.inner, value)?;
        self.inner.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Short description of a state for diagnostics and summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    pub t: f64,
    pub step: u64,
    pub nodes: usize,
    pub area: f64,
    pub volume: f64,
    pub target_volume: f64,
    pub h: f64,
    pub min_interior_r: f64,
    pub min_interior_r_node: Option<usize>,
    pub max_a2: f64,
}

impl StateSummary {
    pub fn of(state: &FlowState) -> Self {
        let curve = state.curve();
        let mut min = (f64::INFINITY, None);
        for (i, p) in curve.nodes().iter().enumerate() {
            if !curve.is_pole(i) && p.r < min.0 {
                min = (p.r, Some(i));
            }
        }
        Self {
            t: state.t(),
            step: state.step_index(),
            nodes: curve.len(),
            area: state.area(),
            volume: state.volume(),
            target_volume: state.target_volume(),
            h: state.h(),
            min_interior_r: min.0,
            min_interior_r_node: min.1,
            max_a2: state.frames().iter().map(|f| f.a2).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub exit_code: i32,
    pub reason: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neck_node: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neck_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_state: Option<StateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorReport>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("profile_{step:08}.svg"))
}

/// Meridian curve in the `(x, r)` half plane with the axis, the contact
/// plane, the `√2` cut markers and the round limit overlaid.
pub fn render_svg(state: &FlowState, monitor: Option<&MonitorReport>, conv: Option<&ConvergenceReport>) -> String {
    const SIZE: f64 = 640.0;
    const PAD: f64 = 32.0;
    let curve = state.curve();
    let nodes = curve.nodes();
    let (mut x0, mut x1, mut r1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for p in nodes {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        r1 = r1.max(p.r);
    }
    if let Some(c) = conv {
        x0 = x0.min(c.fitted_center_x - c.fitted_radius);
        x1 = x1.max(c.fitted_center_x + c.fitted_radius);
        r1 = r1.max(c.fitted_radius);
    }
    if curve.topology() != Topology::Closed {
        x0 = x0.min(0.0);
    }
    let span = (x1 - x0).max(r1).max(1e-12);
    let scale = (SIZE - 2.0 * PAD) / span;
    let height = r1 * scale + 2.0 * PAD;
    let sx = |x: f64| PAD + (x - x0) * scale;
    let sy = |r: f64| height - PAD - r * scale;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE:.0}\" height=\"{height:.1}\" viewBox=\"0 0 {SIZE:.0} {height:.1}\">\n"
    ));
    s.push_str(&format!(
        "<text x=\"{PAD}\" y=\"16\" font-size=\"12\">t = {:.6} step {}</text>\n",
        state.t(),
        state.step_index()
    ));
    s.push_str(&format!(
        "<line x1=\"0\" y1=\"{y:.2}\" x2=\"{SIZE:.0}\" y2=\"{y:.2}\" stroke=\"#888\" stroke-dasharray=\"6 3\"/>\n",
        y = sy(0.0)
    ));
    let planes: Vec<f64> = match curve.topology() {
        Topology::FreeBoundary => vec![0.0],
        Topology::Bridge => vec![0.0, curve.right_x()],
        Topology::Closed => vec![],
    };
    for px in planes {
        s.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{PAD}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#444\" stroke-width=\"2\"/>\n",
            sy(0.0),
            x = sx(px)
        ));
    }
    if let Some(c) = conv {
        let (cx, rad) = (c.fitted_center_x, c.fitted_radius);
        let start = if curve.topology() == Topology::Closed { cx - rad } else { cx };
        s.push_str(&format!(
            "<path d=\"M {:.2} {:.2} A {r:.2} {r:.2} 0 0 1 {:.2} {:.2}\" fill=\"none\" stroke=\"#3a7\" stroke-dasharray=\"4 2\"/>\n",
            sx(start),
            sy(if start == cx { rad } else { 0.0 }),
            sx(cx + rad),
            sy(0.0),
            r = rad * scale
        ));
    }
    if let Some(m) = monitor {
        for x in m.measurements.cut_x_sqrt2 {
            if x.is_finite() {
                s.push_str(&format!(
                    "<line x1=\"{x:.2}\" y1=\"{PAD}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#c33\" stroke-dasharray=\"2 2\"/>\n",
                    sy(0.0),
                    x = sx(x)
                ));
            }
        }
    }
    s.push_str("<polyline fill=\"none\" stroke=\"#000\" stroke-width=\"1.5\" points=\"");
    for (i, p) in nodes.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&format!("{:.2},{:.2}", sx(p.x), sy(p.r)));
    }
    s.push_str("\"/>\n</svg>\n");
    s
}
