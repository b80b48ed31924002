//! Static per-window reports: a five-panel SVG and the numbers behind it.
//!
//! Panels follow the usual fleet overview: (a) preprocessed signals,
//! (b) dissimilarity heatmap, (c) dendrogram, (d) partition, (e) anomaly
//! scores against `thr_ad`. Machines whose debounced state is faulty are
//! drawn in [`FLAGGED_COLOR`] wherever they appear and nowhere else.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::clustering::{Dendrogram, Node, Partition};
use crate::dissimilarity::DissimilarityMatrix;
use crate::pipeline::{RunResult, WindowResult};
use crate::signal::Series;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("window {0} is not part of the run")]
    UnknownWindow(usize),
    #[error("window {0} was skipped and has nothing to report")]
    SkippedWindow(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

pub const FLAGGED_COLOR: &str = "#d62728";
/// Cluster palette; never contains [`FLAGGED_COLOR`].
const PALETTE: [&str; 8] = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#bcbd22", "#7f7f7f", "#e377c2"];

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 280.0;
const MARGIN: f64 = 40.0;

/// Everything drawn in the report, serialized alongside the SVG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportData {
    pub window_index: usize,
    pub variant: String,
    pub thr_cc: f64,
    pub thr_ad: f64,
    pub machine_ids: Vec<String>,
    pub excluded: Vec<(String, String)>,
    pub matrix: DissimilarityMatrix,
    pub dendrogram: Value,
    pub leaf_order: Vec<String>,
    pub partition: Partition,
    pub scores: Vec<f64>,
    pub instant_anomalous: Vec<bool>,
    pub debounced_faulty: Vec<bool>,
}

impl ReportData {
    pub fn from_window(result: &RunResult, window: &WindowResult) -> Result<Self> {
        let idx = window.analysis.window_index;
        let (Some(matrix), Some(dendrogram), Some(partition)) =
            (&window.analysis.matrix, &window.analysis.dendrogram, &window.partition)
        else {
            return Err(ReportError::SkippedWindow(idx));
        };
        let ids = &window.analysis.machine_ids;
        let verdict = |id: &String| window.verdict.get(id).expect("every analyzed machine has a verdict");
        Ok(Self {
            window_index: idx,
            variant: serde_json::to_value(result.variant)?.as_str().unwrap_or_default().to_string(),
            thr_cc: result.config.thr_cc,
            thr_ad: result.config.thr_ad,
            machine_ids: ids.clone(),
            excluded: window.analysis.excluded.clone(),
            matrix: matrix.clone(),
            dendrogram: dendrogram.to_nested_json(),
            leaf_order: dendrogram.leaf_order().into_iter().map(|i| dendrogram.leaves[i].clone()).collect(),
            partition: partition.clone(),
            scores: ids.iter().map(|id| verdict(id).score.unwrap_or(0.0)).collect(),
            instant_anomalous: ids.iter().map(|id| verdict(id).instant_anomalous).collect(),
            debounced_faulty: ids.iter().map(|id| verdict(id).debounced_faulty).collect(),
        })
    }

    fn machine_color(&self, i: usize) -> &'static str {
        if self.debounced_faulty[i] {
            FLAGGED_COLOR
        } else {
            let cluster = self.partition.cluster_of(&self.machine_ids[i]).unwrap_or(0);
            PALETTE[cluster % PALETTE.len()]
        }
    }
}

/// Writes `window_<k>.svg` and `window_<k>.json` into `out_dir`.
pub fn emit_report(result: &RunResult, window_index: usize, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir)?;
    let svg = out_dir.join(format!("window_{window_index}.svg"));
    let json = emit_report_to(result, window_index, &svg)?;
    Ok((svg, json))
}

/// Writes the SVG to `svg_path` and the JSON next to it; returns the JSON path.
pub fn emit_report_to(result: &RunResult, window_index: usize, svg_path: &Path) -> Result<PathBuf> {
    let window = result.window(window_index).ok_or(ReportError::UnknownWindow(window_index))?;
    let data = ReportData::from_window(result, window)?;
    if let Some(parent) = svg_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(svg_path, render_svg(&data, &window.analysis.representations))?;
    let json_path = svg_path.with_extension("json");
    fs::write(&json_path, serde_json::to_string_pretty(&data)?)?;
    Ok(json_path)
}

pub fn render_svg(data: &ReportData, representations: &[Series]) -> String {
    let width = 3.0 * PANEL_W;
    let height = 2.0 * PANEL_H + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="20" font-size="14">Window {} — {} (thr_cc {}, thr_ad {:.3})</text>"#,
        data.window_index,
        escape(&data.variant),
        data.thr_cc,
        data.thr_ad
    );
    let top = 30.0;
    signals_panel(&mut s, data, representations, 0.0, top);
    heatmap_panel(&mut s, data, PANEL_W, top);
    dendrogram_panel(&mut s, data, 2.0 * PANEL_W, top);
    partition_panel(&mut s, data, 0.0, top + PANEL_H);
    scores_panel(&mut s, data, PANEL_W, top + PANEL_H);
    s.push_str("</svg>\n");
    s
}

fn panel_title(s: &mut String, id: &str, title: &str, x: f64, y: f64) {
    let _ = writeln!(s, r#"<g id="panel-{id}">"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13">({id}) {title}</text>"#, x + 10.0, y + 18.0);
}

/// The curve drawn for one machine: the series itself, the per-frame mean
/// of multi-dimensional frames, or the feature vector of single-frame data.
fn curve(rep: &Series) -> Vec<f64> {
    if rep.len() == 1 || rep.dim() == 1 {
        rep.values().to_vec()
    } else {
        rep.frames().map(|f| f.iter().sum::<f64>() / f.len() as f64).collect()
    }
}

fn signals_panel(s: &mut String, data: &ReportData, reps: &[Series], x0: f64, y0: f64) {
    panel_title(s, "a", "Preprocessed signals", x0, y0);
    let (px, py, w, h) = (x0 + MARGIN, y0 + 30.0, PANEL_W - 1.5 * MARGIN, PANEL_H - 60.0);
    let curves: Vec<Vec<f64>> = reps.iter().map(curve).collect();
    let lo = curves.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = curves.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let _ = writeln!(s, r##"<rect x="{px}" y="{py}" width="{w}" height="{h}" fill="none" stroke="#999"/>"##);
    if curves.iter().all(|c| c.len() == 1) {
        // Scalar representations: one dot per machine.
        let step = w / curves.len() as f64;
        for (i, c) in curves.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<circle data-machine="{}" cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#,
                escape(&data.machine_ids[i]),
                px + (i as f64 + 0.5) * step,
                py + h - (c[0] - lo) / span * h,
                data.machine_color(i)
            );
        }
        s.push_str("</g>\n");
        return;
    }
    for (i, c) in curves.iter().enumerate() {
        if c.is_empty() {
            continue;
        }
        let step = w / (c.len().max(2) - 1) as f64;
        let points: Vec<String> = c
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{:.2},{:.2}", px + k as f64 * step, py + h - (v - lo) / span * h))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-machine="{}" points="{}" fill="none" stroke="{}" stroke-width="1" opacity="0.8"/>"#,
            escape(&data.machine_ids[i]),
            points.join(" "),
            data.machine_color(i)
        );
    }
    s.push_str("</g>\n");
}

/// Viridis-like ramp sampled at five stops.
fn color_map(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn heatmap_panel(s: &mut String, data: &ReportData, x0: f64, y0: f64) {
    panel_title(s, "b", "Pairwise dissimilarities", x0, y0);
    let n = data.matrix.len();
    let size = PANEL_H - 80.0;
    let cell = size / n as f64;
    let (px, py) = (x0 + MARGIN + 10.0, y0 + 35.0);
    let max = data.matrix.values.iter().flatten().copied().fold(0.0, f64::max);
    let order: Vec<usize> = data.leaf_order.iter().map(|id| data.matrix.index_of(id).expect("leaf in matrix")).collect();
    for (r, &i) in order.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="9">{}</text>"#,
            px - 3.0,
            py + (r as f64 + 0.7) * cell,
            escape(&data.matrix.machine_ids[i])
        );
        for (c, &j) in order.iter().enumerate() {
            let v = data.matrix.get(i, j);
            let t = if max > 0.0 { v / max } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} / {}: {}</title></rect>"#,
                px + c as f64 * cell,
                py + r as f64 * cell,
                cell,
                cell,
                color_map(t),
                escape(&data.matrix.machine_ids[i]),
                escape(&data.matrix.machine_ids[j]),
                v
            );
        }
    }
    // Color bar.
    let bx = px + size + 15.0;
    for k in 0..20 {
        let t = 1.0 - k as f64 / 19.0;
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{:.2}" width="12" height="{:.2}" fill="{}"/>"#,
            py + k as f64 * size / 20.0,
            size / 20.0 + 0.5,
            color_map(t)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="9">{}</text>"#, bx + 15.0, py + 8.0, fmt_num(max));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="9">0</text>"#, bx + 15.0, py + size);
    s.push_str("</g>\n");
}

fn dendrogram_panel(s: &mut String, data: &ReportData, x0: f64, y0: f64) {
    panel_title(s, "c", "Dendrogram", x0, y0);
    let ids = &data.machine_ids;
    let Some(tree) = dendrogram_from(data) else {
        s.push_str("</g>\n");
        return;
    };
    let (px, py, w, h) = (x0 + MARGIN, y0 + 35.0, PANEL_W - 1.5 * MARGIN, PANEL_H - 90.0);
    let order = tree.leaf_order();
    let n = order.len();
    let max_h = tree.merges.iter().map(|m| m.height).fold(0.0, f64::max);
    let ys = |height: f64| py + h - if max_h > 0.0 { height / max_h * h } else { 0.0 };
    let mut leaf_x = vec![0.0; n];
    for (pos, &leaf) in order.iter().enumerate() {
        leaf_x[leaf] = px + (pos as f64 + 0.5) * w / n as f64;
        let i = ids.iter().position(|m| *m == tree.leaves[leaf]).expect("leaf is a machine");
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end" transform="rotate(-60 {:.2} {:.2})" fill="{}">{}</text>"#,
            leaf_x[leaf],
            py + h + 12.0,
            leaf_x[leaf],
            py + h + 12.0,
            data.machine_color(i),
            escape(&tree.leaves[leaf])
        );
    }
    let mut node_pos: Vec<(f64, f64)> = Vec::with_capacity(tree.merges.len());
    let at = |node: Node, node_pos: &Vec<(f64, f64)>| match node {
        Node::Leaf(i) => (leaf_x[i], py + h),
        Node::Merge(m) => node_pos[m],
    };
    for m in &tree.merges {
        let (lx, ly) = at(m.left, &node_pos);
        let (rx, ry) = at(m.right, &node_pos);
        let y = ys(m.height);
        let _ = writeln!(
            s,
            r##"<path d="M{lx:.2},{ly:.2} V{y:.2} H{rx:.2} V{ry:.2}" fill="none" stroke="#333"/>"##
        );
        node_pos.push(((lx + rx) / 2.0, y));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{}</text>"#, px - 3.0, py + 4.0, fmt_num(max_h));
    s.push_str("</g>\n");
}

fn dendrogram_from(data: &ReportData) -> Option<Dendrogram> {
    // The nested JSON is the canonical serialized form; rebuild the flat
    // merge list from it so the drawing uses exactly the reported numbers.
    fn walk(v: &Value, leaves: &mut Vec<String>, merges: &mut Vec<crate::clustering::Merge>) -> Option<Node> {
        if let Some(leaf) = v.get("leaf").and_then(Value::as_str) {
            leaves.push(leaf.to_string());
            return Some(Node::Leaf(leaves.len() - 1));
        }
        let children = v.get("children")?.as_array()?;
        let left = walk(children.first()?, leaves, merges)?;
        let right = walk(children.get(1)?, leaves, merges)?;
        merges.push(crate::clustering::Merge {
            left,
            right,
            height: v.get("height")?.as_f64()?,
            size: v.get("size")?.as_u64()? as usize,
        });
        Some(Node::Merge(merges.len() - 1))
    }
    let mut leaves = Vec::new();
    let mut merges = Vec::new();
    walk(data.dendrogram.get("tree")?, &mut leaves, &mut merges)?;
    Some(Dendrogram { leaves, merges, linkage: Default::default() })
}

fn partition_panel(s: &mut String, data: &ReportData, x0: f64, y0: f64) {
    panel_title(s, "d", "Cluster partition", x0, y0);
    let (px, mut py) = (x0 + MARGIN, y0 + 40.0);
    for (c, members) in data.partition.clusters.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{px}" y="{:.2}">cluster {}</text>"#, py + 12.0, c + 1);
        let mut x = px + 60.0;
        for id in members {
            let i = data.machine_ids.iter().position(|m| m == id).expect("partition member is a machine");
            let class = if data.debounced_faulty[i] { "machine flagged" } else { "machine" };
            let _ = writeln!(
                s,
                r#"<rect class="{class}" data-machine="{}" x="{x:.2}" y="{py:.2}" width="34" height="18" fill="{}"/>"#,
                escape(id),
                data.machine_color(i)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="white" font-size="9">{}</text>"#,
                x + 17.0,
                py + 12.5,
                escape(id)
            );
            x += 38.0;
            if x > x0 + PANEL_W - 40.0 {
                x = px + 60.0;
                py += 22.0;
            }
        }
        py += 28.0;
    }
    for (id, reason) in &data.excluded {
        let _ = writeln!(s, r##"<text x="{px}" y="{:.2}" fill="#777">excluded {}: {}</text>"##, py + 12.0, escape(id), escape(reason));
        py += 16.0;
    }
    s.push_str("</g>\n");
}

fn scores_panel(s: &mut String, data: &ReportData, x0: f64, y0: f64) {
    panel_title(s, "e", "Anomaly scores", x0, y0);
    let (px, py, w, h) = (x0 + MARGIN, y0 + 35.0, PANEL_W - 1.5 * MARGIN, PANEL_H - 90.0);
    let n = data.scores.len();
    let bar = w / n as f64;
    let _ = writeln!(s, r##"<line x1="{px}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999"/>"##, py + h, px + w, py + h);
    for (i, &score) in data.scores.iter().enumerate() {
        let bh = score * h;
        let class = if data.debounced_faulty[i] { "score flagged" } else { "score" };
        let _ = writeln!(
            s,
            r#"<rect class="{class}" data-machine="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}: {}</title></rect>"#,
            escape(&data.machine_ids[i]),
            px + i as f64 * bar + 0.1 * bar,
            py + h - bh,
            0.8 * bar,
            bh,
            data.machine_color(i),
            escape(&data.machine_ids[i]),
            score
        );
        let lx = px + (i as f64 + 0.5) * bar;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{:.2}" font-size="9" text-anchor="end" transform="rotate(-60 {lx:.2} {:.2})">{}</text>"#,
            py + h + 12.0,
            py + h + 12.0,
            escape(&data.machine_ids[i])
        );
    }
    let ty = py + h - data.thr_ad * h;
    let _ = writeln!(
        s,
        r##"<line id="thr-ad" x1="{px}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#000" stroke-dasharray="4 3"/>"##,
        px + w
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="9">thr_ad</text>"#, px + w - 30.0, ty - 3.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="9" text-anchor="end">1</text>"#, px - 3.0, py + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="9" text-anchor="end">0</text>"#, px - 3.0, py + h);
    s.push_str("</g>\n");
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
