//! Plain-text report and per-frame box files.
//!
//! A report is a `key = value` header, then one `[sequence NAME]` section per
//! sequence (summary keys followed by a CSV frame table), then `[summary]`.

use std::fmt::Write as _;
use std::path::Path;

use super::config::config_entries;
use super::metrics::{EvalRecord, Metrics};
use super::run::{Ablation, TrackRun};
use crate::error::{Error, Result};
use crate::tracker::{BoundingBox, TrackerConfig};

pub const TABLE_HEADER: &str = "frame,x,y,w,h,gt_x,gt_y,gt_w,gt_h,cle,iou";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",")
}

fn record_row(r: &EvalRecord) -> String {
    let (p, g) = (r.predicted, r.ground_truth);
    format!(
        "{},{:.4},{:.4},{:.4},{:.4},{},{},{},{},{:.6},{:.6}",
        r.frame + 1,
        p.x,
        p.y,
        p.w,
        p.h,
        g.x,
        g.y,
        g.w,
        g.h,
        r.cle,
        r.overlap
    )
}

fn metric_lines(out: &mut String, m: &Metrics) {
    let _ = writeln!(out, "dp = {:.6}", m.dp);
    let _ = writeln!(out, "op = {:.6}", m.op);
    let _ = writeln!(out, "auc = {:.6}", m.auc);
    let _ = writeln!(out, "mean_iou = {:.6}", m.mean_iou);
    let _ = writeln!(out, "mean_cle = {:.6}", m.mean_cle);
    let _ = writeln!(out, "precision = {}", join(&m.precision));
    let _ = writeln!(out, "success = {}", join(&m.success));
}

pub fn render_report(
    cfg: &TrackerConfig,
    ablation: Option<Ablation>,
    seed: u64,
    runs: &[TrackRun],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# sskcf report");
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        out,
        "ablation = {}",
        ablation.map(|a| a.name()).unwrap_or("none")
    );
    let _ = writeln!(out, "seed = {seed}");
    for (k, v) in config_entries(cfg) {
        let _ = writeln!(out, "{k} = {v}");
    }
    for run in runs {
        let _ = writeln!(out, "\n[sequence {}]", run.name);
        let _ = writeln!(out, "frames = {}", run.records.len());
        let _ = writeln!(out, "elapsed_s = {:.6}", run.elapsed.as_secs_f64());
        let _ = writeln!(out, "fps = {:.3}", run.fps);
        metric_lines(&mut out, &run.metrics);
        let _ = writeln!(out, "{TABLE_HEADER}");
        for r in &run.records {
            let _ = writeln!(out, "{}", record_row(r));
        }
    }
    if !runs.is_empty() {
        let n = runs.len() as f64;
        let mean = |f: &dyn Fn(&TrackRun) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let _ = writeln!(out, "\n[summary]");
        let _ = writeln!(out, "sequences = {}", runs.len());
        let _ = writeln!(out, "mean_dp = {:.6}", mean(&|r| r.metrics.dp));
        let _ = writeln!(out, "mean_op = {:.6}", mean(&|r| r.metrics.op));
        let _ = writeln!(out, "mean_auc = {:.6}", mean(&|r| r.metrics.auc));
        let _ = writeln!(out, "mean_fps = {:.3}", mean(&|r| r.fps));
    }
    out
}

/// Parsed form of a rendered report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub header: Vec<(String, String)>,
    pub sections: Vec<ReportSection>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportSection {
    /// `sequence NAME` or `summary`.
    pub title: String,
    pub values: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

fn lookup<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

impl Report {
    pub fn parse(text: &str) -> std::result::Result<Report, String> {
        let mut report = Report::default();
        let mut section: Option<ReportSection> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line == TABLE_HEADER {
                continue;
            }
            if let Some(title) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                report.sections.extend(section.take());
                section = Some(ReportSection {
                    title: title.to_string(),
                    ..Default::default()
                });
            } else if let Some((k, v)) = line.split_once(" = ") {
                let pair = (k.to_string(), v.to_string());
                match &mut section {
                    Some(s) => s.values.push(pair),
                    None => report.header.push(pair),
                }
            } else {
                let row = line
                    .split(',')
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| format!("line {}: {e}", i + 1))?;
                section
                    .as_mut()
                    .ok_or_else(|| format!("line {}: table row outside a section", i + 1))?
                    .rows
                    .push(row);
            }
        }
        report.sections.extend(section);
        Ok(report)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.header, key)
    }
}

impl ReportSection {
    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.values, key)
    }
}

pub fn render_boxes(boxes: &[BoundingBox]) -> String {
    boxes
        .iter()
        .map(|b| format!("{:.4},{:.4},{:.4},{:.4}\n", b.x, b.y, b.w, b.h))
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
