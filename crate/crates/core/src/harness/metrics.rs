//! Center error, overlap and the precision/success summaries.

use crate::error::{Error, Result};
use crate::tracker::BoundingBox;

pub const DP_THRESHOLD: f64 = 20.0;
pub const OP_THRESHOLD: f64 = 0.5;
/// Precision curve thresholds are `0..=PRECISION_MAX` pixels.
pub const PRECISION_MAX: usize = 50;
/// Success curve thresholds are `k / SUCCESS_STEPS` for `k = 0..=SUCCESS_STEPS`.
pub const SUCCESS_STEPS: usize = 20;

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn center_error(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ca, cb) = (a.center(), b.center());
    ((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub frame: usize,
    pub predicted: BoundingBox,
    pub ground_truth: BoundingBox,
    /// Center location error in pixels.
    pub cle: f64,
    pub overlap: f64,
}

impl EvalRecord {
    pub fn new(frame: usize, predicted: BoundingBox, ground_truth: BoundingBox) -> Self {
        EvalRecord {
            frame,
            predicted,
            ground_truth,
            cle: center_error(&predicted, &ground_truth),
            overlap: iou(&predicted, &ground_truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub frames: usize,
    /// Fraction of frames with center error below 20 px.
    pub dp: f64,
    /// Fraction of frames with overlap above 0.5.
    pub op: f64,
    /// `precision[t]`: fraction with center error below `t` pixels.
    pub precision: Vec<f64>,
    /// `success[k]`: fraction with overlap above `k / 20`.
    pub success: Vec<f64>,
    /// Mean of the sampled success curve.
    pub auc: f64,
    pub mean_iou: f64,
    pub mean_cle: f64,
}

pub fn success_thresholds() -> Vec<f64> {
    (0..=SUCCESS_STEPS)
        .map(|k| k as f64 / SUCCESS_STEPS as f64)
        .collect()
}

fn fraction(n: usize, total: usize) -> f64 {
    n as f64 / total as f64
}

pub fn metrics(records: &[EvalRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let n = records.len();
    let below = |t: f64| records.iter().filter(|r| r.cle < t).count();
    let above = |t: f64| records.iter().filter(|r| r.overlap > t).count();
    let precision = (0..=PRECISION_MAX)
        .map(|t| fraction(below(t as f64), n))
        .collect();
    let success: Vec<f64> = success_thresholds()
        .into_iter()
        .map(|t| fraction(above(t), n))
        .collect();
    let auc = success.iter().sum::<f64>() / success.len() as f64;
    Ok(Metrics {
        frames: n,
        dp: fraction(below(DP_THRESHOLD), n),
        op: fraction(above(OP_THRESHOLD), n),
        precision,
        success,
        auc,
        mean_iou: records.iter().map(|r| r.overlap).sum::<f64>() / n as f64,
        mean_cle: records.iter().map(|r| r.cle).sum::<f64>() / n as f64,
    })
}
