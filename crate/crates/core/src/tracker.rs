//! Per-frame tracking loop: part layout, detection, reliability gating,
//! translation fusion, scale estimation and the adaptive model update.

use crate::error::{Error, Result};
use crate::features::{
    apply_window_with, color_histogram_with_bins, extract_hog, hann_window, sample_patch,
    ColorHistogram, HogConfig, ImageView,
};
use crate::labeling::{LabelConfig, LabelGrid};
use crate::solver::{
    filter_spectra, compute_omega, response, solve_joint, Kernel, PartSolution, PartTrainingInput,
    SolveMode, SolverConfig,
};
use crate::spectral::{ChannelSpectra, MultiChannelGrid, RealGrid, SpectralGrid};

/// Axis-aligned box in continuous pixel coordinates; covers
/// `[x, x + w) x [y, y + h)` with pixel `i` spanning `[i, i + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn from_center(center: (f64, f64), size: (f64, f64)) -> Self {
        BoundingBox {
            x: center.0 - size.0 / 2.0,
            y: center.1 - size.1 / 2.0,
            w: size.0,
            h: size.1,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrangement {
    /// Two rows by two columns, for near-square targets.
    Grid2x2,
    /// Three parts stacked vertically, for tall targets.
    Column3x1,
    /// Three parts side by side, for wide targets.
    Row1x3,
}

/// One part's placement, in units of the target size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartGeometry {
    pub offset: (f64, f64),
    pub size: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartLayout {
    pub arrangement: Arrangement,
    pub parts: Vec<PartGeometry>,
}

impl PartLayout {
    pub fn count(&self) -> usize {
        self.parts.len()
    }
}

/// Splits the target by aspect ratio `w / h`: 2x2 when `0.6 < r < 1.6`,
/// otherwise three parts along the long side.
pub fn make_layout(w: f64, h: f64) -> Result<PartLayout> {
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::invalid("target size", format!("{w}x{h} must be positive")));
    }
    let ratio = w / h;
    let third = 1.0 / 3.0;
    let (arrangement, parts) = if ratio <= 0.6 {
        let parts = [-third, 0.0, third]
            .iter()
            .map(|&dy| PartGeometry {
                offset: (0.0, dy),
                size: (1.0, third),
            })
            .collect();
        (Arrangement::Column3x1, parts)
    } else if ratio >= 1.6 {
        let parts = [-third, 0.0, third]
            .iter()
            .map(|&dx| PartGeometry {
                offset: (dx, 0.0),
                size: (third, 1.0),
            })
            .collect();
        (Arrangement::Row1x3, parts)
    } else {
        let parts = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)]
            .iter()
            .map(|&offset| PartGeometry {
                offset,
                size: (0.5, 0.5),
            })
            .collect();
        (Arrangement::Grid2x2, parts)
    };
    Ok(PartLayout { arrangement, parts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Search/training window relative to the part box.
    pub padding: f64,
    /// Minimum peak-to-sidelobe ratio of a reliable part.
    pub psr_threshold: f64,
    /// Minimum appearance similarity of a reliable part.
    pub similarity_threshold: f64,
    /// Base learning rate, scaled per part by its fusion weight.
    pub learning_rate: f64,
    /// Mix between PSR-based and similarity-based fusion weights.
    pub fusion_mix: f64,
    /// Bandwidth of the histogram similarity.
    pub similarity_bandwidth: f64,
    /// Exponential smoothing factor of the scale estimate.
    pub scale_smoothing: f64,
    /// Canonical part size in pixels before padding.
    pub canonical_size: usize,
    /// Apply the cosine taper to features before the DFT.
    pub use_window: bool,
    /// Multiplier on the (windowed) feature values.
    pub feature_gain: f64,
    /// Refine the response peak to a fractional cell offset.
    pub subcell: bool,
    pub hist_bins: usize,
    pub labels: LabelConfig,
    pub solver: SolverConfig,
    pub hog: HogConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            padding: 1.8,
            psr_threshold: 5.5,
            similarity_threshold: 0.2,
            learning_rate: 0.015,
            fusion_mix: 0.4,
            similarity_bandwidth: 0.5,
            scale_smoothing: 0.6,
            canonical_size: 48,
            use_window: true,
            feature_gain: 10.0,
            subcell: true,
            hist_bins: 8,
            labels: LabelConfig::default(),
            solver: SolverConfig::default(),
            hog: HogConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("padding", self.padding),
            ("psr_threshold", self.psr_threshold),
            ("similarity_threshold", self.similarity_threshold),
            ("similarity_bandwidth", self.similarity_bandwidth),
            ("feature_gain", self.feature_gain),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.fusion_mix) {
            return Err(Error::invalid("fusion_mix", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::invalid("learning_rate", "must lie in [0, 1]"));
        }
        if !(self.scale_smoothing > 0.0 && self.scale_smoothing <= 1.0) {
            return Err(Error::invalid("scale_smoothing", "must lie in (0, 1]"));
        }
        if self.padding < 1.0 {
            return Err(Error::invalid("padding", "must be >= 1"));
        }
        if self.canonical_size < self.hog.cell_size {
            return Err(Error::invalid("canonical_size", "smaller than one cell"));
        }
        if !(self.labels.lower < self.labels.upper) {
            return Err(Error::invalid("theta", "lower threshold must be below upper"));
        }
        self.hog.validate()?;
        self.solver.validate()
    }

    /// Side of the square resampled search window, a whole even number of
    /// cells close to `canonical_size * padding`.
    pub fn window_pixels(&self) -> usize {
        let cell = self.hog.cell_size as f64;
        let cells = (self.canonical_size as f64 * self.padding / (2.0 * cell)).round().max(1.0);
        (cells * 2.0 * cell) as usize
    }
}

/// Peak-to-sidelobe ratio `(max - mean) / std`; zero for a constant map.
pub fn psr(response: &RealGrid) -> f64 {
    let n = response.len() as f64;
    let mean = response.mean();
    let var = response.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let max = response.as_slice().iter().fold(f64::MIN, |m, &v| m.max(v));
    if std <= 1e-12 * max.abs().max(1.0) {
        return 0.0;
    }
    (max - mean) / std
}

/// Signed cyclic displacement `(rows, cols)` of the response peak; indices
/// past half the grid wrap to negative shifts.
pub fn peak_displacement(response: &RealGrid) -> (i64, i64) {
    let (r, c) = response.argmax();
    let wrap = |i: usize, n: usize| {
        if i > n / 2 {
            i as i64 - n as i64
        } else {
            i as i64
        }
    };
    (wrap(r, response.rows()), wrap(c, response.cols()))
}

/// Peak displacement refined by a three-point parabola through the peak
/// and its cyclic neighbours along each axis; offsets stay within half a
/// cell of the integer peak.
pub fn subcell_displacement(response: &RealGrid) -> (f64, f64) {
    let (r, c) = response.argmax();
    let (dr, dc) = peak_displacement(response);
    let (rows, cols) = response.shape();
    let fit = |prev: f64, peak: f64, next: f64| {
        let curv = prev - 2.0 * peak + next;
        if curv < 0.0 {
            (0.5 * (prev - next) / curv).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let along_rows = fit(
        response[((r + rows - 1) % rows, c)],
        response[(r, c)],
        response[((r + 1) % rows, c)],
    );
    let along_cols = fit(
        response[(r, (c + cols - 1) % cols)],
        response[(r, c)],
        response[(r, (c + 1) % cols)],
    );
    (dr as f64 + along_rows, dc as f64 + along_cols)
}

/// `exp(-|h_t - h_prev|^2 / gamma^2)`.
pub fn appearance_similarity(
    current: &ColorHistogram,
    previous: &ColorHistogram,
    gamma: f64,
) -> Result<f64> {
    Ok((-current.distance_sqr(previous)? / (gamma * gamma)).exp())
}

/// Reliability cues for one part in the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartObservation {
    /// Detected translation in pixels.
    pub translation: (f64, f64),
    pub psr: f64,
    pub similarity: f64,
    pub reliable: bool,
}

impl PartObservation {
    pub fn new(translation: (f64, f64), psr: f64, similarity: f64, cfg: &TrackerConfig) -> Self {
        PartObservation {
            translation,
            psr,
            similarity,
            reliable: psr > cfg.psr_threshold || similarity > cfg.similarity_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    /// Global translation applied to the target center.
    pub translation: (f64, f64),
    /// Fusion weight per part; zero for unreliable parts.
    pub weights: Vec<f64>,
    pub reliable_count: usize,
}

/// Weighted vote of the reliable parts; falls back to the previous
/// translation when none is reliable.
pub fn fuse_translation(
    parts: &[PartObservation],
    previous: (f64, f64),
    mix: f64,
) -> Fusion {
    let reliable: Vec<&PartObservation> = parts.iter().filter(|p| p.reliable).collect();
    let mut weights = vec![0.0; parts.len()];
    if reliable.is_empty() {
        return Fusion {
            translation: previous,
            weights,
            reliable_count: 0,
        };
    }
    let psr_sum: f64 = reliable.iter().map(|p| p.psr).sum();
    let sim_sum: f64 = reliable.iter().map(|p| p.similarity).sum();
    let n = reliable.len() as f64;
    // A cue that is zero on every reliable part carries no preference.
    let share = |v: f64, sum: f64| if sum > 0.0 { v / sum } else { 1.0 / n };
    let mut translation = (0.0, 0.0);
    for (w, p) in weights.iter_mut().zip(parts) {
        if !p.reliable {
            continue;
        }
        *w = (1.0 - mix) * share(p.psr, psr_sum) + mix * share(p.similarity, sim_sum);
        translation.0 += *w * p.translation.0;
        translation.1 += *w * p.translation.1;
    }
    Fusion {
        translation,
        weights,
        reliable_count: reliable.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub scale: f64,
    /// Mean pairwise distance ratio, when at least one pair was usable.
    pub raw_ratio: Option<f64>,
}

/// Mean over ordered pairs of reliable parts of
/// `|p_i^t - p_j^t| / |p_i^{t-1} - p_j^{t-1}|`, or `None` with fewer than
/// two reliable parts or no usable pair.
pub fn pairwise_distance_ratio(
    previous: &[(f64, f64)],
    current: &[(f64, f64)],
    reliable: &[bool],
) -> Option<f64> {
    let idx: Vec<usize> = (0..previous.len()).filter(|&i| reliable[i]).collect();
    if idx.len() < 2 {
        return None;
    }
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for &i in &idx {
        for &j in &idx {
            if i == j {
                continue;
            }
            let before = dist(previous[i], previous[j]);
            if before <= 1e-9 {
                continue;
            }
            sum += dist(current[i], current[j]) / before;
            pairs += 1;
        }
    }
    (pairs > 0).then(|| sum / pairs as f64)
}

/// Scale update `S_t = (1 - a) S_prev + a S_prev ratio`.
pub fn estimate_scale(
    previous: &[(f64, f64)],
    current: &[(f64, f64)],
    reliable: &[bool],
    scale_prev: f64,
    smoothing: f64,
) -> ScaleEstimate {
    match pairwise_distance_ratio(previous, current, reliable) {
        Some(ratio) => ScaleEstimate {
            scale: (1.0 - smoothing) * scale_prev + smoothing * scale_prev * ratio,
            raw_ratio: Some(ratio),
        },
        None => ScaleEstimate {
            scale: scale_prev,
            raw_ratio: None,
        },
    }
}

/// One part's learned model and per-frame bookkeeping.
#[derive(Debug, Clone)]
pub struct PartState {
    pub model: PartSolution,
    pub template: MultiChannelGrid,
    template_spectra: ChannelSpectra,
    pub appearance: ColorHistogram,
    /// Part center in pixels (anchored to the global box).
    pub position: (f64, f64),
    /// Part box size in pixels at the current scale.
    pub size: (f64, f64),
    pub psr: f64,
    pub similarity: f64,
    pub reliable: bool,
    pub weight: f64,
    pub learning_rate: f64,
    /// Latest detected translation in pixels.
    pub translation: (f64, f64),
    /// Structure weight used by the next joint solve.
    pub omega: f64,
}

impl PartState {
    pub fn template_spectra(&self) -> &ChannelSpectra {
        &self.template_spectra
    }

    pub fn observation(&self) -> PartObservation {
        PartObservation {
            translation: self.translation,
            psr: self.psr,
            similarity: self.similarity,
            reliable: self.reliable,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub response: RealGrid,
    /// Peak displacement in cells (rows, cols), fractional when refined.
    pub cells: (f64, f64),
    /// Peak displacement in pixels (x, y).
    pub translation: (f64, f64),
    pub psr: f64,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    /// Global target center in pixels.
    pub center: (f64, f64),
    /// Target size at scale 1.
    pub base_size: (f64, f64),
    pub scale: f64,
    pub layout: PartLayout,
    pub parts: Vec<PartState>,
    /// Global translation applied in the last frame.
    pub prev_translation: (f64, f64),
    pub alpha_root: SpectralGrid,
    pub frame_index: usize,
    /// Raw scale ratio measured in the last frame.
    pub last_scale_ratio: Option<f64>,
    /// Solver sweeps used by the last update.
    pub last_iterations: usize,
}

impl TrackerState {
    pub fn target_size(&self) -> (f64, f64) {
        (self.base_size.0 * self.scale, self.base_size.1 * self.scale)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::from_center(self.center, self.target_size())
    }
}

/// A tracking session for one target.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    state: TrackerState,
    window: Option<RealGrid>,
    labels: LabelGrid,
}

fn part_geometry(
    center: (f64, f64),
    target: (f64, f64),
    g: &PartGeometry,
) -> ((f64, f64), (f64, f64)) {
    (
        (center.0 + g.offset.0 * target.0, center.1 + g.offset.1 * target.1),
        (g.size.0 * target.0, g.size.1 * target.1),
    )
}

fn region_histogram(
    frame: &ImageView<'_>,
    center: (f64, f64),
    size: (f64, f64),
    bins: usize,
) -> Result<ColorHistogram> {
    let w = size.0.round().max(1.0) as usize;
    let h = size.1.round().max(1.0) as usize;
    let patch = sample_patch(frame, center, size, (w, h));
    color_histogram_with_bins(&patch.view(), bins)
}

impl Tracker {
    /// Learns the first-frame model for `bbox`.
    pub fn init(frame: &ImageView<'_>, bbox: BoundingBox, cfg: TrackerConfig) -> Result<Tracker> {
        cfg.validate()?;
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        if !(bbox.w > 0.0 && bbox.h > 0.0) {
            return Err(Error::BoxTooSmall(format!("{}x{}", bbox.w, bbox.h)));
        }
        let tol = 1.0;
        if bbox.x < -tol || bbox.y < -tol || bbox.x + bbox.w > fw + tol || bbox.y + bbox.h > fh + tol
        {
            return Err(Error::BoxOutsideFrame(
                bbox.as_array(),
                frame.width(),
                frame.height(),
            ));
        }
        let layout = make_layout(bbox.w, bbox.h)?;
        let cell = cfg.hog.cell_size as f64;
        for g in &layout.parts {
            if g.size.0 * bbox.w < cell || g.size.1 * bbox.h < cell {
                return Err(Error::BoxTooSmall(format!(
                    "{}x{} box gives {:.1}x{:.1} parts, cell is {cell}",
                    bbox.w,
                    bbox.h,
                    g.size.0 * bbox.w,
                    g.size.1 * bbox.h
                )));
            }
        }

        let side = cfg.window_pixels();
        let cells = side / cfg.hog.cell_size;
        let window = cfg.use_window.then(|| hann_window(cells, cells));
        let labels = cfg.labels.labels_for(cells, cells)?;
        let center = bbox.center();
        let target = (bbox.w, bbox.h);

        let mut tracker = Tracker {
            state: TrackerState {
                center,
                base_size: target,
                scale: 1.0,
                layout: layout.clone(),
                parts: Vec::new(),
                prev_translation: (0.0, 0.0),
                alpha_root: SpectralGrid::zeros(cells, cells),
                frame_index: 0,
                last_scale_ratio: None,
                last_iterations: 0,
            },
            window,
            labels,
            cfg,
        };

        let mut templates = Vec::with_capacity(layout.count());
        let mut inputs = Vec::with_capacity(layout.count());
        for g in &layout.parts {
            let (pos, size) = part_geometry(center, target, g);
            let x = tracker.features(frame, pos, size)?;
            let spectra = ChannelSpectra::of(&x);
            inputs.push(PartTrainingInput::from_spectra(
                spectra.clone(),
                tracker.labels.clone(),
                SpectralGrid::zeros(cells, cells),
                1.0,
            )?);
            templates.push((x, spectra, pos, size));
        }
        let solution = solve_joint(&inputs, &tracker.cfg.solver, SolveMode::First, None)?;
        tracker.state.last_iterations = solution.iterations;
        tracker.state.alpha_root = solution.alpha_root;

        let share = 1.0 / layout.count() as f64;
        for ((x, spectra, pos, size), model) in templates.into_iter().zip(solution.parts) {
            let appearance = region_histogram(frame, pos, size, tracker.cfg.hist_bins)?;
            tracker.state.parts.push(PartState {
                model,
                template: x,
                template_spectra: spectra,
                appearance,
                position: pos,
                size,
                psr: f64::INFINITY,
                similarity: 1.0,
                reliable: true,
                weight: share,
                learning_rate: share * tracker.cfg.learning_rate,
                translation: (0.0, 0.0),
                omega: 1.0,
            });
        }
        tracker.refresh_structure_weights()?;
        Ok(tracker)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.state.bounding_box()
    }

    /// Windowed HOG of the padded part window centered at `pos`.
    fn features(
        &self,
        frame: &ImageView<'_>,
        pos: (f64, f64),
        size: (f64, f64),
    ) -> Result<MultiChannelGrid> {
        let side = self.cfg.window_pixels();
        let window = (size.0 * self.cfg.padding, size.1 * self.cfg.padding);
        let patch = sample_patch(frame, pos, window, (side, side));
        let hog = extract_hog(&patch.view(), &self.cfg.hog)?;
        let gain = self.cfg.feature_gain;
        let scaled = match &self.window {
            Some(w) => {
                let w = w.map(|v| v * gain);
                apply_window_with(&hog, &w)
            }
            None if gain == 1.0 => hog,
            None => MultiChannelGrid::new(hog.channels().iter().map(|c| c.map(|v| v * gain)).collect())?,
        };
        Ok(scaled)
    }

    /// Pixels per cell along x and y for a part of the given size.
    fn cell_pixels(&self, size: (f64, f64)) -> (f64, f64) {
        let side = self.cfg.window_pixels() as f64;
        let cell = self.cfg.hog.cell_size as f64;
        (
            cell * size.0 * self.cfg.padding / side,
            cell * size.1 * self.cfg.padding / side,
        )
    }

    /// Correlates part `index`'s model with the current frame around its
    /// anchored position.
    pub fn detect_part(&self, index: usize, frame: &ImageView<'_>) -> Result<Detection> {
        let part = &self.state.parts[index];
        let z = self.features(frame, part.position, part.size)?;
        let zf = ChannelSpectra::of(&z);
        let kxz = self
            .cfg
            .solver
            .kernel
            .correlation(&part.template_spectra, &zf)?;
        let response = response(&kxz, &part.model.alpha_hat, part.model.bias)?;
        let cells = if self.cfg.subcell {
            subcell_displacement(&response)
        } else {
            let (r, c) = peak_displacement(&response);
            (r as f64, c as f64)
        };
        let (px, py) = self.cell_pixels(part.size);
        Ok(Detection {
            psr: psr(&response),
            translation: (cells.1 * px, cells.0 * py),
            cells,
            response,
        })
    }

    /// Processes one frame and returns the predicted target box.
    pub fn step(&mut self, frame: &ImageView<'_>) -> Result<BoundingBox> {
        let count = self.state.parts.len();
        self.anchor_parts();

        let mut observations = Vec::with_capacity(count);
        for i in 0..count {
            let det = self.detect_part(i, frame)?;
            let part = &self.state.parts[i];
            let moved = (
                part.position.0 + det.translation.0,
                part.position.1 + det.translation.1,
            );
            let hist = region_histogram(frame, moved, part.size, self.cfg.hist_bins)?;
            let similarity =
                appearance_similarity(&hist, &part.appearance, self.cfg.similarity_bandwidth)?;
            observations.push(PartObservation::new(det.translation, det.psr, similarity, &self.cfg));
        }

        let fusion = fuse_translation(&observations, self.state.prev_translation, self.cfg.fusion_mix);
        let previous: Vec<(f64, f64)> = self.state.parts.iter().map(|p| p.position).collect();
        let current: Vec<(f64, f64)> = previous
            .iter()
            .zip(&observations)
            .map(|(p, o)| (p.0 + o.translation.0, p.1 + o.translation.1))
            .collect();
        let reliable: Vec<bool> = observations.iter().map(|o| o.reliable).collect();
        let scale = estimate_scale(
            &previous,
            &current,
            &reliable,
            self.state.scale,
            self.cfg.scale_smoothing,
        );

        for ((part, obs), &w) in self
            .state
            .parts
            .iter_mut()
            .zip(&observations)
            .zip(&fusion.weights)
        {
            part.translation = obs.translation;
            part.psr = obs.psr;
            part.similarity = obs.similarity;
            part.reliable = obs.reliable;
            part.weight = w;
            part.learning_rate = if obs.reliable {
                w * self.cfg.learning_rate
            } else {
                0.0
            };
        }
        self.state.center.0 += fusion.translation.0;
        self.state.center.1 += fusion.translation.1;
        self.state.prev_translation = fusion.translation;
        self.state.scale = scale.scale;
        self.state.last_scale_ratio = scale.raw_ratio;
        self.state.frame_index += 1;

        self.anchor_parts();
        self.update_models(frame)?;
        log::debug!(
            "frame {}: reliable {}/{} scale {:.4} iterations {}",
            self.state.frame_index,
            fusion.reliable_count,
            count,
            self.state.scale,
            self.state.last_iterations
        );
        Ok(self.bounding_box())
    }

    /// Places every part at its layout position around the global box.
    fn anchor_parts(&mut self) {
        let target = self.state.target_size();
        let center = self.state.center;
        for (part, g) in self.state.parts.iter_mut().zip(&self.state.layout.parts) {
            let (pos, size) = part_geometry(center, target, g);
            part.position = pos;
            part.size = size;
        }
    }

    /// Retrains reliable parts jointly at their new positions and blends
    /// the result into their models with rate `rho_l`. Unreliable parts are
    /// left untouched.
    fn update_models(&mut self, frame: &ImageView<'_>) -> Result<()> {
        let active: Vec<usize> = (0..self.state.parts.len())
            .filter(|&i| self.state.parts[i].reliable && self.state.parts[i].learning_rate > 0.0)
            .collect();
        if active.is_empty() {
            self.state.last_iterations = 0;
            return Ok(());
        }

        let mut fresh = Vec::with_capacity(active.len());
        let mut inputs = Vec::with_capacity(active.len());
        for &i in &active {
            let part = &self.state.parts[i];
            let x = self.features(frame, part.position, part.size)?;
            let spectra = ChannelSpectra::of(&x);
            let hist = region_histogram(frame, part.position, part.size, self.cfg.hist_bins)?;
            inputs.push(PartTrainingInput::from_spectra(
                spectra,
                self.labels.clone(),
                part.model.alpha_hat.clone(),
                part.omega,
            )?);
            fresh.push((x, hist));
        }
        let warm: Vec<SpectralGrid> = active
            .iter()
            .map(|&i| self.state.parts[i].model.alpha_hat.clone())
            .collect();
        let solution = solve_joint(&inputs, &self.cfg.solver, SolveMode::Update, Some(&warm))?;
        self.state.last_iterations = solution.iterations;
        self.state.alpha_root = solution.alpha_root;

        for ((&i, (x, hist)), model) in active.iter().zip(fresh).zip(solution.parts) {
            let part = &mut self.state.parts[i];
            let rho = part.learning_rate;
            part.template = part.template.lerp(&x, rho)?;
            part.template_spectra = ChannelSpectra::of(&part.template);
            part.appearance = part.appearance.lerp(&hist, rho)?;
            part.model = PartSolution {
                alpha_hat: part.model.alpha_hat.lerp(&model.alpha_hat, rho)?,
                bias: (1.0 - rho) * part.model.bias + rho * model.bias,
                slack: model.slack,
                q: model.q,
            };
        }
        self.refresh_structure_weights()
    }

    /// Recomputes each part's structure weight from the distance between
    /// its filter and the root filter.
    fn refresh_structure_weights(&mut self) -> Result<()> {
        let kernel = self.cfg.solver.kernel;
        let parts = &self.state.parts;
        let root_template = match kernel {
            Kernel::Linear => {
                let n = parts.len() as f64;
                let mut channels: Vec<RealGrid> = parts[0].template.channels().to_vec();
                for p in &parts[1..] {
                    for (a, b) in channels.iter_mut().zip(p.template.channels()) {
                        *a = a.zip_map(b, |u, v| u + v)?;
                    }
                }
                let mean = MultiChannelGrid::new(
                    channels.into_iter().map(|c| c.map(|v| v / n)).collect(),
                )?;
                Some(ChannelSpectra::of(&mean))
            }
            Kernel::Gaussian { .. } => None,
        };
        let root_filter = match &root_template {
            Some(spectra) => filter_spectra(spectra, &self.state.alpha_root, kernel)?,
            None => vec![self.state.alpha_root.clone()],
        };
        let kappa = self.cfg.solver.kappa;
        let omegas = parts
            .iter()
            .map(|p| {
                let w = filter_spectra(&p.template_spectra, &p.model.alpha_hat, kernel)?;
                compute_omega(&w, &root_filter, kappa)
            })
            .collect::<Result<Vec<_>>>()?;
        for (p, o) in self.state.parts.iter_mut().zip(omegas) {
            p.omega = o;
        }
        Ok(())
    }
}
