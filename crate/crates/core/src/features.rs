//! Pixel buffers, 31-channel HOG, color histograms and the cosine taper.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spectral::{MultiChannelGrid, RealGrid};

/// Borrowed 8-bit image with an explicit row stride (in bytes).
#[derive(Debug, Clone, Copy)]
pub struct ImageView<'a> {
    data: &'a [u8],
    width: usize,
    height: usize,
    stride: usize,
    channels: usize,
}

impl<'a> ImageView<'a> {
    pub fn new(
        data: &'a [u8],
        width: usize,
        height: usize,
        stride: usize,
        channels: usize,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidBuffer(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if stride < width * channels {
            return Err(Error::InvalidBuffer(format!(
                "stride {stride} shorter than row of {width} x {channels}"
            )));
        }
        if height > 0 && data.len() < (height - 1) * stride + width * channels {
            return Err(Error::InvalidBuffer(format!(
                "buffer of {} bytes too short for {width}x{height} (stride {stride})",
                data.len()
            )));
        }
        Ok(ImageView {
            data,
            width,
            height,
            stride,
            channels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixel as RGB; grayscale is replicated across the three channels.
    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let o = y * self.stride + x * self.channels;
        if self.channels == 1 {
            let v = self.data[o];
            [v, v, v]
        } else {
            [self.data[o], self.data[o + 1], self.data[o + 2]]
        }
    }

    #[inline]
    fn sample(&self, x: usize, y: usize, ch: usize) -> u8 {
        self.data[y * self.stride + x * self.channels + ch]
    }
}

/// Owned, tightly packed 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        ImageView::new(&data, width, height, width * channels, channels)?;
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width * height)
            .flatten()
            .collect();
        Frame {
            width,
            height,
            channels: 3,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn view(&self) -> ImageView<'_> {
        ImageView {
            data: &self.data,
            width: self.width,
            height: self.height,
            stride: self.width * self.channels,
            channels: self.channels,
        }
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            let [r, g, b] = rgb.map(u32::from);
            self.data[o] = ((r * 299 + g * 587 + b * 114) / 1000) as u8;
        } else {
            self.data[o..o + 3].copy_from_slice(&rgb);
        }
    }

    /// Sub-image `[x0, x0 + w) x [y0, y0 + h)`, clipped to the frame.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Frame {
        let x1 = (x0 + w).min(self.width);
        let y1 = (y0 + h).min(self.height);
        let (x0, y0) = (x0.min(x1), y0.min(y1));
        let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0) * self.channels);
        for y in y0..y1 {
            let o = (y * self.width) * self.channels;
            data.extend_from_slice(&self.data[o + x0 * self.channels..o + x1 * self.channels]);
        }
        Frame {
            width: x1 - x0,
            height: y1 - y0,
            channels: self.channels,
            data,
        }
    }
}

/// Bilinear resampling of the axis-aligned window centered at
/// (`cx`, `cy`) with size `w x h` (pixels, may be fractional) into an
/// `out_w x out_h` patch. Pixel `i` covers `[i, i + 1)`. Samples outside
/// the frame replicate the nearest edge pixel.
pub fn sample_patch(
    frame: &ImageView<'_>,
    (cx, cy): (f64, f64),
    (w, h): (f64, f64),
    (out_w, out_h): (usize, usize),
) -> Frame {
    let channels = frame.channels;
    let mut data = vec![0u8; out_w * out_h * channels];
    let sx = w / out_w as f64;
    let sy = h / out_h as f64;
    let left = cx - w / 2.0;
    let top = cy - h / 2.0;
    let max_x = frame.width as f64 - 1.0;
    let max_y = frame.height as f64 - 1.0;

    let axis = |start: f64, step: f64, n: usize, max: f64| -> Vec<(usize, usize, f64)> {
        (0..n)
            .map(|i| {
                let u = (start + (i as f64 + 0.5) * step - 0.5).clamp(0.0, max);
                let i0 = u.floor();
                let i1 = (i0 + 1.0).min(max);
                (i0 as usize, i1 as usize, u - i0)
            })
            .collect()
    };
    let xs = axis(left, sx, out_w, max_x);
    let ys = axis(top, sy, out_h, max_y);

    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for ch in 0..channels {
                let p00 = frame.sample(x0, y0, ch) as f64;
                let p01 = frame.sample(x1, y0, ch) as f64;
                let p10 = frame.sample(x0, y1, ch) as f64;
                let p11 = frame.sample(x1, y1, ch) as f64;
                let top = p00 + (p01 - p00) * fx;
                let bot = p10 + (p11 - p10) * fx;
                let v = top + (bot - top) * fy;
                data[(oy * out_w + ox) * channels + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Frame {
        width: out_w,
        height: out_h,
        channels,
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogConfig {
    pub cell_size: usize,
    pub orientations: usize,
    pub channels: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell_size: 4,
            orientations: 9,
            channels: 31,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 {
            return Err(Error::invalid("cell_size", "must be >= 1"));
        }
        if self.orientations == 0 {
            return Err(Error::invalid("orientations", "must be >= 1"));
        }
        if self.channels != 3 * self.orientations + 4 {
            return Err(Error::invalid(
                "hog_channels",
                format!(
                    "{} orientations produce {} channels, not {}",
                    self.orientations,
                    3 * self.orientations + 4,
                    self.channels
                ),
            ));
        }
        Ok(())
    }
}

const HOG_TRUNCATION: f64 = 0.2;
const HOG_EPS: f64 = 1e-4;

/// Felzenszwalb-style HOG: `2 * orientations` contrast-sensitive channels,
/// `orientations` contrast-insensitive channels and four texture-energy
/// channels on a `floor(H / cell) x floor(W / cell)` grid.
pub fn extract_hog(region: &ImageView<'_>, cfg: &HogConfig) -> Result<MultiChannelGrid> {
    cfg.validate()?;
    let cell = cfg.cell_size;
    let (w, h) = (region.width, region.height);
    if w < cell || h < cell {
        return Err(Error::RegionTooSmall {
            width: w,
            height: h,
            cell,
        });
    }
    let rows = h / cell;
    let cols = w / cell;
    let n_sens = 2 * cfg.orientations;
    let bin_width = 2.0 * PI / n_sens as f64;

    // Orientation histograms, bilinearly distributed over neighbouring cells.
    let mut hist = vec![0.0f64; rows * cols * n_sens];
    let luma: Vec<[f64; 3]> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| region.rgb(x, y).map(f64::from))
        .collect();
    let px = |x: usize, y: usize| &luma[y * w + x];
    let color_channels = if region.channels == 1 { 1 } else { 3 };

    for y in 0..rows * cell {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..cols * cell {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let mut best = (0.0, 0.0, -1.0);
            for ch in 0..color_channels {
                let dx = px(xp, y)[ch] - px(xm, y)[ch];
                let dy = px(x, yp)[ch] - px(x, ym)[ch];
                let mag = dx * dx + dy * dy;
                if mag > best.2 {
                    best = (dx, dy, mag);
                }
            }
            let (dx, dy, mag2) = best;
            if mag2 <= 0.0 {
                continue;
            }
            let mag = mag2.sqrt();
            let angle = dy.atan2(dx).rem_euclid(2.0 * PI);
            let o = ((angle / bin_width).round() as usize) % n_sens;

            let fx = (x as f64 + 0.5) / cell as f64 - 0.5;
            let fy = (y as f64 + 0.5) / cell as f64 - 0.5;
            let cx0 = fx.floor();
            let cy0 = fy.floor();
            let wx1 = fx - cx0;
            let wy1 = fy - cy0;
            for (cy, wy) in [(cy0, 1.0 - wy1), (cy0 + 1.0, wy1)] {
                if cy < 0.0 || cy >= rows as f64 || wy == 0.0 {
                    continue;
                }
                for (cx, wx) in [(cx0, 1.0 - wx1), (cx0 + 1.0, wx1)] {
                    if cx < 0.0 || cx >= cols as f64 || wx == 0.0 {
                        continue;
                    }
                    let idx = (cy as usize * cols + cx as usize) * n_sens + o;
                    hist[idx] += wx * wy * mag;
                }
            }
        }
    }

    let energy: Vec<f64> = hist
        .chunks_exact(n_sens)
        .map(|hc| {
            (0..cfg.orientations)
                .map(|o| (hc[o] + hc[o + cfg.orientations]).powi(2))
                .sum()
        })
        .collect();
    let e = |r: isize, c: isize| {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        energy[r * cols + c]
    };

    let mut out = MultiChannelGrid::zeros(cfg.channels, rows, cols);
    let channels = out.channels_mut();
    for r in 0..rows {
        for c in 0..cols {
            let (ri, ci) = (r as isize, c as isize);
            let mut norms = [0.0; 4];
            for (k, (dr, dc)) in [(-1, -1), (-1, 0), (0, -1), (0, 0)].into_iter().enumerate() {
                let block = e(ri + dr, ci + dc)
                    + e(ri + dr + 1, ci + dc)
                    + e(ri + dr, ci + dc + 1)
                    + e(ri + dr + 1, ci + dc + 1);
                norms[k] = 1.0 / (block + HOG_EPS).sqrt();
            }
            let hc = &hist[(r * cols + c) * n_sens..(r * cols + c + 1) * n_sens];
            let mut texture = [0.0; 4];
            for (o, &v) in hc.iter().enumerate() {
                let mut acc = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let t = (v * n).min(HOG_TRUNCATION);
                    acc += t;
                    texture[k] += t;
                }
                channels[o][(r, c)] = 0.5 * acc;
            }
            for o in 0..cfg.orientations {
                let v = hc[o] + hc[o + cfg.orientations];
                let acc: f64 = norms.iter().map(|n| (v * n).min(HOG_TRUNCATION)).sum();
                channels[n_sens + o][(r, c)] = 0.5 * acc;
            }
            for (k, t) in texture.iter().enumerate() {
                channels[n_sens + cfg.orientations + k][(r, c)] = 0.2357 * t;
            }
        }
    }
    Ok(out)
}

/// L1-normalized joint RGB histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    bins_per_channel: usize,
    bins: Vec<f64>,
}

impl ColorHistogram {
    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn bins_per_channel(&self) -> usize {
        self.bins_per_channel
    }

    pub fn distance_sqr(&self, other: &ColorHistogram) -> Result<f64> {
        if self.bins.len() != other.bins.len() {
            return Err(Error::invalid(
                "histogram",
                format!("{} vs {} bins", self.bins.len(), other.bins.len()),
            ));
        }
        Ok(self
            .bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| (a - b).powi(2))
            .sum())
    }

    /// Convex combination `(1 - rate) * self + rate * other`; stays
    /// L1-normalized.
    pub fn lerp(&self, other: &ColorHistogram, rate: f64) -> Result<ColorHistogram> {
        if self.bins.len() != other.bins.len() {
            return Err(Error::invalid("histogram", "bin count mismatch"));
        }
        Ok(ColorHistogram {
            bins_per_channel: self.bins_per_channel,
            bins: self
                .bins
                .iter()
                .zip(&other.bins)
                .map(|(a, b)| (1.0 - rate) * a + rate * b)
                .collect(),
        })
    }
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 8;

pub fn color_histogram(region: &ImageView<'_>) -> Result<ColorHistogram> {
    color_histogram_with_bins(region, DEFAULT_HISTOGRAM_BINS)
}

pub fn color_histogram_with_bins(
    region: &ImageView<'_>,
    bins_per_channel: usize,
) -> Result<ColorHistogram> {
    if region.width == 0 || region.height == 0 {
        return Err(Error::EmptyRegion);
    }
    if !(1..=256).contains(&bins_per_channel) {
        return Err(Error::invalid("hist_bins", "must be in 1..=256"));
    }
    let b = bins_per_channel;
    let mut bins = vec![0.0; b * b * b];
    for y in 0..region.height {
        for x in 0..region.width {
            let [r, g, bl] = region.rgb(x, y).map(|v| v as usize * b / 256);
            bins[(r * b + g) * b + bl] += 1.0;
        }
    }
    let total = (region.width * region.height) as f64;
    bins.iter_mut().for_each(|v| *v /= total);
    Ok(ColorHistogram {
        bins_per_channel: b,
        bins,
    })
}

/// Separable Hann taper, zero at the borders.
pub fn hann_window(rows: usize, cols: usize) -> RealGrid {
    let taper = |n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos()))
            .collect()
    };
    let wr = taper(rows);
    let wc = taper(cols);
    RealGrid::from_fn(rows, cols, |r, c| wr[r] * wc[c])
}

pub fn apply_window(g: &MultiChannelGrid) -> MultiChannelGrid {
    let (rows, cols) = g.shape();
    apply_window_with(g, &hann_window(rows, cols))
}

pub(crate) fn apply_window_with(g: &MultiChannelGrid, window: &RealGrid) -> MultiChannelGrid {
    let channels = g
        .channels()
        .iter()
        .map(|ch| ch.zip_map(window, |a, w| a * w).expect("window shape"))
        .collect();
    MultiChannelGrid::new(channels).expect("non-empty")
}
