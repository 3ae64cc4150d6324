//! Deterministic synthetic sequences with exact ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sequence::{to_one_based, Sequence};
use crate::error::{Error, Result};
use crate::features::Frame;
use crate::tracker::BoundingBox;

/// Rectangle over the target, in fractions of the current target box,
/// drawn on frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occluder {
    pub start: usize,
    pub end: usize,
    pub rect: (f64, f64, f64, f64),
}

impl Occluder {
    pub fn covers(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Target size at scale 1.
    pub target: (f64, f64),
    /// `(frame, center)` keys of the piecewise-linear trajectory.
    pub waypoints: Vec<(usize, (f64, f64))>,
    /// `(frame, scale)` keys, interpolated linearly; empty means scale 1.
    pub scales: Vec<(usize, f64)>,
    pub occluders: Vec<Occluder>,
    /// Per-pixel uniform noise amplitude in gray levels (at most 2 keeps
    /// occluder pixels inside their histogram bin).
    pub noise: f64,
    /// Side of the target texture blocks in pixels at scale 1.
    pub block: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 320,
            height: 240,
            frames: 100,
            target: (100.0, 100.0),
            waypoints: vec![(0, (160.0, 120.0))],
            scales: Vec::new(),
            occluders: Vec::new(),
            noise: 2.0,
            block: 10.0,
        }
    }
}

fn interpolate<T: Copy>(keys: &[(usize, T)], t: usize, lerp: impl Fn(T, T, f64) -> T) -> Option<T> {
    let first = keys.first()?;
    if t <= first.0 {
        return Some(first.1);
    }
    for w in keys.windows(2) {
        let ((f0, a), (f1, b)) = (w[0], w[1]);
        if t <= f1 {
            let u = if f1 == f0 { 1.0 } else { (t - f0) as f64 / (f1 - f0) as f64 };
            return Some(lerp(a, b, u));
        }
    }
    keys.last().map(|k| k.1)
}

impl SynthSpec {
    pub fn center_at(&self, t: usize) -> (f64, f64) {
        interpolate(&self.waypoints, t, |a, b, u| {
            (a.0 + (b.0 - a.0) * u, a.1 + (b.1 - a.1) * u)
        })
        .unwrap_or((self.width as f64 / 2.0, self.height as f64 / 2.0))
    }

    pub fn scale_at(&self, t: usize) -> f64 {
        interpolate(&self.scales, t, |a, b, u| a + (b - a) * u).unwrap_or(1.0)
    }

    /// Target box in 0-based pixel coordinates.
    pub fn box_at(&self, t: usize) -> BoundingBox {
        let s = self.scale_at(t);
        BoundingBox::from_center(self.center_at(t), (self.target.0 * s, self.target.1 * s))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::invalid("synth", "frame size and count must be positive"));
        }
        if !(self.target.0 > 0.0 && self.target.1 > 0.0) {
            return Err(Error::invalid("synth", "target size must be positive"));
        }
        if self.waypoints.is_empty() {
            return Err(Error::invalid("synth", "trajectory needs at least one waypoint"));
        }
        let sorted = |f: &mut dyn Iterator<Item = usize>| {
            let v: Vec<usize> = f.collect();
            v.windows(2).all(|w| w[0] <= w[1])
        };
        if !sorted(&mut self.waypoints.iter().map(|w| w.0)) || !sorted(&mut self.scales.iter().map(|s| s.0)) {
            return Err(Error::invalid("synth", "keyframes must be in frame order"));
        }
        if self.scales.iter().any(|s| !(s.1 > 0.0)) {
            return Err(Error::invalid("synth", "scales must be positive"));
        }
        if !(self.block >= 1.0) || !(self.noise >= 0.0) {
            return Err(Error::invalid("synth", "block must be >= 1 and noise >= 0"));
        }
        Ok(())
    }

    /// Parses a flat spec file: `width`, `height`, `frames`, `noise`,
    /// `block`, `target = w,h`, and repeatable `waypoint = frame,x,y`,
    /// `scale = frame,s`, `occluder = start,end,fx,fy,fw,fh`.
    pub fn parse(text: &str, path: &Path) -> Result<SynthSpec> {
        let mut spec = SynthSpec {
            waypoints: Vec::new(),
            ..SynthSpec::default()
        };
        for (i, raw) in text.lines().enumerate() {
            let fail = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let nums = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|f| f.trim().parse::<f64>().map_err(|e| fail(format!("`{f}`: {e}"))))
                    .collect()
            };
            let arity = |v: Vec<f64>, n: usize| -> Result<Vec<f64>> {
                if v.len() == n {
                    Ok(v)
                } else {
                    Err(fail(format!("`{key}` takes {n} values, got {}", v.len())))
                }
            };
            let count = |v: f64| -> Result<usize> {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(fail(format!("`{key}` needs a whole number, got {v}")))
                }
            };
            match key {
                "width" => spec.width = count(arity(nums()?, 1)?[0])?,
                "height" => spec.height = count(arity(nums()?, 1)?[0])?,
                "frames" => spec.frames = count(arity(nums()?, 1)?[0])?,
                "noise" => spec.noise = arity(nums()?, 1)?[0],
                "block" => spec.block = arity(nums()?, 1)?[0],
                "target" => {
                    let v = arity(nums()?, 2)?;
                    spec.target = (v[0], v[1]);
                }
                "waypoint" => {
                    let v = arity(nums()?, 3)?;
                    spec.waypoints.push((count(v[0])?, (v[1], v[2])));
                }
                "scale" => {
                    let v = arity(nums()?, 2)?;
                    spec.scales.push((count(v[0])?, v[1]));
                }
                "occluder" => {
                    let v = arity(nums()?, 6)?;
                    spec.occluders.push(Occluder {
                        start: count(v[0])?,
                        end: count(v[1])?,
                        rect: (v[2], v[3], v[4], v[5]),
                    });
                }
                other => return Err(fail(format!("unknown key `{other}`"))),
            }
        }
        if spec.waypoints.is_empty() {
            spec.waypoints.push((0, (spec.width as f64 / 2.0, spec.height as f64 / 2.0)));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// A generated sequence plus the quantities it was built from.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub sequence: Sequence,
    /// Exact 0-based target boxes.
    pub boxes: Vec<BoundingBox>,
    pub scales: Vec<f64>,
    /// Occluded region per frame (0-based pixel box), if any.
    pub occlusion: Vec<Option<BoundingBox>>,
}

/// Smooth random color field: a coarse lattice of random colors with
/// bilinear interpolation.
fn value_noise(rng: &mut ChaCha8Rng, width: usize, height: usize, spacing: f64, lo: u8, hi: u8) -> Vec<[f64; 3]> {
    let gw = (width as f64 / spacing).ceil() as usize + 2;
    let gh = (height as f64 / spacing).ceil() as usize + 2;
    let lattice: Vec<[f64; 3]> = (0..gw * gh)
        .map(|_| [0; 3].map(|_: i32| rng.gen_range(lo..=hi) as f64))
        .collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / spacing, y as f64 / spacing);
            let (i, j) = (u.floor() as usize, v.floor() as usize);
            let (fu, fv) = (u - i as f64, v - j as f64);
            let at = |a: usize, b: usize| lattice[b * gw + a];
            let mut px = [0.0; 3];
            for (c, p) in px.iter_mut().enumerate() {
                let top = at(i, j)[c] * (1.0 - fu) + at(i + 1, j)[c] * fu;
                let bot = at(i, j + 1)[c] * (1.0 - fu) + at(i + 1, j + 1)[c] * fu;
                *p = top * (1.0 - fv) + bot * fv;
            }
            out.push(px);
        }
    }
    out
}

struct TargetTexture {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl TargetTexture {
    /// Blocks of saturated random colors with thin dark seams.
    fn generate(rng: &mut ChaCha8Rng, size: (f64, f64), block: f64) -> Self {
        let width = size.0.ceil() as usize;
        let height = size.1.ceil() as usize;
        let bw = (width as f64 / block).ceil() as usize;
        let bh = (height as f64 / block).ceil() as usize;
        let colors: Vec<[f64; 3]> = (0..bw * bh)
            .map(|_| {
                let mut c = [0; 3].map(|_: i32| rng.gen_range(0..=255) as f64);
                c[rng.gen_range(0..3)] = if rng.gen_bool(0.5) { 255.0 } else { 0.0 };
                c
            })
            .collect();
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (bx, by) = ((x as f64 / block) as usize, (y as f64 / block) as usize);
                let seam = x as f64 % block < 1.0 || y as f64 % block < 1.0;
                pixels.push(if seam { [20.0; 3] } else { colors[by * bw + bx] });
            }
        }
        TargetTexture {
            width,
            height,
            pixels,
        }
    }

    /// Bilinear lookup at texture coordinates, clamped to the border.
    fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let u = (u - 0.5).clamp(0.0, self.width as f64 - 1.0);
        let v = (v - 0.5).clamp(0.0, self.height as f64 - 1.0);
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let at = |x: usize, y: usize| self.pixels[y * self.width + x];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = at(x0, y0)[c] * (1.0 - fx) + at(x1, y0)[c] * fx;
            let bot = at(x0, y1)[c] * (1.0 - fx) + at(x1, y1)[c] * fx;
            *o = top * (1.0 - fy) + bot * fy;
        }
        out
    }
}

fn pixel_span(lo: f64, hi: f64, limit: usize) -> std::ops::Range<usize> {
    let a = lo.round().max(0.0) as usize;
    let b = (hi.round().max(0.0) as usize).min(limit);
    a.min(b)..b
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthSequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let boxes: Vec<BoundingBox> = (0..spec.frames).map(|t| spec.box_at(t)).collect();
    for (t, b) in boxes.iter().enumerate() {
        if b.x < 0.0 || b.y < 0.0 || b.x + b.w > w as f64 || b.y + b.h > h as f64 {
            return Err(Error::TrajectoryOutOfFrame(t));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = value_noise(&mut rng, w, h, 24.0, 70, 180);
    let texture = TargetTexture::generate(&mut rng, spec.target, spec.block);
    // Flat gray in the middle of the 96..=127 histogram bin.
    const OCCLUDER_LEVEL: f64 = 111.0;

    let mut frames = Vec::with_capacity(spec.frames);
    let mut occlusion = Vec::with_capacity(spec.frames);
    let mut scales = Vec::with_capacity(spec.frames);
    for (t, b) in boxes.iter().enumerate() {
        let s = spec.scale_at(t);
        scales.push(s);
        let mut canvas = background.clone();
        for y in pixel_span(b.y, b.y + b.h, h) {
            for x in pixel_span(b.x, b.x + b.w, w) {
                let u = (x as f64 + 0.5 - b.x) / s;
                let v = (y as f64 + 0.5 - b.y) / s;
                canvas[y * w + x] = texture.sample(u, v);
            }
        }
        let mut covered: Option<BoundingBox> = None;
        for o in spec.occluders.iter().filter(|o| o.covers(t)) {
            let r = BoundingBox::new(
                b.x + o.rect.0 * b.w,
                b.y + o.rect.1 * b.h,
                o.rect.2 * b.w,
                o.rect.3 * b.h,
            );
            for y in pixel_span(r.y, r.y + r.h, h) {
                for x in pixel_span(r.x, r.x + r.w, w) {
                    canvas[y * w + x] = [OCCLUDER_LEVEL; 3];
                }
            }
            covered = Some(match covered {
                None => r,
                Some(c) => {
                    let x0 = c.x.min(r.x);
                    let y0 = c.y.min(r.y);
                    BoundingBox::new(x0, y0, (c.x + c.w).max(r.x + r.w) - x0, (c.y + c.h).max(r.y + r.h) - y0)
                }
            });
        }
        occlusion.push(covered);

        let mut data = Vec::with_capacity(w * h * 3);
        for px in &canvas {
            for &c in px {
                let n = if spec.noise > 0.0 {
                    rng.gen_range(-spec.noise..=spec.noise)
                } else {
                    0.0
                };
                data.push((c + n).round().clamp(0.0, 255.0) as u8);
            }
        }
        frames.push(Frame::new(w, h, 3, data)?);
    }

    let gt = boxes.iter().map(to_one_based).collect();
    Ok(SynthSequence {
        sequence: Sequence::from_frames(format!("synth-{seed}"), frames, gt)?,
        boxes,
        scales,
        occlusion,
    })
}
