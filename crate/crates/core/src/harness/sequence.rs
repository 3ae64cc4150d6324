//! OTB-style sequences: numbered frames plus `groundtruth_rect.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::Frame;
use crate::tracker::BoundingBox;

const IMAGE_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "bmp"];

#[derive(Debug, Clone)]
pub enum FrameSource {
    Files(Vec<PathBuf>),
    Memory(Vec<Frame>),
}

/// Frames with 1-based ground-truth boxes.
#[derive(Debug, Clone)]
pub struct Sequence {
    name: String,
    frames: FrameSource,
    ground_truth: Vec<BoundingBox>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: FrameSource, ground_truth: Vec<BoundingBox>) -> Result<Self> {
        let count = match &frames {
            FrameSource::Files(f) => f.len(),
            FrameSource::Memory(f) => f.len(),
        };
        if count != ground_truth.len() {
            return Err(Error::CountMismatch {
                frames: count,
                boxes: ground_truth.len(),
            });
        }
        if let Some(b) = ground_truth.iter().find(|b| !(b.w > 0.0 && b.h > 0.0)) {
            return Err(Error::invalid(
                "ground truth",
                format!("box {:?} must have positive size", b.as_array()),
            ));
        }
        Ok(Sequence {
            name: name.into(),
            frames,
            ground_truth,
        })
    }

    pub fn from_frames(name: impl Into<String>, frames: Vec<Frame>, ground_truth: Vec<BoundingBox>) -> Result<Self> {
        Sequence::new(name, FrameSource::Memory(frames), ground_truth)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    pub fn ground_truth(&self) -> &[BoundingBox] {
        &self.ground_truth
    }

    pub fn source(&self) -> &FrameSource {
        &self.frames
    }

    /// Decodes (or clones) frame `index`.
    pub fn frame(&self, index: usize) -> Result<Frame> {
        match &self.frames {
            FrameSource::Files(paths) => load_frame(&paths[index]),
            FrameSource::Memory(frames) => Ok(frames[index].clone()),
        }
    }
}

/// Decodes an image file to 8-bit RGB.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(w as usize, h as usize, 3, img.into_raw())
}

/// Parses one `x,y,w,h` line; commas, tabs and spaces all separate fields.
pub fn parse_box_line(line: &str) -> std::result::Result<BoundingBox, String> {
    let fields: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let mut v = [0.0; 4];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f
            .parse::<f64>()
            .map_err(|e| format!("bad number `{f}`: {e}"))?;
        if !slot.is_finite() {
            return Err(format!("non-finite value `{f}`"));
        }
    }
    Ok(BoundingBox::new(v[0], v[1], v[2], v[3]))
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<BoundingBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_box_line(l).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Loads `dir/img/*` (ordered by frame number) and `dir/groundtruth_rect.txt`.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let img_dir = dir.join("img");
    let entries = fs::read_dir(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&img_dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if is_image {
            let n = frame_number(&path).ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: 0,
                message: "frame file name has no number".into(),
            })?;
            frames.push((n, path));
        }
    }
    frames.sort();

    let gt_path = dir.join("groundtruth_rect.txt");
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let boxes = parse_ground_truth(&text, &gt_path)?;

    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("sequence")
        .to_string();
    Sequence::new(
        name,
        FrameSource::Files(frames.into_iter().map(|(_, p)| p).collect()),
        boxes,
    )
}

/// 1-based box to the tracker's 0-based continuous coordinates.
pub fn to_pixel_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(b.x - 1.0, b.y - 1.0, b.w, b.h)
}

/// Tracker box back to 1-based coordinates.
pub fn to_one_based(b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(b.x + 1.0, b.y + 1.0, b.w, b.h)
}
