//! Confidence map and ternary labels over the feature grid.

use crate::error::{Error, Result};
use crate::spectral::RealGrid;

/// Parameters of the confidence map `gamma * exp(-eta * d^shape)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    /// Normalization constant (peak value of the map).
    pub peak: f64,
    /// `eta = eta_factor * sqrt(rows * cols)` on the feature grid.
    pub eta_factor: f64,
    pub shape: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            peak: 1.0,
            eta_factor: 0.1,
            shape: 2.0,
            lower: 0.4,
            upper: 0.9,
        }
    }
}

impl LabelConfig {
    pub fn eta_for(&self, rows: usize, cols: usize) -> f64 {
        self.eta_factor * ((rows * cols) as f64).sqrt()
    }

    /// Labels for a grid of the given shape with the target at cell `(0, 0)`,
    /// which is where the zero-shift training sample lives.
    pub fn labels_for(&self, rows: usize, cols: usize) -> Result<LabelGrid> {
        let map = confidence_map(
            (rows, cols),
            (0, 0),
            self.peak,
            self.eta_for(rows, cols),
            self.shape,
        )?;
        assign_labels(&map, self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    scores: RealGrid,
    peak: f64,
    eta: f64,
    shape: f64,
}

impl ConfidenceMap {
    pub fn scores(&self) -> &RealGrid {
        &self.scores
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn shape_param(&self) -> f64 {
        self.shape
    }
}

/// Cyclic Euclidean distance between two cells of a `rows x cols` torus.
pub fn cyclic_distance(dims: (usize, usize), a: (usize, usize), b: (usize, usize)) -> f64 {
    let wrap = |p: usize, q: usize, n: usize| {
        let d = p.abs_diff(q);
        d.min(n - d) as f64
    };
    let dr = wrap(a.0, b.0, dims.0);
    let dc = wrap(a.1, b.1, dims.1);
    (dr * dr + dc * dc).sqrt()
}

pub fn confidence_map(
    dims: (usize, usize),
    center: (usize, usize),
    peak: f64,
    eta: f64,
    shape: f64,
) -> Result<ConfidenceMap> {
    for (name, v) in [("peak", peak), ("eta", eta), ("shape", shape)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
    }
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::invalid("shape", "grid dimensions must be >= 1"));
    }
    if center.0 >= dims.0 || center.1 >= dims.1 {
        return Err(Error::invalid(
            "center",
            format!("{center:?} outside {}x{} grid", dims.0, dims.1),
        ));
    }
    let scores = RealGrid::from_fn(dims.0, dims.1, |r, c| {
        let d = cyclic_distance(dims, (r, c), center);
        peak * (-eta * d.powf(shape)).exp()
    });
    Ok(ConfidenceMap {
        scores,
        peak,
        eta,
        shape,
    })
}

/// Ternary class label per cell: `+1` positive, `-1` negative, `0` ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    labels: RealGrid,
}

impl LabelGrid {
    /// Wraps a grid that must contain only -1, 0 and +1.
    pub fn from_grid(labels: RealGrid) -> Result<Self> {
        if labels
            .as_slice()
            .iter()
            .any(|&v| v != 1.0 && v != 0.0 && v != -1.0)
        {
            return Err(Error::invalid("labels", "values must be -1, 0 or +1"));
        }
        Ok(LabelGrid { labels })
    }

    pub fn grid(&self) -> &RealGrid {
        &self.labels
    }

    pub fn shape(&self) -> (usize, usize) {
        self.labels.shape()
    }

    /// Counts of (`+1`, `0`, `-1`) cells.
    pub fn counts(&self) -> (usize, usize, usize) {
        self.labels
            .as_slice()
            .iter()
            .fold((0, 0, 0), |(p, z, n), &v| match v {
                v if v > 0.0 => (p + 1, z, n),
                v if v < 0.0 => (p, z, n + 1),
                _ => (p, z + 1, n),
            })
    }
}

pub fn assign_labels(map: &ConfidenceMap, lower: f64, upper: f64) -> Result<LabelGrid> {
    if !(lower < upper) {
        return Err(Error::invalid(
            "thresholds",
            format!("lower {lower} must be below upper {upper}"),
        ));
    }
    let labels = map.scores.map(|s| {
        if s >= upper {
            1.0
        } else if s <= lower {
            -1.0
        } else {
            0.0
        }
    });
    Ok(LabelGrid { labels })
}
