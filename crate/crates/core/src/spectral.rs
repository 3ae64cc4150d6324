//! Circulant and Fourier algebra.
//!
//! Every closed form in the solver is an element-wise operation on 2-D
//! spectra. The forward transform is unnormalized and the inverse carries the
//! `1 / (rows * cols)` factor, so `idft2(dft2(g)) == g` and the spectrum of a
//! constant grid `c` is `c * rows * cols` at DC.

use std::cell::RefCell;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Largest grid, in cells, accepted by [`dense_circulant`].
pub const DENSE_ORACLE_MAX_CELLS: usize = 256;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// A real scalar field over an `rows x cols` grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be >= 1");
        RealGrid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("shape", "grid dimensions must be >= 1"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(
                "data",
                format!("expected {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(RealGrid { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                g.data[r * cols + c] = f(r, c);
            }
        }
        g
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealGrid {
        RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two grids of identical shape.
    pub fn zip_map(&self, other: &RealGrid, f: impl Fn(f64, f64) -> f64) -> Result<RealGrid> {
        check_shape(self.shape(), other.shape())?;
        Ok(RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Row and column of the largest value; ties resolve to the first in
    /// row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

impl Index<(usize, usize)> for RealGrid {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RealGrid {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Complex spectrum of a grid, same shape as its spatial origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl SpectralGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be >= 1");
        SpectralGrid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("shape", "grid dimensions must be >= 1"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(
                "data",
                format!("expected {} bins, got {}", rows * cols, data.len()),
            ));
        }
        Ok(SpectralGrid { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn conj(&self) -> SpectralGrid {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, k: f64) -> SpectralGrid {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> SpectralGrid {
        SpectralGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &SpectralGrid,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<SpectralGrid> {
        check_shape(self.shape(), other.shape())?;
        Ok(SpectralGrid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Element-wise (Hadamard) product.
    pub fn hadamard(&self, other: &SpectralGrid) -> Result<SpectralGrid> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add(&self, other: &SpectralGrid) -> Result<SpectralGrid> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralGrid) -> Result<SpectralGrid> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Sum of squared bin magnitudes.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Mean absolute bin-wise difference.
    pub fn mean_abs_diff(&self, other: &SpectralGrid) -> Result<f64> {
        check_shape(self.shape(), other.shape())?;
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .sum();
        Ok(total / self.data.len() as f64)
    }

    /// `(1 - rate) * self + rate * other`.
    pub fn lerp(&self, other: &SpectralGrid, rate: f64) -> Result<SpectralGrid> {
        self.zip_map(other, |a, b| a * (1.0 - rate) + b * rate)
    }
}

impl Index<(usize, usize)> for SpectralGrid {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for SpectralGrid {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// An ordered stack of equally shaped channels (e.g. 31 HOG channels).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelGrid {
    channels: Vec<RealGrid>,
}

impl MultiChannelGrid {
    pub fn new(channels: Vec<RealGrid>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("channels", "at least one channel required"))?;
        let shape = first.shape();
        for ch in &channels[1..] {
            check_shape(shape, ch.shape())?;
        }
        Ok(MultiChannelGrid { channels })
    }

    pub fn single(grid: RealGrid) -> Self {
        MultiChannelGrid {
            channels: vec![grid],
        }
    }

    pub fn zeros(depth: usize, rows: usize, cols: usize) -> Self {
        assert!(depth >= 1);
        MultiChannelGrid {
            channels: (0..depth).map(|_| RealGrid::zeros(rows, cols)).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn channels(&self) -> &[RealGrid] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [RealGrid] {
        &mut self.channels
    }

    pub fn channel(&self, i: usize) -> &RealGrid {
        &self.channels[i]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.channels.iter().map(RealGrid::norm_sqr).sum()
    }

    /// `(1 - rate) * self + rate * other`, channel by channel.
    pub fn lerp(&self, other: &MultiChannelGrid, rate: f64) -> Result<MultiChannelGrid> {
        if self.depth() != other.depth() {
            return Err(Error::invalid(
                "channels",
                format!("depth {} vs {}", self.depth(), other.depth()),
            ));
        }
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.zip_map(b, |x, y| (1.0 - rate) * x + rate * y))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiChannelGrid { channels })
    }
}

/// Per-channel spectra of a [`MultiChannelGrid`] together with its squared
/// norm, cached so kernel correlations against it need no further transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectra {
    channels: Vec<SpectralGrid>,
    norm_sqr: f64,
}

impl ChannelSpectra {
    pub fn of(x: &MultiChannelGrid) -> Self {
        ChannelSpectra {
            channels: x.channels().iter().map(dft2).collect(),
            norm_sqr: x.norm_sqr(),
        }
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn channels(&self) -> &[SpectralGrid] {
        &self.channels
    }

    pub fn norm_sqr(&self) -> f64 {
        self.norm_sqr
    }
}

pub(crate) fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

fn fft2_in_place(rows: usize, cols: usize, data: &mut [Complex64], direction: FftDirection) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(cols, direction);
        let col_fft = planner.plan_fft(rows, direction);
        drop(planner);

        row_fft.process(data);

        let mut column = vec![Complex64::new(0.0, 0.0); rows];
        let mut scratch = vec![Complex64::new(0.0, 0.0); col_fft.get_inplace_scratch_len()];
        for c in 0..cols {
            for r in 0..rows {
                column[r] = data[r * cols + c];
            }
            col_fft.process_with_scratch(&mut column, &mut scratch);
            for r in 0..rows {
                data[r * cols + c] = column[r];
            }
        }
    });
}

/// Forward 2-D DFT (unnormalized).
pub fn dft2(g: &RealGrid) -> SpectralGrid {
    let mut data: Vec<Complex64> = g.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(g.rows, g.cols, &mut data, FftDirection::Forward);
    SpectralGrid {
        rows: g.rows,
        cols: g.cols,
        data,
    }
}

/// Inverse 2-D DFT keeping the complex result.
pub fn idft2_complex(s: &SpectralGrid) -> Vec<Complex64> {
    let mut data = s.data.clone();
    fft2_in_place(s.rows, s.cols, &mut data, FftDirection::Inverse);
    let k = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|v| *v *= k);
    data
}

/// Inverse 2-D DFT, truncated to the real part.
pub fn idft2(s: &SpectralGrid) -> RealGrid {
    RealGrid {
        rows: s.rows,
        cols: s.cols,
        data: idft2_complex(s).into_iter().map(|v| v.re).collect(),
    }
}

/// Cyclic translation: the value at `(m, n)` moves to `(m + dm, n + dn)`.
pub fn circ_shift(g: &RealGrid, dm: i64, dn: i64) -> RealGrid {
    let (rows, cols) = g.shape();
    let sm = dm.rem_euclid(rows as i64) as usize;
    let sn = dn.rem_euclid(cols as i64) as usize;
    let mut out = RealGrid::zeros(rows, cols);
    for r in 0..rows {
        let tr = (r + sm) % rows;
        for c in 0..cols {
            out.data[tr * cols + (c + sn) % cols] = g.data[r * cols + c];
        }
    }
    out
}

/// Spectrum of the linear cross-correlation `k^{xz}`:
/// `sum_c conj(dft2(x_c)) * dft2(z_c)`.
pub fn linear_kernel_spectrum(x: &MultiChannelGrid, z: &MultiChannelGrid) -> Result<SpectralGrid> {
    linear_kernel_from_spectra(&ChannelSpectra::of(x), &ChannelSpectra::of(z))
}

pub fn linear_kernel_from_spectra(x: &ChannelSpectra, z: &ChannelSpectra) -> Result<SpectralGrid> {
    check_depth(x.depth(), z.depth())?;
    check_shape(x.shape(), z.shape())?;
    let (rows, cols) = x.shape();
    let mut acc = SpectralGrid::zeros(rows, cols);
    for (xc, zc) in x.channels.iter().zip(&z.channels) {
        for ((a, xv), zv) in acc.data.iter_mut().zip(&xc.data).zip(&zc.data) {
            *a += xv.conj() * zv;
        }
    }
    Ok(acc)
}

/// Spatial Gaussian kernel map
/// `k[m,n] = exp(-(|x|^2 + |z|^2 - 2 c[m,n]) / (sigma^2 * D * rows * cols))`
/// where `c` is the linear cross-correlation.
pub fn gaussian_kernel_map(x: &ChannelSpectra, z: &ChannelSpectra, sigma: f64) -> Result<RealGrid> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "kernel bandwidth must be positive"));
    }
    let cross = idft2(&linear_kernel_from_spectra(x, z)?);
    let (rows, cols) = x.shape();
    let denom = sigma * sigma * (x.depth() * rows * cols) as f64;
    let base = x.norm_sqr() + z.norm_sqr();
    // Rounding can push the distance slightly negative for self-correlation.
    Ok(cross.map(|c| (-(base - 2.0 * c).max(0.0) / denom).exp()))
}

pub fn gaussian_kernel_from_spectra(
    x: &ChannelSpectra,
    z: &ChannelSpectra,
    sigma: f64,
) -> Result<SpectralGrid> {
    Ok(dft2(&gaussian_kernel_map(x, z, sigma)?))
}

/// Spectrum of the Gaussian kernel cross-correlation `k^{xz}`.
pub fn gaussian_kernel_spectrum(
    x: &MultiChannelGrid,
    z: &MultiChannelGrid,
    sigma: f64,
) -> Result<SpectralGrid> {
    gaussian_kernel_from_spectra(&ChannelSpectra::of(x), &ChannelSpectra::of(z), sigma)
}

fn check_depth(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid("channels", format!("depth {a} vs {b}")));
    }
    Ok(())
}

/// Square row-major matrix used by the dense verification oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Explicit circulant matrix of `x`, i.e. `F^H diag(dft2(x)) F`: entry
/// `(s, i)` is `x[s - i]` with cyclic 2-D index arithmetic, so
/// `X v == idft2(dft2(x) * dft2(v))`. Oracle use only.
pub fn dense_circulant(x: &RealGrid) -> Result<DenseMatrix> {
    let (rows, cols) = x.shape();
    let n = rows * cols;
    if n > DENSE_ORACLE_MAX_CELLS {
        return Err(Error::OracleTooLarge {
            cells: n,
            max: DENSE_ORACLE_MAX_CELLS,
        });
    }
    let mut data = vec![0.0; n * n];
    for sr in 0..rows {
        for sc in 0..cols {
            let s = sr * cols + sc;
            for ir in 0..rows {
                for ic in 0..cols {
                    let r = (sr + rows - ir) % rows;
                    let c = (sc + cols - ic) % cols;
                    data[s * n + ir * cols + ic] = x[(r, c)];
                }
            }
        }
    }
    Ok(DenseMatrix { n, data })
}
