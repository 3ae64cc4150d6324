//! Joint ADMM solver for the part filters.
//!
//! Every part `l` owns dual coefficients `alpha_l` (kept in the Fourier
//! domain) and a bias `b_l`. Parts are coupled through a star structure: a
//! root coefficient vector `alpha_r`, the `omega`-weighted mean of all parts,
//! pulls on each part with weight `delta * omega_l`, and a temporal anchor
//! `alpha_prev` pulls with weight `beta`. One ADMM sweep is
//!
//! 1. `alpha_r = sum(omega_l alpha_l) / sum(omega_l)`
//! 2. `v_l = max(y * (K_l alpha_l / 2 + b_l) - 1, 0)`, `q_l = y + y * v_l`
//! 3. `b_l = mean(q_l)`
//! 4. `alpha_l = (q_l - b_l - delta omega_l alpha_r - beta alpha_prev)
//!    / (K_l / 2 + 1/(2C) - delta omega_l - beta)`, bin by bin.
//!
//! The scalar regularizer in step 4 multiplies the identity, so it is added
//! to every frequency bin. Because `delta * omega + beta` is subtracted, the
//! denominator crosses zero on bins where `K / 2` is close to it, and the
//! sweeps only settle when the pulls are small next to every bin of
//! `K / 2 + 1/(2C)`. [`SolverConfig::pull_cap`] scales each part's pulls
//! down to a fraction of its weakest bin (see [`pull_scale`]); scaling the
//! pulls by `s` is the same as scaling that part's features by `1/sqrt(s)`.

use crate::error::{Error, Result};
use crate::labeling::LabelGrid;
use crate::spectral::{
    check_shape, dft2, gaussian_kernel_from_spectra, idft2, linear_kernel_from_spectra,
    ChannelSpectra, MultiChannelGrid, RealGrid, SpectralGrid,
};

/// Denominator bins smaller than this are reported as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Gaussian { sigma: f64 },
}

impl Kernel {
    /// Spectrum of the kernel correlation between two feature stacks.
    pub fn correlation(&self, x: &ChannelSpectra, z: &ChannelSpectra) -> Result<SpectralGrid> {
        match *self {
            Kernel::Linear => linear_kernel_from_spectra(x, z),
            Kernel::Gaussian { sigma } => gaussian_kernel_from_spectra(x, z, sigma),
        }
    }

    pub fn autocorrelation(&self, x: &ChannelSpectra) -> Result<SpectralGrid> {
        self.correlation(x, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Trade-off `C` between margin and slack.
    pub c: f64,
    /// Structure weight `delta`.
    pub delta: f64,
    /// Temporal weight `beta`.
    pub beta: f64,
    /// Smoothing `kappa` of the structure weights.
    pub kappa: f64,
    /// Convergence threshold on the mean absolute change of `alpha_hat`.
    pub tau: f64,
    pub max_iter_first: usize,
    pub max_iter_update: usize,
    pub kernel: Kernel,
    /// Largest share of a part's weakest denominator bin that
    /// `delta * omega + beta` may take; `None` applies the pulls unscaled.
    pub pull_cap: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1e4,
            delta: 0.05,
            beta: 5.0,
            kappa: 3.0,
            tau: 1e-3,
            max_iter_first: 5,
            max_iter_update: 3,
            kernel: Kernel::Linear,
            pull_cap: Some(0.03),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("c", self.c), ("kappa", self.kappa), ("tau", self.tau)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        // Zero is allowed for the ablations.
        for (name, v) in [("delta", self.delta), ("beta", self.beta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.max_iter_first == 0 || self.max_iter_update == 0 {
            return Err(Error::invalid("max_iter", "iteration caps must be >= 1"));
        }
        if let Some(cap) = self.pull_cap {
            if !(cap > 0.0 && cap < 1.0) {
                return Err(Error::invalid("pull_cap", format!("must lie in (0, 1), got {cap}")));
            }
        }
        if let Kernel::Gaussian { sigma } = self.kernel {
            if !(sigma > 0.0) {
                return Err(Error::invalid("kernel_sigma", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Training data for one part.
#[derive(Debug, Clone)]
pub struct PartTrainingInput {
    spectra: ChannelSpectra,
    labels: LabelGrid,
    alpha_prev: SpectralGrid,
    omega: f64,
}

impl PartTrainingInput {
    pub fn new(
        features: &MultiChannelGrid,
        labels: LabelGrid,
        alpha_prev: SpectralGrid,
        omega: f64,
    ) -> Result<Self> {
        Self::from_spectra(ChannelSpectra::of(features), labels, alpha_prev, omega)
    }

    pub fn from_spectra(
        spectra: ChannelSpectra,
        labels: LabelGrid,
        alpha_prev: SpectralGrid,
        omega: f64,
    ) -> Result<Self> {
        check_shape(spectra.shape(), labels.shape())?;
        check_shape(spectra.shape(), alpha_prev.shape())?;
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::invalid("omega", format!("{omega} outside [0, 1]")));
        }
        Ok(PartTrainingInput {
            spectra,
            labels,
            alpha_prev,
            omega,
        })
    }

    /// First-frame input: no temporal anchor and uniform structure weight.
    pub fn first_frame(features: &MultiChannelGrid, labels: LabelGrid) -> Result<Self> {
        let (rows, cols) = features.shape();
        Self::new(features, labels, SpectralGrid::zeros(rows, cols), 1.0)
    }

    pub fn spectra(&self) -> &ChannelSpectra {
        &self.spectra
    }

    pub fn labels(&self) -> &LabelGrid {
        &self.labels
    }

    pub fn alpha_prev(&self) -> &SpectralGrid {
        &self.alpha_prev
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn shape(&self) -> (usize, usize) {
        self.spectra.shape()
    }
}

/// Learned state of one part after a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PartSolution {
    pub alpha_hat: SpectralGrid,
    pub bias: f64,
    pub slack: RealGrid,
    pub q: RealGrid,
}

/// Initial dual coefficients `y / (k_xx + 1/C)` (the regularized
/// least-squares dual, `(K + I/C)^-1 y`); the bias starts at `mean(y)`.
pub fn init_part(
    spectra: &ChannelSpectra,
    labels: &LabelGrid,
    cfg: &SolverConfig,
) -> Result<PartSolution> {
    check_shape(spectra.shape(), labels.shape())?;
    let kxx = cfg.kernel.autocorrelation(spectra)?;
    init_with_kernel(&kxx, labels, cfg)
}

fn init_with_kernel(kxx: &SpectralGrid, labels: &LabelGrid, cfg: &SolverConfig) -> Result<PartSolution> {
    let y = labels.grid();
    let reg = 1.0 / cfg.c;
    let alpha_hat = dft2(y).zip_map(kxx, |n, k| n / (k + reg))?;
    Ok(PartSolution {
        alpha_hat,
        bias: y.mean(),
        slack: RealGrid::zeros(y.rows(), y.cols()),
        q: y.clone(),
    })
}

/// Structure weight `exp(-|w_l - w_r|^2 / (2 kappa^2))` from filter spectra
/// (one spectrum per feature channel), using Parseval for the norm.
pub fn compute_omega(w_l: &[SpectralGrid], w_r: &[SpectralGrid], kappa: f64) -> Result<f64> {
    if w_l.len() != w_r.len() {
        return Err(Error::invalid(
            "filters",
            format!("{} vs {} channels", w_l.len(), w_r.len()),
        ));
    }
    let mut dist = 0.0;
    for (a, b) in w_l.iter().zip(w_r) {
        check_shape(a.shape(), b.shape())?;
        let d: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        dist += d / a.len() as f64;
    }
    Ok((-0.5 * dist / (kappa * kappa)).exp())
}

/// Spectra of the primal filter used to measure structural distance.
///
/// For the linear kernel this is `w = X^T alpha / 2`, one spectrum per
/// channel. A kernelized filter has no explicit primal form, so the dual
/// coefficients themselves stand in.
pub fn filter_spectra(
    spectra: &ChannelSpectra,
    alpha_hat: &SpectralGrid,
    kernel: Kernel,
) -> Result<Vec<SpectralGrid>> {
    match kernel {
        Kernel::Linear => spectra
            .channels()
            .iter()
            .map(|xc| xc.zip_map(alpha_hat, |x, a| 0.5 * x.conj() * a))
            .collect(),
        Kernel::Gaussian { .. } => Ok(vec![alpha_hat.clone()]),
    }
}

/// Root coefficients: the `omega`-weighted mean of the part coefficients.
pub fn update_alpha_r(alphas: &[&SpectralGrid], weights: &[f64]) -> Result<SpectralGrid> {
    let first = alphas.first().ok_or(Error::NoParts)?;
    if alphas.len() != weights.len() {
        return Err(Error::invalid(
            "weights",
            format!("{} weights for {} parts", weights.len(), alphas.len()),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("weights", "sum of structure weights must be positive"));
    }
    let mut acc = SpectralGrid::zeros(first.rows(), first.cols());
    for (a, &w) in alphas.iter().zip(weights) {
        check_shape(acc.shape(), a.shape())?;
        for (s, v) in acc.as_mut_slice().iter_mut().zip(a.as_slice()) {
            *s += v * w;
        }
    }
    Ok(acc.scale(1.0 / total))
}

/// Auxiliary slack `v = max(y * (K alpha / 2 + b) - 1, 0)`, with `K alpha`
/// evaluated as `idft2(k_xx * alpha_hat)`.
pub fn update_v(
    kxx: &SpectralGrid,
    alpha_hat: &SpectralGrid,
    bias: f64,
    labels: &LabelGrid,
) -> Result<RealGrid> {
    let k_alpha = idft2(&kxx.hadamard(alpha_hat)?);
    k_alpha.zip_map(labels.grid(), |ka, y| (y * (0.5 * ka + bias) - 1.0).max(0.0))
}

/// `q = y + y * v`.
pub fn update_q(labels: &LabelGrid, slack: &RealGrid) -> Result<RealGrid> {
    labels.grid().zip_map(slack, |y, v| y + y * v)
}

/// `b = mean(q)`.
pub fn update_b(q: &RealGrid) -> f64 {
    q.mean()
}

/// Closed-form coefficient update for one part.
#[allow(clippy::too_many_arguments)]
pub fn update_alpha(
    kxx: &SpectralGrid,
    q: &RealGrid,
    bias: f64,
    alpha_r: &SpectralGrid,
    alpha_prev: &SpectralGrid,
    omega: f64,
    cfg: &SolverConfig,
) -> Result<SpectralGrid> {
    check_shape(kxx.shape(), q.shape())?;
    check_shape(kxx.shape(), alpha_r.shape())?;
    check_shape(kxx.shape(), alpha_prev.shape())?;
    let structure = cfg.delta * omega;
    let scalar = 1.0 / (2.0 * cfg.c) - structure - cfg.beta;
    // dft2(q - b) == q_hat - b * e_hat
    let centered = dft2(&q.map(|v| v - bias));
    let cols = kxx.cols();
    let mut out = Vec::with_capacity(kxx.len());
    for (i, (((k, qf), ar), ap)) in kxx
        .as_slice()
        .iter()
        .zip(centered.as_slice())
        .zip(alpha_r.as_slice())
        .zip(alpha_prev.as_slice())
        .enumerate()
    {
        let numerator = qf - ar * structure - ap * cfg.beta;
        let denominator = k * 0.5 + scalar;
        if denominator.norm() < SINGULAR_EPS {
            return Err(Error::SingularDenominator {
                row: i / cols,
                col: i % cols,
                magnitude: denominator.norm(),
            });
        }
        out.push(numerator / denominator);
    }
    SpectralGrid::from_vec(kxx.rows(), kxx.cols(), out)
}

/// Factor in `(0, 1]` for one part's `delta` and `beta` such that
/// `factor * (delta * omega + beta)` is at most `cap` times the smallest bin
/// of `k/2 + 1/(2C)`. Returns 1 when the pulls already fit.
pub fn pull_scale(kxx: &SpectralGrid, omega: f64, cfg: &SolverConfig, cap: f64) -> f64 {
    let pull = cfg.delta * omega + cfg.beta;
    if pull <= 0.0 {
        return 1.0;
    }
    let floor = kxx
        .as_slice()
        .iter()
        .map(|k| 0.5 * k.re)
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        + 0.5 / cfg.c;
    (cap * floor / pull).min(1.0)
}

/// Which iteration cap applies to a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// First frame: coefficients start from the closed-form initializer.
    First,
    /// Online update: coefficients start from a supplied warm start.
    Update,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub parts: Vec<PartSolution>,
    pub alpha_root: SpectralGrid,
    /// Number of sweeps performed.
    pub iterations: usize,
    /// Whether every part's change fell below `tau` before the cap.
    pub converged: bool,
    /// Largest per-part change after each sweep.
    pub changes: Vec<f64>,
    /// Factor applied to each part's `delta` and `beta` (1 when the cap is
    /// off or not reached).
    pub pull_scales: Vec<f64>,
}

/// Runs the ADMM sweeps over all parts.
///
/// A part whose coefficient change drops below `tau` stops updating; the
/// solve ends once every part has settled or the cap for `mode` is reached.
/// `warm_start`, when given, replaces the closed-form initial coefficients.
pub fn solve_joint(
    parts: &[PartTrainingInput],
    cfg: &SolverConfig,
    mode: SolveMode,
    warm_start: Option<&[SpectralGrid]>,
) -> Result<JointSolution> {
    cfg.validate()?;
    let first = parts.first().ok_or(Error::NoParts)?;
    let shape = first.shape();
    for p in parts {
        check_shape(shape, p.shape())?;
    }
    if let Some(ws) = warm_start {
        if ws.len() != parts.len() {
            return Err(Error::invalid(
                "warm_start",
                format!("{} entries for {} parts", ws.len(), parts.len()),
            ));
        }
    }
    let max_iter = match mode {
        SolveMode::First => cfg.max_iter_first,
        SolveMode::Update => cfg.max_iter_update,
    };

    let kernels = parts
        .iter()
        .map(|p| cfg.kernel.autocorrelation(&p.spectra))
        .collect::<Result<Vec<_>>>()?;
    let mut solutions = parts
        .iter()
        .zip(&kernels)
        .map(|(p, k)| init_with_kernel(k, &p.labels, cfg))
        .collect::<Result<Vec<_>>>()?;
    if let Some(ws) = warm_start {
        for (s, a) in solutions.iter_mut().zip(ws) {
            check_shape(shape, a.shape())?;
            s.alpha_hat = a.clone();
        }
    }

    let pull_scales: Vec<f64> = parts
        .iter()
        .zip(&kernels)
        .map(|(p, k)| cfg.pull_cap.map_or(1.0, |cap| pull_scale(k, p.omega, cfg, cap)))
        .collect();
    let part_cfgs: Vec<SolverConfig> = pull_scales
        .iter()
        .map(|&f| SolverConfig {
            delta: cfg.delta * f,
            beta: cfg.beta * f,
            ..*cfg
        })
        .collect();

    let weights: Vec<f64> = parts.iter().map(|p| p.omega).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut settled = vec![false; parts.len()];
    let mut changes = Vec::new();
    let mut alpha_root = SpectralGrid::zeros(shape.0, shape.1);
    let mut iterations = 0;

    while iterations < max_iter && settled.iter().any(|s| !s) {
        iterations += 1;
        let alphas: Vec<&SpectralGrid> = solutions.iter().map(|s| &s.alpha_hat).collect();
        // All weights underflowing only happens when every structural pull
        // `delta * omega` is zero as well, so the root is irrelevant then.
        alpha_root = if weight_sum > 0.0 {
            update_alpha_r(&alphas, &weights)?
        } else {
            SpectralGrid::zeros(shape.0, shape.1)
        };

        let mut sweep_change = 0.0f64;
        for (l, part) in parts.iter().enumerate() {
            if settled[l] {
                continue;
            }
            let sol = &solutions[l];
            let slack = update_v(&kernels[l], &sol.alpha_hat, sol.bias, &part.labels)?;
            let q = update_q(&part.labels, &slack)?;
            let bias = update_b(&q);
            let alpha_hat = update_alpha(
                &kernels[l],
                &q,
                bias,
                &alpha_root,
                &part.alpha_prev,
                part.omega,
                &part_cfgs[l],
            )?;
            let change = alpha_hat.mean_abs_diff(&sol.alpha_hat)?;
            sweep_change = sweep_change.max(change);
            if change < cfg.tau {
                settled[l] = true;
            }
            solutions[l] = PartSolution {
                alpha_hat,
                bias,
                slack,
                q,
            };
        }
        changes.push(sweep_change);
    }

    Ok(JointSolution {
        parts: solutions,
        alpha_root,
        iterations,
        converged: settled.iter().all(|&s| s),
        changes,
        pull_scales,
    })
}

/// Response map `idft2(k_xz * alpha_hat) + b`.
pub fn response(kxz: &SpectralGrid, alpha_hat: &SpectralGrid, bias: f64) -> Result<RealGrid> {
    Ok(idft2(&kxz.hadamard(alpha_hat)?).map(|v| v + bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{assign_labels, confidence_map, LabelConfig};
    use crate::spectral::dense_circulant;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut impl Rng, rows: usize, cols: usize) -> RealGrid {
        RealGrid::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_labels(rng: &mut impl Rng, rows: usize, cols: usize) -> LabelGrid {
        let g = RealGrid::from_fn(rows, cols, |_, _| [-1.0, 0.0, 1.0][rng.gen_range(0..3)]);
        LabelGrid::from_grid(g).unwrap()
    }

    /// `sum_c X_c X_c^T` with `X_c` the dense circulant of channel `c`.
    fn dense_gram(x: &MultiChannelGrid) -> DMatrix<f64> {
        let n = x.shape().0 * x.shape().1;
        let mut k = DMatrix::zeros(n, n);
        for ch in x.channels() {
            let d = dense_circulant(ch).unwrap();
            let m = DMatrix::from_row_slice(n, n, d.as_slice());
            k += &m * m.transpose();
        }
        k
    }

    fn vec_of(g: &RealGrid) -> DVector<f64> {
        DVector::from_column_slice(g.as_slice())
    }

    #[test]
    fn zero_labels_give_zero_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = MultiChannelGrid::single(random_grid(&mut rng, 4, 4));
        let y = LabelGrid::from_grid(RealGrid::zeros(4, 4)).unwrap();
        for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
            let cfg = SolverConfig {
                kernel,
                ..SolverConfig::default()
            };
            let s = init_part(&ChannelSpectra::of(&x), &y, &cfg).unwrap();
            assert!(s.alpha_hat.as_slice().iter().all(|v| v.norm() == 0.0));
            assert_eq!(s.bias, 0.0);
        }
    }

    #[test]
    fn scalar_init_is_one_quarter() {
        // 1x1 grid: x = [2], y = [1]; (x x + 1/C)^-1 y -> 1/4 as C grows.
        let x = MultiChannelGrid::single(RealGrid::filled(1, 1, 2.0));
        let y = LabelGrid::from_grid(RealGrid::filled(1, 1, 1.0)).unwrap();
        let cfg = SolverConfig {
            c: 1e12,
            ..SolverConfig::default()
        };
        let s = init_part(&ChannelSpectra::of(&x), &y, &cfg).unwrap();
        assert!((s.alpha_hat[(0, 0)].re - 1.0 / (4.0 + 1e-12)).abs() < 1e-15);
        assert!((s.alpha_hat[(0, 0)].re - 0.25).abs() < 1e-12);
        assert_eq!(s.bias, 1.0);
    }

    #[test]
    fn linear_init_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (rows, depth) in [(4, 1), (4, 3), (6, 2)] {
            let x = MultiChannelGrid::new((0..depth).map(|_| random_grid(&mut rng, rows, rows)).collect()).unwrap();
            let y = random_labels(&mut rng, rows, rows);
            let cfg = SolverConfig {
                c: 10.0,
                ..SolverConfig::default()
            };
            let s = init_part(&ChannelSpectra::of(&x), &y, &cfg).unwrap();
            let n = rows * rows;
            let lhs = dense_gram(&x) + DMatrix::identity(n, n) / cfg.c;
            let expected = lhs.lu().solve(&vec_of(y.grid())).unwrap();
            let got = idft2(&s.alpha_hat);
            for i in 0..n {
                assert!((got.as_slice()[i] - expected[i]).abs() < 1e-9 * (1.0 + expected[i].abs()));
            }
        }
    }

    #[test]
    fn omega_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = dft2(&random_grid(&mut rng, 4, 4));
        assert_eq!(compute_omega(std::slice::from_ref(&a), std::slice::from_ref(&a), 3.0).unwrap(), 1.0);

        // |w_l - w_r|^2 = 2 kappa^2 -> exp(-1)
        let kappa: f64 = 3.0;
        let mut w = RealGrid::zeros(4, 4);
        w[(1, 2)] = (2.0 * kappa * kappa).sqrt();
        let zero = SpectralGrid::zeros(4, 4);
        let omega = compute_omega(&[dft2(&w)], std::slice::from_ref(&zero), kappa).unwrap();
        assert!((omega - (-1.0f64).exp()).abs() < 1e-12);
        assert!((omega - 0.3679).abs() < 1e-4);

        let mut last = 1.0;
        for d in 1..10 {
            let mut w = RealGrid::zeros(4, 4);
            w[(0, 0)] = d as f64;
            let o = compute_omega(&[dft2(&w)], std::slice::from_ref(&zero), kappa).unwrap();
            assert!(o < last && o > 0.0);
            last = o;
        }
    }

    #[test]
    fn root_is_weighted_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<SpectralGrid> = (0..3).map(|_| dft2(&random_grid(&mut rng, 3, 4))).collect();
        let single = update_alpha_r(&[&a[0]], &[0.7]).unwrap();
        assert!(single.mean_abs_diff(&a[0]).unwrap() < 1e-15);

        let pair = update_alpha_r(&[&a[0], &a[1]], &[0.4, 0.4]).unwrap();
        for i in 0..12 {
            let m = (a[0].as_slice()[i] + a[1].as_slice()[i]) * 0.5;
            assert!((pair.as_slice()[i] - m).norm() < 1e-12);
        }

        let w = [0.2, 0.3, 0.5];
        let r = update_alpha_r(&[&a[0], &a[1], &a[2]], &w).unwrap();
        for i in 0..12 {
            let m = a[0].as_slice()[i] * 0.2 + a[1].as_slice()[i] * 0.3 + a[2].as_slice()[i] * 0.5;
            assert!((r.as_slice()[i] - m).norm() < 1e-12);
        }
        assert!(matches!(update_alpha_r(&[], &[]), Err(Error::NoParts)));
        assert!(update_alpha_r(&[&a[0]], &[0.0]).is_err());
    }

    #[test]
    fn slack_and_q_updates() {
        let y = LabelGrid::from_grid(RealGrid::filled(3, 3, 1.0)).unwrap();
        let kxx = SpectralGrid::filled(3, 3, Complex64::new(1.0, 0.0));
        let zero = SpectralGrid::zeros(3, 3);
        let v = update_v(&kxx, &zero, 1.0, &y).unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
        let v = update_v(&kxx, &zero, 2.0, &y).unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 1.0));

        let q = update_q(&y, &RealGrid::zeros(3, 3)).unwrap();
        assert_eq!(&q, y.grid());
        let mut v = RealGrid::zeros(3, 3);
        v[(1, 1)] = 0.5;
        let q = update_q(&y, &v).unwrap();
        assert_eq!(q[(1, 1)], 1.5);

        assert_eq!(update_b(&RealGrid::zeros(2, 5)), 0.0);
        let q = RealGrid::from_vec(1, 4, vec![1.0, -1.0, 0.0, 2.0]).unwrap();
        assert_eq!(update_b(&q), 0.5);
    }

    #[test]
    fn slack_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = MultiChannelGrid::single(random_grid(&mut rng, 4, 4));
        let alpha = random_grid(&mut rng, 4, 4);
        let y = random_labels(&mut rng, 4, 4);
        let b = 0.3;
        let kxx = Kernel::Linear.autocorrelation(&ChannelSpectra::of(&x)).unwrap();
        let v = update_v(&kxx, &dft2(&alpha), b, &y).unwrap();
        let ka = dense_gram(&x) * vec_of(&alpha);
        for i in 0..16 {
            let yi = y.grid().as_slice()[i];
            let expected = (yi * (0.5 * ka[i] + b) - 1.0).max(0.0);
            assert!((v.as_slice()[i] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn q_keeps_label_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = random_labels(&mut rng, 5, 5);
        let v = RealGrid::from_fn(5, 5, |_, _| rng.gen_range(0.0..3.0));
        let q = update_q(&y, &v).unwrap();
        for (qv, yv) in q.as_slice().iter().zip(y.grid().as_slice()) {
            if *yv != 0.0 {
                assert_eq!(qv.signum(), yv.signum());
            }
        }
    }

    /// Dense spatial evaluation of the coefficient update with the
    /// regularizers on the identity.
    fn dense_alpha(
        x: &MultiChannelGrid,
        q: &RealGrid,
        b: f64,
        alpha_r: &RealGrid,
        alpha_prev: &RealGrid,
        omega: f64,
        cfg: &SolverConfig,
    ) -> DVector<f64> {
        let n = q.len();
        let scalar = 1.0 / (2.0 * cfg.c) - cfg.delta * omega - cfg.beta;
        let lhs = dense_gram(x) * 0.5 + DMatrix::identity(n, n) * scalar;
        let rhs = vec_of(&q.map(|v| v - b))
            - vec_of(alpha_r) * (cfg.delta * omega)
            - vec_of(alpha_prev) * cfg.beta;
        lhs.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn alpha_update_reduces_to_single_part_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SolverConfig {
            delta: 0.0,
            beta: 0.0,
            c: 2.0,
            ..SolverConfig::default()
        };
        let x = MultiChannelGrid::single(random_grid(&mut rng, 4, 4));
        let q = random_grid(&mut rng, 4, 4);
        let b = q.mean();
        let kxx = Kernel::Linear.autocorrelation(&ChannelSpectra::of(&x)).unwrap();
        let ar = dft2(&random_grid(&mut rng, 4, 4));
        let got = update_alpha(&kxx, &q, b, &ar, &SpectralGrid::zeros(4, 4), 1.0, &cfg).unwrap();
        let zero = RealGrid::zeros(4, 4);
        let expected = dense_alpha(&x, &q, b, &zero, &zero, 1.0, &cfg);
        let got = idft2(&got);
        for i in 0..16 {
            assert!((got.as_slice()[i] - expected[i]).abs() < 1e-9 * expected.amax());
        }
    }

    #[test]
    fn alpha_update_dc_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = MultiChannelGrid::single(random_grid(&mut rng, 4, 4));
        let y = random_labels(&mut rng, 4, 4);
        let b = y.grid().mean();
        let kxx = Kernel::Linear.autocorrelation(&ChannelSpectra::of(&x)).unwrap();
        let zero = SpectralGrid::zeros(4, 4);
        let a = update_alpha(&kxx, y.grid(), b, &zero, &zero, 1.0, &SolverConfig::default()).unwrap();
        assert!(a[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn alpha_update_matches_dense_with_default_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SolverConfig::default();
        for _ in 0..5 {
            let x = MultiChannelGrid::new(vec![random_grid(&mut rng, 4, 4), random_grid(&mut rng, 4, 4)])
                .unwrap();
            let q = random_grid(&mut rng, 4, 4);
            let b = rng.gen_range(-1.0..1.0);
            let ar = random_grid(&mut rng, 4, 4);
            let ap = random_grid(&mut rng, 4, 4);
            let omega = rng.gen_range(0.1..1.0);
            let kxx = Kernel::Linear.autocorrelation(&ChannelSpectra::of(&x)).unwrap();
            let got = update_alpha(&kxx, &q, b, &dft2(&ar), &dft2(&ap), omega, &cfg).unwrap();
            let expected = dense_alpha(&x, &q, b, &ar, &ap, omega, &cfg);
            let got = idft2(&got);
            for i in 0..16 {
                assert!((got.as_slice()[i] - expected[i]).abs() <= 1e-8 * expected.amax());
            }
        }
    }

    #[test]
    fn singular_denominator_is_reported() {
        // k/2 + 1/(2C) - delta*omega - beta == 0 on every bin.
        let cfg = SolverConfig {
            c: 0.5,
            delta: 0.0,
            beta: 1.0,
            ..SolverConfig::default()
        };
        let kxx = SpectralGrid::filled(2, 2, Complex64::new(0.0, 0.0));
        let zero = SpectralGrid::zeros(2, 2);
        let err = update_alpha(&kxx, &RealGrid::zeros(2, 2), 0.0, &zero, &zero, 1.0, &cfg);
        assert!(matches!(err, Err(Error::SingularDenominator { .. })));
    }

    fn training_instance(rng: &mut impl Rng, size: usize, depth: usize) -> MultiChannelGrid {
        MultiChannelGrid::new((0..depth).map(|_| random_grid(rng, size, size)).collect()).unwrap()
    }

    #[test]
    fn single_part_without_coupling_matches_standalone_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = SolverConfig {
            delta: 0.0,
            beta: 0.0,
            max_iter_first: 4,
            tau: 1e-300,
            ..SolverConfig::default()
        };
        let x = training_instance(&mut rng, 6, 3);
        let labels = LabelConfig::default().labels_for(6, 6).unwrap();
        let input = PartTrainingInput::first_frame(&x, labels.clone()).unwrap();
        let joint = solve_joint(&[input], &cfg, SolveMode::First, None).unwrap();

        // Standalone support-correlation-filter iteration written directly.
        let spectra = ChannelSpectra::of(&x);
        let kxx = Kernel::Linear.autocorrelation(&spectra).unwrap();
        let mut alpha = init_part(&spectra, &labels, &cfg).unwrap().alpha_hat;
        let mut b = labels.grid().mean();
        for _ in 0..4 {
            let ka = idft2(&kxx.hadamard(&alpha).unwrap());
            let q = ka
                .zip_map(labels.grid(), |k, y| y + y * (y * (0.5 * k + b) - 1.0).max(0.0))
                .unwrap();
            b = q.mean();
            let qf = dft2(&q.map(|v| v - b));
            alpha = qf.zip_map(&kxx, |n, k| n / (0.5 * k + 1.0 / (2.0 * cfg.c))).unwrap();
        }
        assert_eq!(joint.iterations, 4);
        assert!(joint.parts[0].alpha_hat.mean_abs_diff(&alpha).unwrap() < 1e-12);
        assert!((joint.parts[0].bias - b).abs() < 1e-12);
    }

    #[test]
    fn identical_parts_share_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = training_instance(&mut rng, 8, 2);
        let labels = LabelConfig::default().labels_for(8, 8).unwrap();
        let input = PartTrainingInput::first_frame(&x, labels).unwrap();
        let parts = vec![input; 4];
        let sol = solve_joint(&parts, &SolverConfig::default(), SolveMode::First, None).unwrap();
        for p in &sol.parts[1..] {
            assert_eq!(p.alpha_hat, sol.parts[0].alpha_hat);
        }
        // The root is the mean of the coefficients entering the last sweep.
        assert!(sol.iterations >= 2);
        let cfg = SolverConfig {
            max_iter_first: sol.iterations - 1,
            ..SolverConfig::default()
        };
        let before = solve_joint(&parts, &cfg, SolveMode::First, None).unwrap();
        assert!(before.parts[0].alpha_hat.mean_abs_diff(&sol.alpha_root).unwrap() < 1e-12);
    }

    #[test]
    fn label_map_from_confidence_trains() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = training_instance(&mut rng, 8, 2);
        let map = confidence_map((8, 8), (0, 0), 1.0, 0.3, 2.0).unwrap();
        let labels = assign_labels(&map, 0.4, 0.9).unwrap();
        let input = PartTrainingInput::first_frame(&x, labels).unwrap();
        let sol = solve_joint(&[input], &SolverConfig::default(), SolveMode::First, None).unwrap();
        assert!(sol.parts[0].slack.as_slice().iter().all(|&v| v >= 0.0));
        assert!((sol.parts[0].bias - sol.parts[0].q.mean()).abs() < 1e-15);
    }

    #[test]
    fn pull_scale_caps_the_pulls() {
        let cfg = SolverConfig::default();
        // k/2 spans 0..=20 against a pull of 0.05 * 0.8 + 5 = 5.04
        let kxx = SpectralGrid::from_vec(
            1,
            5,
            [0.0, 5.0, 10.0, 20.0, 40.0].iter().map(|&k| Complex64::new(k, 0.0)).collect(),
        )
        .unwrap();
        let cap = 0.03;
        let f = pull_scale(&kxx, 0.8, &cfg, cap);
        let floor = 0.5 / cfg.c;
        assert!((f - cap * floor / 5.04).abs() < 1e-15);
        for k in kxx.as_slice() {
            let scf = 0.5 * k.re + 0.5 / cfg.c;
            assert!(f * 5.04 <= cap * scf + 1e-15);
        }

        let strong = SpectralGrid::filled(3, 3, Complex64::new(400.0, 0.0));
        assert_eq!(pull_scale(&strong, 1.0, &cfg, cap), 1.0);
        let free = SolverConfig {
            delta: 0.0,
            beta: 0.0,
            ..cfg
        };
        assert_eq!(pull_scale(&SpectralGrid::zeros(2, 2), 1.0, &free, cap), 1.0);
    }

    #[test]
    fn capped_solve_stays_bounded_where_raw_one_diverges() {
        // Weak features: k/2 sits near delta*omega + beta on some bins.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = training_instance(&mut rng, 6, 2);
        let x = MultiChannelGrid::new(x.channels().iter().map(|c| c.map(|v| v * 0.6)).collect()).unwrap();
        let labels = LabelConfig::default().labels_for(6, 6).unwrap();
        let prev = dft2(&random_grid(&mut rng, 6, 6));
        let input = PartTrainingInput::new(&x, labels, prev.clone(), 1.0).unwrap();
        let raw_cfg = SolverConfig {
            pull_cap: None,
            ..SolverConfig::default()
        };
        let raw = solve_joint(std::slice::from_ref(&input), &raw_cfg, SolveMode::Update, Some(std::slice::from_ref(&prev))).unwrap();
        let safe = solve_joint(&[input], &SolverConfig::default(), SolveMode::Update, Some(&[prev])).unwrap();
        assert_eq!(raw.pull_scales, vec![1.0]);
        assert!(safe.pull_scales[0] < 1.0);
        let size = |s: &JointSolution| s.parts[0].alpha_hat.norm_sqr().sqrt();
        assert!(size(&safe) < size(&raw));
        assert!(safe.parts[0].alpha_hat.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pull_cap_must_be_a_fraction() {
        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            let cfg = SolverConfig {
                pull_cap: Some(bad),
                ..SolverConfig::default()
            };
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            solve_joint(&[], &SolverConfig::default(), SolveMode::First, None),
            Err(Error::NoParts)
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = PartTrainingInput::first_frame(
            &training_instance(&mut rng, 4, 1),
            LabelConfig::default().labels_for(4, 4).unwrap(),
        )
        .unwrap();
        let b = PartTrainingInput::first_frame(
            &training_instance(&mut rng, 5, 1),
            LabelConfig::default().labels_for(5, 5).unwrap(),
        )
        .unwrap();
        assert!(solve_joint(&[a, b], &SolverConfig::default(), SolveMode::First, None).is_err());
        let bad = SolverConfig {
            tau: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PartTrainingInput::new(
            &training_instance(&mut rng, 4, 1),
            LabelConfig::default().labels_for(4, 4).unwrap(),
            SpectralGrid::zeros(4, 4),
            1.5
        )
        .is_err());
    }
}
