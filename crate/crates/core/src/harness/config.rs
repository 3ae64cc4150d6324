//! Flat `key = value` configuration files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::Kernel;
use crate::tracker::TrackerConfig;

/// Every configurable key with its current value, in report order.
pub fn config_entries(cfg: &TrackerConfig) -> Vec<(&'static str, String)> {
    let (kernel, sigma) = match cfg.solver.kernel {
        Kernel::Linear => ("linear", 0.5),
        Kernel::Gaussian { sigma } => ("gaussian", sigma),
    };
    vec![
        ("c", cfg.solver.c.to_string()),
        ("delta", cfg.solver.delta.to_string()),
        ("beta", cfg.solver.beta.to_string()),
        ("kappa", cfg.solver.kappa.to_string()),
        ("tau", cfg.solver.tau.to_string()),
        ("max_iter_first", cfg.solver.max_iter_first.to_string()),
        ("max_iter_update", cfg.solver.max_iter_update.to_string()),
        ("pull_cap", cfg.solver.pull_cap.map_or("off".to_string(), |c| c.to_string())),
        ("kernel", kernel.to_string()),
        ("sigma", sigma.to_string()),
        ("padding", cfg.padding.to_string()),
        ("psr_threshold", cfg.psr_threshold.to_string()),
        ("similarity_threshold", cfg.similarity_threshold.to_string()),
        ("learning_rate", cfg.learning_rate.to_string()),
        ("fusion_mix", cfg.fusion_mix.to_string()),
        ("similarity_bandwidth", cfg.similarity_bandwidth.to_string()),
        ("scale_smoothing", cfg.scale_smoothing.to_string()),
        ("label_peak", cfg.labels.peak.to_string()),
        ("label_eta_factor", cfg.labels.eta_factor.to_string()),
        ("label_shape", cfg.labels.shape.to_string()),
        ("theta_lower", cfg.labels.lower.to_string()),
        ("theta_upper", cfg.labels.upper.to_string()),
        ("cell_size", cfg.hog.cell_size.to_string()),
        ("orientations", cfg.hog.orientations.to_string()),
        ("canonical_size", cfg.canonical_size.to_string()),
        ("use_window", cfg.use_window.to_string()),
        ("feature_gain", cfg.feature_gain.to_string()),
        ("subcell", cfg.subcell.to_string()),
        ("hist_bins", cfg.hist_bins.to_string()),
    ]
}

/// Overrides one key; the error message names the problem without location.
pub fn apply_entry(cfg: &mut TrackerConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        v.parse::<T>().map_err(|e| format!("bad value `{v}`: {e}"))
    }
    match key {
        "c" => cfg.solver.c = num(value)?,
        "delta" => cfg.solver.delta = num(value)?,
        "beta" => cfg.solver.beta = num(value)?,
        "kappa" => cfg.solver.kappa = num(value)?,
        "tau" => cfg.solver.tau = num(value)?,
        "max_iter_first" => cfg.solver.max_iter_first = num(value)?,
        "max_iter_update" => cfg.solver.max_iter_update = num(value)?,
        "pull_cap" => cfg.solver.pull_cap = if value == "off" { None } else { Some(num(value)?) },
        "kernel" => {
            let sigma = match cfg.solver.kernel {
                Kernel::Gaussian { sigma } => sigma,
                Kernel::Linear => 0.5,
            };
            cfg.solver.kernel = match value {
                "linear" => Kernel::Linear,
                "gaussian" => Kernel::Gaussian { sigma },
                other => return Err(format!("unknown kernel `{other}`")),
            };
        }
        "sigma" => {
            let s: f64 = num(value)?;
            if let Kernel::Gaussian { sigma } = &mut cfg.solver.kernel {
                *sigma = s;
            }
        }
        "padding" => cfg.padding = num(value)?,
        "psr_threshold" => cfg.psr_threshold = num(value)?,
        "similarity_threshold" => cfg.similarity_threshold = num(value)?,
        "learning_rate" => cfg.learning_rate = num(value)?,
        "fusion_mix" => cfg.fusion_mix = num(value)?,
        "similarity_bandwidth" => cfg.similarity_bandwidth = num(value)?,
        "scale_smoothing" => cfg.scale_smoothing = num(value)?,
        "label_peak" => cfg.labels.peak = num(value)?,
        "label_eta_factor" => cfg.labels.eta_factor = num(value)?,
        "label_shape" => cfg.labels.shape = num(value)?,
        "theta_lower" => cfg.labels.lower = num(value)?,
        "theta_upper" => cfg.labels.upper = num(value)?,
        "cell_size" => cfg.hog.cell_size = num(value)?,
        "orientations" => {
            cfg.hog.orientations = num(value)?;
            cfg.hog.channels = 3 * cfg.hog.orientations + 4;
        }
        "canonical_size" => cfg.canonical_size = num(value)?,
        "use_window" => cfg.use_window = num(value)?,
        "feature_gain" => cfg.feature_gain = num(value)?,
        "subcell" => cfg.subcell = num(value)?,
        "hist_bins" => cfg.hist_bins = num(value)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

/// Applies `key = value` lines on top of `base`. Blank lines and `#`
/// comments are skipped; unknown keys and bad values fail with their line.
/// `sigma` is applied last so it holds regardless of where `kernel` appears.
pub fn parse_config(text: &str, path: &Path, base: TrackerConfig) -> Result<TrackerConfig> {
    let mut cfg = base;
    let mut sigma = None;
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
        if key == "sigma" {
            let mut probe = TrackerConfig::default();
            apply_entry(&mut probe, key, value).map_err(fail)?;
            sigma = Some(value);
            continue;
        }
        apply_entry(&mut cfg, key, value).map_err(fail)?;
    }
    if let Some(v) = sigma {
        apply_entry(&mut cfg, "sigma", v).expect("checked above");
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, base: TrackerConfig) -> Result<TrackerConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path, base)
}
