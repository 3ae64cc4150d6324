//! Sequence driver and the command-line front end.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};

use super::config::load_config;
use super::metrics::{metrics, EvalRecord, Metrics};
use super::report::{render_boxes, render_report, write_text};
use super::sequence::{load_sequence, to_one_based, to_pixel_box, Sequence};
use super::synth::{synth_generate, SynthSpec};
use crate::error::{Error, Result};
use crate::tracker::{BoundingBox, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Without the structural constraint (delta = 0).
    Owsc,
    /// Without temporal consistency (beta = 0).
    Owtc,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Owsc => "owsc",
            Ablation::Owtc => "owtc",
        }
    }

    pub fn apply(self, cfg: &mut TrackerConfig) {
        match self {
            Ablation::Owsc => cfg.solver.delta = 0.0,
            Ablation::Owtc => cfg.solver.beta = 0.0,
        }
    }
}

/// Result of tracking one sequence. Boxes and records cover frames
/// `1..len`, all in 1-based coordinates.
#[derive(Debug, Clone)]
pub struct TrackRun {
    pub name: String,
    pub boxes: Vec<BoundingBox>,
    pub records: Vec<EvalRecord>,
    pub metrics: Metrics,
    /// Tracking time (initialization and updates, excluding decoding).
    pub elapsed: Duration,
    pub fps: f64,
}

pub fn track_sequence(seq: &Sequence, cfg: &TrackerConfig) -> Result<TrackRun> {
    track_sequence_with(seq, cfg, |_, _| {})
}

/// Tracks `seq` from its first ground-truth box, calling `observe` after
/// initialization (frame 0) and after every step.
pub fn track_sequence_with(
    seq: &Sequence,
    cfg: &TrackerConfig,
    mut observe: impl FnMut(usize, &Tracker),
) -> Result<TrackRun> {
    if seq.len() < 2 {
        return Err(Error::EmptyRecords);
    }
    let gt = seq.ground_truth();
    let mut elapsed = Duration::ZERO;

    let first = seq.frame(0)?;
    let start = Instant::now();
    let mut tracker = Tracker::init(&first.view(), to_pixel_box(&gt[0]), cfg.clone())?;
    elapsed += start.elapsed();
    observe(0, &tracker);

    let mut boxes = Vec::with_capacity(seq.len() - 1);
    let mut records = Vec::with_capacity(seq.len() - 1);
    for (t, truth) in gt.iter().enumerate().skip(1) {
        let frame = seq.frame(t)?;
        let start = Instant::now();
        let predicted = to_one_based(&tracker.step(&frame.view())?);
        elapsed += start.elapsed();
        observe(t, &tracker);
        boxes.push(predicted);
        records.push(EvalRecord::new(t, predicted, *truth));
    }
    let metrics = metrics(&records)?;
    let secs = elapsed.as_secs_f64();
    Ok(TrackRun {
        name: seq.name().to_string(),
        fps: if secs > 0.0 { records.len() as f64 / secs } else { f64::INFINITY },
        boxes,
        records,
        metrics,
        elapsed,
    })
}

#[derive(Debug, Clone, Parser)]
#[command(name = "sskcf", version, about = "Part-based correlation filter tracker")]
pub struct Cli {
    /// OTB-layout sequence directories (`img/` and `groundtruth_rect.txt`).
    #[arg(required_unless_present = "synth")]
    pub sequences: Vec<PathBuf>,
    /// Synthetic sequence spec file, tracked instead of (or besides) real ones.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flat `key = value` file overriding default parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    /// Where to write the report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-frame boxes file; a directory when several sequences are run.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: TrackerConfig,
    pub runs: Vec<TrackRun>,
    pub report: String,
}

pub fn effective_config(cli: &Cli) -> Result<TrackerConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path, TrackerConfig::default())?,
        None => TrackerConfig::default(),
    };
    if let Some(a) = cli.ablation {
        a.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn boxes_path(base: &Path, name: &str, many: bool) -> PathBuf {
    if many {
        base.join(format!("{name}.txt"))
    } else {
        base.to_path_buf()
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = effective_config(cli)?;
    let mut sequences = Vec::new();
    if let Some(path) = &cli.synth {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec = SynthSpec::parse(&text, path)?;
        sequences.push(synth_generate(&spec, cli.seed)?.sequence);
    }
    for dir in &cli.sequences {
        sequences.push(load_sequence(dir)?);
    }

    // Sessions are independent; run them side by side.
    let runs = std::thread::scope(|s| {
        let handles: Vec<_> = sequences
            .iter()
            .map(|seq| s.spawn(|| track_sequence(seq, &cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tracking thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let report = render_report(&cfg, cli.ablation, cli.seed, &runs);
    if let Some(path) = &cli.report {
        write_text(path, &report)?;
    }
    if let Some(base) = &cli.boxes {
        let many = runs.len() > 1;
        for r in &runs {
            write_text(&boxes_path(base, &r.name, many), &render_boxes(&r.boxes))?;
        }
    }
    Ok(Outcome {
        config: cfg,
        runs,
        report,
    })
}
