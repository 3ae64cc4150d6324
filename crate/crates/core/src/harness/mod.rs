//! Evaluation harness: sequence loading, synthetic data, metrics, reports
//! and the command-line driver.

pub mod config;
pub mod metrics;
pub mod report;
pub mod run;
pub mod sequence;
pub mod synth;

pub use config::{apply_entry, config_entries, load_config, parse_config};
pub use metrics::{center_error, iou, metrics, success_thresholds, EvalRecord, Metrics};
pub use report::{render_boxes, render_report, Report, ReportSection};
pub use run::{run, track_sequence, track_sequence_with, Ablation, Cli, Outcome, TrackRun};
pub use sequence::{load_frame, load_sequence, parse_box_line, FrameSource, Sequence};
pub use synth::{synth_generate, Occluder, SynthSequence, SynthSpec};
