use std::process::ExitCode;

use clap::Parser;
use sskcf::harness::{run, Cli};

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for r in &outcome.runs {
                println!(
                    "{}: frames={} dp={:.3} op={:.3} auc={:.3} fps={:.1}",
                    r.name,
                    r.records.len(),
                    r.metrics.dp,
                    r.metrics.op,
                    r.metrics.auc,
                    r.fps
                );
            }
            if cli.report.is_none() {
                print!("{}", outcome.report);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sskcf: {e}");
            ExitCode::FAILURE
        }
    }
}
