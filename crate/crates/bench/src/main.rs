use std::process::ExitCode;

use clap::Parser;
use fbsde_bench::{run, BenchError, Cli, ExperimentConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = ExperimentConfig::from_cli(&cli).and_then(|cfg| {
        let out = run(&cfg)?;
        Ok((cfg, out))
    });
    match outcome {
        Ok((cfg, out)) => {
            for f in &out.files {
                println!("{}", cfg.out_path(f).display());
            }
            for f in &out.failures {
                eprintln!("failed: {f}");
            }
            if out.success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e @ BenchError::Usage(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
