//! Benchmark front end: experiment configuration, runs and report files.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{Cli, Experiment, ExperimentConfig, FileConfig};
pub use plot::Figure;
pub use run::{manifest, run, RunOutcome, PRICE_TOLERANCE};

#[derive(Debug)]
pub enum BenchError {
    Usage(String),
    Io(String),
    Run(String),
}

impl std::fmt::Display for BenchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchError::Usage(m) => write!(f, "usage error: {m}"),
            BenchError::Io(m) => write!(f, "i/o error: {m}"),
            BenchError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<jumpfbsde::Error> for BenchError {
    fn from(e: jumpfbsde::Error) -> Self {
        BenchError::Run(e.to_string())
    }
}
