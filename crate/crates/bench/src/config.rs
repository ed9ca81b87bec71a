use std::fmt::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use jumpfbsde::mfg::{check_mfg_algorithm, mfg_solver_config, MfgParams, Seasonality};
use jumpfbsde::models::{MarketParams, ModelKind};
use jumpfbsde::solvers::{Algorithm, LrSchedule, SolverConfig};
use serde::Deserialize;

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Price,
    CompareAll,
    Mfg,
    Mfc,
    Poa,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "price" => Some(Experiment::Price),
            "compare-all" | "compare" => Some(Experiment::CompareAll),
            "mfg" => Some(Experiment::Mfg),
            "mfc" => Some(Experiment::Mfc),
            "poa" => Some(Experiment::Poa),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Price => "price",
            Experiment::CompareAll => "compare-all",
            Experiment::Mfg => "mfg",
            Experiment::Mfc => "mfc",
            Experiment::Poa => "poa",
        }
    }

    pub fn is_pricing(self) -> bool {
        matches!(self, Experiment::Price | Experiment::CompareAll)
    }
}

#[derive(Debug, Clone, Default, Parser)]
#[command(name = "fbsde-bench", version, about = "Pricing benchmarks and smart-grid MFG/MFC/PoA scenarios")]
pub struct Cli {
    /// price | compare-all | mfg | mfc | poa
    #[arg(long)]
    pub experiment: Option<String>,
    /// bs | merton | vg
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated scheme names, e.g. `global,sumlocal2`.
    #[arg(long)]
    pub algo: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "train-iters")]
    pub train_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent (scheme, seed) cells.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Comma-separated proportions of standard consumers.
    #[arg(long = "pi-list")]
    pub pi_list: Option<String>,
    #[arg(long)]
    pub p1: Option<f64>,
    /// TOML file with `[run]`, `[market]`, `[solver]` and `[mfg]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Populations for cost estimates.
    #[arg(long = "n-mc")]
    pub n_mc: Option<usize>,
    /// Use the coupled forward drift.
    #[arg(long)]
    pub coupled: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub market: MarketOverrides,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub mfg: MfgOverrides,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Option<String>,
    pub model: Option<String>,
    pub algorithms: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub coupled: Option<bool>,
    pub pi_list: Option<Vec<f64>>,
    pub n_mc: Option<usize>,
    pub trajectory_paths: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketOverrides {
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub strike: Option<f64>,
    pub s0: Option<f64>,
    pub coupling: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub xi: Option<f64>,
    pub theta: Option<f64>,
    pub sigma_bar: Option<f64>,
    pub kappa: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub compensator_samples: Option<usize>,
    pub n_train: Option<usize>,
    /// Constant learning rate replacing the default schedule.
    pub lr: Option<f64>,
    pub width: Option<usize>,
    pub layers: Option<usize>,
    pub epoch_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfgOverrides {
    pub a: Option<f64>,
    pub c: Option<f64>,
    pub k_charge: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma0: Option<f64>,
    pub mu_st: Option<f64>,
    pub sigma_st: Option<f64>,
    pub sigma_st0: Option<f64>,
    pub p0: Option<f64>,
    pub p1: Option<f64>,
    pub f0: Option<f64>,
    pub f1: Option<f64>,
    pub h0: Option<f64>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub theta: Option<f64>,
    pub pi: Option<f64>,
    pub gamma: Option<f64>,
    pub beta_tg: Option<f64>,
    pub horizon: Option<f64>,
    pub s0: Option<f64>,
    pub q0: Option<f64>,
    /// Constant seasonality; overrides the two-peak profile.
    pub chi_constant: Option<f64>,
    pub chi_base: Option<f64>,
    pub chi_amplitude: Option<f64>,
    pub chi_shift: Option<f64>,
}

macro_rules! apply {
    ($dst:expr, $src:expr; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )*
    };
}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub coupled: bool,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub parallel: usize,
    pub market: MarketParams,
    pub solver: SolverOverrides,
    pub mfg: MfgParams,
    pub pi_list: Vec<f64>,
    pub n_mc: usize,
    pub trajectory_paths: usize,
    /// Raw text of the config file, if any.
    pub source: String,
}

fn usage(msg: impl Into<String>) -> BenchError {
    BenchError::Usage(msg.into())
}

fn split_list<T>(text: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, BenchError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| usage(format!("unknown {what} `{s}`"))))
        .collect()
}

impl ExperimentConfig {
    /// Reads `--config` if given and applies the command-line flags on top.
    pub fn from_cli(cli: &Cli) -> Result<Self, BenchError> {
        let (file, source) = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                let parsed: FileConfig = toml::from_str(&text).map_err(|e| usage(format!("bad config: {e}")))?;
                (parsed, text)
            }
            None => (FileConfig::default(), String::new()),
        };
        Self::resolve(cli, file, source)
    }

    pub fn resolve(cli: &Cli, file: FileConfig, source: String) -> Result<Self, BenchError> {
        let run = &file.run;
        let exp_name = cli.experiment.clone().or(run.experiment.clone()).unwrap_or_else(|| "price".into());
        let experiment =
            Experiment::parse(&exp_name).ok_or_else(|| usage(format!("unknown experiment `{exp_name}`")))?;
        let model_name = cli.model.clone().or(run.model.clone()).unwrap_or_else(|| "merton".into());
        let model = ModelKind::parse(&model_name).ok_or_else(|| usage(format!("unknown model `{model_name}`")))?;

        let algorithms = match (&cli.algo, &run.algorithms) {
            (Some(list), _) => split_list(list, "algorithm", Algorithm::parse)?,
            (None, Some(names)) => split_list(&names.join(","), "algorithm", Algorithm::parse)?,
            (None, None) if experiment == Experiment::CompareAll => Algorithm::ALL.to_vec(),
            (None, None) => vec![Algorithm::Global],
        };
        if algorithms.is_empty() {
            return Err(usage("no algorithm selected"));
        }
        if !experiment.is_pricing() {
            for &a in &algorithms {
                check_mfg_algorithm(a).map_err(|e| usage(e.to_string()))?;
            }
        }
        let seeds = match (&cli.seed, &run.seeds) {
            (Some(list), _) => split_list(list, "seed", |s| s.parse().ok())?,
            (None, Some(s)) => s.clone(),
            (None, None) => vec![0],
        };
        if seeds.is_empty() {
            return Err(usage("no seed selected"));
        }
        let pi_list = match (&cli.pi_list, &run.pi_list) {
            (Some(list), _) => split_list(list, "pi", |s| s.parse().ok())?,
            (None, Some(v)) => v.clone(),
            (None, None) => vec![0.0, 0.1, 0.5, 0.95],
        };
        if pi_list.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(usage("pi values must lie in [0, 1]"));
        }

        let mut solver = file.solver.clone();
        if let Some(n) = cli.train_iters {
            solver.n_train = Some(n);
        }
        if let Some(m) = cli.steps {
            solver.steps = Some(m);
        }

        let mut market = MarketParams::default();
        apply!(market, file.market; r, sigma, strike, s0, coupling, lambda, alpha, xi, theta, sigma_bar, kappa, horizon);
        market.steps = solver.steps.unwrap_or(model.default_steps());
        if experiment.is_pricing() {
            market.validate().map_err(|e| usage(e.to_string()))?;
        }

        let mut mfg = MfgParams::default();
        let m = &file.mfg;
        apply!(mfg, m; a, c, k_charge, mu, sigma, sigma0, mu_st, sigma_st, sigma_st0, p0, p1, f0, f1, h0, h1, h2,
            theta, pi, gamma, beta_tg, horizon, s0);
        if let Some(q0) = m.q0 {
            mfg.q0 = Some(q0);
        }
        if let Some(c) = m.chi_constant {
            mfg.chi = Seasonality::Constant(c);
        } else if m.chi_base.is_some() || m.chi_amplitude.is_some() || m.chi_shift.is_some() {
            let Seasonality::TwoPeak { base, amplitude, shift } = Seasonality::default() else { unreachable!() };
            mfg.chi = Seasonality::TwoPeak {
                base: m.chi_base.unwrap_or(base),
                amplitude: m.chi_amplitude.unwrap_or(amplitude),
                shift: m.chi_shift.unwrap_or(shift),
            };
        }
        if let Some(p1) = cli.p1 {
            mfg.p1 = p1;
        }
        if let Some(steps) = solver.steps {
            mfg.steps = steps;
        }
        if !experiment.is_pricing() {
            mfg.validate().map_err(|e| usage(e.to_string()))?;
        }

        let parallel = cli.parallel.or(run.parallel).unwrap_or(1);
        let n_mc = cli.n_mc.or(run.n_mc).unwrap_or(10_000);
        let trajectory_paths = run.trajectory_paths.unwrap_or(5);
        if parallel == 0 || n_mc == 0 || trajectory_paths == 0 {
            return Err(usage("parallel, n_mc and trajectory_paths must be positive"));
        }
        Ok(Self {
            experiment,
            model,
            coupled: cli.coupled || run.coupled.unwrap_or(false),
            algorithms,
            seeds,
            out: cli.out.clone().or(run.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            parallel,
            market,
            solver,
            mfg,
            pi_list,
            n_mc,
            trajectory_paths,
            source,
        })
    }

    fn finish(&self, mut cfg: SolverConfig, seed: u64) -> Result<SolverConfig, BenchError> {
        let s = &self.solver;
        if let Some(n) = s.n_train {
            cfg.n_train = n;
            if self.experiment.is_pricing() {
                cfg.lr = LrSchedule::default_for(cfg.algorithm, n);
            }
        }
        apply!(cfg, s; batch, compensator_samples, width, layers);
        if let Some(lr) = s.lr {
            cfg.lr = LrSchedule::constant(lr);
        }
        cfg.epoch_stride = s.epoch_stride.unwrap_or((cfg.n_train / 100).max(1));
        cfg.seed = seed;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Pricing solver settings: the experiment defaults, one hundred recorded epochs.
    pub fn pricing_config(&self, algorithm: Algorithm, seed: u64) -> Result<SolverConfig, BenchError> {
        let mut cfg = SolverConfig::pricing(algorithm, self.model);
        cfg.steps = self.market.steps;
        self.finish(cfg, seed)
    }

    pub fn mfg_config(&self, algorithm: Algorithm, seed: u64) -> Result<SolverConfig, BenchError> {
        self.finish(mfg_solver_config(algorithm, self.mfg.steps), seed)
    }

    /// Text echo of everything that determines the outputs.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let pis: Vec<String> = self.pi_list.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "experiment={}", self.experiment.name());
        let _ = writeln!(out, "algorithms={}", names.join(","));
        let _ = writeln!(out, "seeds={}", seeds.join(","));
        if self.experiment.is_pricing() {
            let _ = writeln!(out, "model={}\ncoupled={}\n{:?}", self.model.name(), self.coupled, self.market);
        } else {
            let _ = writeln!(
                out,
                "pi_list={}\nn_mc={}\ntrajectory_paths={}",
                pis.join(","),
                self.n_mc,
                self.trajectory_paths
            );
            let _ = writeln!(out, "{}", self.mfg.summary());
        }
        let _ = write!(out, "{:?}", self.solver);
        out
    }

    pub fn out_path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }
}
