//! The seven training schemes and the Monte Carlo compensator.

mod loss;
mod noise;

use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::kernels::{Purpose, RngStream};
use crate::models::{FbsdeSpec, ModelKind};
use crate::nn::{AdamState, MlpNodes, MlpParams, Tape};

pub use loss::{build_loss, AnalyticFunction, LossNets, TapeFunction};
pub use noise::{
    compensator_draw, estimate_compensator, jump_factors, sample_iteration, simulate_paths, CompensatorDraw,
    IterationNoise, PathBatch, StepNoise,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Global,
    SumLocal1,
    SumLocal2,
    SumMultiStep1,
    SumMultiStep2,
    SumLocalReg,
    SumMultiStepReg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Global,
        Algorithm::SumLocal1,
        Algorithm::SumLocal2,
        Algorithm::SumMultiStep1,
        Algorithm::SumMultiStep2,
        Algorithm::SumLocalReg,
        Algorithm::SumMultiStepReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Global => "Global",
            Algorithm::SumLocal1 => "SumLocal1",
            Algorithm::SumLocal2 => "SumLocal2",
            Algorithm::SumMultiStep1 => "SumMultiStep1",
            Algorithm::SumMultiStep2 => "SumMultiStep2",
            Algorithm::SumLocalReg => "SumLocalReg",
            Algorithm::SumMultiStepReg => "SumMultiStepReg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL.into_iter().find(|a| {
            let n = a.name().to_ascii_lowercase();
            n == key || n.trim_start_matches("sum") == key
        })
    }

    pub fn is_regression(self) -> bool {
        matches!(self, Algorithm::SumLocalReg | Algorithm::SumMultiStepReg)
    }

    pub fn is_variant_one(self) -> bool {
        matches!(self, Algorithm::SumLocal1 | Algorithm::SumMultiStep1)
    }

    /// Schemes estimating a compensator by Monte Carlo.
    pub fn uses_compensator(self) -> bool {
        !self.is_regression()
    }

    pub fn uses_jump_net(self) -> bool {
        matches!(self, Algorithm::Global | Algorithm::SumLocal2 | Algorithm::SumMultiStep2)
    }
}

/// Piecewise-constant learning rate: `(first iteration, rate)` pairs in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub pieces: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn constant(rate: f64) -> Self {
        Self { pieces: vec![(0, rate)] }
    }

    /// `first` for the first half of `n_train` iterations, `second` afterwards.
    pub fn halves(first: f64, second: f64, n_train: usize) -> Self {
        Self { pieces: vec![(0, first), (n_train / 2, second)] }
    }

    pub fn default_for(algorithm: Algorithm, n_train: usize) -> Self {
        match algorithm {
            Algorithm::Global => Self::halves(1e-2, 3e-3, n_train),
            _ => Self::halves(7e-3, 1e-3, n_train),
        }
    }

    pub fn rate(&self, iteration: usize) -> f64 {
        self.pieces.iter().take_while(|(start, _)| *start <= iteration).last().map_or(self.pieces[0].1, |p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub steps: usize,
    pub batch: usize,
    pub compensator_samples: usize,
    pub n_train: usize,
    pub lr: LrSchedule,
    pub seed: u64,
    pub epoch_stride: usize,
    pub width: usize,
    pub layers: usize,
}

impl SolverConfig {
    /// Budgets of the pricing experiments: 12000 iterations, `m = 21`, one hidden layer,
    /// `B = 10, A = 5000` or `B = 10000` for the regression schemes.
    pub fn pricing(algorithm: Algorithm, kind: ModelKind) -> Self {
        let n_train = 12000;
        Self {
            algorithm,
            steps: kind.default_steps(),
            batch: if algorithm.is_regression() { 10_000 } else { 10 },
            compensator_samples: 5000,
            n_train,
            lr: LrSchedule::default_for(algorithm, n_train),
            seed: 0,
            epoch_stride: 100,
            width: 21,
            layers: 2,
        }
    }

    /// Sets `n_train` and rescales the default schedule to it.
    pub fn with_iterations(mut self, n_train: usize) -> Self {
        self.n_train = n_train;
        self.lr = LrSchedule::default_for(self.algorithm, n_train);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 || self.batch < 1 {
            return Err(invalid("steps and batch size must be at least 1"));
        }
        if self.algorithm.uses_compensator() && self.compensator_samples < 1 {
            return Err(invalid("compensator schemes need at least one sample"));
        }
        if self.epoch_stride < 1 {
            return Err(invalid("epoch stride must be at least 1"));
        }
        if self.layers < 2 || self.width < 1 {
            return Err(invalid("networks need at least one hidden layer"));
        }
        if self.lr.pieces.is_empty() || self.lr.pieces.iter().any(|p| !(p.1 > 0.0)) {
            return Err(invalid("learning rates must be positive"));
        }
        Ok(())
    }

    /// Text form used for hashing and report headers.
    pub fn describe(&self) -> String {
        let lr: Vec<String> = self.lr.pieces.iter().map(|(s, r)| format!("{s}:{r}")).collect();
        format!(
            "algorithm={}\nsteps={}\nbatch={}\ncompensator_samples={}\nn_train={}\nlr={}\nseed={}\nepoch_stride={}\nwidth={}\nlayers={}",
            self.algorithm.name(),
            self.steps,
            self.batch,
            self.compensator_samples,
            self.n_train,
            lr.join(","),
            self.seed,
            self.epoch_stride,
            self.width,
            self.layers
        )
    }

    fn compensator_option(&self) -> Option<usize> {
        self.algorithm.uses_compensator().then_some(self.compensator_samples)
    }
}

/// Trainable networks of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBundle {
    pub y0: Option<MlpParams>,
    pub value: Option<MlpParams>,
    pub z: Option<MlpParams>,
    pub jump: Option<MlpParams>,
}

impl NetworkBundle {
    pub fn new(algorithm: Algorithm, spec: &FbsdeSpec, width: usize, layers: usize, seed: u64) -> Result<Self> {
        let d = spec.dim_x();
        let k = spec.dim_y();
        let init = |role: u64, d_in: usize, d_out: usize| {
            let mut rng = RngStream::new(seed, role, 0, Purpose::Init).rng();
            MlpParams::glorot(&MlpParams::sizes(d_in, width, layers, d_out), &mut rng)
        };
        let global = algorithm == Algorithm::Global;
        let jumps = spec.has_jumps() && algorithm.uses_jump_net();
        Ok(Self {
            y0: if global { Some(init(0, d, k)?) } else { None },
            value: if global { None } else { Some(init(1, 1 + d, k)?) },
            z: if algorithm.is_regression() { None } else { Some(init(2, 1 + d, k * d)?) },
            jump: if jumps { Some(init(3, 1 + 2 * d, k)?) } else { None },
        })
    }

    pub fn networks(&self) -> Vec<&MlpParams> {
        [&self.y0, &self.value, &self.z, &self.jump].into_iter().flatten().collect()
    }

    pub fn networks_mut(&mut self) -> Vec<&mut MlpParams> {
        [&mut self.y0, &mut self.value, &mut self.z, &mut self.jump].into_iter().flatten().collect()
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|n| n.param_count()).sum()
    }

    /// `𝒴(x₀)` for Global, `𝒰(0, x₀)` otherwise.
    pub fn y0_estimate(&self, spec: &FbsdeSpec) -> Result<f64> {
        match (&self.y0, &self.value) {
            (Some(n), _) => Ok(n.forward(&[spec.x0])?[0]),
            (None, Some(u)) => Ok(u.forward(&[0.0, spec.x0])?[0]),
            _ => Err(invalid("bundle has neither an initial-value nor a value network")),
        }
    }
}

fn record_loss(
    tape: &mut Tape,
    bundle: &NetworkBundle,
    spec: &FbsdeSpec,
    algorithm: Algorithm,
    noise: &IterationNoise,
) -> Result<(crate::nn::NodeId, Vec<MlpNodes>)> {
    let mut reg = |n: &Option<MlpParams>| n.as_ref().map(|p| p.register(tape));
    let y0 = reg(&bundle.y0);
    let value = reg(&bundle.value);
    let z = reg(&bundle.z);
    let jump = reg(&bundle.jump);
    let nets = LossNets {
        y0: y0.as_ref().map(|m| m as &dyn TapeFunction),
        value: value.as_ref().map(|m| m as &dyn TapeFunction),
        z: z.as_ref().map(|m| m as &dyn TapeFunction),
        jump: jump.as_ref().map(|m| m as &dyn TapeFunction),
    };
    let loss = build_loss(tape, spec, algorithm, &nets, noise)?;
    Ok((loss, [y0, value, z, jump].into_iter().flatten().collect()))
}

/// Loss value and the gradient of every network in [`NetworkBundle::networks`] order.
pub fn loss_and_gradients(
    bundle: &NetworkBundle,
    spec: &FbsdeSpec,
    algorithm: Algorithm,
    noise: &IterationNoise,
) -> Result<(f64, Vec<MlpParams>)> {
    let mut tape = Tape::new();
    let (loss, nodes) = record_loss(&mut tape, bundle, spec, algorithm, noise)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "loss".into() });
    }
    let grads = tape.backprop(loss)?;
    Ok((value, nodes.iter().map(|n| n.gradients(&grads)).collect()))
}

/// Loss value of `config.algorithm` on the noise of iteration `iteration`.
pub fn loss_value(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig, iteration: u64) -> Result<f64> {
    let noise =
        sample_iteration(spec, config.steps, config.batch, config.compensator_option(), config.seed, iteration)?;
    let mut tape = Tape::new();
    let (loss, _) = record_loss(&mut tape, bundle, spec, config.algorithm, &noise)?;
    Ok(tape.scalar(loss))
}

fn scheme_loss(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig, algorithm: Algorithm) -> Result<f64> {
    let mut c = config.clone();
    c.algorithm = algorithm;
    loss_value(bundle, spec, &c, 0)
}

pub fn global_loss(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig) -> Result<f64> {
    scheme_loss(bundle, spec, config, Algorithm::Global)
}

pub fn sumlocal_loss(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig, variant: u8) -> Result<f64> {
    let a = match variant {
        1 => Algorithm::SumLocal1,
        2 => Algorithm::SumLocal2,
        _ => return Err(invalid("variant must be 1 or 2")),
    };
    scheme_loss(bundle, spec, config, a)
}

pub fn summultistep_loss(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig, variant: u8) -> Result<f64> {
    let a = match variant {
        1 => Algorithm::SumMultiStep1,
        2 => Algorithm::SumMultiStep2,
        _ => return Err(invalid("variant must be 1 or 2")),
    };
    scheme_loss(bundle, spec, config, a)
}

pub fn sumlocalreg_loss(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig) -> Result<f64> {
    scheme_loss(bundle, spec, config, Algorithm::SumLocalReg)
}

pub fn summultistepreg_loss(bundle: &NetworkBundle, spec: &FbsdeSpec, config: &SolverConfig) -> Result<f64> {
    scheme_loss(bundle, spec, config, Algorithm::SumMultiStepReg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub y0: f64,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub header: String,
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    pub final_y0: f64,
    pub seconds: f64,
    pub divergence: Option<String>,
}

impl TrainingReport {
    pub fn y0_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.y0).collect()
    }
}

/// Hex SHA-256 of a text, truncated to 16 characters.
pub fn content_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn describe_spec(spec: &FbsdeSpec) -> String {
    format!(
        "model={}\nr={}\nsigma={}\nstrike={}\nx0={}\nhorizon={}\ncoupling={}\nkernel={:?}",
        spec.kind.name(),
        spec.rate,
        spec.sigma,
        spec.strike,
        spec.x0,
        spec.horizon,
        spec.coupling,
        spec.kernel
    )
}

/// Trains the networks of `config.algorithm` and records `Y₀` every `epoch_stride` iterations.
pub fn train_with_bundle(spec: &FbsdeSpec, config: &SolverConfig) -> Result<(NetworkBundle, TrainingReport)> {
    config.validate()?;
    let header = format!("{}\n{}", describe_spec(spec), config.describe());
    let config_hash = content_hash(&header);
    let mut bundle = NetworkBundle::new(config.algorithm, spec, config.width, config.layers, config.seed)?;
    let mut adam = AdamState::for_networks(&bundle.networks());
    let start = Instant::now();
    let comp = config.compensator_option();
    let first_noise = sample_iteration(spec, config.steps, config.batch, comp, config.seed, 0)?;
    let (initial_loss, _) = loss_and_gradients(&bundle, spec, config.algorithm, &first_noise)?;
    let initial =
        EpochRecord { epoch: 0, iteration: 0, y0: bundle.y0_estimate(spec)?, loss: initial_loss, seconds: 0.0 };
    let mut epochs = Vec::with_capacity(config.n_train / config.epoch_stride);
    let mut divergence = None;
    let mut noise = Some(first_noise);
    for it in 0..config.n_train {
        let batch_noise = match noise.take() {
            Some(n) => n,
            None => sample_iteration(spec, config.steps, config.batch, comp, config.seed, it as u64)?,
        };
        let step = loss_and_gradients(&bundle, spec, config.algorithm, &batch_noise).and_then(|(loss, grads)| {
            adam.step_networks(&mut bundle.networks_mut(), &grads, config.lr.rate(it))?;
            Ok(loss)
        });
        let loss = match step {
            Ok(l) => l,
            Err(e) => {
                divergence = Some(Error::Diverged { iteration: it, reason: e.to_string() }.to_string());
                break;
            }
        };
        if (it + 1) % config.epoch_stride == 0 {
            epochs.push(EpochRecord {
                epoch: (it + 1) / config.epoch_stride,
                iteration: it + 1,
                y0: bundle.y0_estimate(spec)?,
                loss,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    let final_y0 = bundle.y0_estimate(spec)?;
    let report = TrainingReport {
        algorithm: config.algorithm,
        seed: config.seed,
        config_hash,
        header,
        initial,
        epochs,
        final_y0,
        seconds: start.elapsed().as_secs_f64(),
        divergence,
    };
    Ok((bundle, report))
}

pub fn train(spec: &FbsdeSpec, config: &SolverConfig) -> Result<TrainingReport> {
    Ok(train_with_bundle(spec, config)?.1)
}
