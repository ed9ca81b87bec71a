use std::sync::Arc;

use crate::error::Result;
use crate::kernels::{compound_poisson, gaussian_increments, vg_increments, Purpose, RngStream};
use crate::models::{FbsdeSpec, JumpKernel};
use crate::nn::Matrix;

/// Shared compensator bundles of one time step. Bundles without jumps are only counted.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorDraw {
    pub total: usize,
    pub zero: usize,
    /// `Σ_l (e^{e_l} − 1)` of every bundle with at least one jump.
    pub factors: Vec<f64>,
}

impl CompensatorDraw {
    pub fn nonzero(&self) -> usize {
        self.factors.len()
    }
}

/// Noise of one step for the whole batch.
#[derive(Debug, Clone)]
pub struct StepNoise {
    pub dw: Arc<Matrix>,
    /// `Σ_l (e^{ΔJ_l} − 1)` per path, so that the jump sum is `X·factor`.
    pub jump_factor: Arc<Matrix>,
    pub compensator: Option<CompensatorDraw>,
}

/// All draws consumed by one gradient iteration.
#[derive(Debug, Clone)]
pub struct IterationNoise {
    pub steps: Vec<StepNoise>,
}

/// Per-path jump factors drawn from the count and mark streams of `(index, step)`.
pub fn jump_factors(
    spec: &FbsdeSpec,
    seed: u64,
    index: u64,
    step: u64,
    dt: f64,
    n: usize,
    compensator: bool,
) -> Result<Vec<f64>> {
    let (count_p, mark_p, sub_p) = if compensator {
        (Purpose::CompensatorCount, Purpose::CompensatorMarks, Purpose::CompensatorSubordinator)
    } else {
        (Purpose::JumpCount, Purpose::JumpMarks, Purpose::Subordinator)
    };
    match spec.kernel {
        JumpKernel::None => Ok(vec![0.0; n]),
        JumpKernel::CompoundPoisson { lambda, alpha, xi } => {
            let batch = compound_poisson(
                &RngStream::new(seed, index, step, count_p),
                &RngStream::new(seed, index, step, mark_p),
                n,
                lambda,
                dt,
                alpha,
                xi,
            )?;
            Ok(batch.mark_sums(f64::exp_m1))
        }
        JumpKernel::VarianceGamma { theta, sigma_bar, kappa } => {
            let inc = vg_increments(&RngStream::new(seed, index, step, sub_p), n, dt, theta, sigma_bar, kappa)?;
            Ok(inc.into_iter().map(f64::exp_m1).collect())
        }
    }
}

/// Draws `samples` compensator bundles and groups the empty ones.
pub fn compensator_draw(
    spec: &FbsdeSpec,
    seed: u64,
    index: u64,
    step: u64,
    dt: f64,
    samples: usize,
) -> Result<CompensatorDraw> {
    let mut zero = 0;
    let mut factors = Vec::new();
    match spec.kernel {
        JumpKernel::None => zero = samples,
        JumpKernel::CompoundPoisson { lambda, alpha, xi } => {
            let batch = compound_poisson(
                &RngStream::new(seed, index, step, Purpose::CompensatorCount),
                &RngStream::new(seed, index, step, Purpose::CompensatorMarks),
                samples,
                lambda,
                dt,
                alpha,
                xi,
            )?;
            for s in &batch.sizes {
                if s.is_empty() {
                    zero += 1;
                } else {
                    factors.push(s.iter().map(|&e| e.exp_m1()).sum());
                }
            }
        }
        JumpKernel::VarianceGamma { .. } => {
            factors = jump_factors(spec, seed, index, step, dt, samples, true)?;
        }
    }
    Ok(CompensatorDraw { total: samples, zero, factors })
}

/// Draws the batch noise of iteration `index`.
pub fn sample_iteration(
    spec: &FbsdeSpec,
    steps: usize,
    batch: usize,
    compensator_samples: Option<usize>,
    seed: u64,
    index: u64,
) -> Result<IterationNoise> {
    let dt = spec.horizon / steps as f64;
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps as u64 {
        let dw = gaussian_increments(&RngStream::new(seed, index, i, Purpose::Brownian), batch, 1, dt)?;
        let jf = jump_factors(spec, seed, index, i, dt, batch, false)?;
        let compensator = match compensator_samples {
            Some(a) if spec.has_jumps() => Some(compensator_draw(spec, seed, index, i, dt, a)?),
            _ => None,
        };
        out.push(StepNoise { dw: Arc::new(dw), jump_factor: Arc::new(Matrix::column(jf)), compensator });
    }
    Ok(IterationNoise { steps: out })
}

/// Monte Carlo estimate `(1/A) Σ_k net(t, x, Σ_l β(t, x, ΔJ_l^k))` for one state.
pub fn estimate_compensator(
    net: impl Fn(f64, f64, f64) -> f64,
    t: f64,
    x: f64,
    spec: &FbsdeSpec,
    dt: f64,
    samples: usize,
    stream: &RngStream,
) -> Result<f64> {
    let draw = compensator_draw(spec, stream.seed, stream.id.index, stream.id.step, dt, samples)?;
    let mut acc = draw.zero as f64 * net(t, x, 0.0);
    for &f in &draw.factors {
        acc += net(t, x, x * f);
    }
    Ok(acc / samples as f64)
}

/// Forward trajectories of one batch with the noise that produced them.
///
/// `x[i][j]` is `X_{t_i}` on path `j`; `dw` and `jump_factor` have one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub dt: f64,
    pub x: Vec<Vec<f64>>,
    pub dw: Vec<Vec<f64>>,
    pub jump_factor: Vec<Vec<f64>>,
}

impl PathBatch {
    pub fn steps(&self) -> usize {
        self.dw.len()
    }

    pub fn paths(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn terminal(&self) -> &[f64] {
        &self.x[self.x.len() - 1]
    }
}

/// Euler paths driven by the training streams of iteration `index`, with `Y_i = y_of(t_i, X_i)`.
pub fn simulate_paths(
    spec: &FbsdeSpec,
    steps: usize,
    batch: usize,
    seed: u64,
    index: u64,
    y_of: impl Fn(f64, f64) -> f64,
) -> Result<PathBatch> {
    let noise = sample_iteration(spec, steps, batch, None, seed, index)?;
    let dt = spec.horizon / steps as f64;
    let mut x = vec![vec![spec.x0; batch]];
    let mut dw = Vec::with_capacity(steps);
    let mut jump_factor = Vec::with_capacity(steps);
    for (i, s) in noise.steps.iter().enumerate() {
        let t = i as f64 * dt;
        let mut next = Vec::with_capacity(batch);
        for j in 0..batch {
            let xi = x[i][j];
            let v = xi
                + spec.drift_bbar(t, xi, y_of(t, xi)) * dt
                + spec.diffusion(t, xi) * s.dw.get(j, 0)
                + xi * s.jump_factor.get(j, 0);
            if !v.is_finite() {
                return Err(crate::error::Error::NonFinite { context: format!("forward path {j} at step {i}") });
            }
            next.push(v);
        }
        x.push(next);
        dw.push(s.dw.as_slice().to_vec());
        jump_factor.push(s.jump_factor.as_slice().to_vec());
    }
    Ok(PathBatch { dt, x, dw, jump_factor })
}
