use std::sync::Arc;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::kernels::{Purpose, RngStream};
use crate::nn::{AdamState, Matrix, MlpNodes, MlpParams, NodeId, Tape};
use crate::solvers::{content_hash, Algorithm, EpochRecord, LrSchedule, SolverConfig, TrainingReport};

use super::dynamics::{simulate_exogenous, ExogenousPaths, MfgState, NoiseLayout};
use super::params::{individual_terms, projected_constant, MfgParams, Regime};

/// Inputs of the full adjoint network `Y`.
pub const FULL_INPUTS: usize = 8;
/// Inputs of the common-noise adjoint network `Ŷ`.
pub const COMMON_INPUTS: usize = 5;

/// Affine rescaling of network inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub q_center: f64,
    pub q_scale: f64,
    pub s_scale: f64,
    pub y_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { q_center: 0.4, q_scale: 0.2, s_scale: 0.05, y_scale: 10.0 }
    }
}

impl Normalization {
    fn q(&self, v: f64) -> f64 {
        (v - self.q_center) / self.q_scale
    }

    /// `(t, Q, Q̂, Qˢᵗ, Q̂ˢᵗ, R, S^α, S^α̂)` scaled.
    pub fn full(&self, horizon: f64, t: f64, s: &MfgState) -> [f64; FULL_INPUTS] {
        [
            t / horizon,
            self.q(s.q),
            self.q(s.qhat),
            self.q(s.q_st),
            self.q(s.qhat_st),
            s.r / horizon,
            s.s_alpha / self.s_scale,
            s.s_alpha_hat / self.s_scale,
        ]
    }

    /// `(t, Q̂, Q̂ˢᵗ, R, S^α̂)` scaled.
    pub fn common(&self, horizon: f64, t: f64, s: &MfgState) -> [f64; COMMON_INPUTS] {
        [t / horizon, self.q(s.qhat), self.q(s.qhat_st), s.r / horizon, s.s_alpha_hat / self.s_scale]
    }
}

/// Networks for `Y` and `Ŷ` trained by one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub algorithm: Algorithm,
    pub regime: Regime,
    pub normalization: Normalization,
    pub y0: Option<MlpParams>,
    pub y0_hat: Option<MlpParams>,
    pub value: Option<MlpParams>,
    pub value_hat: Option<MlpParams>,
    /// Outputs `(Z, Z⁰, U)`.
    pub z: Option<MlpParams>,
    /// Outputs `(Ẑ⁰, Û)`.
    pub z_hat: Option<MlpParams>,
}

/// Rejects the variant-1 schemes: the Cox compensator is analytic.
pub fn check_mfg_algorithm(algorithm: Algorithm) -> Result<()> {
    if algorithm.is_variant_one() {
        return Err(invalid(format!(
            "{} is not used for the MFG system; the compensator is analytic",
            algorithm.name()
        )));
    }
    Ok(())
}

/// The five schemes applied to the MFG system.
pub const MFG_ALGORITHMS: [Algorithm; 5] = [
    Algorithm::Global,
    Algorithm::SumLocal2,
    Algorithm::SumMultiStep2,
    Algorithm::SumLocalReg,
    Algorithm::SumMultiStepReg,
];

/// Display name without the variant suffix.
pub fn mfg_algorithm_name(algorithm: Algorithm) -> &'static str {
    match algorithm {
        Algorithm::SumLocal2 => "SumLocal",
        Algorithm::SumMultiStep2 => "SumMultiStep",
        other => other.name(),
    }
}

impl PolicyBundle {
    pub fn new(algorithm: Algorithm, regime: Regime, width: usize, layers: usize, seed: u64) -> Result<Self> {
        check_mfg_algorithm(algorithm)?;
        let init = |role: u64, d_in: usize, d_out: usize| {
            let mut rng = RngStream::new(seed, 100 + role, 0, Purpose::Init).rng();
            MlpParams::glorot(&MlpParams::sizes(d_in, width, layers, d_out), &mut rng)
        };
        let global = algorithm == Algorithm::Global;
        let reg = algorithm.is_regression();
        Ok(Self {
            algorithm,
            regime,
            normalization: Normalization::default(),
            y0: if global { Some(init(0, FULL_INPUTS, 1)?) } else { None },
            y0_hat: if global { Some(init(1, COMMON_INPUTS, 1)?) } else { None },
            value: if global { None } else { Some(init(2, FULL_INPUTS, 1)?) },
            value_hat: if global { None } else { Some(init(3, COMMON_INPUTS, 1)?) },
            z: if reg { None } else { Some(init(4, FULL_INPUTS, 3)?) },
            z_hat: if reg { None } else { Some(init(5, COMMON_INPUTS, 2)?) },
        })
    }

    pub fn networks(&self) -> Vec<&MlpParams> {
        [&self.y0, &self.y0_hat, &self.value, &self.value_hat, &self.z, &self.z_hat].into_iter().flatten().collect()
    }

    pub fn networks_mut(&mut self) -> Vec<&mut MlpParams> {
        [&mut self.y0, &mut self.y0_hat, &mut self.value, &mut self.value_hat, &mut self.z, &mut self.z_hat]
            .into_iter()
            .flatten()
            .collect()
    }

    /// `(Y₀, Ŷ₀)` at the deterministic initial state.
    pub fn initial_values(&self, params: &MfgParams) -> Result<(f64, f64)> {
        let s = MfgState::initial(params);
        let n = &self.normalization;
        let full = n.full(params.horizon, 0.0, &s);
        let common = n.common(params.horizon, 0.0, &s);
        let (a, b) = match (&self.y0, &self.y0_hat, &self.value, &self.value_hat) {
            (Some(a), Some(b), _, _) | (_, _, Some(a), Some(b)) => (a, b),
            _ => return Err(invalid("policy has no initial-value networks")),
        };
        Ok((n.y_scale * a.forward(&full)?[0], n.y_scale * b.forward(&common)?[0]))
    }
}

struct Nodes {
    y0: Option<MlpNodes>,
    y0_hat: Option<MlpNodes>,
    value: Option<MlpNodes>,
    value_hat: Option<MlpNodes>,
    z: Option<MlpNodes>,
    z_hat: Option<MlpNodes>,
}

impl Nodes {
    fn register(tape: &mut Tape, p: &PolicyBundle) -> Self {
        let mut reg = |n: &Option<MlpParams>| n.as_ref().map(|m| m.register(tape));
        Self {
            y0: reg(&p.y0),
            y0_hat: reg(&p.y0_hat),
            value: reg(&p.value),
            value_hat: reg(&p.value_hat),
            z: reg(&p.z),
            z_hat: reg(&p.z_hat),
        }
    }

    fn all(self) -> Vec<MlpNodes> {
        [self.y0, self.y0_hat, self.value, self.value_hat, self.z, self.z_hat].into_iter().flatten().collect()
    }
}

fn col(values: Vec<f64>) -> Arc<Matrix> {
    Arc::new(Matrix::column(values))
}

fn scheme_loss(
    tape: &mut Tape,
    algorithm: Algorithm,
    rolled: Option<NodeId>,
    values: &[NodeId],
    increments: &[NodeId],
    terminal: NodeId,
) -> NodeId {
    let steps = values.len();
    let mut terms = Vec::new();
    match algorithm {
        Algorithm::Global => {
            let d = tape.sub(rolled.expect("global rolls Y"), terminal);
            let sq = tape.square(d);
            terms.push(tape.mean(sq));
        }
        Algorithm::SumLocal1 | Algorithm::SumLocal2 | Algorithm::SumLocalReg => {
            for i in 0..steps {
                let next = if i + 1 < steps { values[i + 1] } else { terminal };
                let d = tape.sub(next, values[i]);
                let d = tape.sub(d, increments[i]);
                let sq = tape.square(d);
                terms.push(tape.mean(sq));
            }
        }
        Algorithm::SumMultiStep1 | Algorithm::SumMultiStep2 | Algorithm::SumMultiStepReg => {
            let mut suffix: Option<NodeId> = None;
            for k in (0..steps).rev() {
                let s = match suffix {
                    Some(acc) => tape.add(increments[k], acc),
                    None => increments[k],
                };
                suffix = Some(s);
                let psi = tape.add(values[k], s);
                let d = tape.sub(psi, terminal);
                let sq = tape.square(d);
                terms.push(tape.mean(sq));
            }
        }
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t);
    }
    total
}

/// Records the sum of the `Y` and `Ŷ` losses of `policy.algorithm` on one batch.
fn record_mfg_loss(
    tape: &mut Tape,
    policy: &PolicyBundle,
    params: &MfgParams,
    exo: &ExogenousPaths,
) -> Result<(NodeId, Vec<MlpNodes>)> {
    let nodes = Nodes::register(tape, policy);
    let alg = policy.algorithm;
    let b = exo.paths();
    let m = exo.steps();
    let dt = params.dt();
    let norm = policy.normalization;
    let horizon = params.horizon;
    let p = MfgParams { regime: policy.regime, ..params.clone() };
    let ak = p.a + p.k_charge;
    let q_col = |tape: &mut Tape, rows: &[f64]| tape.leaf(Matrix::column(rows.iter().map(|&v| norm.q(v)).collect()));
    let mut s = tape.constant(b, 1, p.s0);
    let mut sh = tape.constant(b, 1, p.s0);
    let inputs = |tape: &mut Tape, i: usize, s: NodeId, sh: NodeId| {
        let t = tape.constant(b, 1, p.time(i) / horizon);
        let q = q_col(tape, &exo.q[i]);
        let qh = q_col(tape, &exo.qhat[i]);
        let qs = q_col(tape, &exo.q_st[i]);
        let qhs = q_col(tape, &exo.qhat_st[i]);
        let r = tape.leaf(Matrix::column(exo.r[i].iter().map(|&v| v / horizon).collect()));
        let sn = tape.scale(s, 1.0 / norm.s_scale);
        let shn = tape.scale(sh, 1.0 / norm.s_scale);
        let full = tape.concat(&[t, q, qh, qs, qhs, r, sn, shn]);
        let common = tape.concat(&[t, qh, qhs, r, shn]);
        (full, common)
    };
    let mut rolled: Option<(NodeId, NodeId)> = None;
    if alg == Algorithm::Global {
        let (full, common) = inputs(tape, 0, s, sh);
        let y = nodes.y0.as_ref().expect("global policy").apply(tape, full);
        let yh = nodes.y0_hat.as_ref().expect("global policy").apply(tape, common);
        rolled = Some((tape.scale(y, norm.y_scale), tape.scale(yh, norm.y_scale)));
    }
    let mut values = Vec::with_capacity(m);
    let mut values_hat = Vec::with_capacity(m);
    let mut incs = Vec::with_capacity(m);
    let mut incs_hat = Vec::with_capacity(m);
    for i in 0..m {
        let (full, common) = inputs(tape, i, s, sh);
        let (y, yh) = match rolled {
            Some(pair) => pair,
            None => {
                let y = nodes.value.as_ref().expect("value network").apply(tape, full);
                let yh = nodes.value_hat.as_ref().expect("value network").apply(tape, common);
                (tape.scale(y, norm.y_scale), tape.scale(yh, norm.y_scale))
            }
        };
        let tg = exo.alpha_tg[i];
        let mut c_hat = Vec::with_capacity(b);
        let mut inv_k = Vec::with_capacity(b);
        let mut c_ind = Vec::with_capacity(b);
        let mut slope = Vec::with_capacity(b);
        for j in 0..b {
            let act = exo.active[i][j];
            c_hat.push(projected_constant(&p, tg, exo.qhat[i][j], exo.qhat_st[i][j], act));
            inv_k.push(-1.0 / p.k_theta(act));
            let (c0, s1) = individual_terms(&p, tg, exo.q[i][j], exo.qhat[i][j], exo.qhat_st[i][j], act);
            c_ind.push(c0);
            slope.push(s1);
        }
        let ah = tape.add_const(yh, col(c_hat));
        let ah = tape.mul_const(ah, col(inv_k));
        let pull = tape.mul_const(ah, col(slope));
        let num = tape.add(y, pull);
        let num = tape.add_const(num, col(c_ind));
        let a = tape.scale(num, -1.0 / ak);
        let mut inc = tape.scale(s, -p.c * dt);
        let mut inc_hat = tape.scale(sh, -p.c * dt);
        if !alg.is_regression() {
            let comp: Vec<f64> = (0..b).map(|j| exo.dn[i][j] as f64 - exo.lambda0[i][j] * dt).collect();
            let comp = col(comp);
            let dw = col(exo.dw[i].clone());
            let dw0 = col(exo.dw0[i].clone());
            let z = nodes.z.as_ref().expect("Z network").apply(tape, full);
            let z = tape.scale(z, norm.y_scale);
            let zh = nodes.z_hat.as_ref().expect("Z network").apply(tape, common);
            let zh = tape.scale(zh, norm.y_scale);
            let parts = [(0, dw.clone()), (1, dw0.clone()), (2, comp.clone())];
            for (k, noise) in parts {
                let c = tape.column(z, k);
                let term = tape.mul_const(c, noise);
                inc = tape.add(inc, term);
            }
            for (k, noise) in [(0, dw0), (1, comp)] {
                let c = tape.column(zh, k);
                let term = tape.mul_const(c, noise);
                inc_hat = tape.add(inc_hat, term);
            }
        }
        let da = tape.scale(a, dt);
        let dah = tape.scale(ah, dt);
        s = tape.add(s, da);
        sh = tape.add(sh, dah);
        if let Some((ry, ryh)) = rolled {
            rolled = Some((tape.add(ry, inc), tape.add(ryh, inc_hat)));
        }
        values.push(y);
        values_hat.push(yh);
        incs.push(inc);
        incs_hat.push(inc_hat);
    }
    let g = tape.scale(s, p.h2);
    let g = tape.offset(g, p.h1);
    let gh = tape.scale(sh, p.h2);
    let gh = tape.offset(gh, p.h1);
    let l1 = scheme_loss(tape, alg, rolled.map(|r| r.0), &values, &incs, g);
    let l2 = scheme_loss(tape, alg, rolled.map(|r| r.1), &values_hat, &incs_hat, gh);
    let loss = tape.add(l1, l2);
    Ok((loss, nodes.all()))
}

/// Loss value and gradients in [`PolicyBundle::networks`] order.
pub fn mfg_loss_and_gradients(
    policy: &PolicyBundle,
    params: &MfgParams,
    exo: &ExogenousPaths,
) -> Result<(f64, Vec<MlpParams>)> {
    let mut tape = Tape::new();
    let (loss, nodes) = record_mfg_loss(&mut tape, policy, params, exo)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "MFG loss".into() });
    }
    let grads = tape.backprop(loss)?;
    Ok((value, nodes.iter().map(|n| n.gradients(&grads)).collect()))
}

/// Budgets of the MFG experiments: `m = 20`, one hidden layer, 10000 iterations, `B = 64`,
/// rate 0.01 for Global and 0.007 otherwise.
pub fn mfg_solver_config(algorithm: Algorithm, steps: usize) -> SolverConfig {
    SolverConfig {
        algorithm,
        steps,
        batch: 64,
        compensator_samples: 1,
        n_train: 10_000,
        lr: LrSchedule::constant(if algorithm == Algorithm::Global { 0.01 } else { 0.007 }),
        seed: 0,
        epoch_stride: 100,
        width: 20,
        layers: 2,
    }
}

/// Trains `Y` and `Ŷ` on the grid of `config.steps` steps (which replaces `params.steps`).
pub fn solve_mfg(params: &MfgParams, config: &SolverConfig) -> Result<(PolicyBundle, TrainingReport)> {
    solve_mfg_with(params, config, Normalization::default())
}

pub fn solve_mfg_with(
    params: &MfgParams,
    config: &SolverConfig,
    normalization: Normalization,
) -> Result<(PolicyBundle, TrainingReport)> {
    config.validate()?;
    let params = MfgParams { steps: config.steps, ..params.clone() };
    params.validate()?;
    let header = format!("{}\n{}\nnormalization={:?}", params.summary(), config.describe(), normalization);
    let config_hash = content_hash(&header);
    let mut policy = PolicyBundle::new(config.algorithm, params.regime, config.width, config.layers, config.seed)?;
    policy.normalization = normalization;
    let mut adam = AdamState::for_networks(&policy.networks());
    let layout = NoiseLayout::independent(config.batch);
    let start = Instant::now();
    let first = simulate_exogenous(&params, layout, config.seed, 0)?;
    let (initial_loss, _) = mfg_loss_and_gradients(&policy, &params, &first)?;
    let initial =
        EpochRecord { epoch: 0, iteration: 0, y0: policy.initial_values(&params)?.0, loss: initial_loss, seconds: 0.0 };
    let mut epochs = Vec::with_capacity(config.n_train / config.epoch_stride);
    let mut divergence = None;
    let mut cached = Some(first);
    for it in 0..config.n_train {
        let exo = match cached.take() {
            Some(e) => e,
            None => simulate_exogenous(&params, layout, config.seed, it as u64)?,
        };
        let step = mfg_loss_and_gradients(&policy, &params, &exo).and_then(|(loss, grads)| {
            adam.step_networks(&mut policy.networks_mut(), &grads, config.lr.rate(it))?;
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
                y0: policy.initial_values(&params)?.0,
                loss,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    let final_y0 = policy.initial_values(&params)?.0;
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
    Ok((policy, report))
}
