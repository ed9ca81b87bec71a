use crate::error::{invalid, Result};
use crate::nn::{Matrix, MlpParams};
use crate::solvers::Algorithm;

use super::dynamics::{simulate_exogenous, ExogenousPaths, MfgState, NoiseLayout};
use super::params::{equilibrium_alpha, feedback_p, price_of_anarchy, MfgParams};
use super::solver::{PolicyBundle, COMMON_INPUTS, FULL_INPUTS};

/// Stream indices at or above this value are reserved for evaluation.
pub const EVALUATION_INDEX: u64 = 1 << 40;

/// Paths simulated under a trained policy. Rows are times `t_0..t_M`, columns paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub exogenous: ExogenousPaths,
    pub alpha: Vec<Vec<f64>>,
    pub alpha_hat: Vec<Vec<f64>>,
    pub s_alpha: Vec<Vec<f64>>,
    pub s_alpha_hat: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub y_hat: Vec<Vec<f64>>,
}

fn state_at(exo: &ExogenousPaths, i: usize, j: usize, s: f64, sh: f64, y: f64, yh: f64) -> MfgState {
    MfgState {
        q: exo.q[i][j],
        qhat: exo.qhat[i][j],
        q_st: exo.q_st[i][j],
        qhat_st: exo.qhat_st[i][j],
        r: exo.r[i][j],
        s_alpha: s,
        s_alpha_hat: sh,
        y,
        y_hat: yh,
    }
}

fn eval_net(net: &MlpParams, rows: Vec<f64>, n: usize, k: usize, scale: f64) -> Result<Matrix> {
    let mut out = net.forward_batch(&Matrix::from_vec(n, k, rows))?;
    out.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Runs the policy on given exogenous paths. `Y_M` and `Ŷ_M` are the terminal conditions.
pub fn rollout_on(policy: &PolicyBundle, params: &MfgParams, exo: ExogenousPaths) -> Result<Rollout> {
    let p = MfgParams { regime: policy.regime, steps: exo.steps(), ..params.clone() };
    let n = exo.paths();
    let m = exo.steps();
    let dt = p.dt();
    let norm = policy.normalization;
    let ys = norm.y_scale;
    let mut s = vec![p.s0; n];
    let mut sh = vec![p.s0; n];
    let mut out_a = Vec::with_capacity(m + 1);
    let mut out_ah = Vec::with_capacity(m + 1);
    let mut out_s = Vec::with_capacity(m + 1);
    let mut out_sh = Vec::with_capacity(m + 1);
    let mut out_y = Vec::with_capacity(m + 1);
    let mut out_yh = Vec::with_capacity(m + 1);
    let inputs = |i: usize, s: &[f64], sh: &[f64]| {
        let mut full = Vec::with_capacity(n * FULL_INPUTS);
        let mut common = Vec::with_capacity(n * COMMON_INPUTS);
        for j in 0..n {
            let st = state_at(&exo, i, j, s[j], sh[j], 0.0, 0.0);
            full.extend_from_slice(&norm.full(p.horizon, p.time(i), &st));
            common.extend_from_slice(&norm.common(p.horizon, p.time(i), &st));
        }
        (full, common)
    };
    let global = policy.algorithm == Algorithm::Global;
    let mut rolled: Option<(Vec<f64>, Vec<f64>)> = None;
    if global {
        let (full, common) = inputs(0, &s, &sh);
        let y0 = policy.y0.as_ref().ok_or_else(|| invalid("global policy lacks Y0"))?;
        let y0h = policy.y0_hat.as_ref().ok_or_else(|| invalid("global policy lacks Y0 hat"))?;
        rolled = Some((
            eval_net(y0, full, n, FULL_INPUTS, ys)?.into_vec(),
            eval_net(y0h, common, n, COMMON_INPUTS, ys)?.into_vec(),
        ));
    }
    for i in 0..=m {
        let (y, yh) = if i == m {
            (s.iter().map(|&v| p.h1 + p.h2 * v).collect(), sh.iter().map(|&v| p.h1 + p.h2 * v).collect())
        } else if let Some(r) = &rolled {
            r.clone()
        } else {
            let (full, common) = inputs(i, &s, &sh);
            let v = policy.value.as_ref().ok_or_else(|| invalid("policy lacks a value network"))?;
            let vh = policy.value_hat.as_ref().ok_or_else(|| invalid("policy lacks a value network"))?;
            (eval_net(v, full, n, FULL_INPUTS, ys)?.into_vec(), eval_net(vh, common, n, COMMON_INPUTS, ys)?.into_vec())
        };
        let tg = exo.alpha_tg[i];
        let mut a = Vec::with_capacity(n);
        let mut ah = Vec::with_capacity(n);
        for j in 0..n {
            let act = exo.active[i][j];
            let h = feedback_p(&p, tg, exo.qhat[i][j], exo.qhat_st[i][j], yh[j], act);
            ah.push(h);
            a.push(equilibrium_alpha(&p, tg, exo.q[i][j], exo.qhat[i][j], exo.qhat_st[i][j], y[j], h, act));
        }
        if global && i < m {
            let (full, common) = inputs(i, &s, &sh);
            let z =
                eval_net(policy.z.as_ref().ok_or_else(|| invalid("global policy lacks Z"))?, full, n, FULL_INPUTS, ys)?;
            let zh = eval_net(
                policy.z_hat.as_ref().ok_or_else(|| invalid("global policy lacks Z hat"))?,
                common,
                n,
                COMMON_INPUTS,
                ys,
            )?;
            let mut ny = y.clone();
            let mut nyh = yh.clone();
            for j in 0..n {
                let comp = exo.dn[i][j] as f64 - exo.lambda0[i][j] * dt;
                ny[j] +=
                    -p.c * s[j] * dt + z.get(j, 0) * exo.dw[i][j] + z.get(j, 1) * exo.dw0[i][j] + z.get(j, 2) * comp;
                nyh[j] += -p.c * sh[j] * dt + zh.get(j, 0) * exo.dw0[i][j] + zh.get(j, 1) * comp;
            }
            rolled = Some((ny, nyh));
        }
        out_s.push(s.clone());
        out_sh.push(sh.clone());
        for j in 0..n {
            s[j] += a[j] * dt;
            sh[j] += ah[j] * dt;
        }
        out_a.push(a);
        out_ah.push(ah);
        out_y.push(y);
        out_yh.push(yh);
    }
    Ok(Rollout {
        exogenous: exo,
        alpha: out_a,
        alpha_hat: out_ah,
        s_alpha: out_s,
        s_alpha_hat: out_sh,
        y: out_y,
        y_hat: out_yh,
    })
}

/// Simulates fresh exogenous paths from stream index `index` and runs the policy on them.
pub fn rollout(
    policy: &PolicyBundle,
    params: &MfgParams,
    layout: NoiseLayout,
    seed: u64,
    index: u64,
) -> Result<Rollout> {
    let exo = simulate_exogenous(params, layout, seed, index)?;
    rollout_on(policy, params, exo)
}

/// Running cost `g + l + c + d` at `(i, j)` under the original pricing and divergence rules.
pub fn running_cost(params: &MfgParams, r: &Rollout, i: usize, j: usize) -> f64 {
    let e = &r.exogenous;
    let a = r.alpha[i][j];
    let ah = r.alpha_hat[i][j];
    let s = r.s_alpha[i][j];
    let consumption = e.q[i][j] + a;
    let tg = e.alpha_tg[i];
    let inconvenience = 0.5 * params.a * a * a + 0.5 * params.c * s * s;
    let charge = 0.5 * params.k_charge * consumption * consumption;
    let power = consumption * params.price(e.qhat_st[i][j], e.qhat[i][j] + ah);
    let divergence =
        if e.active[i][j] { (consumption - tg) * (params.f0 + params.f1 * (e.qhat[i][j] + ah - tg)) } else { 0.0 };
    inconvenience + charge + power + divergence
}

/// Per-path cost: trapezoidal running cost plus `h(S_T)`.
pub fn path_costs(params: &MfgParams, r: &Rollout) -> Vec<f64> {
    let m = r.exogenous.steps();
    let dt = params.horizon / m as f64;
    (0..r.exogenous.paths())
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..m {
                acc += 0.5 * (running_cost(params, r, i, j) + running_cost(params, r, i + 1, j)) * dt;
            }
            let s = r.s_alpha[m][j];
            acc + params.h0 + params.h1 * s + 0.5 * params.h2 * s * s
        })
        .collect()
}

/// Monte Carlo cost estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: Vec<f64>,
}

impl CostEstimate {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var =
            if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { value: mean, std_error: (var / n).sqrt(), samples }
    }
}

/// Cost of `policy` over `n_mc` populations, simulated in chunks from evaluation stream indices.
/// Costs use the original coefficients of `params`; the feedback follows the policy's regime.
pub fn evaluate_cost(policy: &PolicyBundle, params: &MfgParams, n_mc: usize, seed: u64) -> Result<CostEstimate> {
    if n_mc == 0 {
        return Err(invalid("n_mc must be positive"));
    }
    const CHUNK: usize = 2048;
    let mut samples = Vec::with_capacity(n_mc);
    let mut chunk = 0u64;
    while samples.len() < n_mc {
        let paths = CHUNK.min(n_mc - samples.len());
        let r = rollout(policy, params, NoiseLayout::independent(paths), seed, EVALUATION_INDEX + chunk)?;
        samples.extend(path_costs(params, &r));
        chunk += 1;
    }
    Ok(CostEstimate::from_samples(samples))
}

/// Price of Anarchy with a delta-method standard error from paired samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoaEstimate {
    pub value: f64,
    pub std_error: f64,
}

pub fn price_of_anarchy_paired(mfg: &CostEstimate, mfc: &CostEstimate) -> Result<PoaEstimate> {
    let value = price_of_anarchy(mfg.value, mfc.value)?;
    if mfg.samples.len() != mfc.samples.len() || mfg.samples.is_empty() {
        return Err(invalid("paired Price of Anarchy needs equally many samples"));
    }
    let n = mfg.samples.len() as f64;
    let resid: Vec<f64> = mfg.samples.iter().zip(&mfc.samples).map(|(a, b)| a - value * b).collect();
    let mean = resid.iter().sum::<f64>() / n;
    let var = resid.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(PoaEstimate { value, std_error: (var / n).sqrt() / mfc.value })
}

/// One row of the trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub path: usize,
    pub step: usize,
    pub t: f64,
    pub q: f64,
    pub qhat: f64,
    pub qhat_st: f64,
    pub alpha: f64,
    pub alpha_hat: f64,
    pub consumption: f64,
    pub mean_consumption: f64,
    pub price: f64,
    pub lambda0: f64,
    pub active: bool,
}

/// Rows for the trajectory plots; `λ⁰` at `t_M` is evaluated from `Q̂_M`.
pub fn trajectory_rows(params: &MfgParams, r: &Rollout) -> Vec<TrajectoryRow> {
    let e = &r.exogenous;
    let m = e.steps();
    let dt = params.horizon / m as f64;
    let mut rows = Vec::with_capacity((m + 1) * e.paths());
    for j in 0..e.paths() {
        for i in 0..=m {
            let own = e.qhat[i][j] + r.alpha_hat[i][j];
            rows.push(TrajectoryRow {
                path: j,
                step: i,
                t: i as f64 * dt,
                q: e.q[i][j],
                qhat: e.qhat[i][j],
                qhat_st: e.qhat_st[i][j],
                alpha: r.alpha[i][j],
                alpha_hat: r.alpha_hat[i][j],
                consumption: e.q[i][j] + r.alpha[i][j],
                mean_consumption: own,
                price: params.price(e.qhat_st[i][j], own),
                lambda0: if i < m {
                    e.lambda0[i][j]
                } else {
                    super::params::intensity_lambda0(e.qhat[i][j], params.gamma)
                },
                active: e.active[i][j],
            });
        }
    }
    rows
}
