use crate::error::{Error, Result};
use crate::kernels::{cox_counts, gaussian_increments, Purpose, RngStream};

use super::params::{dsm_active, intensity_lambda0, mean_qhat, mean_reverting_mean, MfgParams};

/// The nine state components at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfgState {
    pub q: f64,
    pub qhat: f64,
    pub q_st: f64,
    pub qhat_st: f64,
    pub r: f64,
    pub s_alpha: f64,
    pub s_alpha_hat: f64,
    pub y: f64,
    pub y_hat: f64,
}

impl MfgState {
    pub fn initial(params: &MfgParams) -> Self {
        Self {
            q: params.q0(),
            qhat: params.q0(),
            q_st: params.q0_st(),
            qhat_st: params.q0_st(),
            r: params.r0(),
            s_alpha: params.s0,
            s_alpha_hat: params.s0,
            y: 0.0,
            y_hat: 0.0,
        }
    }
}

/// Deterministic means of `Q̂` and `Q̂ˢᵗ` on the solver grid.
///
/// Consumptions are stepped as deviations from these means, so that the simulated mean of `Q̂`
/// equals the mean ODE solution at every grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPaths {
    pub q: Vec<f64>,
    pub q_st: Vec<f64>,
    pub alpha_tg: Vec<f64>,
}

impl MeanPaths {
    pub fn new(params: &MfgParams) -> Self {
        let q = mean_qhat(params);
        let q_st = mean_reverting_mean(params.mu_st, params.chi_st(), params.q0_st(), params.horizon, params.steps, 32);
        let alpha_tg = q.iter().map(|m| params.beta_tg * m).collect();
        Self { q, q_st, alpha_tg }
    }

    fn step_q(&self, params: &MfgParams, i: usize, x: f64) -> f64 {
        x + self.q[i + 1] - self.q[i] - params.mu * (x - self.q[i]) * params.dt()
    }

    fn step_q_st(&self, params: &MfgParams, i: usize, x: f64) -> f64 {
        x + self.q_st[i + 1] - self.q_st[i] - params.mu_st * (x - self.q_st[i]) * params.dt()
    }
}

/// Brownian increments and Cox count of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepShocks {
    pub dw: f64,
    pub dw0: f64,
    pub dw_st: f64,
    pub dn: u32,
}

/// Result of [`mfg_forward_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: MfgState,
    pub alpha: f64,
    pub alpha_hat: f64,
    pub lambda0: f64,
    pub active: bool,
}

/// One Euler step of all nine components; consumptions move as deviations from `means`.
///
/// The DSM indicator is read after the reset of `R`, so that an activation is visible on the
/// step where the jump lands. `Y` and `Ŷ` advance with the supplied integrands
/// `(Z, Z⁰, U)` and `(Ẑ⁰, Û)`.
pub fn mfg_forward_step(
    params: &MfgParams,
    i: usize,
    means: &MeanPaths,
    state: &MfgState,
    shocks: &StepShocks,
    y_integrands: [f64; 3],
    y_hat_integrands: [f64; 2],
) -> Result<StepOutcome> {
    if i >= params.steps || means.q.len() != params.steps + 1 {
        return Err(crate::error::invalid("step index or mean paths do not match the grid"));
    }
    let dt = params.dt();
    let alpha_tg = means.alpha_tg[i];
    let lambda0 = intensity_lambda0(state.qhat, params.gamma);
    let r_reset = if shocks.dn >= 1 { 0.0 } else { state.r };
    let active = dsm_active(r_reset, params.theta);
    let alpha_hat = super::params::feedback_p(params, alpha_tg, state.qhat, state.qhat_st, state.y_hat, active);
    let alpha = super::params::equilibrium_alpha(
        params,
        alpha_tg,
        state.q,
        state.qhat,
        state.qhat_st,
        state.y,
        alpha_hat,
        active,
    );
    let compensated = shocks.dn as f64 - lambda0 * dt;
    let next = MfgState {
        q: means.step_q(params, i, state.q) + params.sigma * shocks.dw + params.sigma0 * shocks.dw0,
        qhat: means.step_q(params, i, state.qhat) + params.sigma0 * shocks.dw0,
        q_st: means.step_q_st(params, i, state.q_st) + params.sigma_st * shocks.dw_st + params.sigma_st0 * shocks.dw0,
        qhat_st: means.step_q_st(params, i, state.qhat_st) + params.sigma_st0 * shocks.dw0,
        r: r_reset + dt,
        s_alpha: state.s_alpha + alpha * dt,
        s_alpha_hat: state.s_alpha_hat + alpha_hat * dt,
        y: state.y - params.c * state.s_alpha * dt
            + y_integrands[0] * shocks.dw
            + y_integrands[1] * shocks.dw0
            + y_integrands[2] * compensated,
        y_hat: state.y_hat - params.c * state.s_alpha_hat * dt
            + y_hat_integrands[0] * shocks.dw0
            + y_hat_integrands[1] * compensated,
    };
    let finite = [next.q, next.qhat, next.q_st, next.qhat_st, next.s_alpha, next.s_alpha_hat, next.y, next.y_hat]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite { context: format!("MFG state at step {i}") });
    }
    Ok(StepOutcome { next, alpha, alpha_hat, lambda0, active })
}

/// Which common-noise path each simulated path follows: path `j` uses common path `j % common_paths`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseLayout {
    pub paths: usize,
    pub common_paths: usize,
}

impl NoiseLayout {
    pub fn independent(paths: usize) -> Self {
        Self { paths, common_paths: paths }
    }

    pub fn common_of(&self, j: usize) -> usize {
        j % self.common_paths
    }
}

/// State components that do not depend on the controls, plus all shocks, for a batch of paths.
///
/// Index `[i][j]` is time `t_i` and path `j`; per-step quantities have `M` rows, states `M + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPaths {
    pub layout: NoiseLayout,
    pub q: Vec<Vec<f64>>,
    pub qhat: Vec<Vec<f64>>,
    pub q_st: Vec<Vec<f64>>,
    pub qhat_st: Vec<Vec<f64>>,
    /// `R` at `t_i` before any reset.
    pub r: Vec<Vec<f64>>,
    pub lambda0: Vec<Vec<f64>>,
    pub dn: Vec<Vec<u32>>,
    /// DSM indicator read after the reset; the last row uses `R_M`.
    pub active: Vec<Vec<bool>>,
    pub dw: Vec<Vec<f64>>,
    pub dw0: Vec<Vec<f64>>,
    pub alpha_tg: Vec<f64>,
}

impl ExogenousPaths {
    pub fn steps(&self) -> usize {
        self.dw.len()
    }

    pub fn paths(&self) -> usize {
        self.layout.paths
    }
}

/// Simulates the control-free components for stream index `index`.
pub fn simulate_exogenous(params: &MfgParams, layout: NoiseLayout, seed: u64, index: u64) -> Result<ExogenousPaths> {
    params.validate()?;
    if layout.paths == 0 || layout.common_paths == 0 {
        return Err(crate::error::invalid("noise layout needs at least one path"));
    }
    let m = params.steps;
    let n = layout.paths;
    let g = layout.common_paths;
    let dt = params.dt();
    let means = MeanPaths::new(params);
    let mut q = vec![vec![params.q0(); n]];
    let mut qhat_c = vec![vec![params.q0(); g]];
    let mut q_st = vec![vec![params.q0_st(); n]];
    let mut qhat_st_c = vec![vec![params.q0_st(); g]];
    let mut r_c = vec![vec![params.r0(); g]];
    let mut lambda_c = Vec::with_capacity(m);
    let mut dn_c = Vec::with_capacity(m);
    let mut active_c = Vec::with_capacity(m + 1);
    let mut dw = Vec::with_capacity(m);
    let mut dw0_c = Vec::with_capacity(m);
    for i in 0..m {
        let step = i as u64;
        let w = gaussian_increments(&RngStream::new(seed, index, step, Purpose::IdiosyncraticBrownian), n, 1, dt)?
            .into_vec();
        let w_st =
            gaussian_increments(&RngStream::new(seed, index, step, Purpose::StandardBrownian), n, 1, dt)?.into_vec();
        let w0 = gaussian_increments(&RngStream::new(seed, index, step, Purpose::CommonBrownian), g, 1, dt)?.into_vec();
        let lam: Vec<f64> = qhat_c[i].iter().map(|&x| intensity_lambda0(x, params.gamma)).collect();
        let counts = cox_counts(&RngStream::new(seed, index, step, Purpose::CommonCount), &lam, dt)?;
        let mut act = Vec::with_capacity(g);
        let mut r_next = Vec::with_capacity(g);
        for c in 0..g {
            let reset = if counts[c] >= 1 { 0.0 } else { r_c[i][c] };
            act.push(dsm_active(reset, params.theta));
            r_next.push(reset + dt);
        }
        let qh: Vec<f64> = (0..g).map(|c| means.step_q(params, i, qhat_c[i][c]) + params.sigma0 * w0[c]).collect();
        let qhs: Vec<f64> =
            (0..g).map(|c| means.step_q_st(params, i, qhat_st_c[i][c]) + params.sigma_st0 * w0[c]).collect();
        let qn: Vec<f64> = (0..n)
            .map(|j| {
                let c = layout.common_of(j);
                means.step_q(params, i, q[i][j]) + params.sigma * w[j] + params.sigma0 * w0[c]
            })
            .collect();
        let qsn: Vec<f64> = (0..n)
            .map(|j| {
                let c = layout.common_of(j);
                means.step_q_st(params, i, q_st[i][j]) + params.sigma_st * w_st[j] + params.sigma_st0 * w0[c]
            })
            .collect();
        q.push(qn);
        q_st.push(qsn);
        qhat_c.push(qh);
        qhat_st_c.push(qhs);
        r_c.push(r_next);
        lambda_c.push(lam);
        dn_c.push(counts);
        active_c.push(act);
        dw.push(w);
        dw0_c.push(w0);
    }
    active_c.push(r_c[m].iter().map(|&r| dsm_active(r, params.theta)).collect());
    let spread = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        rows.into_iter().map(|row| (0..n).map(|j| row[layout.common_of(j)]).collect()).collect()
    };
    let dn = dn_c.into_iter().map(|row| (0..n).map(|j| row[layout.common_of(j)]).collect()).collect();
    let active = active_c.into_iter().map(|row| (0..n).map(|j| row[layout.common_of(j)]).collect()).collect();
    Ok(ExogenousPaths {
        layout,
        q,
        qhat: spread(qhat_c),
        q_st,
        qhat_st: spread(qhat_st_c),
        r: spread(r_c),
        lambda0: spread(lambda_c),
        dn,
        active,
        dw,
        dw0: spread(dw0_c),
        alpha_tg: means.alpha_tg,
    })
}
