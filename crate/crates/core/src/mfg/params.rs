use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};

/// Deterministic consumption profile `χ(t)`, time in days.
#[derive(Clone)]
pub enum Seasonality {
    Constant(f64),
    /// `base + amplitude·sin²(2π(t − shift))`: two peaks per day.
    TwoPeak {
        base: f64,
        amplitude: f64,
        shift: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Seasonality {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Seasonality::Constant(c) => *c,
            Seasonality::TwoPeak { base, amplitude, shift } => {
                let s = (2.0 * PI * (t - shift)).sin();
                base + amplitude * s * s
            }
            Seasonality::Custom(f) => f(t),
        }
    }
}

impl Default for Seasonality {
    /// Peaks at 8:00 and 20:00.
    fn default() -> Self {
        Seasonality::TwoPeak { base: 0.3, amplitude: 0.15, shift: 2.0 / 24.0 }
    }
}

impl fmt::Debug for Seasonality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Seasonality::Constant(c) => write!(f, "Constant({c})"),
            Seasonality::TwoPeak { base, amplitude, shift } => {
                write!(f, "TwoPeak(base={base}, amplitude={amplitude}, shift={shift})")
            }
            Seasonality::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Whose problem the feedback maps solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Regime {
    /// Nash equilibrium of the mean-field game.
    #[default]
    Equilibrium,
    /// Aggregator optimum, obtained through doubled own-population price and divergence slopes.
    Planner,
}

/// Constants of the linear-quadratic smart-grid model. Time is measured in days.
#[derive(Debug, Clone)]
pub struct MfgParams {
    pub a: f64,
    pub c: f64,
    pub k_charge: f64,
    pub mu: f64,
    pub sigma: f64,
    pub sigma0: f64,
    pub mu_st: f64,
    pub sigma_st: f64,
    pub sigma_st0: f64,
    pub p0: f64,
    pub p1: f64,
    pub f0: f64,
    pub f1: f64,
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    /// DSM activation duration.
    pub theta: f64,
    /// Proportion of standard consumers.
    pub pi: f64,
    pub gamma: f64,
    pub beta_tg: f64,
    pub chi: Seasonality,
    /// `None`: same profile as `chi`.
    pub chi_st: Option<Seasonality>,
    pub horizon: f64,
    pub steps: usize,
    pub s0: f64,
    /// `None`: `χ(0)`.
    pub q0: Option<f64>,
    pub q0_st: Option<f64>,
    pub regime: Regime,
}

impl Default for MfgParams {
    fn default() -> Self {
        Self {
            a: 150.0,
            c: 80.0,
            k_charge: 50.0,
            mu: 5.0,
            sigma: 0.3,
            sigma0: 0.1,
            mu_st: 5.0,
            sigma_st: 0.0,
            sigma_st0: 0.1,
            p0: 6.16,
            p1: 87.43,
            f0: 0.0,
            f1: 10000.0,
            h0: 0.0,
            h1: 0.0,
            h2: 600.0,
            theta: 0.12 / 24.0,
            pi: 0.0,
            gamma: 30.0,
            beta_tg: 0.8,
            chi: Seasonality::default(),
            chi_st: None,
            horizon: 2.0,
            steps: 96,
            s0: 0.0,
            q0: None,
            q0_st: None,
            regime: Regime::Equilibrium,
        }
    }
}

/// Slopes entering the feedback maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackSlopes {
    /// Coefficient of the own-population consumption inside the price.
    pub own_price: f64,
    /// Coefficient of the standard consumption inside the price.
    pub standard_price: f64,
    pub divergence: f64,
}

impl MfgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.c >= 0.0) || !(self.k_charge >= 0.0) {
            return Err(invalid("MFG requires A > 0, C >= 0, K >= 0"));
        }
        if !(self.p1 >= 0.0) || !(self.f1 >= 0.0) || !(self.h2 >= 0.0) {
            return Err(invalid("MFG requires p1 >= 0, f1 >= 0, h2 >= 0"));
        }
        if !(self.theta > 0.0) || !(0.0..=1.0).contains(&self.pi) {
            return Err(invalid("MFG requires theta > 0 and pi in [0, 1]"));
        }
        if self.steps < 1 || !(self.horizon > 0.0) {
            return Err(invalid("MFG requires at least one step and T > 0"));
        }
        if self.sigma < 0.0 || self.sigma0 < 0.0 || self.sigma_st < 0.0 || self.sigma_st0 < 0.0 {
            return Err(invalid("volatilities must be nonnegative"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn chi_st(&self) -> &Seasonality {
        self.chi_st.as_ref().unwrap_or(&self.chi)
    }

    pub fn q0(&self) -> f64 {
        self.q0.unwrap_or_else(|| self.chi.eval(0.0))
    }

    pub fn q0_st(&self) -> f64 {
        self.q0_st.unwrap_or_else(|| self.chi_st().eval(0.0))
    }

    pub fn r0(&self) -> f64 {
        2.0 * self.theta
    }

    pub fn slopes(&self) -> FeedbackSlopes {
        let m = match self.regime {
            Regime::Equilibrium => 1.0,
            Regime::Planner => 2.0,
        };
        FeedbackSlopes {
            own_price: m * (1.0 - self.pi) * self.p1,
            standard_price: self.pi * self.p1,
            divergence: m * self.f1,
        }
    }

    /// `K^θ = A + K + own price slope + divergence slope·J`.
    pub fn k_theta(&self, active: bool) -> f64 {
        let s = self.slopes();
        self.a + self.k_charge + s.own_price + if active { s.divergence } else { 0.0 }
    }

    /// Spot price under the original pricing rule.
    pub fn price(&self, qhat_st: f64, own: f64) -> f64 {
        self.p0 + self.p1 * (self.pi * qhat_st + (1.0 - self.pi) * own)
    }

    pub fn summary(&self) -> String {
        format!(
            "a={}\nc={}\nk_charge={}\nmu={}\nsigma={}\nsigma0={}\nmu_st={}\nsigma_st={}\nsigma_st0={}\np0={}\np1={}\nf0={}\nf1={}\nh0={}\nh1={}\nh2={}\ntheta={}\npi={}\ngamma={}\nbeta_tg={}\nchi={:?}\nchi_st={:?}\nhorizon={}\nsteps={}\ns0={}\nq0={}\nq0_st={}\nregime={:?}",
            self.a,
            self.c,
            self.k_charge,
            self.mu,
            self.sigma,
            self.sigma0,
            self.mu_st,
            self.sigma_st,
            self.sigma_st0,
            self.p0,
            self.p1,
            self.f0,
            self.f1,
            self.h0,
            self.h1,
            self.h2,
            self.theta,
            self.pi,
            self.gamma,
            self.beta_tg,
            self.chi,
            self.chi_st(),
            self.horizon,
            self.steps,
            self.s0,
            self.q0(),
            self.q0_st(),
            self.regime
        )
    }
}

/// The aggregator problem as an equilibrium problem with transformed slopes. Costs keep the original values.
pub fn mfc_transform(params: &MfgParams) -> MfgParams {
    MfgParams { regime: Regime::Planner, ..params.clone() }
}

/// `λ⁰ = e^{−γ/2}(e^{γQ̂} − 1)`, floored at 0.
pub fn intensity_lambda0(qhat: f64, gamma: f64) -> f64 {
    ((-0.5 * gamma).exp() * (gamma * qhat).exp_m1()).max(0.0)
}

/// `1{R ≤ θ}`.
pub fn dsm_active(r: f64, theta: f64) -> bool {
    r <= theta
}

/// `m_t` for `dm = μ(χ_t − m)dt`, `m_0 = q₀` on the grid `t_i = iT/M`, by RK4 with `substeps` per interval.
pub fn mean_reverting_mean(
    mu: f64,
    chi: &Seasonality,
    q0: f64,
    horizon: f64,
    steps: usize,
    substeps: usize,
) -> Vec<f64> {
    let h = horizon / (steps * substeps.max(1)) as f64;
    let rhs = |t: f64, m: f64| mu * (chi.eval(t) - m);
    let mut out = Vec::with_capacity(steps + 1);
    let mut m = q0;
    let mut t = 0.0;
    out.push(m);
    for _ in 0..steps {
        for _ in 0..substeps.max(1) {
            let k1 = rhs(t, m);
            let k2 = rhs(t + 0.5 * h, m + 0.5 * h * k1);
            let k3 = rhs(t + 0.5 * h, m + 0.5 * h * k2);
            let k4 = rhs(t + h, m + h * k3);
            m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        out.push(m);
    }
    out
}

/// `E[Q̂_t]` on the solver grid.
pub fn mean_qhat(params: &MfgParams) -> Vec<f64> {
    mean_reverting_mean(params.mu, &params.chi, params.q0(), params.horizon, params.steps, 32)
}

/// `α^tg_t = β_tg E[Q̂_t]` on the solver grid.
pub fn target_alpha_tg(params: &MfgParams) -> Vec<f64> {
    mean_qhat(params).into_iter().map(|m| params.beta_tg * m).collect()
}

/// Projected control `α̂ = P(t, Q̂, Q̂ˢᵗ, Ŷ, R)` with `active = 1{R ≤ θ}`.
pub fn feedback_p(params: &MfgParams, alpha_tg: f64, qhat: f64, qhat_st: f64, yhat: f64, active: bool) -> f64 {
    -(projected_constant(params, alpha_tg, qhat, qhat_st, active) + yhat) / params.k_theta(active)
}

/// Numerator of `−α̂ K^θ` without `Ŷ`.
pub(crate) fn projected_constant(params: &MfgParams, alpha_tg: f64, qhat: f64, qhat_st: f64, active: bool) -> f64 {
    let s = params.slopes();
    let j = if active { params.f0 + s.divergence * (qhat - alpha_tg) } else { 0.0 };
    params.p0 + s.standard_price * qhat_st + (s.own_price + params.k_charge) * qhat + j
}

/// Individual control from the coupling condition:
/// `α = −(KQ + p₀ + πp₁Q̂ˢᵗ + (1−π)p₁(Q̂+α̂) + Y + J(f₀ + f₁(Q̂+α̂−α^tg)))/(A+K)`,
/// with the slopes of [`MfgParams::slopes`].
#[allow(clippy::too_many_arguments)]
pub fn equilibrium_alpha(
    params: &MfgParams,
    alpha_tg: f64,
    q: f64,
    qhat: f64,
    qhat_st: f64,
    y: f64,
    alpha_hat: f64,
    active: bool,
) -> f64 {
    let (constant, slope) = individual_terms(params, alpha_tg, q, qhat, qhat_st, active);
    -(constant + slope * alpha_hat + y) / (params.a + params.k_charge)
}

/// `(constant, α̂ coefficient)` of the individual feedback numerator.
pub(crate) fn individual_terms(
    params: &MfgParams,
    alpha_tg: f64,
    q: f64,
    qhat: f64,
    qhat_st: f64,
    active: bool,
) -> (f64, f64) {
    let s = params.slopes();
    let (j, js) = if active { (params.f0 + s.divergence * (qhat - alpha_tg), s.divergence) } else { (0.0, 0.0) };
    let constant = params.k_charge * q + params.p0 + s.standard_price * qhat_st + s.own_price * qhat + j;
    (constant, s.own_price + js)
}

/// `V^{MFG}/V^{MFC}`.
pub fn price_of_anarchy(v_mfg: f64, v_mfc: f64) -> Result<f64> {
    if !(v_mfc > 0.0) {
        return Err(invalid("price of anarchy needs a positive planner cost"));
    }
    Ok(v_mfg / v_mfc)
}
