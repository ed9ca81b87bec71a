//! Pricing FBSDEs with jumps in decoupled and coupled form, and their Euler step.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Which pricing model a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    BlackScholes,
    Merton,
    VarianceGamma,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BlackScholes => "bs",
            ModelKind::Merton => "merton",
            ModelKind::VarianceGamma => "vg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bs" | "black-scholes" | "blackscholes" => Some(ModelKind::BlackScholes),
            "merton" | "mj" => Some(ModelKind::Merton),
            "vg" | "variance-gamma" => Some(ModelKind::VarianceGamma),
            _ => None,
        }
    }

    /// Default number of time steps for this model.
    pub fn default_steps(self) -> usize {
        match self {
            ModelKind::BlackScholes | ModelKind::Merton => 50,
            ModelKind::VarianceGamma => 30,
        }
    }
}

/// Market and model constants shared by the three pricing models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub r: f64,
    pub sigma: f64,
    pub strike: f64,
    pub s0: f64,
    pub coupling: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub xi: f64,
    pub theta: f64,
    pub sigma_bar: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            r: 0.1,
            sigma: 0.3,
            strike: 0.9,
            s0: 1.0,
            coupling: 0.1,
            lambda: 3.0,
            alpha: 0.0,
            xi: 0.2,
            theta: -0.1,
            sigma_bar: 0.2,
            kappa: 0.1,
            horizon: 1.0,
            steps: 50,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) || !(self.strike > 0.0) {
            return Err(invalid("spot and strike must be positive"));
        }
        if self.steps < 1 {
            return Err(invalid("at least one time step is required"));
        }
        if !(self.coupling >= 0.0) {
            return Err(invalid("coupling coefficient must be nonnegative"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        if !(self.sigma >= 0.0) || !(self.lambda >= 0.0) || !(self.xi >= 0.0) {
            return Err(invalid("volatilities and intensities must be nonnegative"));
        }
        Ok(())
    }

    /// `λ(e^{α+ξ²/2} − 1)`.
    pub fn merton_compensator(&self) -> f64 {
        self.lambda * ((self.alpha + 0.5 * self.xi * self.xi).exp() - 1.0)
    }

    /// `κ⁻¹ ln(1 − σ̄²κ/2 − θκ)`.
    pub fn vg_omega(&self) -> Result<f64> {
        vg_omega(self.theta, self.sigma_bar, self.kappa)
    }
}

pub fn vg_omega(theta: f64, sigma_bar: f64, kappa: f64) -> Result<f64> {
    let arg = 1.0 - 0.5 * sigma_bar * sigma_bar * kappa - theta * kappa;
    if !(arg > 0.0) || !(kappa > 0.0) {
        return Err(invalid(format!("variance gamma log argument {arg} must be positive")));
    }
    Ok(arg.ln() / kappa)
}

/// `ū(t, s)` together with `∂ū/∂s`.
#[derive(Clone)]
pub struct CouplingRef(Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>);

impl CouplingRef {
    pub fn new(f: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn value(&self, t: f64, s: f64) -> f64 {
        (self.0)(t, s).0
    }

    pub fn value_and_delta(&self, t: f64, s: f64) -> (f64, f64) {
        (self.0)(t, s)
    }
}

impl fmt::Debug for CouplingRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CouplingRef(..)")
    }
}

/// Jump law of the forward process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpKernel {
    None,
    CompoundPoisson { lambda: f64, alpha: f64, xi: f64 },
    VarianceGamma { theta: f64, sigma_bar: f64, kappa: f64 },
}

/// One FBSDE instance of the exponential-model family
///
/// * `b̄(t,x,y) = μ x + a|y − ū(t,x)|` with `μ = r − ∫(e^e − 1)ν(de)`
/// * `σ(t,x) = σ x`, `β(t,x,e) = x(e^e − 1)`
/// * `f(t,x,y) = −r y`, `g(x) = (x − K)⁺`.
#[derive(Debug, Clone)]
pub struct FbsdeSpec {
    pub kind: ModelKind,
    pub rate: f64,
    pub sigma: f64,
    pub strike: f64,
    pub x0: f64,
    pub horizon: f64,
    pub coupling: f64,
    pub reference: Option<CouplingRef>,
    pub kernel: JumpKernel,
    /// `∫(e^e − 1)ν(de)`.
    pub jump_compensation: f64,
}

impl FbsdeSpec {
    pub fn dim_x(&self) -> usize {
        1
    }

    pub fn dim_y(&self) -> usize {
        1
    }

    pub fn is_coupled(&self) -> bool {
        self.coupling > 0.0
    }

    /// Linear drift coefficient `μ` in `b̄`.
    pub fn drift_rate(&self) -> f64 {
        self.rate - self.jump_compensation
    }

    pub fn drift_bbar(&self, t: f64, x: f64, y: f64) -> f64 {
        let mut b = self.drift_rate() * x;
        if self.coupling > 0.0 {
            let u = self.reference.as_ref().map_or(0.0, |r| r.value(t, x));
            b += self.coupling * (y - u).abs();
        }
        b
    }

    pub fn diffusion(&self, _t: f64, x: f64) -> f64 {
        self.sigma * x
    }

    pub fn jump_coeff(&self, _t: f64, x: f64, e: f64) -> f64 {
        match self.kernel {
            JumpKernel::None => 0.0,
            _ => x * e.exp_m1(),
        }
    }

    pub fn driver(&self, _t: f64, _x: f64, y: f64) -> f64 {
        -self.rate * y
    }

    pub fn terminal(&self, x: f64) -> f64 {
        (x - self.strike).max(0.0)
    }

    pub fn has_jumps(&self) -> bool {
        !matches!(self.kernel, JumpKernel::None)
    }

    /// Whether the driver reads `Z` or `U`; never the case for this family.
    pub fn driver_depends_on_z_or_u(&self) -> bool {
        false
    }
}

fn check_reference(coupled: bool, params: &MarketParams, reference: &Option<CouplingRef>) -> Result<()> {
    if coupled && params.coupling > 0.0 && reference.is_none() {
        return Err(invalid("a coupled spec needs the decoupled reference price"));
    }
    Ok(())
}

fn coupling_of(coupled: bool, params: &MarketParams) -> f64 {
    if coupled {
        params.coupling
    } else {
        0.0
    }
}

pub fn make_bs_spec(params: &MarketParams, coupled: bool, reference: Option<CouplingRef>) -> Result<FbsdeSpec> {
    params.validate()?;
    check_reference(coupled, params, &reference)?;
    Ok(FbsdeSpec {
        kind: ModelKind::BlackScholes,
        rate: params.r,
        sigma: params.sigma,
        strike: params.strike,
        x0: params.s0,
        horizon: params.horizon,
        coupling: coupling_of(coupled, params),
        reference,
        kernel: JumpKernel::None,
        jump_compensation: 0.0,
    })
}

pub fn make_merton_spec(params: &MarketParams, coupled: bool, reference: Option<CouplingRef>) -> Result<FbsdeSpec> {
    params.validate()?;
    check_reference(coupled, params, &reference)?;
    Ok(FbsdeSpec {
        kind: ModelKind::Merton,
        rate: params.r,
        sigma: params.sigma,
        strike: params.strike,
        x0: params.s0,
        horizon: params.horizon,
        coupling: coupling_of(coupled, params),
        reference,
        kernel: JumpKernel::CompoundPoisson { lambda: params.lambda, alpha: params.alpha, xi: params.xi },
        jump_compensation: params.merton_compensator(),
    })
}

pub fn make_vg_spec(params: &MarketParams, coupled: bool, reference: Option<CouplingRef>) -> Result<FbsdeSpec> {
    params.validate()?;
    let omega = params.vg_omega()?;
    if !(params.sigma_bar > 0.0) {
        return Err(invalid("variance gamma volatility must be positive"));
    }
    check_reference(coupled, params, &reference)?;
    Ok(FbsdeSpec {
        kind: ModelKind::VarianceGamma,
        rate: params.r,
        sigma: 0.0,
        strike: params.strike,
        x0: params.s0,
        horizon: params.horizon,
        coupling: coupling_of(coupled, params),
        reference,
        kernel: JumpKernel::VarianceGamma { theta: params.theta, sigma_bar: params.sigma_bar, kappa: params.kappa },
        jump_compensation: -omega,
    })
}

pub fn make_spec(
    kind: ModelKind,
    params: &MarketParams,
    coupled: bool,
    reference: Option<CouplingRef>,
) -> Result<FbsdeSpec> {
    match kind {
        ModelKind::BlackScholes => make_bs_spec(params, coupled, reference),
        ModelKind::Merton => make_merton_spec(params, coupled, reference),
        ModelKind::VarianceGamma => make_vg_spec(params, coupled, reference),
    }
}

/// `X_{i+1} = X_i + b̄Δt + σΔW + Σ_l β(t_i, X_i, ΔJ_l)`; `marks` holds the jumps of the step
/// (one subordinated increment for Variance Gamma).
pub fn euler_forward_step(spec: &FbsdeSpec, t: f64, dt: f64, x: f64, y: f64, dw: f64, marks: &[f64]) -> Result<f64> {
    let jump: f64 = marks.iter().map(|&e| spec.jump_coeff(t, x, e)).sum();
    let next = x + spec.drift_bbar(t, x, y) * dt + spec.diffusion(t, x) * dw + jump;
    if !next.is_finite() {
        return Err(Error::NonFinite { context: format!("forward state at t={t}") });
    }
    Ok(next)
}
