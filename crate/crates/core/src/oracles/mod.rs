//! Analytic and semi-analytic reference values.

mod riccati;
mod vg;

use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::models::{CouplingRef, MarketParams, ModelKind};

pub use riccati::{riccati_phi, riccati_phi_closed_form, riccati_phi_rk4};
pub use vg::{vg_call, vg_call_grid, vg_reference, PriceGrid, VgFftConfig, VgReference};

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes call value and delta.
pub fn bs_call_and_delta(t: f64, s: f64, r: f64, sigma: f64, k: f64, horizon: f64) -> (f64, f64) {
    let tau = horizon - t;
    if tau <= 0.0 {
        return ((s - k).max(0.0), if s > k { 1.0 } else { 0.0 });
    }
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if k == 0.0 {
        return (s, 1.0);
    }
    let disc_k = k * (-r * tau).exp();
    if sigma == 0.0 {
        return ((s - disc_k).max(0.0), if s > disc_k { 1.0 } else { 0.0 });
    }
    let sd = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    let d2 = d1 - sd;
    let n1 = norm_cdf(d1);
    (s * n1 - disc_k * norm_cdf(d2), n1)
}

pub fn bs_call(t: f64, s: f64, r: f64, sigma: f64, k: f64, horizon: f64) -> f64 {
    bs_call_and_delta(t, s, r, sigma, k, horizon).0
}

/// Merton call value and delta as a Poisson mixture of Black-Scholes prices.
#[allow(clippy::too_many_arguments)]
pub fn merton_call_and_delta(
    t: f64,
    s: f64,
    r: f64,
    sigma: f64,
    lambda: f64,
    alpha: f64,
    xi: f64,
    k: f64,
    horizon: f64,
) -> Result<(f64, f64)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("jump intensity must be finite and nonnegative"));
    }
    let tau = horizon - t;
    if tau <= 0.0 || lambda == 0.0 {
        return Ok(bs_call_and_delta(t, s, r, sigma, k, horizon));
    }
    let kbar = (alpha + 0.5 * xi * xi).exp() - 1.0;
    let lp = lambda * (1.0 + kbar) * tau;
    let n_max = (lambda * horizon).ceil() as usize + 40;
    let mut weight = (-lp).exp();
    let mut price = 0.0;
    let mut delta = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            weight *= lp / n as f64;
        }
        let nf = n as f64;
        let sig_n = (sigma * sigma + nf * xi * xi / tau).sqrt();
        let r_n = r - lambda * kbar + nf * (1.0 + kbar).ln() / tau;
        let (p, d) = bs_call_and_delta(t, s, r_n, sig_n, k, horizon);
        price += weight * p;
        delta += weight * d;
    }
    Ok((price, delta))
}

#[allow(clippy::too_many_arguments)]
pub fn merton_call(
    t: f64,
    s: f64,
    r: f64,
    sigma: f64,
    lambda: f64,
    alpha: f64,
    xi: f64,
    k: f64,
    horizon: f64,
) -> Result<f64> {
    Ok(merton_call_and_delta(t, s, r, sigma, lambda, alpha, xi, k, horizon)?.0)
}

/// Decoupled price `ū(t, s)` for the given model, as used by the coupled drift.
pub fn coupling_reference(kind: ModelKind, params: &MarketParams) -> Result<CouplingRef> {
    let p = *params;
    match kind {
        ModelKind::BlackScholes => {
            Ok(CouplingRef::new(move |t, s| bs_call_and_delta(t, s, p.r, p.sigma, p.strike, p.horizon)))
        }
        ModelKind::Merton => {
            merton_call(0.0, p.s0, p.r, p.sigma, p.lambda, p.alpha, p.xi, p.strike, p.horizon)?;
            Ok(CouplingRef::new(move |t, s| {
                merton_call_and_delta(t, s, p.r, p.sigma, p.lambda, p.alpha, p.xi, p.strike, p.horizon)
                    .expect("validated merton parameters")
            }))
        }
        ModelKind::VarianceGamma => {
            let reference = vg_reference(params, p.steps, VgFftConfig::default())?;
            Ok(CouplingRef::new(move |t, s| reference.value_and_delta(t, s)))
        }
    }
}

/// Decoupled price at `(0, S0)`.
pub fn reference_price(kind: ModelKind, params: &MarketParams) -> Result<f64> {
    let p = params;
    match kind {
        ModelKind::BlackScholes => Ok(bs_call(0.0, p.s0, p.r, p.sigma, p.strike, p.horizon)),
        ModelKind::Merton => merton_call(0.0, p.s0, p.r, p.sigma, p.lambda, p.alpha, p.xi, p.strike, p.horizon),
        ModelKind::VarianceGamma => vg_call(0.0, p.s0, params, VgFftConfig::default()),
    }
}
