use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::models::{vg_omega, MarketParams};

/// Dampened-transform FFT settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VgFftConfig {
    pub n: usize,
    /// Frequency step of the Simpson quadrature.
    pub eta: f64,
    pub damping: f64,
}

impl Default for VgFftConfig {
    fn default() -> Self {
        Self { n: 1 << 12, eta: 0.25, damping: 0.75 }
    }
}

impl VgFftConfig {
    /// Twice as many nodes at the same frequency step.
    pub fn refined(self) -> Self {
        Self { n: self.n * 2, ..self }
    }

    /// Log-strike spacing `2π/(nη)`.
    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n as f64 * self.eta)
    }
}

/// Call prices for unit spot on a uniform log-strike grid `k_u = k_start + u·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    pub tau: f64,
    pub k_start: f64,
    pub spacing: f64,
    pub prices: Vec<f64>,
}

impl PriceGrid {
    pub fn log_strike(&self, u: usize) -> f64 {
        self.k_start + self.spacing * u as f64
    }

    /// Linear interpolation of the unit-spot price `c(k)` and its slope in `k`.
    pub fn interpolate(&self, k: f64) -> (f64, f64) {
        let n = self.prices.len();
        let pos = (k - self.k_start) / self.spacing;
        if pos <= 0.0 {
            return (self.prices[0], 0.0);
        }
        if pos >= (n - 1) as f64 {
            return (self.prices[n - 1], 0.0);
        }
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        let slope = (self.prices[i + 1] - self.prices[i]) / self.spacing;
        (self.prices[i] + w * (self.prices[i + 1] - self.prices[i]), slope)
    }

    /// `C(s, K) = s·c(ln(K/s))` and `∂C/∂s = c − c′`; the payoff itself at maturity.
    pub fn price_and_delta(&self, s: f64, strike: f64) -> (f64, f64) {
        if s <= 0.0 {
            return (0.0, 0.0);
        }
        if self.tau <= 0.0 {
            return if s > strike { (s - strike, 1.0) } else { (0.0, 0.0) };
        }
        let (c, dc) = self.interpolate((strike / s).ln());
        (s * c, c - dc)
    }
}

fn vg_char(u: Complex64, tau: f64, drift: f64, theta: f64, sigma_bar: f64, kappa: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let base = Complex64::new(1.0, 0.0) - i * u * theta * kappa + 0.5 * sigma_bar * sigma_bar * kappa * u * u;
    (i * u * drift * tau - (tau / kappa) * base.ln()).exp()
}

/// Unit-spot call grid at time to maturity `tau`, centred so that `k_center` is a node.
pub fn vg_call_grid(tau: f64, params: &MarketParams, k_center: f64, config: VgFftConfig) -> Result<PriceGrid> {
    let omega = vg_omega(params.theta, params.sigma_bar, params.kappa)?;
    let n = config.n;
    if n < 4 || !n.is_power_of_two() {
        return Err(invalid("fft size must be a power of two"));
    }
    let k_start = k_center - config.spacing() * (n / 2) as f64;
    if tau <= 0.0 {
        let prices = (0..n).map(|u| (1.0 - (k_start + config.spacing() * u as f64).exp()).max(0.0)).collect();
        return Ok(PriceGrid { tau: 0.0, k_start, spacing: config.spacing(), prices });
    }
    let a = config.damping;
    let moment = 1.0
        - (a + 1.0) * params.theta * params.kappa
        - 0.5 * params.sigma_bar * params.sigma_bar * params.kappa * (a + 1.0) * (a + 1.0);
    if !(moment > 0.0) {
        return Err(invalid("damping too large for the variance gamma moment condition"));
    }
    let eta = config.eta;
    let drift = params.r + omega;
    let disc = (-params.r * tau).exp();
    let i = Complex64::new(0.0, 1.0);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let v = eta * j as f64;
            let u = Complex64::new(v, -(a + 1.0));
            let phi = vg_char(u, tau, drift, params.theta, params.sigma_bar, params.kappa);
            let denom = Complex64::new(a * a + a - v * v, (2.0 * a + 1.0) * v);
            let psi = disc * phi / denom;
            let w = if j == 0 {
                1.0 / 3.0
            } else if j % 2 == 1 {
                4.0 / 3.0
            } else {
                2.0 / 3.0
            };
            (-i * v * k_start).exp() * psi * eta * w
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let prices = buf
        .iter()
        .enumerate()
        .map(|(u, z)| {
            let k = k_start + config.spacing() * u as f64;
            ((-a * k).exp() / std::f64::consts::PI * z.re).max(0.0)
        })
        .collect();
    Ok(PriceGrid { tau, k_start, spacing: config.spacing(), prices })
}

/// Variance Gamma call price at `(t, s)` by FFT inversion.
pub fn vg_call(t: f64, s: f64, params: &MarketParams, config: VgFftConfig) -> Result<f64> {
    if !(s > 0.0) {
        return Err(invalid("spot must be positive"));
    }
    let k = (params.strike / s).ln();
    let grid = vg_call_grid(params.horizon - t, params, k, config)?;
    Ok(s * grid.prices[config.n / 2])
}

/// Grids cached on every node `t_i` of a uniform time grid.
#[derive(Debug, Clone)]
pub struct VgReference {
    pub strike: f64,
    pub horizon: f64,
    pub grids: Arc<Vec<PriceGrid>>,
}

impl VgReference {
    /// Uses the grid of the nearest time node.
    pub fn value_and_delta(&self, t: f64, s: f64) -> (f64, f64) {
        let m = self.grids.len() - 1;
        let idx = ((t / self.horizon) * m as f64).round().clamp(0.0, m as f64) as usize;
        self.grids[idx].price_and_delta(s, self.strike)
    }
}

pub fn vg_reference(params: &MarketParams, steps: usize, config: VgFftConfig) -> Result<VgReference> {
    let k = (params.strike / params.s0).ln();
    let grids = (0..=steps)
        .map(|i| {
            let t = params.horizon * i as f64 / steps as f64;
            vg_call_grid(params.horizon - t, params, k, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VgReference { strike: params.strike, horizon: params.horizon, grids: Arc::new(grids) })
}
