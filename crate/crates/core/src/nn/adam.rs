use super::mlp::MlpParams;
use crate::error::{invalid, Error, Result};

/// Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_networks(nets: &[&MlpParams]) -> Self {
        Self::new(nets.iter().map(|n| n.param_count()).sum())
    }

    /// One update of several networks treated as a single parameter vector.
    pub fn step_networks(&mut self, nets: &mut [&mut MlpParams], grads: &[MlpParams], lr: f64) -> Result<()> {
        if nets.len() != grads.len() {
            return Err(Error::Dimension { expected: nets.len(), got: grads.len() });
        }
        let mut flat: Vec<f64> = Vec::with_capacity(self.first_moment.len());
        let mut gflat: Vec<f64> = Vec::with_capacity(self.first_moment.len());
        for (n, g) in nets.iter().zip(grads) {
            flat.extend(n.to_flat());
            gflat.extend(g.to_flat());
        }
        adam_step(&mut flat, &gflat, self, lr)?;
        let mut k = 0;
        for n in nets.iter_mut() {
            let c = n.param_count();
            n.set_flat(&flat[k..k + c])?;
            k += c;
        }
        Ok(())
    }
}

/// Adam update in place, bias correction folded into the step size. Rejects non-finite gradients without touching the state.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Dimension { expected: state.first_moment.len(), got: grads.len() });
    }
    if !(lr > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { context: format!("gradient component {k}") });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let step = lr * (1.0 - state.beta2.powi(t)).sqrt() / (1.0 - state.beta1.powi(t));
    for i in 0..params.len() {
        let g = grads[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        params[i] -= step * m / (v.sqrt() + state.eps);
    }
    Ok(())
}
