use std::sync::Arc;

use super::noise::{IterationNoise, StepNoise};
use super::Algorithm;
use crate::error::{invalid, Result};
use crate::models::FbsdeSpec;
use crate::nn::{Matrix, MlpNodes, NodeId, RowMap, Tape};

/// Anything that maps an `n x k` node to an `n x 1` node on a tape.
pub trait TapeFunction {
    fn apply(&self, tape: &mut Tape, input: NodeId) -> NodeId;
}

impl TapeFunction for MlpNodes {
    fn apply(&self, tape: &mut Tape, input: NodeId) -> NodeId {
        MlpNodes::apply(self, tape, input)
    }
}

/// Closed-form function of one input row with its gradient.
#[derive(Clone)]
pub struct AnalyticFunction(pub RowMap);

impl AnalyticFunction {
    pub fn new(f: impl Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl TapeFunction for AnalyticFunction {
    fn apply(&self, tape: &mut Tape, input: NodeId) -> NodeId {
        tape.row_fn(input, self.0.clone())
    }
}

/// Functions entering a loss: `y0(x)`, `value(t, x)`, `z(t, x)`, `jump(t, x, y)`.
#[derive(Default, Clone, Copy)]
pub struct LossNets<'a> {
    pub y0: Option<&'a dyn TapeFunction>,
    pub value: Option<&'a dyn TapeFunction>,
    pub z: Option<&'a dyn TapeFunction>,
    pub jump: Option<&'a dyn TapeFunction>,
}

fn need<'a>(f: Option<&'a dyn TapeFunction>, what: &str) -> Result<&'a dyn TapeFunction> {
    f.ok_or_else(|| invalid(format!("loss requires the {what} function")))
}

struct Ctx<'a> {
    spec: &'a FbsdeSpec,
    batch: usize,
    dt: f64,
}

impl Ctx<'_> {
    fn time_col(&self, tape: &mut Tape, rows: usize, t: f64) -> NodeId {
        tape.constant(rows, 1, t)
    }

    fn terminal(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let shifted = tape.offset(x, -self.spec.strike);
        tape.max_const(shifted, 0.0)
    }

    fn forward(&self, tape: &mut Tape, t: f64, x: NodeId, y: NodeId, noise: &StepNoise) -> NodeId {
        let mu = self.spec.drift_rate();
        let coef: Vec<f64> = (0..self.batch)
            .map(|j| 1.0 + mu * self.dt + self.spec.sigma * noise.dw.as_slice()[j] + noise.jump_factor.as_slice()[j])
            .collect();
        let mut next = tape.mul_const(x, Arc::new(Matrix::column(coef)));
        if self.spec.coupling > 0.0 {
            let reference = self.spec.reference.clone().expect("coupled spec carries its reference");
            let u_bar = tape.map(x, Arc::new(move |s| reference.value_and_delta(t, s)));
            let gap = tape.sub(y, u_bar);
            let gap = tape.abs(gap);
            let push = tape.scale(gap, self.spec.coupling * self.dt);
            next = tape.add(next, push);
        }
        next
    }

    /// `W(t, x, Σβ) − Θ_W(t, x)`.
    fn jump_term_w(
        &self,
        tape: &mut Tape,
        w: &dyn TapeFunction,
        t: f64,
        x: NodeId,
        noise: &StepNoise,
    ) -> Result<NodeId> {
        let draw = noise.compensator.as_ref().ok_or_else(|| invalid("compensator samples missing from the noise"))?;
        let b = self.batch;
        let tcol = self.time_col(tape, b, t);
        let xjf = tape.mul_const(x, noise.jump_factor.clone());
        let inp = tape.concat(&[tcol, x, xjf]);
        let realized = w.apply(tape, inp);
        let a = draw.total as f64;
        let mut comp: Option<NodeId> = None;
        if draw.zero > 0 {
            let zeros = tape.constant(b, 1, 0.0);
            let inp0 = tape.concat(&[tcol, x, zeros]);
            let w0 = w.apply(tape, inp0);
            comp = Some(tape.scale(w0, draw.zero as f64 / a));
        }
        let n = draw.nonzero();
        if n > 0 {
            let xr = tape.repeat_rows(x, n);
            let tr = self.time_col(tape, b * n, t);
            let tiled: Vec<f64> = (0..b).flat_map(|_| draw.factors.iter().copied()).collect();
            let yk = tape.mul_const(xr, Arc::new(Matrix::column(tiled)));
            let inp = tape.concat(&[tr, xr, yk]);
            let wk = w.apply(tape, inp);
            let s = tape.group_sum(wk, n);
            let s = tape.scale(s, 1.0 / a);
            comp = Some(match comp {
                Some(c) => tape.add(c, s),
                None => s,
            });
        }
        Ok(match comp {
            Some(c) => tape.sub(realized, c),
            None => realized,
        })
    }

    /// `[U(t, x + Σβ) − U(t, x)] − (1/A) Σ_k [U(t, x + Σβ_k) − U(t, x)]`.
    fn jump_term_u(
        &self,
        tape: &mut Tape,
        u: &dyn TapeFunction,
        t: f64,
        x: NodeId,
        u_now: NodeId,
        noise: &StepNoise,
    ) -> Result<NodeId> {
        let draw = noise.compensator.as_ref().ok_or_else(|| invalid("compensator samples missing from the noise"))?;
        let b = self.batch;
        let tcol = self.time_col(tape, b, t);
        let shift: Vec<f64> = noise.jump_factor.as_slice().iter().map(|f| 1.0 + f).collect();
        let xs = tape.mul_const(x, Arc::new(Matrix::column(shift)));
        let inp = tape.concat(&[tcol, xs]);
        let shifted = u.apply(tape, inp);
        let realized = tape.sub(shifted, u_now);
        let n = draw.nonzero();
        if n == 0 {
            return Ok(realized);
        }
        let a = draw.total as f64;
        let xr = tape.repeat_rows(x, n);
        let tr = self.time_col(tape, b * n, t);
        let tiled: Vec<f64> = (0..b).flat_map(|_| draw.factors.iter().map(|f| 1.0 + f)).collect();
        let xk = tape.mul_const(xr, Arc::new(Matrix::column(tiled)));
        let inp = tape.concat(&[tr, xk]);
        let uk = u.apply(tape, inp);
        let s = tape.group_sum(uk, n);
        let s = tape.scale(s, 1.0 / a);
        let base = tape.scale(u_now, n as f64 / a);
        let comp = tape.sub(s, base);
        Ok(tape.sub(realized, comp))
    }
}

/// Records the loss of `algorithm` for one batch of noise and returns its node.
pub fn build_loss(
    tape: &mut Tape,
    spec: &FbsdeSpec,
    algorithm: Algorithm,
    nets: &LossNets<'_>,
    noise: &IterationNoise,
) -> Result<NodeId> {
    let steps = noise.steps.len();
    if steps == 0 {
        return Err(invalid("at least one time step is required"));
    }
    if algorithm.is_regression() && spec.driver_depends_on_z_or_u() {
        return Err(invalid("regression schemes need a driver independent of Z and U"));
    }
    let batch = noise.steps[0].dw.rows();
    let ctx = Ctx { spec, batch, dt: spec.horizon / steps as f64 };
    let dt = ctx.dt;
    let mut x = tape.constant(batch, 1, spec.x0);
    let mut y = if algorithm == Algorithm::Global {
        let inp = tape.constant(batch, 1, spec.x0);
        Some(need(nets.y0, "initial value")?.apply(tape, inp))
    } else {
        None
    };
    let mut values = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    for (i, noise_i) in noise.steps.iter().enumerate() {
        let t = i as f64 * dt;
        let tcol = ctx.time_col(tape, batch, t);
        let inp = tape.concat(&[tcol, x]);
        let u_i = match y {
            Some(yv) => yv,
            None => need(nets.value, "value")?.apply(tape, inp),
        };
        let mut incr = tape.scale(u_i, spec.rate * dt);
        if !algorithm.is_regression() {
            let z = need(nets.z, "Z")?.apply(tape, inp);
            let zdw = tape.mul_const(z, noise_i.dw.clone());
            incr = tape.add(incr, zdw);
            if spec.has_jumps() {
                let term = if algorithm.is_variant_one() {
                    ctx.jump_term_u(tape, need(nets.value, "value")?, t, x, u_i, noise_i)?
                } else {
                    ctx.jump_term_w(tape, need(nets.jump, "jump")?, t, x, noise_i)?
                };
                incr = tape.add(incr, term);
            }
        }
        let x_next = ctx.forward(tape, t, x, u_i, noise_i);
        if let Some(yv) = y {
            y = Some(tape.add(yv, incr));
        }
        values.push(u_i);
        increments.push(incr);
        x = x_next;
    }
    let g = ctx.terminal(tape, x);
    let loss = match algorithm {
        Algorithm::Global => {
            let d = tape.sub(y.expect("global rolls Y"), g);
            let sq = tape.square(d);
            tape.mean(sq)
        }
        Algorithm::SumLocal1 | Algorithm::SumLocal2 | Algorithm::SumLocalReg => {
            let mut total: Option<NodeId> = None;
            for i in 0..steps {
                let next = if i + 1 < steps { values[i + 1] } else { g };
                let d = tape.sub(next, values[i]);
                let d = tape.sub(d, increments[i]);
                let sq = tape.square(d);
                let m = tape.mean(sq);
                total = Some(match total {
                    Some(acc) => tape.add(acc, m),
                    None => m,
                });
            }
            total.expect("nonempty")
        }
        Algorithm::SumMultiStep1 | Algorithm::SumMultiStep2 | Algorithm::SumMultiStepReg => {
            let mut total: Option<NodeId> = None;
            let mut suffix: Option<NodeId> = None;
            for k in (0..steps).rev() {
                let s = match suffix {
                    Some(acc) => tape.add(increments[k], acc),
                    None => increments[k],
                };
                suffix = Some(s);
                let psi = tape.add(values[k], s);
                let d = tape.sub(psi, g);
                let sq = tape.square(d);
                let m = tape.mean(sq);
                total = Some(match total {
                    Some(acc) => tape.add(acc, m),
                    None => m,
                });
            }
            total.expect("nonempty")
        }
    };
    Ok(loss)
}
