use crate::error::{invalid, Result};

fn check(a: f64, c: f64, h2: f64) -> Result<()> {
    if !(a > 0.0) || !(c > 0.0) || !(h2 >= 0.0) {
        return Err(invalid("riccati requires A + K > 0, C > 0, h2 >= 0"));
    }
    Ok(())
}

/// Closed form of `dφ/dt = −C + φ²/(A+K)`, `φ_T = h₂`.
pub fn riccati_phi_closed_form(t: f64, a: f64, c: f64, k: f64, h2: f64, horizon: f64) -> Result<f64> {
    let ak = a + k;
    check(ak, c, h2)?;
    let star = (c * ak).sqrt();
    let th = (star / ak * (horizon - t)).tanh();
    Ok(star * (h2 + star * th) / (star + h2 * th))
}

/// Classical RK4 integration backward from `T` with step at most `dt`.
pub fn riccati_phi_rk4(t: f64, a: f64, c: f64, k: f64, h2: f64, horizon: f64, dt: f64) -> Result<f64> {
    let ak = a + k;
    check(ak, c, h2)?;
    if !(dt > 0.0) || t > horizon {
        return Err(invalid("riccati integration needs dt > 0 and t <= T"));
    }
    let rhs = |phi: f64| c - phi * phi / ak;
    let span = horizon - t;
    let n = (span / dt).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut phi = h2;
    for _ in 0..n {
        let k1 = rhs(phi);
        let k2 = rhs(phi + 0.5 * h * k1);
        let k3 = rhs(phi + 0.5 * h * k2);
        let k4 = rhs(phi + h * k3);
        phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !phi.is_finite() {
            return Err(invalid("riccati solution blew up"));
        }
    }
    Ok(phi)
}

/// `φ_t` by RK4 with `Δt = 1e-4`.
pub fn riccati_phi(t: f64, a: f64, c: f64, k: f64, h2: f64, horizon: f64) -> Result<f64> {
    riccati_phi_rk4(t, a, c, k, h2, horizon, 1e-4)
}
