use jumpfbsde::models::{
    euler_forward_step, make_bs_spec, make_merton_spec, make_spec, make_vg_spec, vg_omega, CouplingRef, FbsdeSpec,
    JumpKernel, MarketParams, ModelKind,
};
use jumpfbsde::oracles::coupling_reference;
use jumpfbsde::solvers::simulate_paths;
use proptest::prelude::*;

fn decoupled(kind: ModelKind, params: &MarketParams) -> FbsdeSpec {
    make_spec(kind, params, false, None).unwrap()
}

#[test]
fn merton_compensator_constant() {
    let p = MarketParams::default();
    assert!((p.merton_compensator() - 3.0 * (0.02f64.exp() - 1.0)).abs() < 1e-15);
    assert!((p.merton_compensator() - 0.060604).abs() < 1e-6);
    let spec = make_merton_spec(&p, false, None).unwrap();
    assert_eq!(spec.jump_compensation, p.merton_compensator());
    assert!((spec.drift_rate() - (0.1 - 0.060604)).abs() < 1e-6);
}

#[test]
fn vg_martingale_correction() {
    let omega = vg_omega(-0.1, 0.2, 0.1).unwrap();
    assert!((omega - 10.0 * 1.008f64.ln()).abs() < 1e-14);
    assert!((omega - 0.0796817).abs() < 1e-7);
    let spec = make_vg_spec(&MarketParams::default(), false, None).unwrap();
    assert_eq!(spec.sigma, 0.0);
    assert!((spec.drift_rate() - (0.1 + omega)).abs() < 1e-15);
    assert!(matches!(spec.kernel, JumpKernel::VarianceGamma { .. }));
}

#[test]
fn validation_errors() {
    let base = MarketParams::default();
    for bad in [
        MarketParams { s0: 0.0, ..base },
        MarketParams { strike: -1.0, ..base },
        MarketParams { steps: 0, ..base },
        MarketParams { coupling: -0.1, ..base },
        MarketParams { horizon: 0.0, ..base },
        MarketParams { lambda: -1.0, ..base },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
        assert!(make_bs_spec(&bad, false, None).is_err());
    }
    for kind in [ModelKind::BlackScholes, ModelKind::Merton, ModelKind::VarianceGamma] {
        assert!(make_spec(kind, &base, true, None).is_err(), "{kind:?} coupled without reference");
    }
    assert!(make_vg_spec(&MarketParams { kappa: 10.0, theta: 0.1, ..base }, false, None).is_err());
    assert!(make_vg_spec(&MarketParams { sigma_bar: 0.0, ..base }, false, None).is_err());
}

#[test]
fn coefficient_shapes() {
    let p = MarketParams::default();
    let bs = decoupled(ModelKind::BlackScholes, &p);
    assert_eq!((bs.dim_x(), bs.dim_y()), (1, 1));
    assert!(!bs.has_jumps());
    assert_eq!(bs.jump_coeff(0.0, 2.0, 0.7), 0.0);
    assert_eq!(bs.diffusion(0.0, 2.0), 0.6);
    assert_eq!(bs.driver(0.0, 1.0, 0.5), -0.05);
    assert_eq!(bs.terminal(1.5), 0.6);
    assert_eq!(bs.terminal(0.5), 0.0);
    let m = decoupled(ModelKind::Merton, &p);
    assert!((m.jump_coeff(0.0, 2.0, 0.1) - 2.0 * 0.1f64.exp_m1()).abs() < 1e-15);
    assert!(!m.driver_depends_on_z_or_u());
}

#[test]
fn coupled_drift_uses_reference() {
    let p = MarketParams::default();
    let reference = CouplingRef::new(|_, s| (0.5 * s, 0.5));
    let spec = make_bs_spec(&p, true, Some(reference)).unwrap();
    assert!(spec.is_coupled());
    let b = spec.drift_bbar(0.3, 2.0, 0.2);
    assert!((b - (0.1 * 2.0 + 0.1 * (0.2f64 - 1.0).abs())).abs() < 1e-15);
}

#[test]
fn euler_step_without_coefficients_is_identity() {
    let p = MarketParams { r: 0.0, sigma: 0.0, ..MarketParams::default() };
    let spec = decoupled(ModelKind::BlackScholes, &p);
    assert_eq!(euler_forward_step(&spec, 0.0, 0.1, 1.3, 0.2, 0.7, &[]).unwrap(), 1.3);
}

#[test]
fn euler_step_pure_drift_with_coupling() {
    let p = MarketParams::default();
    let reference = coupling_reference(ModelKind::BlackScholes, &p).unwrap();
    let spec = make_bs_spec(&p, true, Some(reference.clone())).unwrap();
    let (dt, y) = (0.02, 0.4);
    let u = reference.value(0.0, p.s0);
    let x1 = euler_forward_step(&spec, 0.0, dt, p.s0, y, 0.0, &[]).unwrap();
    assert!((x1 - (p.s0 * (1.0 + p.r * dt) + p.coupling * (y - u).abs() * dt)).abs() < 1e-15);
}

#[test]
fn merton_step_with_empty_batch_matches_bs_step() {
    let p = MarketParams::default();
    let m = decoupled(ModelKind::Merton, &p);
    let bs_shifted = decoupled(ModelKind::BlackScholes, &MarketParams { r: p.r - p.merton_compensator(), ..p });
    let a = euler_forward_step(&m, 0.0, 0.02, 1.1, 0.0, 0.05, &[]).unwrap();
    let b = euler_forward_step(&bs_shifted, 0.0, 0.02, 1.1, 0.0, 0.05, &[]).unwrap();
    assert!((a - b).abs() < 1e-15);
    let m0 = decoupled(ModelKind::Merton, &MarketParams { lambda: 0.0, ..p });
    let bs = decoupled(ModelKind::BlackScholes, &p);
    assert_eq!(
        euler_forward_step(&m0, 0.0, 0.02, 1.1, 0.0, 0.05, &[]).unwrap(),
        euler_forward_step(&bs, 0.0, 0.02, 1.1, 0.0, 0.05, &[]).unwrap()
    );
}

#[test]
fn euler_step_sums_marks() {
    let p = MarketParams::default();
    let m = decoupled(ModelKind::Merton, &p);
    let marks = [0.1, -0.3];
    let x = 1.2;
    let got = euler_forward_step(&m, 0.0, 0.02, x, 0.0, 0.0, &marks).unwrap();
    let want = x + m.drift_rate() * x * 0.02 + x * (0.1f64.exp_m1() + (-0.3f64).exp_m1());
    assert!((got - want).abs() < 1e-15);
    assert!(euler_forward_step(&m, 0.0, 0.02, f64::INFINITY, 0.0, 0.0, &[]).is_err());
}

#[test]
fn deterministic_bs_limit() {
    let p = MarketParams { sigma: 0.0, ..MarketParams::default() };
    let spec = decoupled(ModelKind::BlackScholes, &p);
    let paths = simulate_paths(&spec, 50, 8, 0, 0, |_, _| 0.0).unwrap();
    let xt = p.s0 * (1.0 + p.r / 50.0).powi(50);
    for &x in paths.terminal() {
        assert!((x - xt).abs() < 1e-13);
    }
    let y0 = (-p.r).exp() * (xt - p.strike).max(0.0);
    assert!((y0 - 0.1858).abs() < 1e-3, "{y0}");
}

#[test]
fn zero_coupling_coupled_spec_matches_decoupled() {
    for kind in [ModelKind::BlackScholes, ModelKind::Merton, ModelKind::VarianceGamma] {
        let p = MarketParams { coupling: 0.0, steps: 30, ..MarketParams::default() };
        let reference = coupling_reference(kind, &p).unwrap();
        let coupled = make_spec(kind, &p, true, Some(reference)).unwrap();
        let plain = decoupled(kind, &p);
        let a = simulate_paths(&coupled, 30, 64, 5, 3, |_, x| 0.3 * x).unwrap();
        let b = simulate_paths(&plain, 30, 64, 5, 3, |_, x| 0.3 * x).unwrap();
        assert_eq!(a, b, "{kind:?}");
    }
}

#[test]
fn coupled_spec_on_reference_values_matches_decoupled() {
    let p = MarketParams { steps: 20, ..MarketParams::default() };
    let reference = coupling_reference(ModelKind::Merton, &p).unwrap();
    let coupled = make_merton_spec(&p, true, Some(reference.clone())).unwrap();
    let plain = decoupled(ModelKind::Merton, &p);
    let a = simulate_paths(&coupled, 20, 32, 1, 0, |t, x| reference.value(t, x)).unwrap();
    let b = simulate_paths(&plain, 20, 32, 1, 0, |_, _| 0.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn merton_without_jumps_matches_bs_paths() {
    let p = MarketParams { lambda: 0.0, ..MarketParams::default() };
    let a = simulate_paths(&decoupled(ModelKind::Merton, &p), 50, 100, 9, 2, |_, _| 0.0).unwrap();
    let b = simulate_paths(&decoupled(ModelKind::BlackScholes, &p), 50, 100, 9, 2, |_, _| 0.0).unwrap();
    assert_eq!(a.x, b.x);
}

#[test]
fn discounted_price_is_a_martingale() {
    let n = 100_000;
    for kind in [ModelKind::BlackScholes, ModelKind::Merton, ModelKind::VarianceGamma] {
        let p = MarketParams::default();
        let steps = kind.default_steps();
        let spec = decoupled(kind, &p);
        let paths = simulate_paths(&spec, steps, n, 11, 0, |_, _| 0.0).unwrap();
        for (i, row) in paths.x.iter().enumerate() {
            let disc = (-p.r * i as f64 * paths.dt).exp();
            let mean = row.iter().sum::<f64>() / n as f64 * disc;
            let var = row.iter().map(|x| (x * disc - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            assert!((mean - p.s0).abs() <= 4.0 * se.max(1e-12), "{kind:?} step {i}: {mean} ± {se}");
        }
    }
}

#[test]
fn terminal_payoffs_are_nonnegative() {
    for kind in [ModelKind::BlackScholes, ModelKind::Merton, ModelKind::VarianceGamma] {
        let p = MarketParams::default();
        let spec = decoupled(kind, &p);
        let paths = simulate_paths(&spec, kind.default_steps(), 5000, 4, 0, |_, _| 0.0).unwrap();
        assert!(paths.terminal().iter().all(|&x| spec.terminal(x) >= 0.0));
    }
}

#[test]
fn model_names_round_trip() {
    for kind in [ModelKind::BlackScholes, ModelKind::Merton, ModelKind::VarianceGamma] {
        assert_eq!(ModelKind::parse(kind.name()), Some(kind));
    }
    assert_eq!(ModelKind::BlackScholes.default_steps(), 50);
}

proptest! {
    #[test]
    fn payoff_is_nonnegative(x in -10.0f64..10.0, k in 0.01f64..5.0) {
        let p = MarketParams { strike: k, ..MarketParams::default() };
        let spec = decoupled(ModelKind::BlackScholes, &p);
        prop_assert!(spec.terminal(x) >= 0.0);
    }

    #[test]
    fn drift_increases_with_mismatch(x in 0.1f64..3.0, y in -2.0f64..2.0, d in 0.0f64..1.0) {
        let p = MarketParams::default();
        let reference = CouplingRef::new(|_, s| (s, 1.0));
        let spec = make_bs_spec(&p, true, Some(reference)).unwrap();
        let base = spec.drift_bbar(0.0, x, x + y);
        let wider = spec.drift_bbar(0.0, x, x + y + d * y.signum());
        prop_assert!(wider >= base - 1e-15);
        prop_assert!(base >= p.r * x - 1e-15);
    }
}
