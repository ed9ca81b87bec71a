use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "jumpfbsde_py").unwrap();
        jumpfbsde_py::jumpfbsde_py(&m).unwrap();
        let globals = pyo3::types::PyDict::new(py);
        globals.set_item("m", m).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn oracles_are_exposed() {
    with_module(
        r#"
p = m.MarketParams()
assert abs(m.reference_price("bs", p) - 0.225101) < 1e-5
assert abs(m.merton_call(0.0, 1.0, p) - 0.271457) < 1e-5
assert abs(m.bs_call(0.0, 1.0, 0.1, 0.3, 0.9, 1.0) - m.reference_price("bs")) < 1e-12
assert m.riccati_phi(0.0, 150.0, 80.0, 50.0, 600.0, 2.0) > 0
assert m.intensity_lambda0(0.0, 30.0) == 0.0 and m.intensity_lambda0(0.5, 30.0) > 0
"#,
    );
}

#[test]
fn parameter_classes_take_keyword_overrides() {
    with_module(
        r#"
p = m.MfgParams(pi=0.25, steps=24)
assert p.pi == 0.25 and p.steps == 24 and p.a == 150.0
p.p1 = 1000.0
assert p.p1 == 1000.0
t = m.mfc_transform(p)
assert t.p1 == p.p1 and t.planner and not p.planner
for bad in ({"nope": 1.0},):
    try:
        m.MfgParams(**bad)
        raise AssertionError("accepted unknown field")
    except ValueError:
        pass
try:
    m.reference_price("heston")
    raise AssertionError("accepted unknown model")
except ValueError:
    pass
"#,
    );
}

#[test]
fn training_and_game_round_trip() {
    with_module(
        r#"
r = m.train_pricing("merton", "sumlocal2", n_train=3, steps=5, batch=4, compensator_samples=20)
assert r.algorithm == "SumLocal2" and len(r.epochs) == 4
assert r.epoch_csv().count("\n") == 5
params = m.MfgParams()
pol, rep = m.solve_mfg(params, n_train=3, steps=6)
assert pol.steps == 6 and pol.regime == "Equilibrium"
c = pol.evaluate_cost(params, n_mc=30, seed=1)
assert len(c.samples) == 30 and c.value > 0
mfc, _ = m.solve_mfg(params, n_train=3, steps=6, regime="mfc")
poa, se = m.price_of_anarchy(c, mfc.evaluate_cost(params, n_mc=30, seed=1))
assert poa > 0 and se >= 0
"#,
    );
}
