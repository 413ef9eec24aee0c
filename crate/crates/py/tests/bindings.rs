use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &str) {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(groundplan_py::groundplan_py)(py);
        let locals = PyDict::new(py);
        locals.set_item("gp", m).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, None, Some(&locals)).unwrap();
    });
}

#[test]
fn plans_roundtrip_through_python() {
    with_module(
        r#"
m = gp.Mask(2, 1, [True, False])
p = gp.Plan.parse("Move the grasped object to <p> lamp </p><seg>.", [[m, m]])
assert (p.action, p.object, p.location) == ("move grasped object", None, "lamp")
assert gp.Plan.parse(p.serialize(), p.masks()) == p
assert p.history_text() == "move the grasped object to lamp"
"#,
    );
}

#[test]
fn parse_errors_carry_their_class() {
    with_module(
        r#"
for text, cls in [("Fly.", "unknown_action"), ("Grasp.", "slot_mismatch")]:
    try:
        gp.Plan.parse(text)
        raise AssertionError(text)
    except ValueError as e:
        assert str(e).startswith(cls), e
"#,
    );
}

#[test]
fn oracle_episode_succeeds() {
    with_module(
        r#"
t = gp.run_episode("push_button", seed=1, config='{"resolution": 64}')
assert t["status"] == "success"
assert all(s["parse"]["outcome"] == "ok" for s in t["steps"])
g = gp.check_gradients(5, 1)
assert g["ce_uniform_max_abs_error"] < 1e-12
"#,
    );
}

#[test]
fn bad_config_is_a_value_error() {
    with_module(
        r#"
try:
    gp.eval_online(config='{"sede": 1}')
    raise AssertionError("accepted")
except ValueError:
    pass
"#,
    );
}
