//! Python bindings. Structured results cross over as plain dicts and lists.

use std::path::PathBuf;

use groundplan::config::Config;
use groundplan::datagen::{generate_to_dir, DatasetKind};
use groundplan::eval::{eval_offline as offline, eval_online as online};
use groundplan::executor::{run_episode as run, PlannerKind};
use groundplan::mask::BinaryMask;
use groundplan::plan::{self, ActionSchema, GroundedPlan, PromptSpec};
use groundplan::scene::TaskSuite;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn config(json: Option<&str>) -> PyResult<Config> {
    let cfg = match json {
        Some(text) => Config::from_json(text).map_err(value_err)?,
        None => Config::default(),
    };
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

fn planner(name: &str, cfg: &Config) -> PyResult<PlannerKind> {
    match name {
        "oracle" => Ok(PlannerKind::Oracle),
        "corrupted" => Ok(PlannerKind::Corrupted(cfg.corruption)),
        other => Err(value_err(format!("unknown planner {other:?}"))),
    }
}

fn suite(cfg: &Config) -> PyResult<TaskSuite> {
    if cfg.suite == "builtin" {
        Ok(TaskSuite::builtin())
    } else {
        TaskSuite::load(&PathBuf::from(&cfg.suite)).map_err(value_err)
    }
}

/// A binary segmentation mask, stored row-major.
#[pyclass(name = "Mask", from_py_object)]
#[derive(Clone)]
struct PyMask(BinaryMask);

#[pymethods]
impl PyMask {
    #[new]
    fn new(width: u32, height: u32, data: Vec<bool>) -> PyResult<Self> {
        BinaryMask::from_vec(width, height, data).map(PyMask).map_err(value_err)
    }

    #[staticmethod]
    fn empty(width: u32, height: u32) -> Self {
        PyMask(BinaryMask::empty(width, height))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height()
    }

    fn get(&self, u: u32, v: u32) -> PyResult<bool> {
        if u >= self.0.width() || v >= self.0.height() {
            return Err(value_err(format!("pixel ({u}, {v}) outside the mask")));
        }
        Ok(self.0.get(u, v))
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn data(&self) -> Vec<bool> {
        self.0.data().to_vec()
    }

    fn iou(&self, other: &PyMask) -> PyResult<f64> {
        groundplan::objectives::iou(&self.0, &other.0).map_err(value_err)
    }

    fn __eq__(&self, other: &PyMask) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{}, {} set)", self.0.width(), self.0.height(), self.0.count())
    }
}

/// A parsed action plan with per-reference mask stacks.
#[pyclass(name = "Plan", skip_from_py_object)]
#[derive(Clone)]
struct PyPlan(GroundedPlan);

#[pymethods]
impl PyPlan {
    /// Parses planner text. `masks` holds one stack of per-view masks for each `<seg>`.
    #[staticmethod]
    #[pyo3(signature = (text, masks = Vec::new()))]
    fn parse(text: &str, masks: Vec<Vec<PyMask>>) -> PyResult<Self> {
        let stacks: Vec<Vec<BinaryMask>> = masks.into_iter().map(|s| s.into_iter().map(|m| m.0).collect()).collect();
        plan::parse_plan(text, &stacks, &ActionSchema::default())
            .map(PyPlan)
            .map_err(|e| value_err(format!("{}: {e}", e.class())))
    }

    #[getter]
    fn action(&self) -> String {
        self.0.action.to_string()
    }

    #[getter]
    fn object(&self) -> Option<String> {
        self.0.object.as_ref().map(|r| r.text.clone())
    }

    #[getter]
    fn location(&self) -> Option<String> {
        self.0.location.as_ref().map(|r| r.text.clone())
    }

    fn masks(&self) -> Vec<Vec<PyMask>> {
        self.0.mask_stacks().into_iter().map(|s| s.into_iter().map(PyMask).collect()).collect()
    }

    fn serialize(&self) -> String {
        plan::serialize_plan(&self.0)
    }

    /// The markup-free phrase recorded in the history.
    fn history_text(&self) -> String {
        plan::history_text(&self.0)
    }

    fn __eq__(&self, other: &PyPlan) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Plan({:?})", plan::serialize_plan(&self.0))
    }
}

#[pyfunction]
#[pyo3(signature = (instruction, history = Vec::new(), views = 4))]
fn build_prompt(instruction: &str, history: Vec<String>, views: usize) -> PyResult<String> {
    let spec = PromptSpec::new(views, instruction, history).map_err(value_err)?;
    Ok(plan::build_prompt(&spec))
}

/// `(name, variation, group)` for every task in the suite.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn tasks(config: Option<&str>) -> PyResult<Vec<(String, u32, String)>> {
    let s = suite(&self::config(config)?)?;
    Ok(s.tasks.iter().map(|t| (t.name.clone(), t.variation, t.group.to_string())).collect())
}

/// Runs one episode and returns its trace as a dict.
#[pyfunction]
#[pyo3(signature = (task, variation = 0, seed = 0, planner = "oracle", config = None))]
fn run_episode<'py>(
    py: Python<'py>,
    task: &str,
    variation: u32,
    seed: u64,
    planner: &str,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let s = suite(&cfg)?;
    let script = s.find(task, variation).ok_or_else(|| value_err(format!("no task {task} v{variation}")))?;
    let mut p = self::planner(planner, &cfg)?.build(seed);
    let exec = cfg.exec_config();
    let trace = py.detach(|| run(script, seed, p.as_mut(), &exec)).map_err(runtime_err)?;
    to_py(py, &trace)
}

/// Success rates per variation over `episodes` x `runs` seeded episodes.
#[pyfunction]
#[pyo3(signature = (planner = "oracle", episodes = 20, runs = 5, seed = 0, config = None))]
fn eval_online<'py>(
    py: Python<'py>,
    planner: &str,
    episodes: usize,
    runs: usize,
    seed: u64,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let (s, p, exec) = (suite(&cfg)?, self::planner(planner, &cfg)?, cfg.exec_config());
    let r = py.detach(|| online(&s, &p, &exec, episodes, runs, seed)).map_err(runtime_err)?;
    to_py(py, &r)
}

/// Act/Obj/Grd per group for a plan dataset on disk.
#[pyfunction]
#[pyo3(signature = (data, planner = "oracle", config = None))]
fn eval_offline<'py>(py: Python<'py>, data: PathBuf, planner: &str, config: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let (s, p) = (suite(&cfg)?, self::planner(planner, &cfg)?);
    let r = py.detach(|| offline(&data, &s, &p)).map_err(runtime_err)?;
    to_py(py, &r)
}

/// Writes a dataset of `kind` (`plan`, `refexp` or `long`) and returns its manifest.
#[pyfunction]
#[pyo3(signature = (kind, out, episodes = 20, seed = 0, config = None))]
fn generate_dataset<'py>(
    py: Python<'py>,
    kind: &str,
    out: PathBuf,
    episodes: usize,
    seed: u64,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config)?;
    let kind: DatasetKind = kind.parse().map_err(value_err)?;
    let (s, exec) = (suite(&cfg)?, cfg.exec_config());
    let m = py.detach(|| generate_to_dir(kind, &s, episodes, seed, &exec, &out)).map_err(runtime_err)?;
    to_py(py, &m)
}

#[pyfunction]
#[pyo3(signature = (instances = 100, seed = 0))]
fn check_gradients<'py>(py: Python<'py>, instances: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &groundplan::objectives::check_gradients(instances, seed))
}

#[pymodule]
pub fn groundplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMask>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(tasks, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(eval_online, m)?)?;
    m.add_function(wrap_pyfunction!(eval_offline, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(check_gradients, m)?)?;
    Ok(())
}
