//! Python bindings: geometry, environments, sessions, datasets and metrics.
//! Structured values cross the boundary as JSON-compatible dicts.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use pyo3::create_exception;
use skynav::dataset::{dataset_stats, load_dataset, validate_dataset};
use skynav::episode::{andh_full_task, andh_tasks, Episode};
use skynav::geometry::{self, AxisRect, Heading, ViewArea, WorldPoint};
use skynav::metrics::{evaluate_run, GpMode};
use skynav::protocol::{self, oracle_agent, random_agent, run_agent, stationary_agent, AgentMessage, SessionConfig, SessionSetup};
use skynav::raster::{self, generate_synthetic_world, load_bundle, CameraModel, RasterEnvironment, Sampling, SyntheticWorldSpec};
use skynav::synth::{sample_task, synthesize_dataset, SynthesisParams};
use skynav::{attention, DroneState};

create_exception!(skynav_py, SkynavError, pyo3::exceptions::PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    SkynavError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Oriented square view footprint.
#[pyclass(name = "ViewArea", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyViewArea(ViewArea);

#[pymethods]
impl PyViewArea {
    #[new]
    fn new(x: f64, y: f64, width: f64, heading: f64) -> PyResult<Self> {
        ViewArea::new(WorldPoint::new(x, y), width, Heading::new(heading))
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn center(&self) -> (f64, f64) {
        (self.0.center.x, self.0.center.y)
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }

    #[getter]
    fn heading(&self) -> f64 {
        self.0.rotation.degrees()
    }

    fn corners(&self) -> Vec<(f64, f64)> {
        self.0.corners().vertices().iter().map(|p| (p.x, p.y)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "ViewArea(x={}, y={}, width={}, heading={})",
            self.0.center.x,
            self.0.center.y,
            self.0.width,
            self.0.rotation.degrees()
        )
    }
}

#[pyclass(name = "AxisRect", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAxisRect(AxisRect);

#[pymethods]
impl PyAxisRect {
    #[new]
    fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> PyResult<Self> {
        AxisRect::new(WorldPoint::new(min_x, min_y), WorldPoint::new(max_x, max_y))
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.0.min.x, self.0.min.y, self.0.max.x, self.0.max.y)
    }

    fn __repr__(&self) -> String {
        format!("AxisRect{:?}", self.bounds())
    }
}

#[pyfunction]
fn iou(view: &PyViewArea, rect: &PyAxisRect) -> f64 {
    geometry::iou(&view.0, &rect.0)
}

#[pyfunction]
fn contains(rect: &PyAxisRect, point: (f64, f64)) -> bool {
    geometry::contains(&rect.0, &WorldPoint::new(point.0, point.1))
}

/// NSS of a saliency map against a binary mask, both row-major lists.
#[pyfunction]
fn nss(saliency: Vec<Vec<f64>>, mask: Vec<Vec<bool>>) -> PyResult<f64> {
    let s = attention::Grid::from_rows(&saliency).map_err(err)?;
    let m = attention::Grid::from_rows(&mask).map_err(err)?;
    attention::nss(&s, &m).map_err(err)
}

/// Immutable raster environment plus its destination objects.
#[pyclass(name = "Environment", frozen)]
struct PyEnvironment {
    env: Arc<RasterEnvironment>,
    objects: Vec<AxisRect>,
}

#[pymethods]
impl PyEnvironment {
    #[staticmethod]
    #[pyo3(signature = (seed=7, size_px=2048, mpp=0.3, objects=20))]
    fn synthetic(seed: u64, size_px: u32, mpp: f64, objects: usize) -> PyResult<Self> {
        let spec = SyntheticWorldSpec {
            seed,
            size_px,
            meters_per_pixel: mpp,
            object_count: objects,
        };
        let (env, objects) = generate_synthetic_world(&spec).map_err(err)?;
        Ok(Self {
            env: Arc::new(env),
            objects,
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf, env_id: &str) -> PyResult<Self> {
        let (env, objects) = load_bundle(&dir, env_id).map_err(err)?;
        Ok(Self {
            env: Arc::new(env),
            objects,
        })
    }

    #[getter]
    fn env_id(&self) -> &str {
        self.env.env_id()
    }

    /// (width_px, height_px, meters_per_pixel)
    #[getter]
    fn shape(&self) -> (u32, u32, f64) {
        (self.env.width_px(), self.env.height_px(), self.env.meters_per_pixel())
    }

    #[getter]
    fn objects(&self) -> Vec<PyAxisRect> {
        self.objects.iter().copied().map(PyAxisRect).collect()
    }

    /// PNG bytes of the view, row 0 at the far edge along the heading.
    #[pyo3(signature = (view, resolution=224, nearest=false))]
    fn observe<'py>(&self, py: Python<'py>, view: &PyViewArea, resolution: u32, nearest: bool) -> PyResult<Bound<'py, PyBytes>> {
        let sampling = if nearest { Sampling::Nearest } else { Sampling::Bilinear };
        let obs = raster::observe(&self.env, &view.0, resolution, sampling).map_err(err)?;
        Ok(PyBytes::new(py, &obs.to_png()))
    }

    /// Seeded (start, destination) pair; start is a state dict.
    fn sample_task<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<(Bound<'py, PyAny>, PyAxisRect)> {
        let (start, dest) = sample_task(&self.env, &CameraModel::default(), &self.objects, seed).map_err(err)?;
        Ok((to_py(py, &start)?, PyAxisRect(dest)))
    }

    /// Recorded-successful synthetic episodes as dicts.
    fn synthesize_episodes<'py>(&self, py: Python<'py>, seed: u64, n: usize) -> PyResult<Bound<'py, PyAny>> {
        let eps = synthesize_dataset(&self.env, &CameraModel::default(), &self.objects, seed, n, &SynthesisParams::default())
            .map_err(err)?;
        to_py(py, &eps)
    }
}

/// Offline evaluation session over one episode.
#[pyclass(name = "Session")]
struct PySession(protocol::Session);

#[pymethods]
impl PySession {
    /// Evaluation of the full episode, or of one ANDH round with `round`.
    /// `collection=True` starts a live session instead.
    #[new]
    #[pyo3(signature = (env, episode, round=None, resolution=224, collection=false))]
    fn new(env: &PyEnvironment, episode: &Bound<'_, PyAny>, round: Option<usize>, resolution: u32, collection: bool) -> PyResult<Self> {
        let ep: Episode = from_py(episode)?;
        let cfg = SessionConfig {
            resolution,
            ..SessionConfig::default()
        };
        let setup = if collection {
            SessionSetup::collection(&ep, cfg)
        } else {
            let task = match round {
                None => andh_full_task(&ep),
                Some(r) => andh_tasks(&ep, &cfg.camera)
                    .map_err(err)?
                    .into_iter()
                    .nth(r)
                    .ok_or_else(|| PyValueError::new_err(format!("round {r} out of range")))?,
            };
            SessionSetup::evaluation(&task, &ep, cfg)
        };
        protocol::Session::new(env.env.clone(), setup).map(Self).map_err(err)
    }

    fn start<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.start())
    }

    /// Applies one agent message (dict or JSON string); returns the replies.
    fn step<'py>(&mut self, py: Python<'py>, message: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let msg: AgentMessage = from_py(message)?;
        let out = self.0.step(msg).map_err(err)?;
        to_py(py, &out)
    }

    fn commander<'py>(&mut self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let out = self.0.deliver_commander(text).map_err(err)?;
        to_py(py, &out)
    }

    #[getter]
    fn phase<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.phase())
    }

    #[getter]
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.0.drone())
    }

    #[getter]
    fn step_count(&self) -> usize {
        self.0.step_count()
    }

    #[getter]
    fn success(&self) -> Option<bool> {
        self.0.success()
    }

    fn view(&self) -> PyViewArea {
        PyViewArea(self.0.view())
    }

    fn observation_png<'py>(&self, py: Python<'py>, step: usize) -> Option<Bound<'py, PyBytes>> {
        self.0.observation_png(step).map(|b| PyBytes::new(py, b))
    }

    fn trajectory<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.trajectory())
    }

    fn to_episode<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.to_episode())
    }
}

/// Schema (and bounds, when `env` is given) violations as strings.
#[pyfunction]
#[pyo3(signature = (path, env=None))]
fn validate(path: PathBuf, env: Option<&PyEnvironment>) -> PyResult<Vec<String>> {
    let cam = CameraModel::default();
    let found = match env {
        None => validate_dataset(&path, None),
        Some(e) => {
            let lookup = |id: &str| (id == e.env.env_id()).then_some(e.env.as_ref());
            let ctx = skynav::dataset::BoundsContext {
                camera: &cam,
                environments: &lookup,
            };
            validate_dataset(&path, Some(&ctx))
        }
    }
    .map_err(err)?;
    Ok(found.iter().map(ToString::to_string).collect())
}

#[pyfunction]
fn stats<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let eps = load_dataset(&path).map_err(err)?;
    to_py(py, &dataset_stats(&eps))
}

/// Runs a built-in agent over `episodes` and returns the metrics report.
#[pyfunction]
#[pyo3(signature = (env, episodes, agent="oracle", task="andh-full", gp_mode="literal", seed=0, resolution=64))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    env: &PyEnvironment,
    episodes: &Bound<'py, PyAny>,
    agent: &str,
    task: &str,
    gp_mode: &str,
    seed: u64,
    resolution: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let eps: Vec<Episode> = from_py(episodes)?;
    let gp = match gp_mode {
        "literal" => GpMode::Literal,
        "delta" => GpMode::DeltaDistance,
        other => return Err(PyValueError::new_err(format!("gp_mode {other}"))),
    };
    let cfg = SessionConfig {
        resolution,
        ..SessionConfig::default()
    };
    let mut tasks = Vec::new();
    for ep in &eps {
        match task {
            "andh-full" => tasks.push((andh_full_task(ep), ep)),
            "andh" => tasks.extend(andh_tasks(ep, &cfg.camera).map_err(err)?.into_iter().map(|t| (t, ep))),
            other => return Err(PyValueError::new_err(format!("task {other}"))),
        }
    }
    let mut predictions = Vec::with_capacity(tasks.len());
    for (i, (t, ep)) in tasks.iter().enumerate() {
        let mut session = protocol::Session::new(env.env.clone(), SessionSetup::evaluation(t, ep, cfg.clone())).map_err(err)?;
        let out = match agent {
            "oracle" => run_agent(&mut session, &mut oracle_agent(env.env.clone(), &t.reference, &cfg)),
            "random" => run_agent(&mut session, &mut random_agent(seed + i as u64, &cfg.camera)),
            "stationary" => run_agent(&mut session, &mut stationary_agent()),
            other => return Err(PyValueError::new_err(format!("agent {other}"))),
        }
        .map_err(err)?;
        predictions.push(out.states);
    }
    let tasks: Vec<_> = tasks.into_iter().map(|(t, _)| t).collect();
    let report = evaluate_run(&tasks, &predictions, None, &cfg.camera, gp).map_err(err)?;
    to_py(py, &report)
}

/// Drone state dict from its fields.
#[pyfunction]
fn drone_state<'py>(py: Python<'py>, x: f64, y: f64, heading: f64, altitude: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &DroneState::new(WorldPoint::new(x, y), Heading::new(heading), altitude))
}

#[pymodule]
fn skynav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init(m)
}

/// Registers everything on `m`; also used to embed the module in tests.
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SkynavError", m.py().get_type::<SkynavError>())?;
    m.add("SUCCESS_MESSAGE", skynav::episode::SUCCESS_MESSAGE)?;
    m.add_class::<PyViewArea>()?;
    m.add_class::<PyAxisRect>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(contains, m)?)?;
    m.add_function(wrap_pyfunction!(nss, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(drone_state, m)?)?;
    Ok(())
}
