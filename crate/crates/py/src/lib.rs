//! Python bindings: boxes and metrics, matching, the motion estimator and
//! the benchmark sweep.

use bevflow::bench::{self, ExperimentConfig, Method, NoiseLevel, ResultRow, RunOptions, SweepPoint};
use bevflow::eval::{self, EvalRecord};
use bevflow::flow::{self, EstimatorParams, MotionModel};
use bevflow::geometry::OrientedBox;
use bevflow::roi_codec;
use bevflow::tracker::{self, CostMatrix, TrackState, Tracklet};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn to_py(e: bevflow::Error) -> PyErr {
    match e {
        bevflow::Error::InvalidArgument(_) | bevflow::Error::Config(_) => PyValueError::new_err(e.to_string()),
        bevflow::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Oriented BEV box with a detection confidence.
#[pyclass(name = "Box", from_py_object)]
#[derive(Clone, Copy)]
struct PyBox {
    inner: OrientedBox,
}

#[pymethods]
impl PyBox {
    #[new]
    #[pyo3(signature = (x, y, length, width, heading, confidence = 1.0))]
    fn new(x: f64, y: f64, length: f64, width: f64, heading: f64, confidence: f64) -> Self {
        Self { inner: OrientedBox::new(confidence, x, y, length, width, heading) }
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }

    #[getter]
    fn y(&self) -> f64 {
        self.inner.y
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.width
    }

    #[getter]
    fn heading(&self) -> f64 {
        self.inner.heading
    }

    #[getter]
    fn confidence(&self) -> f64 {
        self.inner.confidence
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn corners(&self) -> Vec<(f64, f64)> {
        self.inner.corners().to_vec()
    }

    fn __repr__(&self) -> String {
        let b = &self.inner;
        format!(
            "Box(x={}, y={}, length={}, width={}, heading={}, confidence={})",
            b.x, b.y, b.length, b.width, b.heading, b.confidence
        )
    }
}

fn unwrap_boxes(boxes: &[PyBox]) -> Vec<OrientedBox> {
    boxes.iter().map(|b| b.inner).collect()
}

fn wrap_boxes(boxes: Vec<OrientedBox>) -> Vec<PyBox> {
    boxes.into_iter().map(|inner| PyBox { inner }).collect()
}

/// Intersection over union of two oriented boxes.
#[pyfunction]
fn rotated_iou(a: PyBox, b: PyBox) -> f64 {
    eval::rotated_iou(&a.inner, &b.inner)
}

/// Non-maximum suppression with rotated IoU.
#[pyfunction]
fn nms(boxes: Vec<PyBox>, iou_threshold: f64) -> Vec<PyBox> {
    wrap_boxes(roi_codec::nms(&unwrap_boxes(&boxes), iou_threshold))
}

/// All-point AP over frames given as `(detections, ground_truth)` pairs;
/// `None` when there is no ground truth.
#[pyfunction]
fn average_precision(frames: Vec<(Vec<PyBox>, Vec<PyBox>)>, iou_threshold: f64) -> Option<f64> {
    let records: Vec<EvalRecord> = frames
        .iter()
        .enumerate()
        .map(|(i, (d, g))| EvalRecord {
            scene: i as u64,
            timestamp: 0.0,
            detections: unwrap_boxes(d),
            ground_truth: unwrap_boxes(g),
        })
        .collect();
    eval::average_precision(&records, iou_threshold)
}

/// Communication volume in log2 voxels of a budget of `k` ROIs.
#[pyfunction]
fn comm_volume(k: usize) -> PyResult<f64> {
    roi_codec::comm_volume(k).map_err(to_py)
}

/// Sinusoidal time code of `t` seconds with `d` entries.
#[pyfunction]
fn time_encode(t: f64, d: usize) -> PyResult<Vec<f64>> {
    flow::time_encode(t, d).map(|c| c.values).map_err(to_py)
}

fn cost_matrix(rows: Vec<Vec<f64>>) -> PyResult<CostMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("cost matrix rows differ in length"));
    }
    Ok(CostMatrix::from_rows(&rows))
}

/// Greedy assignment; returns `(row, col, cost)` triples.
#[pyfunction]
fn greedy_match(cost: Vec<Vec<f64>>, max_cost: f64) -> PyResult<Vec<(usize, usize, f64)>> {
    Ok(tracker::greedy_match(&cost_matrix(cost)?, max_cost).pairs)
}

/// Optimal assignment; returns `(row, col, cost)` triples.
#[pyfunction]
fn hungarian_match(cost: Vec<Vec<f64>>, max_cost: f64) -> PyResult<Vec<(usize, usize, f64)>> {
    Ok(tracker::hungarian_match(&cost_matrix(cost)?, max_cost).pairs)
}

fn tracklet(states: Vec<(f64, f64, f64, f64)>) -> PyResult<Tracklet> {
    let states = states.into_iter().map(|(timestamp, x, y, heading)| TrackState { timestamp, x, y, heading }).collect();
    Tracklet::from_states(0, states, (4.5, 1.9)).map_err(to_py)
}

/// Constant-velocity prediction of a `(t, x, y, heading)` history at `t_query`.
#[pyfunction]
fn predict_constant_velocity(states: Vec<(f64, f64, f64, f64)>, t_query: f64) -> PyResult<(f64, f64, f64)> {
    let p = MotionModel::ConstantVelocity.predict(&tracklet(states)?, t_query).map_err(to_py)?;
    Ok((p.x, p.y, p.heading))
}

/// Trained attention motion estimator.
#[pyclass(name = "Estimator")]
struct PyEstimator {
    params: EstimatorParams,
}

#[pymethods]
impl PyEstimator {
    /// Trains on the held-out scenes described by `config`.
    #[staticmethod]
    fn train(config: &PyConfig) -> PyResult<Self> {
        let trained = bench::train_for_config(&config.inner).map_err(to_py)?;
        Ok(Self { params: trained.params })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { params: EstimatorParams::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.params.save(&path).map_err(to_py)
    }

    #[getter]
    fn time_encoding(&self) -> bool {
        self.params.time_encoding
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Predicted `(x, y, heading)` of a `(t, x, y, heading)` history at `t_query`.
    fn predict(&self, states: Vec<(f64, f64, f64, f64)>, t_query: f64) -> PyResult<(f64, f64, f64)> {
        let p = flow::estimate_pose(&tracklet(states)?, t_query, &self.params).map_err(to_py)?;
        Ok((p.x, p.y, p.heading))
    }
}

/// Benchmark configuration.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: ExperimentConfig::default() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(&path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_toml_str(text, None).map_err(to_py)? })
    }

    #[getter]
    fn scenes(&self) -> usize {
        self.inner.scenes
    }

    #[setter]
    fn set_scenes(&mut self, v: usize) {
        self.inner.scenes = v;
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, v: Vec<u64>) {
        self.inner.seeds = v;
    }

    #[getter]
    fn intervals_ms(&self) -> Vec<f64> {
        self.inner.intervals_ms.clone()
    }

    #[setter]
    fn set_intervals_ms(&mut self, v: Vec<f64>) {
        self.inner.intervals_ms = v;
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner.methods.iter().map(|m| m.name().to_string()).collect()
    }

    #[setter]
    fn set_methods(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.methods = v.iter().map(|s| s.parse::<Method>().map_err(to_py)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn time_encoding(&self) -> bool {
        self.inner.time_encoding
    }

    #[setter]
    fn set_time_encoding(&mut self, v: bool) {
        self.inner.time_encoding = v;
    }

    /// Pose-noise levels as `(sigma_t meters, sigma_r degrees)` pairs.
    #[getter]
    fn pose_noise(&self) -> Vec<(f64, f64)> {
        self.inner.pose_noise.iter().map(|n| (n.sigma_t, n.sigma_r_deg)).collect()
    }

    #[setter]
    fn set_pose_noise(&mut self, v: Vec<(f64, f64)>) {
        self.inner.pose_noise =
            v.into_iter().map(|(sigma_t, sigma_r_deg)| NoiseLevel { sigma_t, sigma_r_deg }).collect();
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.scenario.horizon
    }

    #[setter]
    fn set_horizon(&mut self, v: f64) {
        self.inner.scenario.horizon = v;
    }

    /// Sets the size of the estimator's training set.
    fn set_training(&mut self, scenes: usize, max_samples: usize, epochs: usize) {
        self.inner.training.scenes = scenes;
        self.inner.training.max_samples = max_samples;
        self.inner.training.optimizer.epochs = epochs;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }
}

fn row_dict<'py>(py: Python<'py>, r: &ResultRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("interval_expectation_ms", r.interval_expectation_ms)?;
    d.set_item("sigma_t", r.sigma_t)?;
    d.set_item("sigma_r", r.sigma_r)?;
    d.set_item("method", r.method.name())?;
    d.set_item("ap50", r.ap50)?;
    d.set_item("ap70", r.ap70)?;
    d.set_item("mean_center_err", r.mean_center_err)?;
    d.set_item("comm_volume", r.comm_volume)?;
    Ok(d)
}

/// Runs the sweep and returns one dict per CSV row. The estimator is
/// trained from the config when not given.
#[pyfunction]
#[pyo3(signature = (config, estimator = None, workers = 1))]
fn run<'py>(
    py: Python<'py>,
    config: &PyConfig,
    estimator: Option<&PyEstimator>,
    workers: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let opts = RunOptions { workers, progress_dir: None, estimator: estimator.map(|e| e.params.clone()) };
    let cfg = config.inner.clone();
    let report = py.detach(move || bench::run_pipeline(&cfg, &opts)).map_err(to_py)?;
    report.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Runs the sweep and returns the results CSV text.
#[pyfunction]
#[pyo3(signature = (config, estimator = None, workers = 1))]
fn run_csv(py: Python<'_>, config: &PyConfig, estimator: Option<&PyEstimator>, workers: usize) -> PyResult<String> {
    let opts = RunOptions { workers, progress_dir: None, estimator: estimator.map(|e| e.params.clone()) };
    let cfg = config.inner.clone();
    let report = py.detach(move || bench::run_pipeline(&cfg, &opts)).map_err(to_py)?;
    let bytes = report.to_csv().map_err(to_py)?;
    String::from_utf8(bytes).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Writes observation and message logs of one sweep point; returns the
/// number of evaluations logged.
#[pyfunction]
#[pyo3(signature = (config, out_dir, interval_ms, sigma_t = 0.0, sigma_r_deg = 0.0))]
fn simulate(config: &PyConfig, out_dir: PathBuf, interval_ms: f64, sigma_t: f64, sigma_r_deg: f64) -> PyResult<usize> {
    let point = SweepPoint { interval_ms, noise: NoiseLevel { sigma_t, sigma_r_deg } };
    Ok(bench::simulate(&config.inner, point, &out_dir).map_err(to_py)?.evaluations)
}

/// Re-evaluates the configured methods on a simulated log directory.
#[pyfunction]
#[pyo3(signature = (config, log_dir, estimator = None))]
fn replay<'py>(
    py: Python<'py>,
    config: &PyConfig,
    log_dir: PathBuf,
    estimator: Option<&PyEstimator>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let report = bench::replay(&config.inner, &log_dir, estimator.map(|e| e.params.clone())).map_err(to_py)?;
    report.rows.iter().map(|r| row_dict(py, r)).collect()
}

#[pymodule]
fn bevflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBox>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEstimator>()?;
    m.add_function(wrap_pyfunction!(rotated_iou, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(comm_volume, m)?)?;
    m.add_function(wrap_pyfunction!(time_encode, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_match, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian_match, m)?)?;
    m.add_function(wrap_pyfunction!(predict_constant_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_csv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
