//! Python bindings: plan, validate, roll out, and batch-evaluate rolling
//! experiments, plus direct access to the core kinematics and tactile
//! estimation operations.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rollkit::config::ExperimentConfig;
use rollkit::kinematics;
use rollkit::sim::{self, TrialMode};
use rollkit::tactile;
use rollkit::trajopt;
use rollkit::Vec2;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Experiment configuration handle.
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Load and validate a TOML configuration file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ExperimentConfig::from_path(std::path::Path::new(path))
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Parse a TOML string.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// The bundled nominal experiment.
    #[staticmethod]
    fn nominal() -> Self {
        Self {
            inner: ExperimentConfig::nominal(),
        }
    }

    /// Retarget the goal to a pure roll of `delta_theta` radians.
    fn set_goal_rotation(&mut self, delta_theta: f64) {
        self.inner.set_goal_rotation(delta_theta);
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn object_radius(&self) -> f64 {
        self.inner.object.radius
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.trajopt.n_steps
    }
}

/// Solved rolling trajectory.
#[pyclass(name = "Trajectory")]
#[derive(Clone)]
struct PyTrajectory {
    inner: trajopt::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.report.converged
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.inner.report.cost
    }

    #[getter]
    fn max_constraint_violation(&self) -> f64 {
        self.inner.report.max_constraint_violation
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Object poses as a list of (x, y, theta).
    fn object_states(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .steps
            .iter()
            .map(|s| (s.object.x, s.object.y, s.object.theta))
            .collect()
    }

    /// Actuated joint angles per knot.
    fn joint_angles(&self) -> Vec<Vec<f64>> {
        self.inner.steps.iter().map(|s| s.q_act.clone()).collect()
    }

    /// Contact forces per knot as (f_n_a, f_t_a, f_n_b, f_t_b).
    fn contact_forces(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .steps
            .iter()
            .map(|s| {
                (
                    s.contact_a.f_n,
                    s.contact_a.f_t,
                    s.contact_b.f_n,
                    s.contact_b.f_t,
                )
            })
            .collect()
    }

    /// Net prismatic contact travel.
    fn prismatic_travel(&self) -> f64 {
        self.inner.prismatic_travel()
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        rollkit::io::write_trajectory_csv(std::path::Path::new(path), &self.inner)
            .map_err(runtime_err)
    }
}

/// Solve the trajectory optimization for a configuration.
#[pyfunction]
fn plan(config: &PyConfig) -> PyResult<PyTrajectory> {
    let nlp = trajopt::build_problem(&config.inner).map_err(value_err)?;
    let z0 = nlp.initial_guess();
    let mut trajectory = trajopt::solve(&nlp, &z0).map_err(runtime_err)?;
    let validation = trajopt::validate_trajectory(&trajectory, &config.inner);
    trajectory.report.max_constraint_violation = validation.max_violation;
    Ok(PyTrajectory { inner: trajectory })
}

/// Recompute every constraint residual of a trajectory.
#[pyfunction]
fn validate<'py>(
    py: Python<'py>,
    config: &PyConfig,
    trajectory: &PyTrajectory,
) -> PyResult<Bound<'py, PyDict>> {
    let report = trajopt::validate_trajectory(&trajectory.inner, &config.inner);
    let dict = PyDict::new(py);
    dict.set_item("steps", report.steps)?;
    dict.set_item("max_force_residual", report.max_force_residual)?;
    dict.set_item("max_moment_residual", report.max_moment_residual)?;
    dict.set_item("max_prismatic_residual", report.max_prismatic_residual)?;
    dict.set_item("max_rolling_residual", report.max_rolling_residual)?;
    dict.set_item("max_attachment_error", report.max_attachment_error)?;
    dict.set_item("min_friction_margin", report.min_friction_margin)?;
    dict.set_item("max_violation", report.max_violation)?;
    Ok(dict)
}

/// Execute a plan on the simulated plant.
#[pyfunction]
#[pyo3(signature = (config, trajectory, mode="force", seed=0))]
fn rollout<'py>(
    py: Python<'py>,
    config: &PyConfig,
    trajectory: &PyTrajectory,
    mode: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: TrialMode = mode.parse().map_err(value_err)?;
    let result = sim::run_trial(&config.inner, &trajectory.inner, mode, seed).map_err(runtime_err)?;
    let dict = PyDict::new(py);
    dict.set_item("mode", result.mode.to_string())?;
    dict.set_item("seed", result.seed)?;
    dict.set_item("success", result.success)?;
    dict.set_item("final_theta_error", result.final_theta_error)?;
    dict.set_item("steps_survived", result.steps_survived)?;
    dict.set_item("total_ticks", result.total_ticks)?;
    dict.set_item("theta_rmse", result.theta_rmse)?;
    let theta: Vec<(f64, f64)> = result
        .rows
        .iter()
        .map(|r| (r.theta_true, r.theta_estimate))
        .collect();
    dict.set_item("theta_trace", theta)?;
    let force: Vec<(f64, f64)> = result
        .rows
        .iter()
        .map(|r| (r.f_measured, r.f_true_a))
        .collect();
    dict.set_item("force_trace", force)?;
    Ok(dict)
}

/// Seeded Monte-Carlo comparison of both controller modes.
#[pyfunction]
#[pyo3(signature = (config, trajectory, trials=None))]
fn batch<'py>(
    py: Python<'py>,
    config: &PyConfig,
    trajectory: &PyTrajectory,
    trials: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let trials = trials.unwrap_or(config.inner.sim.trials);
    let (_, summaries) =
        sim::run_batch(&config.inner, &trajectory.inner, trials).map_err(runtime_err)?;
    let dict = PyDict::new(py);
    for s in summaries {
        let entry = PyDict::new(py);
        entry.set_item("trials", s.trials)?;
        entry.set_item("successes", s.successes)?;
        entry.set_item("drops", s.drops)?;
        entry.set_item("success_rate", s.success_rate())?;
        entry.set_item("mean_abs_theta_error", s.mean_abs_theta_error)?;
        dict.set_item(s.mode.to_string(), entry)?;
    }
    Ok(dict)
}

/// Fingertip position for actuated joint angles.
#[pyfunction]
fn fingertip(config: &PyConfig, q_act: Vec<f64>) -> PyResult<(f64, f64)> {
    let model = config.inner.finger_model().map_err(value_err)?;
    let q_full = kinematics::expand_coupling(&model, &q_act).map_err(value_err)?;
    let pose = kinematics::forward_kinematics(&model, &q_full.q).map_err(value_err)?;
    let tip = pose.fingertip();
    Ok((tip.x, tip.y))
}

/// Signed finger-object gap for actuated joints and an object center.
#[pyfunction]
fn signed_gap(config: &PyConfig, q_act: Vec<f64>, center: (f64, f64)) -> PyResult<f64> {
    let model = config.inner.finger_model().map_err(value_err)?;
    let q_full = kinematics::expand_coupling(&model, &q_act).map_err(value_err)?;
    let sd = kinematics::signed_distance(
        &model,
        &q_full.q,
        Vec2::new(center.0, center.1),
        config.inner.object.radius,
        None,
    )
    .map_err(value_err)?;
    Ok(sd.psi)
}

/// Weighted-centroid contact point from raw sensor magnitudes at given
/// sensor positions.
#[pyfunction]
#[pyo3(signature = (positions, magnitudes, threshold=30.0, neighbors=4))]
fn locate_contact(
    positions: Vec<(f64, f64)>,
    magnitudes: Vec<f64>,
    threshold: f64,
    neighbors: usize,
) -> PyResult<Option<(f64, f64)>> {
    let layout = tactile::SensorLayout::new(
        positions.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
        Vec::new(),
    )
    .map_err(value_err)?;
    let frame = tactile::TactileFrame {
        readings: magnitudes.iter().map(|&s| [s, 0.0, 0.0]).collect(),
        step: 0,
    };
    let estimate =
        tactile::estimate_from_frame(&layout, &frame, threshold, neighbors).map_err(value_err)?;
    Ok(estimate.map(|e| (e.p_cp.x, e.p_cp.y)))
}

#[pymodule]
fn rollkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(batch, m)?)?;
    m.add_function(wrap_pyfunction!(fingertip, m)?)?;
    m.add_function(wrap_pyfunction!(signed_gap, m)?)?;
    m.add_function(wrap_pyfunction!(locate_contact, m)?)?;
    Ok(())
}
