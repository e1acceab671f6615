//! File formats: trajectory CSV, trace CSVs, and structured run reports.
//!
//! Every CSV carries a header row naming its columns. Floats are written
//! with the shortest representation that round-trips, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::contact::{ContactLabel, ContactRecord, ObjectState};
use crate::kinematics::{expand_coupling, signed_distance};
use crate::sim::{BatchSummary, TickRow, TrialResult};
use crate::trajopt::{SolveReport, Trajectory, TrajectoryStep, ValidationReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| io_err(path, e))
}

/// Planned trajectory, one row per knot.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory) -> Result<(), IoError> {
    let m = trajectory
        .steps
        .first()
        .map(|s| s.q_act.len())
        .unwrap_or(0);
    let mut out = String::new();
    let q_cols: Vec<String> = (0..m).map(|a| format!("q{a}")).collect();
    let u_cols: Vec<String> = (0..m).map(|a| format!("u{a}")).collect();
    let _ = writeln!(
        out,
        "k,x,y,theta,{},d,f_n_a,f_t_a,f_n_b,f_t_b,{},psi",
        q_cols.join(","),
        u_cols.join(",")
    );
    for (k, step) in trajectory.steps.iter().enumerate() {
        let q = step
            .q_act
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let u = step
            .u
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{k},{},{},{},{q},{},{},{},{},{},{u},{}",
            step.object.x,
            step.object.y,
            step.object.theta,
            step.d,
            step.contact_a.f_n,
            step.contact_a.f_t,
            step.contact_b.f_n,
            step.contact_b.f_t,
            step.psi
        );
    }
    write_atomic(path, &out)
}

/// Read a trajectory CSV back, reconstructing contact geometry from the
/// experiment configuration.
pub fn read_trajectory_csv(path: &Path, config: &ExperimentConfig) -> Result<Trajectory, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let model = config.finger_model().expect("validated config");
    let thumb = config.thumb_model().expect("validated config");
    let m = model.n_actuated();
    let expected_cols = 1 + 3 + m + 1 + 4 + m + 1;
    let mut steps = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(IoError::Malformed {
                path: path.display().to_string(),
                line: line_no + 1,
                message: format!("expected {expected_cols} columns, got {}", fields.len()),
            });
        }
        let parse = |idx: usize| -> Result<f64, IoError> {
            fields[idx].parse().map_err(|_| IoError::Malformed {
                path: path.display().to_string(),
                line: line_no + 1,
                message: format!("bad float `{}` in column {idx}", fields[idx]),
            })
        };
        let x = parse(1)?;
        let y = parse(2)?;
        let theta = parse(3)?;
        let q_act: Vec<f64> = (0..m).map(|a| parse(4 + a)).collect::<Result<_, _>>()?;
        let d = parse(4 + m)?;
        let f_n_a = parse(5 + m)?;
        let f_t_a = parse(6 + m)?;
        let f_n_b = parse(7 + m)?;
        let f_t_b = parse(8 + m)?;
        let u: Vec<f64> = (0..m).map(|a| parse(9 + m + a)).collect::<Result<_, _>>()?;
        let psi = parse(9 + 2 * m)?;

        let object = ObjectState::new(x, y, theta, config.object.radius, config.object.mass);
        let q_full = expand_coupling(&model, &q_act).expect("actuated vector");
        let sd = signed_distance(&model, &q_full.q, object.center(), object.radius, None)
            .expect("valid geometry");
        steps.push(TrajectoryStep {
            object,
            q_act,
            d,
            contact_a: ContactRecord {
                point: sd.point_on_finger,
                normal: sd.normal,
                f_n: f_n_a,
                f_t: f_t_a,
                mu: config.contacts.mu_finger,
                label: ContactLabel::A,
            },
            contact_b: ContactRecord {
                point: thumb.contact_point(d),
                normal: thumb.normal,
                f_n: f_n_b,
                f_t: f_t_b,
                mu: config.contacts.mu_thumb,
                label: ContactLabel::B,
            },
            u,
            psi,
        });
    }
    Ok(Trajectory {
        steps,
        report: SolveReport {
            converged: true,
            outer_iterations: 0,
            inner_iterations: 0,
            cost: 0.0,
            solver_eq_violation: 0.0,
            solver_ineq_violation: 0.0,
            max_constraint_violation: -1.0,
            history: Vec::new(),
            message: "loaded from CSV".into(),
        },
    })
}

/// Machine-readable plan report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanReport {
    pub converged: bool,
    pub cost: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_constraint_violation: f64,
    pub min_friction_margin: f64,
    pub max_attachment_error: f64,
    pub prismatic_travel: f64,
    pub message: String,
}

pub fn write_plan_report(
    path: &Path,
    trajectory: &Trajectory,
    validation: &ValidationReport,
) -> Result<(), IoError> {
    let report = PlanReport {
        converged: trajectory.report.converged,
        cost: trajectory.report.cost,
        outer_iterations: trajectory.report.outer_iterations,
        inner_iterations: trajectory.report.inner_iterations,
        max_constraint_violation: validation.max_violation,
        min_friction_margin: validation.min_friction_margin,
        max_attachment_error: validation.max_attachment_error,
        prismatic_travel: trajectory.prismatic_travel(),
        message: trajectory.report.message.clone(),
    };
    write_atomic(path, &(serde_json::to_string_pretty(&report)? + "\n"))
}

/// Ground-truth vs estimated rotation trace.
pub fn write_theta_trace(path: &Path, rows: &[TickRow]) -> Result<(), IoError> {
    let mut out = String::from("k,theta_true,theta_estimate\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.tick, r.theta_true, r.theta_estimate);
    }
    write_atomic(path, &out)
}

/// Contact force magnitudes: measured (tactile) and true (plant).
pub fn write_force_trace(path: &Path, rows: &[TickRow], f_des: f64) -> Result<(), IoError> {
    let mut out = String::from("k,f_measured,f_true_a,f_true_b,f_des\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.tick, r.f_measured, r.f_true_a, r.f_true_b, f_des
        );
    }
    write_atomic(path, &out)
}

/// Planned vs force-refined task reference.
pub fn write_reference_trace(path: &Path, rows: &[TickRow]) -> Result<(), IoError> {
    let mut out = String::from("k,p_ref_x,p_ref_y,p_ref_eff_x,p_ref_eff_y\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.tick, r.p_ref.x, r.p_ref.y, r.p_ref_effective.x, r.p_ref_effective.y
        );
    }
    write_atomic(path, &out)
}

/// Full controller trace.
pub fn write_control_trace(path: &Path, rows: &[TickRow]) -> Result<(), IoError> {
    let m = rows.first().map(|r| r.q_ref.len()).unwrap_or(0);
    let q_cols: Vec<String> = (0..m).map(|a| format!("q_ref{a}")).collect();
    let mut out = format!(
        "k,mode,p_ref_x,p_ref_y,p_ref_eff_x,p_ref_eff_y,{},f_measured,f_error\n",
        q_cols.join(",")
    );
    for r in rows {
        let q = r
            .q_ref
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{q},{},{}",
            r.tick,
            r.mode,
            r.p_ref.x,
            r.p_ref.y,
            r.p_ref_effective.x,
            r.p_ref_effective.y,
            r.f_measured,
            r.f_error
        );
    }
    write_atomic(path, &out)
}

/// Per-sensor magnitudes plus the contact and rotation estimates.
pub fn write_tactile_trace(
    path: &Path,
    rows: &[TickRow],
    finger_side: bool,
) -> Result<(), IoError> {
    let n = rows
        .first()
        .map(|r| {
            if finger_side {
                r.finger_magnitudes.len()
            } else {
                r.thumb_magnitudes.len()
            }
        })
        .unwrap_or(0);
    let s_cols: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    let mut out = format!("k,{},p_cp_x,p_cp_y,theta_estimate\n", s_cols.join(","));
    for r in rows {
        let (mags, cp) = if finger_side {
            (&r.finger_magnitudes, r.contact_estimate_ff)
        } else {
            (&r.thumb_magnitudes, r.contact_estimate_th)
        };
        let s = mags
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "{},{s},{},{},{}", r.tick, cp.x, cp.y, r.theta_estimate);
    }
    write_atomic(path, &out)
}

/// Rollout summary JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub mode: String,
    pub seed: u64,
    pub success: bool,
    pub final_theta_error: f64,
    pub steps_survived: usize,
    pub total_ticks: usize,
    pub theta_rmse: f64,
}

pub fn write_rollout_summary(path: &Path, result: &TrialResult) -> Result<(), IoError> {
    let summary = RolloutSummary {
        mode: result.mode.to_string(),
        seed: result.seed,
        success: result.success,
        final_theta_error: result.final_theta_error,
        steps_survived: result.steps_survived,
        total_ticks: result.total_ticks,
        theta_rmse: result.theta_rmse,
    };
    write_atomic(path, &(serde_json::to_string_pretty(&summary)? + "\n"))
}

/// Batch results, one row per trial.
pub fn write_batch_csv(path: &Path, results: &[TrialResult]) -> Result<(), IoError> {
    let mut out = String::from("seed,mode,success,theta_error,steps_survived,total_ticks\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.seed, r.mode, r.success, r.final_theta_error, r.steps_survived, r.total_ticks
        );
    }
    write_atomic(path, &out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub trials_per_mode: usize,
    pub summaries: Vec<BatchSummary>,
}

pub fn write_batch_report(path: &Path, report: &BatchReport) -> Result<(), IoError> {
    write_atomic(path, &(serde_json::to_string_pretty(report)? + "\n"))
}

/// All rollout trace files for one trial, under `dir`.
pub fn write_rollout_traces(
    dir: &Path,
    result: &TrialResult,
    f_des: f64,
) -> Result<(), IoError> {
    write_theta_trace(&dir.join("theta_trace.csv"), &result.rows)?;
    write_force_trace(&dir.join("force_trace.csv"), &result.rows, f_des)?;
    write_reference_trace(&dir.join("reference_trace.csv"), &result.rows)?;
    write_control_trace(&dir.join("control_trace.csv"), &result.rows)?;
    write_tactile_trace(&dir.join("tactile_finger.csv"), &result.rows, true)?;
    write_tactile_trace(&dir.join("tactile_thumb.csv"), &result.rows, false)?;
    write_rollout_summary(&dir.join("rollout_summary.json"), result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajopt::build_problem;

    #[test]
    fn trajectory_csv_round_trip() {
        let config = ExperimentConfig::nominal();
        let nlp = build_problem(&config).unwrap();
        let z = nlp.initial_guess();
        let traj = nlp.extract(
            &z,
            SolveReport {
                converged: true,
                outer_iterations: 1,
                inner_iterations: 1,
                cost: 0.0,
                solver_eq_violation: 0.0,
                solver_ineq_violation: 0.0,
                max_constraint_violation: -1.0,
                history: Vec::new(),
                message: String::new(),
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let loaded = read_trajectory_csv(&path, &config).unwrap();
        assert_eq!(loaded.len(), traj.len());
        for (a, b) in traj.steps.iter().zip(&loaded.steps) {
            assert_eq!(a.object.x, b.object.x);
            assert_eq!(a.object.theta, b.object.theta);
            assert_eq!(a.q_act, b.q_act);
            assert_eq!(a.d, b.d);
            assert_eq!(a.contact_a.f_n, b.contact_a.f_n);
            assert!((a.contact_a.point - b.contact_a.point).norm() <= 1e-12);
        }
    }

    #[test]
    fn headers_name_every_column() {
        let config = ExperimentConfig::nominal();
        let nlp = build_problem(&config).unwrap();
        let z = nlp.initial_guess();
        let traj = nlp.extract(
            &z,
            SolveReport {
                converged: true,
                outer_iterations: 0,
                inner_iterations: 0,
                cost: 0.0,
                solver_eq_violation: 0.0,
                solver_ineq_violation: 0.0,
                max_constraint_violation: -1.0,
                history: Vec::new(),
                message: String::new(),
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        let cols = header.split(',').count();
        let data_cols = text.lines().nth(1).unwrap().split(',').count();
        assert_eq!(cols, data_cols);
        assert!(header.starts_with("k,x,y,theta"));
    }
}
