//! Independent trajectory validation. Recomputes every residual through
//! `contact` and `kinematics` — none of the transcription's evaluation
//! code — so solver output is checked by a genuinely separate path.

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::config::ExperimentConfig;
use crate::contact::{
    equilibrium_residual, friction_margin, object_rolling_residual, prismatic_rolling_residual,
    RollingPairStep,
};
use crate::kinematics::{expand_coupling, signed_distance};

/// Per-step residuals and the headline maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub steps: usize,
    pub max_force_residual: f64,
    pub max_moment_residual: f64,
    pub max_prismatic_residual: f64,
    pub max_rolling_residual: f64,
    /// Distance between the stored contact point A and the recomputed
    /// closest point, plus the thumb attachment error at B.
    pub max_attachment_error: f64,
    pub min_friction_margin: f64,
    /// Signed finger-object gap per step, recomputed.
    pub psi: Vec<f64>,
    /// Largest violation across the equality-style residuals.
    pub max_violation: f64,
}

impl ValidationReport {
    pub fn empty() -> Self {
        Self {
            steps: 0,
            max_force_residual: 0.0,
            max_moment_residual: 0.0,
            max_prismatic_residual: 0.0,
            max_rolling_residual: 0.0,
            max_attachment_error: 0.0,
            min_friction_margin: f64::INFINITY,
            psi: Vec::new(),
            max_violation: 0.0,
        }
    }
}

/// Recompute every constraint residual of a trajectory.
pub fn validate_trajectory(trajectory: &Trajectory, config: &ExperimentConfig) -> ValidationReport {
    if trajectory.is_empty() {
        return ValidationReport::empty();
    }
    let model = config.finger_model().expect("validated config");
    let thumb = config.thumb_model().expect("validated config");
    let tangent = thumb.tangent();
    let gravity = config.world.gravity;

    let mut report = ValidationReport::empty();
    report.steps = trajectory.len();

    for (k, step) in trajectory.steps.iter().enumerate() {
        let contacts = [step.contact_a, step.contact_b];
        let residual = equilibrium_residual(&contacts, &step.object, gravity)
            .expect("unit normals in trajectory");
        report.max_force_residual = report
            .max_force_residual
            .max(residual[0].abs())
            .max(residual[1].abs());
        report.max_moment_residual = report.max_moment_residual.max(residual[2].abs());

        for c in &contacts {
            match friction_margin(c) {
                Ok(margin) => {
                    report.min_friction_margin = report.min_friction_margin.min(margin)
                }
                Err(_) => report.min_friction_margin = f64::NEG_INFINITY,
            }
        }

        // Contact A against an independent closest-point query.
        let q_full = expand_coupling(&model, &step.q_act).expect("actuated vector");
        let sd = signed_distance(
            &model,
            &q_full.q,
            step.object.center(),
            step.object.radius,
            None,
        )
        .expect("valid query");
        report.psi.push(sd.psi);
        let attach_a = (sd.point_on_finger - step.contact_a.point).norm();
        // Contact B against the thumb attachment geometry.
        let attach_b = (thumb.object_center(step.d, step.object.radius)
            - step.object.center())
        .norm();
        report.max_attachment_error = report.max_attachment_error.max(attach_a).max(attach_b);

        if k >= 1 {
            let prev = &trajectory.steps[k - 1];
            let pair = RollingPairStep {
                d_prev: prev.d,
                d_curr: step.d,
                theta_prev: prev.object.theta,
                theta_curr: step.object.theta,
                c_prev: prev.object.center(),
                c_curr: step.object.center(),
            };
            report.max_prismatic_residual = report
                .max_prismatic_residual
                .max(prismatic_rolling_residual(&pair, step.object.radius).abs());
            report.max_rolling_residual = report
                .max_rolling_residual
                .max(object_rolling_residual(&pair, step.object.radius, tangent).abs());
        }
    }

    report.max_violation = report
        .max_force_residual
        .max(report.max_moment_residual)
        .max(report.max_prismatic_residual)
        .max(report.max_rolling_residual);
    report
}
