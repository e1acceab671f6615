//! Contact-implicit trajectory optimization for the rolling motion.
//!
//! Direct transcription over `N` knots with per-knot object pose, actuated
//! joint angles, prismatic contact coordinate, and contact forces, plus
//! joint torques between knots. Equality constraints impose quasi-static
//! force/moment balance, the thumb attachment geometry, both rolling
//! constraints, and torque-force consistency; inequalities impose the
//! friction cones, nonnegative normal forces, joint limits, the
//! no-penetration slack, and the prismatic range. The squared contact gap
//! and the goal-state error form the cost.
//!
//! Solved by an augmented-Lagrangian method with an L-BFGS inner loop;
//! see [`solver`].

mod eval;
mod geometry;
mod init;
mod solver;
mod validate;

pub use eval::{Evaluation, NlpLayout, Triplet};
pub use solver::{solve, SolveReport, SolverSettings};
pub use validate::{validate_trajectory, ValidationReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::contact::{ContactLabel, ContactRecord, ObjectState};
use crate::kinematics::{FingerModel, ThumbModel};

#[derive(Debug, Error)]
pub enum TrajoptError {
    #[error("invalid problem: {0}")]
    BadProblem(String),
    #[error("invalid variable vector: {0}")]
    BadVariableVector(String),
    #[error("kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

/// The assembled nonlinear program.
#[derive(Debug, Clone)]
pub struct RollingNlp {
    pub layout: NlpLayout,
    pub model: FingerModel,
    pub(crate) coupling: DMatrix<f64>,
    pub thumb: ThumbModel,
    pub radius: f64,
    pub mass: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub gravity: f64,
    /// Diagonal of the state weight matrix Q.
    pub q_weights: [f64; 3],
    /// Input weight R = r_scale * I.
    pub r_scale: f64,
    /// Weight on the squared contact gap.
    pub contact_weight: f64,
    pub x_initial: [f64; 3],
    pub x_goal: [f64; 3],
    /// Initial actuated joint angles (pinned at the first knot).
    pub q_initial: Vec<f64>,
    /// Lower bound on the signed gap (no-penetration slack), nonpositive.
    pub min_gap: f64,
    pub d_range: (f64, f64),
    /// Squeeze force used by the initial guess.
    pub initial_squeeze: f64,
    pub settings: SolverSettings,
}

/// One knot of a solved trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub object: ObjectState,
    /// Actuated joint angles.
    pub q_act: Vec<f64>,
    /// Prismatic contact coordinate on the thumb.
    pub d: f64,
    pub contact_a: ContactRecord,
    pub contact_b: ContactRecord,
    /// Joint torques toward the next knot; zeros at the last knot.
    pub u: Vec<f64>,
    /// Signed finger-object gap at this knot.
    pub psi: f64,
}

/// Planned rolling trajectory plus the solver and validation evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub report: SolveReport,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Net prismatic travel `d_last - d_first`.
    pub fn prismatic_travel(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => b.d - a.d,
            _ => 0.0,
        }
    }
}

/// Assemble the NLP from an experiment configuration.
pub fn build_problem(config: &ExperimentConfig) -> Result<RollingNlp, TrajoptError> {
    let t = &config.trajopt;
    if t.n_steps < 2 {
        return Err(TrajoptError::BadProblem(format!(
            "horizon must be at least 2 knots, got {}",
            t.n_steps
        )));
    }
    // Q must be positive semidefinite, R positive definite; both are
    // diagonal here so the eigenvalue check is a sign check.
    if t.q_weights.iter().any(|&w| w < 0.0) {
        return Err(TrajoptError::BadProblem(
            "state weights must be nonnegative".into(),
        ));
    }
    if !(t.r_scale > 0.0) {
        return Err(TrajoptError::BadProblem(
            "input weight must be positive".into(),
        ));
    }
    if t.min_gap > 0.0 {
        return Err(TrajoptError::BadProblem(
            "no-penetration slack must be nonpositive".into(),
        ));
    }
    let model = config.finger_model()?;
    let thumb = config.thumb_model()?;
    let m_act = model.n_actuated();
    if config.finger.q_initial.len() != m_act {
        return Err(TrajoptError::BadProblem(format!(
            "q_initial has {} entries, expected {m_act}",
            config.finger.q_initial.len()
        )));
    }
    Ok(RollingNlp {
        layout: NlpLayout {
            n_steps: t.n_steps,
            m_act,
        },
        coupling: model.coupling_matrix(),
        model,
        thumb,
        radius: config.object.radius,
        mass: config.object.mass,
        mu_a: config.contacts.mu_finger,
        mu_b: config.contacts.mu_thumb,
        gravity: config.world.gravity,
        q_weights: t.q_weights,
        r_scale: t.r_scale,
        contact_weight: t.contact_weight,
        x_initial: t.x_initial,
        x_goal: t.x_goal,
        q_initial: config.finger.q_initial.clone(),
        min_gap: t.min_gap,
        d_range: (thumb_range(&config.thumb).0, thumb_range(&config.thumb).1),
        initial_squeeze: t.initial_squeeze,
        settings: SolverSettings {
            constraint_tolerance: t.constraint_tolerance,
            max_outer_iterations: t.max_outer_iterations,
            max_inner_iterations: t.max_inner_iterations,
            initial_penalty: t.initial_penalty,
            ..SolverSettings::default()
        },
    })
}

fn thumb_range(thumb: &crate::config::ThumbConfig) -> (f64, f64) {
    (thumb.d_range[0], thumb.d_range[1])
}

impl RollingNlp {
    /// Default starting point; see [`init`].
    pub fn initial_guess(&self) -> Vec<f64> {
        init::initial_guess(self)
    }

    /// Extract the trajectory encoded in a variable vector.
    pub fn extract(&self, z: &[f64], report: SolveReport) -> Trajectory {
        let lay = &self.layout;
        let m = lay.m_act;
        let mut steps = Vec::with_capacity(lay.n_steps);
        for k in 0..lay.n_steps {
            let geo = self.step_geometry(z, k);
            let d = z[lay.d(k)];
            let f = &z[lay.f(k)..lay.f(k) + 4];
            let u = if k < lay.n_steps - 1 {
                z[lay.u(k)..lay.u(k) + m].to_vec()
            } else {
                vec![0.0; m]
            };
            steps.push(TrajectoryStep {
                object: ObjectState::new(
                    z[lay.x(k)],
                    z[lay.x(k) + 1],
                    z[lay.x(k) + 2],
                    self.radius,
                    self.mass,
                ),
                q_act: z[lay.q(k)..lay.q(k) + m].to_vec(),
                d,
                contact_a: ContactRecord {
                    point: geo.p,
                    normal: geo.n,
                    f_n: f[0],
                    f_t: f[1],
                    mu: self.mu_a,
                    label: ContactLabel::A,
                },
                contact_b: ContactRecord {
                    point: self.thumb.contact_point(d),
                    normal: self.thumb.normal,
                    f_n: f[2],
                    f_t: f[3],
                    mu: self.mu_b,
                    label: ContactLabel::B,
                },
                u,
                psi: geo.psi,
            });
        }
        Trajectory { steps, report }
    }
}
