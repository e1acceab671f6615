//! Quasi-static compliant plant. Each step takes a commanded actuated
//! joint vector, resolves tendon deflection against the contact force,
//! settles the object along the thumb so the surfaces do not overlap,
//! solves the remaining quasi-static contact forces, applies the Coulomb
//! cone checks (slip at the thumb releases the no-slip rotation tie), and
//! emits tactile frames from both contacts.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{ContactLabel, ContactRecord, ObjectState};
use crate::control::ComplianceModel;
use crate::kinematics::{
    expand_coupling, forward_kinematics, point_jacobian_unchecked, signed_distance,
    ClosestPointResult, FingerModel, ThumbModel,
};
use crate::tactile::{simulate_readings, SensorLayout, TactileFrame};
use crate::{cross2, Vec2};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("contact resolution did not converge within {0} iterations")]
    NoFixedPoint(usize),
    #[error("kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error("tactile: {0}")]
    Tactile(#[from] crate::tactile::TactileError),
}

/// Physical parameters of one trial's plant (possibly perturbed).
#[derive(Debug, Clone)]
pub struct PlantParams {
    pub model: FingerModel,
    pub thumb: ThumbModel,
    pub radius: f64,
    pub mass: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub gravity: f64,
    pub compliance: ComplianceModel,
    /// Gap beyond which the grasp counts as lost.
    pub drop_gap: f64,
    /// Normal force at the finger below which the grasp counts as lost.
    pub min_normal_force: f64,
    /// Sensor layouts; the finger layout is recomputed per step from the
    /// deflected joints (window stored as arc spans in the config).
    pub thumb_layout: SensorLayout,
    pub finger_span: (f64, f64),
    pub finger_sensor_count: usize,
    pub sigma_finger: f64,
    pub sigma_thumb: f64,
    /// Sensor units per newton.
    pub gain: f64,
    /// Noise standard deviation as a fraction of the peak reading.
    pub noise_frac: f64,
}

/// Full plant state between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub object: ObjectState,
    /// Prismatic coordinate of contact B.
    pub d: f64,
    /// Actual (post-deflection) full joint vector.
    pub q_actual: Vec<f64>,
    pub dq_actual: Vec<f64>,
    pub contact_a: ContactRecord,
    pub contact_b: ContactRecord,
    /// Signed gap between finger and object, post-deflection.
    pub gap: f64,
    pub grasp_alive: bool,
    /// Accumulated thumb sliding distance.
    pub slide_distance: f64,
    /// Whether the last step rolled (thumb cone held).
    pub rolled: bool,
}

/// Per-step sensor output.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub finger_frame: TactileFrame,
    pub thumb_frame: TactileFrame,
    /// True force vector at the finger contact.
    pub force_a: Vec2,
    pub force_b: Vec2,
}

const MAX_FIXED_POINT_ITERS: usize = 100;
/// Floor on the task compliance so a rigid plant stays solvable.
const COMPLIANCE_FLOOR: f64 = 1e-7;
/// Cap on object travel per control step.
const MAX_TRAVEL_PER_STEP: f64 = 0.004;

impl PlantState {
    /// Initial state: object resting on the thumb at coordinate `d`, the
    /// finger at the commanded joints with no deflection yet.
    pub fn initial(params: &PlantParams, d: f64, theta: f64, q_cmd_act: &[f64]) -> Self {
        let center = params.thumb.object_center(d, params.radius);
        let q_full = expand_coupling(&params.model, q_cmd_act)
            .expect("valid command")
            .q;
        let object = ObjectState::new(center.x, center.y, theta, params.radius, params.mass);
        let n = params.thumb.normal;
        Self {
            object,
            d,
            dq_actual: vec![0.0; q_full.len()],
            q_actual: q_full,
            contact_a: ContactRecord {
                point: center,
                normal: -n,
                f_n: 0.0,
                f_t: 0.0,
                mu: params.mu_a,
                label: ContactLabel::A,
            },
            contact_b: ContactRecord {
                point: params.thumb.contact_point(d),
                normal: n,
                f_n: params.mass * params.gravity,
                f_t: 0.0,
                mu: params.mu_b,
                label: ContactLabel::B,
            },
            gap: 0.0,
            grasp_alive: true,
            slide_distance: 0.0,
            rolled: false,
        }
    }
}

/// Elastic joint deflection under an external torque: the task-space
/// compliance mapped through the squared contact lever arms, applied per
/// joint, so the surface gives way by `C * f_n` along the contact normal.
pub fn deflect(
    q_cmd_full: &[f64],
    tau_ext: &[f64],
    compliance_task: f64,
    lever_sq_sum: f64,
) -> Vec<f64> {
    let c_joint = if lever_sq_sum > 1e-12 {
        compliance_task / lever_sq_sum
    } else {
        0.0
    };
    q_cmd_full
        .iter()
        .zip(tau_ext)
        .map(|(q, t)| q + c_joint * t)
        .collect()
}

/// Advance the plant one control step under commanded actuated joints.
pub fn resolve_step(
    state: &PlantState,
    q_cmd_act: &[f64],
    params: &PlantParams,
    dt: f64,
    step_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(PlantState, StepOutput), PlantError> {
    let q_cmd_full = expand_coupling(&params.model, q_cmd_act)?.q;
    let theta_pose: f64 = q_cmd_full[0] + q_cmd_full[1];
    let c_task = params
        .compliance
        .compliance_of(theta_pose)
        .max(COMPLIANCE_FLOOR);

    let mut d = state.d;
    let mut f_na = state.contact_a.f_n;
    let mut contact = probe(params, &q_cmd_full, d, state)?;
    let mut q_act_full = q_cmd_full.clone();

    // Fixed point over (deflection, object travel, squeeze force). The
    // damping tightens if the loop has not settled quickly.
    let mut converged = false;
    let d_lo = state.d - MAX_TRAVEL_PER_STEP;
    let d_hi = state.d + MAX_TRAVEL_PER_STEP;
    for iter in 0..MAX_FIXED_POINT_ITERS {
        // Deflect the commanded joints under the current contact reaction.
        let (tau_ext, lever_sq) = contact_reaction(params, &q_cmd_full, &contact, f_na);
        q_act_full = deflect(&q_cmd_full, &tau_ext, c_task, lever_sq);

        // Settle the object: slide `d` until the deflected finger no
        // longer overlaps it. The push escapes the object along the
        // opening side of the wedge; a bracketed bisection stays robust
        // across closest-link regime changes.
        let mut cp = probe(params, &q_act_full, d, state)?;
        let mut d_new = d;
        if cp.psi < -1e-12 {
            let tangent = params.thumb.tangent();
            let slope = cp.normal.dot(&tangent);
            if slope.abs() >= 1e-4 {
                let bound = if slope > 0.0 { d_hi } else { d_lo };
                let psi_bound = probe(params, &q_act_full, bound, state)?.psi;
                if psi_bound <= 0.0 {
                    // No room to fully escape this tick; travel the cap.
                    d_new = bound;
                } else {
                    // Bisect for the touching coordinate.
                    let mut inside = d;
                    let mut outside = bound;
                    for _ in 0..50 {
                        let mid = 0.5 * (inside + outside);
                        let psi_mid = probe(params, &q_act_full, mid, state)?.psi;
                        if psi_mid < 0.0 {
                            inside = mid;
                        } else {
                            outside = mid;
                        }
                        if (outside - inside).abs() <= 1e-13 {
                            break;
                        }
                    }
                    d_new = outside;
                }
                cp = probe(params, &q_act_full, d_new, state)?;
            }
        }

        // Squeeze force from the commanded penetration into the settled
        // object, released through the task compliance.
        let cmd_probe = probe(params, &q_cmd_full, d_new, state)?;
        let pen = (-cmd_probe.psi).max(0.0);
        let f_target = pen / c_task;

        let beta = if iter < 30 {
            0.7
        } else if iter < 60 {
            0.3
        } else {
            0.1
        };
        let delta_f = f_target - f_na;
        let delta_d = d_new - d;
        f_na += beta * delta_f;
        d = d_new;
        contact = cp;
        if delta_f.abs() <= 1e-9 * (1.0 + f_na.abs()) && delta_d.abs() <= 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PlantError::NoFixedPoint(MAX_FIXED_POINT_ITERS));
    }
    if f_na < 0.0 {
        f_na = 0.0;
    }

    // Remaining force unknowns from the quasi-static balance.
    let center = params.thumb.object_center(d, params.radius);
    let p_b = params.thumb.contact_point(d);
    let n_b = params.thumb.normal;
    let t_b = crate::perp(n_b);
    let n_a = contact.normal;
    let t_a = crate::perp(n_a);
    let p_a = contact.point_on_finger;
    let mg = params.mass * params.gravity;

    // Solve [t_a n_b t_b; moments] * [f_ta f_nb f_tb] = rhs.
    let mut m = nalgebra::Matrix3::zeros();
    m[(0, 0)] = t_a.x;
    m[(1, 0)] = t_a.y;
    m[(2, 0)] = cross2(p_a - center, t_a);
    m[(0, 1)] = n_b.x;
    m[(1, 1)] = n_b.y;
    m[(2, 1)] = cross2(p_b - center, n_b);
    m[(0, 2)] = t_b.x;
    m[(1, 2)] = t_b.y;
    m[(2, 2)] = cross2(p_b - center, t_b);
    let rhs = nalgebra::Vector3::new(
        -(n_a.x * f_na),
        -(n_a.y * f_na) + mg,
        -cross2(p_a - center, n_a) * f_na,
    );
    // Minimum-norm regularized solve.
    let mtm = m.transpose() * m + nalgebra::Matrix3::identity() * 1e-9;
    let sol = mtm
        .lu()
        .solve(&(m.transpose() * rhs))
        .unwrap_or_else(nalgebra::Vector3::zeros);
    let mut f_ta = sol[0];
    let mut f_nb = sol[1];
    let mut f_tb = sol[2];
    if f_nb < 0.0 {
        f_nb = 0.0;
    }

    // Cone checks. A violated finger cone saturates and re-balances the
    // thumb force; a violated thumb cone saturates and releases the
    // no-slip rotation tie (slip step).
    if f_ta.abs() > params.mu_a * f_na {
        f_ta = (params.mu_a * f_na).copysign(f_ta);
        let residual = Vec2::new(0.0, mg) - n_a * f_na - t_a * f_ta;
        f_nb = residual.dot(&n_b);
        f_tb = residual.dot(&t_b);
        if f_nb < 0.0 {
            f_nb = 0.0;
        }
    }
    let mut rolled = true;
    if f_tb.abs() > params.mu_b * f_nb {
        f_tb = (params.mu_b * f_nb).copysign(f_tb);
        rolled = false;
    }

    // Roll update ties rotation to contact travel; slip leaves rotation.
    let travel = d - state.d;
    let theta = if rolled {
        state.object.theta + travel / params.radius
    } else {
        state.object.theta
    };
    let slide_distance = state.slide_distance + if rolled { 0.0 } else { travel.abs() };

    let gap = contact.psi.max(0.0);
    let grasp_alive =
        state.grasp_alive && f_na >= params.min_normal_force && gap <= params.drop_gap;

    let object = ObjectState::new(center.x, center.y, theta, params.radius, params.mass);
    let dq_actual: Vec<f64> = q_act_full
        .iter()
        .zip(&state.q_actual)
        .map(|(a, b)| (a - b) / dt)
        .collect();

    // Tactile frames from both contacts.
    let force_a_vec = n_a * f_na + t_a * f_ta;
    let force_b_vec = n_b * f_nb + t_b * f_tb;
    let finger_layout = finger_layout(params, &q_act_full)?;
    let peak_a = params.gain * force_a_vec.norm();
    let finger_frame = simulate_readings(
        &finger_layout,
        p_a,
        peak_a,
        params.sigma_finger,
        params.noise_frac * peak_a,
        step_index,
        rng,
    )?;
    let peak_b = params.gain * force_b_vec.norm();
    let thumb_frame = simulate_readings(
        &params.thumb_layout,
        p_b,
        peak_b,
        params.sigma_thumb,
        params.noise_frac * peak_b,
        step_index,
        rng,
    )?;

    let next = PlantState {
        object,
        d,
        q_actual: q_act_full,
        dq_actual,
        contact_a: ContactRecord {
            point: p_a,
            normal: n_a,
            f_n: f_na,
            f_t: f_ta,
            mu: params.mu_a,
            label: ContactLabel::A,
        },
        contact_b: ContactRecord {
            point: p_b,
            normal: n_b,
            f_n: f_nb,
            f_t: f_tb,
            mu: params.mu_b,
            label: ContactLabel::B,
        },
        gap: contact.psi,
        grasp_alive,
        slide_distance,
        rolled,
    };
    Ok((
        next,
        StepOutput {
            finger_frame,
            thumb_frame,
            force_a: force_a_vec,
            force_b: force_b_vec,
        },
    ))
}

/// Closest-point query against the object at prismatic coordinate `d`.
fn probe(
    params: &PlantParams,
    q_full: &[f64],
    d: f64,
    state: &PlantState,
) -> Result<ClosestPointResult, PlantError> {
    let center = params.thumb.object_center(d, params.radius);
    Ok(signed_distance(
        &params.model,
        q_full,
        center,
        params.radius,
        Some(state.contact_a.normal),
    )?)
}

/// Reaction torque of the current squeeze on the finger joints and the
/// squared lever-arm sum along the contact normal.
fn contact_reaction(
    params: &PlantParams,
    q_full: &[f64],
    contact: &ClosestPointResult,
    f_na: f64,
) -> (Vec<f64>, f64) {
    let pose = forward_kinematics(&params.model, q_full).expect("valid joints");
    let jac = point_jacobian_unchecked(&pose, contact.link_index, contact.point_on_finger);
    let n = contact.normal;
    // Reaction on the finger opposes the force applied to the object.
    let reaction = -(n * f_na);
    let n_joints = params.model.n_joints();
    let mut tau = vec![0.0; n_joints];
    let mut lever_sq = 0.0;
    for j in 0..n_joints {
        let col = Vec2::new(jac[(0, j)], jac[(1, j)]);
        tau[j] = col.dot(&reaction);
        let lever_n = col.dot(&n);
        lever_sq += lever_n * lever_n;
    }
    (tau, lever_sq)
}

/// Finger sensor layout at the current joints.
pub fn finger_layout(params: &PlantParams, q_full: &[f64]) -> Result<SensorLayout, PlantError> {
    let pose = forward_kinematics(&params.model, q_full)?;
    let mut joint_arcs = vec![0.0];
    for &len in &params.model.link_lengths {
        joint_arcs.push(joint_arcs.last().unwrap() + len);
    }
    let count = params.finger_sensor_count;
    let mut positions = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for i in 0..count {
        let s = params.finger_span.0
            + (params.finger_span.1 - params.finger_span.0) * i as f64 / (count - 1) as f64;
        let s = s.clamp(0.0, params.model.reach() - 1e-12);
        let link = joint_arcs
            .windows(2)
            .position(|w| s >= w[0] && s < w[1])
            .unwrap_or(params.model.n_joints() - 1);
        let t = (s - joint_arcs[link]) / params.model.link_lengths[link];
        let (a, b) = pose.link_segment(link);
        positions.push(a + (b - a) * t);
        let dir = (b - a) / (b - a).norm();
        normals.push(crate::perp(dir));
    }
    Ok(SensorLayout::new(positions, normals)?)
}
