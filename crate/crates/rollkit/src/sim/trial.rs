//! Closed-loop trials: the cascade controller driving the compliant plant
//! along a planned trajectory, open-loop or with the tactile force loop,
//! plus the seeded Monte-Carlo batch runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plant::{resolve_step, PlantError, PlantParams, PlantState};
use crate::config::ExperimentConfig;
use crate::control::{
    compose_reference, mode_switch, position_loop, velocity_measure, ControlMode, ForceLoop,
    GainSet, PlanarPid,
};
use crate::kinematics::{expand_coupling, forward_kinematics};
use crate::tactile::{estimate_from_frame, SensorLayout};
use crate::trajopt::Trajectory;
use crate::Vec2;

/// Ticks spent establishing the initial grasp before the plan starts;
/// drop detection and the mode switch are disarmed while settling.
const SETTLE_TICKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialMode {
    OpenLoop,
    Force,
}

impl std::fmt::Display for TrialMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialMode::OpenLoop => write!(f, "open-loop"),
            TrialMode::Force => write!(f, "force"),
        }
    }
}

impl std::str::FromStr for TrialMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open-loop" | "openloop" | "open_loop" => Ok(TrialMode::OpenLoop),
            "force" => Ok(TrialMode::Force),
            other => Err(format!("unknown mode `{other}` (open-loop | force)")),
        }
    }
}

/// One control tick of trace data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: usize,
    pub mode: ControlMode,
    pub p_ref: Vec2,
    pub p_ref_effective: Vec2,
    pub q_ref: Vec<f64>,
    /// Measured (tactile) force magnitude, newtons.
    pub f_measured: f64,
    /// Magnitude of the force-loop error.
    pub f_error: f64,
    pub theta_true: f64,
    pub theta_estimate: f64,
    /// True contact force magnitudes from the plant.
    pub f_true_a: f64,
    pub f_true_b: f64,
    pub d: f64,
    pub gap: f64,
    pub grasp_alive: bool,
    pub finger_magnitudes: Vec<f64>,
    pub thumb_magnitudes: Vec<f64>,
    pub contact_estimate_ff: Vec2,
    pub contact_estimate_th: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub mode: TrialMode,
    pub seed: u64,
    pub success: bool,
    pub final_theta_error: f64,
    /// Control ticks survived before the grasp was lost (or total ticks).
    pub steps_survived: usize,
    pub total_ticks: usize,
    pub theta_rmse: f64,
    pub rows: Vec<TickRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrialError {
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
    #[error("plan is empty")]
    EmptyPlan,
}

/// Perturbed plant parameters plus the noise stream for one trial.
fn perturbed_params(
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlantParams, TrialError> {
    let model = config.finger_model()?;
    let thumb = config.thumb_model()?;
    let s = &config.sim;
    let scale = |rng: &mut ChaCha8Rng, frac: f64| {
        if frac > 0.0 {
            1.0 + rng.random_range(-frac..frac)
        } else {
            1.0
        }
    };
    let mu_scale = scale(rng, s.perturb_mu);
    let c_scale = scale(rng, s.perturb_c_peak);
    let r_scale = scale(rng, s.perturb_radius);
    let mut compliance = config.compliance_model();
    compliance.c_peak = (compliance.c_peak * c_scale).max(compliance.c_min);
    let thumb_layout = config.thumb_layout(&thumb);
    Ok(PlantParams {
        model,
        thumb,
        radius: config.object.radius * r_scale,
        mass: config.object.mass,
        mu_a: config.contacts.mu_finger * mu_scale,
        mu_b: config.contacts.mu_thumb * mu_scale,
        gravity: config.world.gravity,
        compliance,
        drop_gap: config.sim.drop_gap,
        min_normal_force: config.sim.min_normal_force,
        thumb_layout,
        finger_span: (
            config.sensors.finger.span[0],
            config.sensors.finger.span[1],
        ),
        finger_sensor_count: config.sensors.finger.count,
        sigma_finger: config.sensors.finger.sigma,
        sigma_thumb: config.sensors.thumb.sigma,
        gain: config.sensors.gain,
        noise_frac: config.sim.sensor_noise,
    })
}

/// Task references per plan knot: planned fingertip plus the press offset
/// along the planned contact normal.
fn knot_references(
    config: &ExperimentConfig,
    plan: &Trajectory,
) -> Result<Vec<Vec2>, TrialError> {
    let model = config.finger_model()?;
    let press = config.control.press_depth;
    let mut refs = Vec::with_capacity(plan.len());
    for step in &plan.steps {
        let q_full = expand_coupling(&model, &step.q_act)?.q;
        let tip = forward_kinematics(&model, &q_full)?.fingertip();
        refs.push(tip + step.contact_a.normal * press);
    }
    Ok(refs)
}

fn derive_seed(master: u64, index: u64, mode: TrialMode) -> u64 {
    let tag = match mode {
        TrialMode::OpenLoop => 0x6f70656eu64,
        TrialMode::Force => 0x666f7263u64,
    };
    master
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9))
        ^ tag
}

/// Run one seeded closed-loop trial of a validated plan.
pub fn run_trial(
    config: &ExperimentConfig,
    plan: &Trajectory,
    mode: TrialMode,
    seed: u64,
) -> Result<TrialResult, TrialError> {
    if plan.is_empty() {
        return Err(TrialError::EmptyPlan);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = perturbed_params(config, &mut rng)?;
    let gains: GainSet = config.gain_set();
    let model = config.finger_model()?;
    let coupling = model.coupling_matrix();
    let refs = knot_references(config, plan)?;
    let substeps = config.control.substeps;
    let total_ticks = (plan.len() - 1) * substeps + 1;
    let theta_goal = config.trajopt.x_goal[2];

    // Initial plant state: object at the planned start, finger at the
    // planned initial joints.
    let d0 = plan.steps[0].d;
    let theta0 = plan.steps[0].object.theta;
    let mut state = PlantState::initial(&params, d0, theta0, &plan.steps[0].q_act);

    let mut position_pid = PlanarPid::default();
    let mut velocity_pid = PlanarPid::default();
    let mut force_loop = ForceLoop::default();
    let mut control_mode = ControlMode::OpenLoop;

    let act_idx = model.actuated_indices();
    let thumb_layout = &params.thumb_layout;

    let mut rows: Vec<TickRow> = Vec::with_capacity(total_ticks);
    let mut theta_est_origin: Option<f64> = None;
    let mut last_theta_est = 0.0;
    let mut last_cp_ff = Vec2::zeros();
    let mut last_cp_th = Vec2::zeros();
    let mut steps_survived = total_ticks;
    let mut sq_err_sum = 0.0;
    let mut est_count = 0usize;

    let mut output = None;
    for tick in 0..SETTLE_TICKS + total_ticks {
        let settling = tick < SETTLE_TICKS;
        let main_tick = tick.saturating_sub(SETTLE_TICKS);

        // Interpolated reference.
        let p_ref = if settling {
            refs[0]
        } else {
            let knot = main_tick / substeps;
            let frac = (main_tick % substeps) as f64 / substeps as f64;
            if knot + 1 < refs.len() {
                refs[knot] + (refs[knot + 1] - refs[knot]) * frac
            } else {
                *refs.last().unwrap()
            }
        };

        // Tactile processing from the previous step's frames.
        let (f_measured, cp_ff, cp_th) = match &output {
            Some(out) => {
                let out: &super::plant::StepOutput = out;
                let f_m = out.finger_frame.mean_magnitude() * config.sensors.newtons_per_unit;
                let finger_layout = super::plant::finger_layout(&params, &state.q_actual)?;
                let ff = estimate_from_frame(
                    &finger_layout,
                    &out.finger_frame,
                    config.sensors.threshold,
                    config.sensors.neighbors,
                )
                .ok()
                .flatten()
                .map(|e| e.p_cp)
                .unwrap_or(last_cp_ff);
                let th = estimate_from_frame(
                    thumb_layout,
                    &out.thumb_frame,
                    config.sensors.threshold,
                    config.sensors.neighbors,
                )
                .ok()
                .flatten()
                .map(|e| e.p_cp)
                .unwrap_or(last_cp_th);
                (f_m, ff, th)
            }
            None => (0.0, state.contact_a.point, state.contact_b.point),
        };
        last_cp_ff = cp_ff;
        last_cp_th = cp_th;

        // Rotation estimate from the thumb-side contact travel.
        let arc = arc_on(thumb_layout, cp_th);
        let theta_est = match theta_est_origin {
            Some(origin) => (arc - origin) / config.object.radius + theta0,
            None => {
                if !settling {
                    theta_est_origin = Some(arc);
                }
                theta0
            }
        };
        last_theta_est = theta_est;

        // Mode switch, armed after settling, force trials only.
        if !settling && mode == TrialMode::Force {
            control_mode = mode_switch(f_measured, gains.switch_threshold, control_mode);
        }

        // Force correction.
        let theta_pose = state.q_actual[0] + state.q_actual[1];
        let compliance = params.compliance.compliance_of(theta_pose);
        let p_force = if control_mode == ControlMode::Force {
            force_loop.update(f_measured, cp_ff, cp_th, &gains, compliance)
        } else {
            Vec2::zeros()
        };
        let p_ref_eff = compose_reference(p_ref, p_force, control_mode);

        // Cascade: position loop, velocity loop, bounded joint update.
        let pose = forward_kinematics(&model, &state.q_actual)?;
        let p_current = pose.fingertip();
        let v_ref = position_loop(p_ref_eff, p_current, &mut position_pid, &gains)
            .expect("validated gains");
        let jac_full = crate::kinematics::point_jacobian_unchecked(
            &pose,
            model.n_joints() - 1,
            p_current,
        );
        let jac_red = &jac_full * &coupling;
        let dq_act: Vec<f64> = act_idx.iter().map(|&j| state.dq_actual[j]).collect();
        let v_current = velocity_measure(&jac_red, &dq_act).expect("matching dims");
        let v_err = v_ref - v_current;
        let v_composite = velocity_pid.update(v_err, gains.velocity, gains.dt, gains.integrator_limit);
        let q_act_current: Vec<f64> = act_idx.iter().map(|&j| state.q_actual[j]).collect();
        let q_cmd = crate::control::joint_update(
            &jac_red,
            v_composite,
            &q_act_current,
            &gains.epsilon,
            gains.dt,
        )
        .expect("validated bounds");

        // Plant step.
        let (mut next, out) = resolve_step(&state, &q_cmd, &params, gains.dt, tick, &mut rng)?;
        if settling {
            next.grasp_alive = true;
        }

        if !settling {
            let err = next.object.theta - theta_est;
            sq_err_sum += err * err;
            est_count += 1;
            rows.push(TickRow {
                tick: main_tick,
                mode: control_mode,
                p_ref,
                p_ref_effective: p_ref_eff,
                q_ref: q_cmd.clone(),
                f_measured,
                f_error: (gains.f_des - f_measured).abs(),
                theta_true: next.object.theta,
                theta_estimate: theta_est,
                f_true_a: out.force_a.norm(),
                f_true_b: out.force_b.norm(),
                d: next.d,
                gap: next.gap,
                grasp_alive: next.grasp_alive,
                finger_magnitudes: out.finger_frame.magnitudes(),
                thumb_magnitudes: out.thumb_frame.magnitudes(),
                contact_estimate_ff: cp_ff,
                contact_estimate_th: cp_th,
            });
            if !next.grasp_alive && steps_survived == total_ticks {
                steps_survived = main_tick + 1;
            }
        }

        state = next;
        output = Some(out);
        if !state.grasp_alive && !settling {
            break;
        }
    }

    let final_theta_error = (state.object.theta - theta_goal).abs();
    let success = state.grasp_alive && final_theta_error <= config.sim.theta_tolerance;
    let theta_rmse = if est_count > 0 {
        (sq_err_sum / est_count as f64).sqrt()
    } else {
        f64::INFINITY
    };
    let _ = last_theta_est;
    Ok(TrialResult {
        mode,
        seed,
        success,
        final_theta_error,
        steps_survived,
        total_ticks,
        theta_rmse,
        rows,
    })
}

fn arc_on(layout: &SensorLayout, p: Vec2) -> f64 {
    layout.arc_of_point(p)
}

/// Summary of one batch mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mode: TrialMode,
    pub trials: usize,
    pub successes: usize,
    pub drops: usize,
    pub mean_abs_theta_error: f64,
    /// Histogram of the tick index at which dropped trials died,
    /// in tenths of the trial length.
    pub drop_step_histogram: [usize; 10],
}

impl BatchSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn drop_rate(&self) -> f64 {
        self.drops as f64 / self.trials as f64
    }
}

/// Seeded Monte-Carlo comparison of both controller modes. Trials run in
/// parallel; results are ordered by (mode, trial index) regardless of
/// scheduling.
pub fn run_batch(
    config: &ExperimentConfig,
    plan: &Trajectory,
    trials: usize,
) -> Result<(Vec<TrialResult>, Vec<BatchSummary>), TrialError> {
    let jobs: Vec<(TrialMode, u64)> = [TrialMode::OpenLoop, TrialMode::Force]
        .into_iter()
        .flat_map(|mode| (0..trials as u64).map(move |i| (mode, i)))
        .collect();
    let results: Result<Vec<TrialResult>, TrialError> = jobs
        .par_iter()
        .map(|&(mode, index)| {
            let seed = derive_seed(config.sim.master_seed, index, mode);
            run_trial(config, plan, mode, seed)
        })
        .collect();
    let results = results?;
    let summaries = [TrialMode::OpenLoop, TrialMode::Force]
        .into_iter()
        .map(|mode| summarize(&results, mode))
        .collect();
    Ok((results, summaries))
}

fn summarize(results: &[TrialResult], mode: TrialMode) -> BatchSummary {
    let in_mode: Vec<&TrialResult> = results.iter().filter(|r| r.mode == mode).collect();
    let trials = in_mode.len();
    let successes = in_mode.iter().filter(|r| r.success).count();
    let drops = in_mode
        .iter()
        .filter(|r| r.steps_survived < r.total_ticks)
        .count();
    let mean_abs_theta_error = if trials > 0 {
        in_mode.iter().map(|r| r.final_theta_error).sum::<f64>() / trials as f64
    } else {
        0.0
    };
    let mut drop_step_histogram = [0usize; 10];
    for r in &in_mode {
        if r.steps_survived < r.total_ticks {
            let bin = (r.steps_survived * 10 / r.total_ticks.max(1)).min(9);
            drop_step_histogram[bin] += 1;
        }
    }
    BatchSummary {
        mode,
        trials,
        successes,
        drops,
        mean_abs_theta_error,
        drop_step_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_mode_and_index_specific() {
        let a = derive_seed(7, 0, TrialMode::OpenLoop);
        let b = derive_seed(7, 0, TrialMode::Force);
        let c = derive_seed(7, 1, TrialMode::OpenLoop);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, 0, TrialMode::OpenLoop));
    }

    #[test]
    fn mode_strings_parse() {
        assert_eq!("force".parse::<TrialMode>().unwrap(), TrialMode::Force);
        assert_eq!(
            "open-loop".parse::<TrialMode>().unwrap(),
            TrialMode::OpenLoop
        );
        assert!("banana".parse::<TrialMode>().is_err());
    }
}
