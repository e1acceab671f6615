//! Cascade position/velocity control with bounded least-squares joint
//! updates, the tendon compliance model, the tactile force loop, and the
//! latched open-loop to force-control mode switch.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("control period dt must be positive, got {0}")]
    BadDt(f64),
    #[error("per-joint step bound epsilon must be positive")]
    BadEpsilon,
    #[error("gain {0} is not finite")]
    NonFiniteGain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// PID gains for one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub fn p(kp: f64) -> Self {
        Self {
            kp,
            ki: 0.0,
            kd: 0.0,
        }
    }
}

/// All controller parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub position: PidGains,
    pub velocity: PidGains,
    /// Force loop PI gains (m/N and m/(N*s)).
    pub k_pf: f64,
    pub k_if: f64,
    /// Per-joint reference step bound, radians.
    pub epsilon: Vec<f64>,
    /// Control period, seconds.
    pub dt: f64,
    /// Desired contact force magnitude, newtons.
    pub f_des: f64,
    /// Measured-force level that latches the force controller on.
    pub switch_threshold: f64,
    /// Anti-windup clamp applied to every integrator state.
    pub integrator_limit: f64,
}

impl GainSet {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.dt > 0.0) {
            return Err(ControlError::BadDt(self.dt));
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|&e| !(e > 0.0)) {
            return Err(ControlError::BadEpsilon);
        }
        for (name, v) in [
            ("position.kp", self.position.kp),
            ("position.ki", self.position.ki),
            ("position.kd", self.position.kd),
            ("velocity.kp", self.velocity.kp),
            ("velocity.ki", self.velocity.ki),
            ("velocity.kd", self.velocity.kd),
            ("k_pf", self.k_pf),
            ("k_if", self.k_if),
            ("f_des", self.f_des),
            ("switch_threshold", self.switch_threshold),
        ] {
            if !v.is_finite() {
                return Err(ControlError::NonFiniteGain(name.into()));
            }
        }
        Ok(())
    }
}

/// Discrete planar PID with clamped integrator and derivative-on-error.
#[derive(Debug, Clone, Default)]
pub struct PlanarPid {
    integral: Vec2,
    prev_error: Option<Vec2>,
}

impl PlanarPid {
    pub fn reset(&mut self) {
        self.integral = Vec2::zeros();
        self.prev_error = None;
    }

    pub fn update(&mut self, error: Vec2, gains: PidGains, dt: f64, clamp: f64) -> Vec2 {
        self.integral += error * dt;
        self.integral.x = self.integral.x.clamp(-clamp, clamp);
        self.integral.y = self.integral.y.clamp(-clamp, clamp);
        let derivative = match self.prev_error {
            Some(prev) => (error - prev) / dt,
            None => Vec2::zeros(),
        };
        self.prev_error = Some(error);
        error * gains.kp + self.integral * gains.ki + derivative * gains.kd
    }
}

/// Position loop: turn a task-space position error into a velocity
/// reference.
pub fn position_loop(
    p_ref: Vec2,
    p_current: Vec2,
    pid: &mut PlanarPid,
    gains: &GainSet,
) -> Result<Vec2, ControlError> {
    if !(gains.dt > 0.0) {
        return Err(ControlError::BadDt(gains.dt));
    }
    Ok(pid.update(
        p_ref - p_current,
        gains.position,
        gains.dt,
        gains.integrator_limit,
    ))
}

/// Measured task velocity `v = J * dq`.
pub fn velocity_measure(jac: &DMatrix<f64>, dq: &[f64]) -> Result<Vec2, ControlError> {
    if jac.ncols() != dq.len() {
        return Err(ControlError::Dimension(format!(
            "jacobian has {} columns, dq has {}",
            jac.ncols(),
            dq.len()
        )));
    }
    let v = jac * DVector::from_column_slice(dq);
    Ok(Vec2::new(v[0], v[1]))
}

/// Bounded least-squares joint update: minimize `||v - J dq_step||^2`
/// subject to `|dq_step * dt| <= epsilon` per joint, solved by active-set
/// iteration over the box. Rank deficiency falls back to damped least
/// squares (lambda = 1e-6). The returned reference never leaves the box.
pub fn joint_update(
    jac: &DMatrix<f64>,
    v_command: Vec2,
    q_current: &[f64],
    epsilon: &[f64],
    dt: f64,
) -> Result<Vec<f64>, ControlError> {
    if !(dt > 0.0) {
        return Err(ControlError::BadDt(dt));
    }
    let m = jac.ncols();
    if q_current.len() != m || epsilon.len() != m {
        return Err(ControlError::Dimension(format!(
            "jacobian has {m} columns, q has {}, epsilon has {}",
            q_current.len(),
            epsilon.len()
        )));
    }
    if epsilon.iter().any(|&e| !(e > 0.0)) {
        return Err(ControlError::BadEpsilon);
    }
    let bounds: Vec<f64> = epsilon.iter().map(|&e| e / dt).collect();
    let v = DVector::from_column_slice(&[v_command.x, v_command.y]);

    // Active-set loop on the box: clamp, re-solve the free subproblem,
    // release bounds whose multiplier sign allows improvement.
    let mut clamped: Vec<Option<f64>> = vec![None; m];
    let mut dq = vec![0.0; m];
    let max_iters = m * m + 2;
    for _ in 0..max_iters {
        let free: Vec<usize> = (0..m).filter(|&j| clamped[j].is_none()).collect();
        // Residual target with clamped columns moved to the right-hand side.
        let mut rhs = v.clone();
        for j in 0..m {
            if let Some(val) = clamped[j] {
                rhs -= jac.column(j) * val;
            }
        }
        if !free.is_empty() {
            let jf = jac.select_columns(free.iter());
            // Damped normal equations: (Jf^T Jf + lambda I) x = Jf^T rhs.
            let mut ata = jf.transpose() * &jf;
            for i in 0..free.len() {
                ata[(i, i)] += 1e-6;
            }
            let atb = jf.transpose() * &rhs;
            let sol = ata
                .lu()
                .solve(&atb)
                .unwrap_or_else(|| DVector::zeros(free.len()));
            for (idx, &j) in free.iter().enumerate() {
                dq[j] = sol[idx];
            }
        }
        for j in 0..m {
            if let Some(val) = clamped[j] {
                dq[j] = val;
            }
        }
        // Clamp the worst violator, if any.
        let mut worst: Option<(usize, f64)> = None;
        for &j in free.iter() {
            let over = dq[j].abs() - bounds[j];
            if over > 1e-12 && worst.map_or(true, |(_, o)| over > o) {
                worst = Some((j, over));
            }
        }
        match worst {
            Some((j, _)) => {
                clamped[j] = Some(bounds[j].copysign(dq[j]));
            }
            None => break,
        }
    }
    // Hard guarantee regardless of iteration budget.
    for j in 0..m {
        dq[j] = dq[j].clamp(-bounds[j], bounds[j]);
    }
    Ok((0..m).map(|j| q_current[j] + dq[j] * dt).collect())
}

/// Task-space compliance as a function of `theta = q1 + q2`, piecewise
/// linear with its peak at pi/2 and clamped to [0, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceModel {
    pub c_min: f64,
    pub c_peak: f64,
}

impl ComplianceModel {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.c_min >= 0.0 && self.c_peak >= self.c_min) {
            return Err(ControlError::NonFiniteGain(
                "compliance endpoints must satisfy 0 <= c_min <= c_peak".into(),
            ));
        }
        Ok(())
    }

    pub fn compliance_of(&self, theta: f64) -> f64 {
        let t = theta.clamp(0.0, std::f64::consts::PI);
        let half = std::f64::consts::FRAC_PI_2;
        self.c_min + (self.c_peak - self.c_min) * (1.0 - (t - half).abs() / half)
    }
}

/// Controller mode; the switch to force control is one-way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlMode {
    OpenLoop,
    Force,
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlMode::OpenLoop => write!(f, "open-loop"),
            ControlMode::Force => write!(f, "force"),
        }
    }
}

/// Latched mode switch: once the measured force drops strictly below the
/// threshold the controller stays in force mode.
pub fn mode_switch(f_measured: f64, threshold: f64, current: ControlMode) -> ControlMode {
    match current {
        ControlMode::Force => ControlMode::Force,
        ControlMode::OpenLoop if f_measured < threshold => ControlMode::Force,
        ControlMode::OpenLoop => ControlMode::OpenLoop,
    }
}

/// Force-loop state: clamped error integrator plus the last valid contact
/// axis for degenerate frames.
#[derive(Debug, Clone)]
pub struct ForceLoop {
    integral: Vec2,
    last_direction: Option<Vec2>,
    pub degenerate_frames: usize,
}

impl Default for ForceLoop {
    fn default() -> Self {
        Self {
            integral: Vec2::zeros(),
            last_direction: None,
            degenerate_frames: 0,
        }
    }
}

impl ForceLoop {
    pub fn reset(&mut self) {
        self.integral = Vec2::zeros();
        self.last_direction = None;
        self.degenerate_frames = 0;
    }

    /// Position correction from the force error. The desired and measured
    /// forces are both directed along the contact axis `p_cp_ff - p_cp_th`;
    /// the correction is `k_pf * Fe + k_if * integral(Fe) + C * Fe`.
    pub fn update(
        &mut self,
        f_measured: f64,
        p_cp_ff: Vec2,
        p_cp_th: Vec2,
        gains: &GainSet,
        compliance: f64,
    ) -> Vec2 {
        let axis = p_cp_ff - p_cp_th;
        let dir = if axis.norm() > 1e-9 {
            let d = axis / axis.norm();
            self.last_direction = Some(d);
            d
        } else {
            self.degenerate_frames += 1;
            match self.last_direction {
                Some(d) => d,
                None => return Vec2::zeros(),
            }
        };
        let f_err = dir * (gains.f_des - f_measured);
        self.integral += f_err * gains.dt;
        let lim = gains.integrator_limit;
        self.integral.x = self.integral.x.clamp(-lim, lim);
        self.integral.y = self.integral.y.clamp(-lim, lim);
        f_err * gains.k_pf + self.integral * gains.k_if + f_err * compliance
    }
}

/// Effective task reference: the planned reference, shifted by the force
/// correction once force control is latched.
pub fn compose_reference(p_ref_traj: Vec2, p_force: Vec2, mode: ControlMode) -> Vec2 {
    match mode {
        ControlMode::OpenLoop => p_ref_traj,
        ControlMode::Force => p_ref_traj + p_force,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gains() -> GainSet {
        GainSet {
            position: PidGains::p(2.0),
            velocity: PidGains::p(1.0),
            k_pf: 0.001,
            k_if: 0.0,
            epsilon: vec![0.05, 0.05],
            dt: 0.01,
            f_des: 1.0,
            switch_threshold: 0.5,
            integrator_limit: 10.0,
        }
    }

    #[test]
    fn position_loop_zero_error() {
        let mut pid = PlanarPid::default();
        let v = position_loop(Vec2::new(0.1, 0.2), Vec2::new(0.1, 0.2), &mut pid, &gains()).unwrap();
        assert_eq!(v, Vec2::zeros());
    }

    #[test]
    fn position_loop_pure_proportional() {
        let mut pid = PlanarPid::default();
        // 1 mm error with kp = 2 /s gives 2 mm/s.
        let v = position_loop(Vec2::new(0.001, 0.0), Vec2::zeros(), &mut pid, &gains()).unwrap();
        assert_relative_eq!(v.x, 0.002, epsilon = 1e-15);
        assert_relative_eq!(v.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pid_matches_difference_equation_oracle() {
        let g = PidGains {
            kp: 1.5,
            ki: 0.7,
            kd: 0.2,
        };
        let dt = 0.02;
        let mut pid = PlanarPid::default();
        // Reference PID recurrence maintained independently.
        let mut integral = 0.0f64;
        let mut prev_err: Option<f64> = None;
        for k in 0..50 {
            let err = if k < 10 { 0.0 } else { 1.0 };
            let out = pid.update(Vec2::new(err, 0.0), g, dt, 1e6);
            integral += err * dt;
            let deriv = prev_err.map_or(0.0, |p| (err - p) / dt);
            prev_err = Some(err);
            let expect = g.kp * err + g.ki * integral + g.kd * deriv;
            assert!((out.x - expect).abs() <= 1e-12, "step {k}");
        }
    }

    #[test]
    fn velocity_measure_cases() {
        let jac = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let v = velocity_measure(&jac, &[0.3, -0.2]).unwrap();
        assert_eq!(v, Vec2::new(0.3, -0.2));
        assert_eq!(
            velocity_measure(&jac, &[0.0, 0.0]).unwrap(),
            Vec2::zeros()
        );
        let jr = DMatrix::from_row_slice(2, 3, &[0.1, 0.4, -0.2, 0.6, 0.0, 0.3]);
        let dq = [0.5, -1.0, 0.25];
        let got = velocity_measure(&jr, &dq).unwrap();
        let want = Vec2::new(
            0.1 * 0.5 + 0.4 * -1.0 + -0.2 * 0.25,
            0.6 * 0.5 + 0.0 * -1.0 + 0.3 * 0.25,
        );
        assert_relative_eq!(got.x, want.x, epsilon = 1e-15);
        assert_relative_eq!(got.y, want.y, epsilon = 1e-15);
    }

    #[test]
    fn joint_update_zero_command() {
        let jac = DMatrix::from_row_slice(2, 2, &[0.05, 0.02, 0.08, 0.01]);
        let q = [0.3, -0.1];
        let q_ref = joint_update(&jac, Vec2::zeros(), &q, &[0.05, 0.05], 0.01).unwrap();
        assert_relative_eq!(q_ref[0], 0.3, epsilon = 1e-9);
        assert_relative_eq!(q_ref[1], -0.1, epsilon = 1e-9);
    }

    #[test]
    fn joint_update_interior_matches_pseudo_inverse() {
        let jac = DMatrix::from_row_slice(2, 2, &[0.05, 0.02, 0.08, 0.01]);
        let v = Vec2::new(0.001, -0.002);
        // Generous bounds: the box is inactive.
        let q_ref = joint_update(&jac, v, &[0.0, 0.0], &[10.0, 10.0], 0.01).unwrap();
        let pinv = jac
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .unwrap();
        let dq = &pinv * DVector::from_column_slice(&[v.x, v.y]);
        assert_relative_eq!(q_ref[0], dq[0] * 0.01, epsilon = 1e-6);
        assert_relative_eq!(q_ref[1], dq[1] * 0.01, epsilon = 1e-6);
    }

    #[test]
    fn joint_update_tiny_bounds_saturate_with_sign() {
        let jac = DMatrix::from_row_slice(2, 2, &[0.05, 0.02, 0.08, 0.01]);
        let v = Vec2::new(0.01, -0.02);
        let eps = [1e-5, 1e-5];
        let dt = 0.01;
        let q_ref = joint_update(&jac, v, &[0.0, 0.0], &eps, dt).unwrap();
        // Unconstrained solution for comparison.
        let pinv = jac.clone().svd(true, true).pseudo_inverse(1e-12).unwrap();
        let dq_free = &pinv * DVector::from_column_slice(&[v.x, v.y]);
        for j in 0..2 {
            assert_relative_eq!(q_ref[j].abs(), eps[j], epsilon = 1e-12);
            assert_eq!(q_ref[j].signum(), dq_free[j].signum());
        }
    }

    #[test]
    fn joint_update_respects_box_hard() {
        let jac = DMatrix::from_row_slice(2, 3, &[0.5, -0.3, 0.1, 0.2, 0.9, -0.4]);
        let eps = [0.01, 0.02, 0.005];
        let q = [0.1, 0.2, 0.3];
        for scale in [0.1, 1.0, 10.0, 1000.0] {
            let q_ref = joint_update(&jac, Vec2::new(scale, -scale), &q, &eps, 0.01).unwrap();
            for j in 0..3 {
                assert!((q_ref[j] - q[j]).abs() <= eps[j] + 1e-12);
            }
        }
    }

    /// Dense grid oracle for the 2-joint box-constrained problem.
    fn grid_search_objective(jac: &DMatrix<f64>, v: Vec2, bounds: &[f64]) -> f64 {
        let steps = 400;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let dq0 = -bounds[0] + 2.0 * bounds[0] * i as f64 / steps as f64;
                let dq1 = -bounds[1] + 2.0 * bounds[1] * j as f64 / steps as f64;
                let rx = v.x - jac[(0, 0)] * dq0 - jac[(0, 1)] * dq1;
                let ry = v.y - jac[(1, 0)] * dq0 - jac[(1, 1)] * dq1;
                best = best.min(0.5 * (rx * rx + ry * ry));
            }
        }
        best
    }

    #[test]
    fn joint_update_optimality_vs_grid() {
        let cases = [
            (
                DMatrix::from_row_slice(2, 2, &[0.06, 0.02, 0.03, 0.05]),
                Vec2::new(0.004, -0.001),
            ),
            (
                DMatrix::from_row_slice(2, 2, &[0.1, -0.04, 0.02, 0.07]),
                Vec2::new(-0.01, 0.02),
            ),
            (
                DMatrix::from_row_slice(2, 2, &[0.02, 0.02, 0.02, 0.02]),
                Vec2::new(0.05, 0.03),
            ),
        ];
        let dt = 0.01;
        let eps = [0.001, 0.0015];
        let bounds: Vec<f64> = eps.iter().map(|e| e / dt).collect();
        for (jac, v) in cases {
            let q_ref = joint_update(&jac, v, &[0.0, 0.0], &eps, dt).unwrap();
            let dq: Vec<f64> = q_ref.iter().map(|q| q / dt).collect();
            let rx = v.x - jac[(0, 0)] * dq[0] - jac[(0, 1)] * dq[1];
            let ry = v.y - jac[(1, 0)] * dq[0] - jac[(1, 1)] * dq[1];
            let obj = 0.5 * (rx * rx + ry * ry);
            let best = grid_search_objective(&jac, v, &bounds);
            assert!(
                obj <= best + 1e-6,
                "active-set objective {obj} worse than grid {best}"
            );
        }
    }

    #[test]
    fn rank_deficient_jacobian_falls_back_to_damped_ls() {
        let jac = DMatrix::from_row_slice(2, 2, &[0.05, 0.05, 0.05, 0.05]);
        let q_ref = joint_update(&jac, Vec2::new(0.01, 0.01), &[0.0, 0.0], &[1.0, 1.0], 0.01);
        let q_ref = q_ref.unwrap();
        // Minimum-norm split: both joints share the motion equally.
        assert_relative_eq!(q_ref[0], q_ref[1], epsilon = 1e-9);
    }

    #[test]
    fn compliance_endpoints_and_midpoint() {
        let model = ComplianceModel {
            c_min: 0.0005,
            c_peak: 0.002,
        };
        let half = std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(model.compliance_of(half), 0.002, epsilon = 1e-15);
        assert_relative_eq!(model.compliance_of(0.0), 0.0005, epsilon = 1e-15);
        assert_relative_eq!(
            model.compliance_of(half / 2.0),
            (0.0005 + 0.002) / 2.0,
            epsilon = 1e-15
        );
        // Symmetric about pi/2 and continuous at the peak.
        assert_relative_eq!(
            model.compliance_of(half - 0.3),
            model.compliance_of(half + 0.3),
            epsilon = 1e-15
        );
    }

    #[test]
    fn force_loop_zero_error_with_empty_integrator() {
        let mut fl = ForceLoop::default();
        let g = gains();
        let out = fl.update(g.f_des, Vec2::new(0.0, 0.01), Vec2::zeros(), &g, 0.0005);
        assert_relative_eq!(out.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn force_loop_proportional_plus_compliance() {
        // F_des = 2 N, F_m = 1 N along +x, k_pf = 1 mm/N, C = 0.5 mm/N:
        // correction (k_pf + C) * 1 N = 1.5 mm along +x.
        let mut fl = ForceLoop::default();
        let mut g = gains();
        g.f_des = 2.0;
        g.k_pf = 0.001;
        g.k_if = 0.0;
        let out = fl.update(1.0, Vec2::new(1.0, 0.0), Vec2::zeros(), &g, 0.0005);
        assert_relative_eq!(out.x, 0.0015, epsilon = 1e-15);
        assert_relative_eq!(out.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn force_loop_integrator_discrete_sum() {
        let mut fl = ForceLoop::default();
        let mut g = gains();
        g.f_des = 2.0;
        g.k_pf = 0.0;
        g.k_if = 0.004;
        let n = 25;
        let mut last = Vec2::zeros();
        for _ in 0..n {
            last = fl.update(1.0, Vec2::new(1.0, 0.0), Vec2::zeros(), &g, 0.0);
        }
        // Constant unit error: integral term is k_if * n * dt * Fe.
        assert_relative_eq!(last.x, g.k_if * n as f64 * g.dt * 1.0, epsilon = 1e-12);
    }

    #[test]
    fn force_loop_degenerate_frame_holds_direction() {
        let mut fl = ForceLoop::default();
        let g = gains();
        let first = fl.update(0.2, Vec2::new(1.0, 0.0), Vec2::zeros(), &g, 0.0);
        assert!(first.x > 0.0);
        let held = fl.update(0.2, Vec2::zeros(), Vec2::zeros(), &g, 0.0);
        assert_eq!(fl.degenerate_frames, 1);
        assert!(held.x > 0.0, "direction held from previous frame");
    }

    #[test]
    fn mode_switch_latching() {
        use ControlMode::*;
        // Boundary: equal force stays open-loop (strict inequality).
        assert_eq!(mode_switch(0.5, 0.5, OpenLoop), OpenLoop);
        assert_eq!(mode_switch(0.49, 0.5, OpenLoop), Force);
        // Latched even after recovery.
        assert_eq!(mode_switch(5.0, 0.5, Force), Force);
        // Zero threshold never switches.
        assert_eq!(mode_switch(0.0, 0.0, OpenLoop), OpenLoop);
    }

    #[test]
    fn compose_reference_cases() {
        let p = Vec2::new(0.03, 0.02);
        let dp = Vec2::new(0.001, -0.002);
        assert_eq!(compose_reference(p, dp, ControlMode::OpenLoop), p);
        assert_eq!(compose_reference(p, Vec2::zeros(), ControlMode::Force), p);
        let shifted = compose_reference(p, dp, ControlMode::Force);
        assert_eq!(shifted, p + dp);
    }

    proptest! {
        #[test]
        fn force_loop_direction_scale_invariant(
            scale in 0.1f64..50.0,
            fx in 0.01f64..1.0,
            fy in -1.0f64..1.0,
            f_m in 0.0f64..3.0,
        ) {
            let g = gains();
            let mut a = ForceLoop::default();
            let mut b = ForceLoop::default();
            let axis = Vec2::new(fx, fy);
            let o1 = a.update(f_m, axis, Vec2::zeros(), &g, 0.0005);
            let o2 = b.update(f_m, axis * scale, Vec2::zeros(), &g, 0.0005);
            prop_assert!((o1 - o2).norm() <= 1e-9 * (1.0 + o1.norm()));
        }

        #[test]
        fn q_ref_always_inside_box(
            j in proptest::collection::vec(-1.0f64..1.0, 6),
            vx in -10.0f64..10.0,
            vy in -10.0f64..10.0,
        ) {
            let jac = DMatrix::from_row_slice(2, 3, &j);
            let eps = [0.01, 0.02, 0.03];
            let q = [0.0, 0.5, -0.5];
            let q_ref = joint_update(&jac, Vec2::new(vx, vy), &q, &eps, 0.01).unwrap();
            for k in 0..3 {
                prop_assert!((q_ref[k] - q[k]).abs() <= eps[k] + 1e-12);
            }
        }

        #[test]
        fn compliance_continuous(t in 0.0f64..std::f64::consts::PI) {
            let model = ComplianceModel { c_min: 0.0004, c_peak: 0.0021 };
            let h = 1e-7;
            let a = model.compliance_of(t);
            let b = model.compliance_of((t + h).min(std::f64::consts::PI));
            prop_assert!((a - b).abs() <= 1e-3 * h.max(1e-9) + 1e-9);
        }
    }
}
