//! Experiment configuration: one TOML document describing the finger and
//! thumb geometry, the object, friction, the trajectory optimization, the
//! sensor arrays, the controller gains, and the Monte-Carlo study.
//!
//! Every field is validated at load time against the module preconditions;
//! errors name the offending field path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ComplianceModel, GainSet, PidGains};
use crate::kinematics::{CouplingEntry, FingerModel, Pose2, ThumbModel};
use crate::tactile::SensorLayout;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerConfig {
    pub link_lengths: Vec<f64>,
    /// Base pose `[x, y, angle]` in the world frame.
    pub base_pose: [f64; 3],
    pub joint_limits: Vec<[f64; 2]>,
    #[serde(default)]
    pub coupling: Vec<CouplingConfig>,
    /// Initial actuated joint angles.
    pub q_initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub passive: usize,
    pub actuated: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThumbConfig {
    pub origin: [f64; 2],
    /// Plane normal pointing into the object.
    pub normal: [f64; 2],
    pub d_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub radius: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactsConfig {
    /// Friction coefficient at the finger contact (A).
    pub mu_finger: f64,
    /// Friction coefficient at the thumb contact (B).
    pub mu_thumb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub gravity: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { gravity: 9.81 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajoptConfig {
    /// Horizon length (number of knots).
    pub n_steps: usize,
    /// Diagonal of the state weight matrix Q.
    pub q_weights: [f64; 3],
    /// Scale of the input weight matrix R = r_scale * I.
    pub r_scale: f64,
    /// Weight on the squared contact gap in the cost.
    pub contact_weight: f64,
    /// Initial object pose `[x, y, theta]`.
    pub x_initial: [f64; 3],
    /// Goal object pose `[x, y, theta]`.
    pub x_goal: [f64; 3],
    /// Lower bound on the signed finger-object gap (no-penetration slack).
    pub min_gap: f64,
    /// Initial squeeze force used in the starting guess.
    pub initial_squeeze: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub constraint_tolerance: f64,
    pub initial_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorArrayConfig {
    /// Sensor count on this array.
    pub count: usize,
    /// For the finger: arc-length window `[start, end]` along the chain.
    /// For the thumb: prismatic window `[start, end]` in `d`.
    pub span: [f64; 2],
    /// Gaussian response spread in meters.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsConfig {
    pub finger: SensorArrayConfig,
    pub thumb: SensorArrayConfig,
    /// Normalized-magnitude threshold T in (0, 255).
    pub threshold: f64,
    /// Neighbor count for the contact centroid.
    pub neighbors: usize,
    /// Sensor units per newton of contact force.
    pub gain: f64,
    /// Newtons per unit of mean sensor magnitude.
    pub newtons_per_unit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub position_gains: [f64; 3],
    pub velocity_gains: [f64; 3],
    pub k_pf: f64,
    pub k_if: f64,
    /// Per-actuated-joint reference step bound, radians.
    pub epsilon: Vec<f64>,
    pub dt: f64,
    pub f_des: f64,
    pub switch_threshold: f64,
    pub integrator_limit: f64,
    /// Depth of the commanded press into the object along the planned
    /// contact normal, meters.
    pub press_depth: f64,
    /// Control ticks per plan knot.
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceConfig {
    pub c_min: f64,
    pub c_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Gap beyond which the grasp counts as lost, meters.
    pub drop_gap: f64,
    /// Normal force below which the grasp counts as lost, newtons.
    pub min_normal_force: f64,
    /// Relative perturbation half-ranges for the Monte-Carlo study.
    pub perturb_mu: f64,
    pub perturb_c_peak: f64,
    pub perturb_radius: f64,
    /// Sensor noise standard deviation as a fraction of the peak reading.
    pub sensor_noise: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// Success tolerance on the terminal rotation error, radians.
    pub theta_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// The whole experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub finger: FingerConfig,
    pub thumb: ThumbConfig,
    pub object: ObjectConfig,
    pub contacts: ContactsConfig,
    #[serde(default)]
    pub world: WorldConfig,
    pub trajopt: TrajoptConfig,
    pub sensors: SensorsConfig,
    pub control: ControlConfig,
    pub compliance: ComplianceConfig,
    pub sim: SimConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.finger_model()
            .map_err(|e| invalid("finger", e.to_string()))?;
        if self.finger.q_initial.len() != self.finger_model().unwrap().n_actuated() {
            return Err(invalid(
                "finger.q_initial",
                format!(
                    "expected {} actuated angles, got {}",
                    self.finger_model().unwrap().n_actuated(),
                    self.finger.q_initial.len()
                ),
            ));
        }
        self.thumb_model()
            .map_err(|e| invalid("thumb", e.to_string()))?;
        if !(self.object.radius > 0.0) {
            return Err(invalid("object.radius", "must be positive"));
        }
        if !(self.object.mass > 0.0) {
            return Err(invalid("object.mass", "must be positive"));
        }
        for (field, mu) in [
            ("contacts.mu_finger", self.contacts.mu_finger),
            ("contacts.mu_thumb", self.contacts.mu_thumb),
        ] {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(invalid(field, "must be nonnegative and finite"));
            }
        }
        if !(self.world.gravity.is_finite()) {
            return Err(invalid("world.gravity", "must be finite"));
        }
        let t = &self.trajopt;
        if t.n_steps < 2 {
            return Err(invalid("trajopt.n_steps", "horizon must be at least 2"));
        }
        if t.q_weights.iter().any(|&w| w < 0.0) {
            return Err(invalid(
                "trajopt.q_weights",
                "state weights must be nonnegative (Q positive semidefinite)",
            ));
        }
        if !(t.r_scale > 0.0) {
            return Err(invalid(
                "trajopt.r_scale",
                "input weight must be positive (R positive definite)",
            ));
        }
        if t.contact_weight < 0.0 {
            return Err(invalid("trajopt.contact_weight", "must be nonnegative"));
        }
        if !(t.constraint_tolerance > 0.0) {
            return Err(invalid("trajopt.constraint_tolerance", "must be positive"));
        }
        if !(t.initial_penalty > 0.0) {
            return Err(invalid("trajopt.initial_penalty", "must be positive"));
        }
        if t.max_outer_iterations == 0 || t.max_inner_iterations == 0 {
            return Err(invalid(
                "trajopt.max_outer_iterations",
                "iteration budgets must be positive",
            ));
        }
        if t.min_gap > 0.0 {
            return Err(invalid(
                "trajopt.min_gap",
                "the no-penetration bound must not be positive",
            ));
        }
        let s = &self.sensors;
        for (field, arr) in [("sensors.finger", &s.finger), ("sensors.thumb", &s.thumb)] {
            if arr.count < 2 {
                return Err(invalid(&format!("{field}.count"), "needs at least 2 sensors"));
            }
            if !(arr.span[0] < arr.span[1]) {
                return Err(invalid(&format!("{field}.span"), "needs start < end"));
            }
            if !(arr.sigma > 0.0) {
                return Err(invalid(&format!("{field}.sigma"), "must be positive"));
            }
        }
        if !(s.threshold > 0.0 && s.threshold < 255.0) {
            return Err(invalid("sensors.threshold", "must lie in (0, 255)"));
        }
        if s.neighbors == 0 {
            return Err(invalid("sensors.neighbors", "must be at least 1"));
        }
        if !(s.gain > 0.0) || !(s.newtons_per_unit > 0.0) {
            return Err(invalid("sensors.gain", "conversion scales must be positive"));
        }
        self.gain_set()
            .validate()
            .map_err(|e| invalid("control", e.to_string()))?;
        if self.control.epsilon.len() != self.finger_model().unwrap().n_actuated() {
            return Err(invalid(
                "control.epsilon",
                "needs one bound per actuated joint",
            ));
        }
        if self.control.press_depth < 0.0 {
            return Err(invalid("control.press_depth", "must be nonnegative"));
        }
        if self.control.substeps == 0 {
            return Err(invalid("control.substeps", "must be at least 1"));
        }
        self.compliance_model()
            .validate()
            .map_err(|e| invalid("compliance", e.to_string()))?;
        let sim = &self.sim;
        if !(sim.drop_gap > 0.0) {
            return Err(invalid("sim.drop_gap", "must be positive"));
        }
        if sim.min_normal_force < 0.0 {
            return Err(invalid("sim.min_normal_force", "must be nonnegative"));
        }
        for (field, v) in [
            ("sim.perturb_mu", sim.perturb_mu),
            ("sim.perturb_c_peak", sim.perturb_c_peak),
            ("sim.perturb_radius", sim.perturb_radius),
            ("sim.sensor_noise", sim.sensor_noise),
        ] {
            if !(v >= 0.0 && v < 1.0) {
                return Err(invalid(field, "relative perturbation must lie in [0, 1)"));
            }
        }
        if sim.trials == 0 {
            return Err(invalid("sim.trials", "must be at least 1"));
        }
        if !(sim.theta_tolerance > 0.0) {
            return Err(invalid("sim.theta_tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn finger_model(&self) -> Result<FingerModel, crate::kinematics::KinematicsError> {
        FingerModel::new(
            self.finger.link_lengths.clone(),
            Pose2::new(
                self.finger.base_pose[0],
                self.finger.base_pose[1],
                self.finger.base_pose[2],
            ),
            self.finger
                .joint_limits
                .iter()
                .map(|l| (l[0], l[1]))
                .collect(),
            self.finger
                .coupling
                .iter()
                .map(|c| CouplingEntry {
                    passive: c.passive,
                    actuated: c.actuated,
                    ratio: c.ratio,
                })
                .collect(),
        )
    }

    pub fn thumb_model(&self) -> Result<ThumbModel, crate::kinematics::KinematicsError> {
        ThumbModel::new(
            Vec2::new(self.thumb.origin[0], self.thumb.origin[1]),
            Vec2::new(self.thumb.normal[0], self.thumb.normal[1]),
            (self.thumb.d_range[0], self.thumb.d_range[1]),
        )
    }

    pub fn gain_set(&self) -> GainSet {
        let c = &self.control;
        GainSet {
            position: PidGains {
                kp: c.position_gains[0],
                ki: c.position_gains[1],
                kd: c.position_gains[2],
            },
            velocity: PidGains {
                kp: c.velocity_gains[0],
                ki: c.velocity_gains[1],
                kd: c.velocity_gains[2],
            },
            k_pf: c.k_pf,
            k_if: c.k_if,
            epsilon: c.epsilon.clone(),
            dt: c.dt,
            f_des: c.f_des,
            switch_threshold: c.switch_threshold,
            integrator_limit: c.integrator_limit,
        }
    }

    pub fn compliance_model(&self) -> ComplianceModel {
        ComplianceModel {
            c_min: self.compliance.c_min,
            c_peak: self.compliance.c_peak,
        }
    }

    /// Sensor array on the finger surface at configuration `q` (full
    /// joint vector): sensors spread over the configured arc-length window
    /// of the chain.
    pub fn finger_layout(
        &self,
        model: &FingerModel,
        q: &[f64],
    ) -> Result<SensorLayout, crate::kinematics::KinematicsError> {
        let pose = crate::kinematics::forward_kinematics(model, q)?;
        let cfg = &self.sensors.finger;
        let mut positions = Vec::with_capacity(cfg.count);
        let mut normals = Vec::with_capacity(cfg.count);
        // Cumulative arc coordinates of the joints along the chain.
        let mut joint_arcs = vec![0.0];
        for &len in &model.link_lengths {
            joint_arcs.push(joint_arcs.last().unwrap() + len);
        }
        for i in 0..cfg.count {
            let s = cfg.span[0]
                + (cfg.span[1] - cfg.span[0]) * i as f64 / (cfg.count - 1) as f64;
            let s = s.clamp(0.0, model.reach() - 1e-12);
            let link = joint_arcs
                .windows(2)
                .position(|w| s >= w[0] && s < w[1])
                .unwrap_or(model.n_joints() - 1);
            let t = (s - joint_arcs[link]) / model.link_lengths[link];
            let (a, b) = pose.link_segment(link);
            positions.push(a + (b - a) * t);
            let dir = (b - a) / (b - a).norm();
            normals.push(crate::perp(dir));
        }
        Ok(SensorLayout::new(positions, normals).expect("valid layout"))
    }

    /// Sensor array on the thumb plane, spread over the configured
    /// prismatic window.
    pub fn thumb_layout(&self, thumb: &ThumbModel) -> SensorLayout {
        let cfg = &self.sensors.thumb;
        let positions = (0..cfg.count)
            .map(|i| {
                let d = cfg.span[0]
                    + (cfg.span[1] - cfg.span[0]) * i as f64 / (cfg.count - 1) as f64;
                thumb.contact_point(d)
            })
            .collect();
        SensorLayout::new(positions, vec![thumb.normal; cfg.count]).expect("valid layout")
    }

    /// The bundled nominal experiment.
    pub fn nominal() -> Self {
        Self::from_toml(NOMINAL_TOML).expect("bundled config is valid")
    }

    /// Nominal experiment retargeted to a rotation goal of `delta_theta`
    /// radians (the object travels `r * delta_theta` along the thumb).
    pub fn nominal_with_goal(delta_theta: f64) -> Self {
        let mut config = Self::nominal();
        config.set_goal_rotation(delta_theta);
        config
    }

    /// Retarget the goal pose to a pure roll of `delta_theta` from the
    /// configured initial pose.
    pub fn set_goal_rotation(&mut self, delta_theta: f64) {
        let thumb = self.thumb_model().expect("valid thumb");
        let tangent = thumb.tangent();
        let travel = self.object.radius * delta_theta;
        self.trajopt.x_goal = [
            self.trajopt.x_initial[0] + tangent.x * travel,
            self.trajopt.x_initial[1] + tangent.y * travel,
            self.trajopt.x_initial[2] + delta_theta,
        ];
    }
}

/// Bundled nominal configuration (also written by `rollkit init-config`).
pub const NOMINAL_TOML: &str = include_str!("../configs/nominal.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_config_is_valid() {
        let config = ExperimentConfig::nominal();
        assert_eq!(config.finger.link_lengths.len(), 3);
        assert_eq!(config.object.radius, 0.0075);
        assert_eq!(
            config.sensors.finger.count + config.sensors.thumb.count,
            17
        );
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = ExperimentConfig::nominal();
        let text = config.to_toml();
        let reloaded = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config, reloaded);
    }

    #[test]
    fn invalid_fields_name_their_path() {
        let mut config = ExperimentConfig::nominal();
        config.object.radius = -1.0;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("object.radius"), "{err}");

        let mut config = ExperimentConfig::nominal();
        config.trajopt.n_steps = 1;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("trajopt.n_steps"), "{err}");

        let mut config = ExperimentConfig::nominal();
        config.trajopt.r_scale = 0.0;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("r_scale"), "{err}");
    }

    #[test]
    fn goal_retarget_is_pure_roll() {
        let config = ExperimentConfig::nominal_with_goal(0.4);
        let travel = 0.0075 * 0.4;
        let thumb = config.thumb_model().unwrap();
        let tangent = thumb.tangent();
        let dx = config.trajopt.x_goal[0] - config.trajopt.x_initial[0];
        let dy = config.trajopt.x_goal[1] - config.trajopt.x_initial[1];
        assert!((dx - tangent.x * travel).abs() < 1e-15);
        assert!((dy - tangent.y * travel).abs() < 1e-15);
        assert!((config.trajopt.x_goal[2] - config.trajopt.x_initial[2] - 0.4).abs() < 1e-15);
    }
}
