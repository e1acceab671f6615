//! Planar finger kinematics: forward kinematics, point Jacobians, joint
//! coupling, and finger-to-object signed distance.
//!
//! The articulated finger is a chain of revolute joints with rigid links,
//! treated as zero-thickness segments for distance queries (any physical
//! finger thickness is folded into the effective object radius by the
//! caller). The opposing thumb is a fixed flat plane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{perp, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("attachment point is {dist:.3e} m off link {link}")]
    AttachmentOffChain { link: usize, dist: f64 },
    #[error("link {0} index out of range")]
    LinkOutOfRange(usize),
    #[error("invalid finger model: {0}")]
    InvalidModel(String),
    #[error("object radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

/// Planar rigid pose (position + orientation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub angle: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, angle: f64) -> Self {
        Self { x, y, angle }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// One coupling relation: `q[passive] = ratio * q[actuated]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub passive: usize,
    pub actuated: usize,
    pub ratio: f64,
}

/// Articulated planar finger: revolute chain with coupled joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerModel {
    /// Length of each link in meters; one revolute joint per link.
    pub link_lengths: Vec<f64>,
    /// Pose of the first joint in the world frame.
    pub base_pose: Pose2,
    /// `[min, max]` per joint, radians, indexed over the full chain.
    pub joint_limits: Vec<(f64, f64)>,
    /// Passive joints driven by actuated ones.
    pub coupling: Vec<CouplingEntry>,
}

impl FingerModel {
    pub fn new(
        link_lengths: Vec<f64>,
        base_pose: Pose2,
        joint_limits: Vec<(f64, f64)>,
        coupling: Vec<CouplingEntry>,
    ) -> Result<Self, KinematicsError> {
        let model = Self {
            link_lengths,
            base_pose,
            joint_limits,
            coupling,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let n = self.link_lengths.len();
        if n == 0 {
            return Err(KinematicsError::InvalidModel("no links".into()));
        }
        for (i, &len) in self.link_lengths.iter().enumerate() {
            if !(len > 0.0) || !len.is_finite() {
                return Err(KinematicsError::InvalidModel(format!(
                    "link_lengths[{i}] = {len} must be positive and finite"
                )));
            }
        }
        if self.joint_limits.len() != n {
            return Err(KinematicsError::InvalidModel(format!(
                "joint_limits has {} entries, expected {n}",
                self.joint_limits.len()
            )));
        }
        for (i, &(lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint_limits[{i}]: min {lo} must be below max {hi}"
                )));
            }
        }
        let mut seen_passive = Vec::new();
        for c in &self.coupling {
            if c.passive >= n || c.actuated >= n {
                return Err(KinematicsError::InvalidModel(format!(
                    "coupling indices ({}, {}) out of range for {n} joints",
                    c.passive, c.actuated
                )));
            }
            if c.passive == c.actuated {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {} coupled to itself",
                    c.passive
                )));
            }
            if !c.ratio.is_finite() {
                return Err(KinematicsError::InvalidModel(format!(
                    "coupling ratio for joint {} is not finite",
                    c.passive
                )));
            }
            if seen_passive.contains(&c.passive) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {} appears twice as passive",
                    c.passive
                )));
            }
            if self.coupling.iter().any(|o| o.passive == c.actuated) {
                return Err(KinematicsError::InvalidModel(format!(
                    "coupling source {} is itself passive",
                    c.actuated
                )));
            }
            seen_passive.push(c.passive);
        }
        Ok(())
    }

    /// Number of joints in the full chain.
    pub fn n_joints(&self) -> usize {
        self.link_lengths.len()
    }

    /// Indices of actuated (non-passive) joints, ascending.
    pub fn actuated_indices(&self) -> Vec<usize> {
        (0..self.n_joints())
            .filter(|j| !self.coupling.iter().any(|c| c.passive == *j))
            .collect()
    }

    /// Number of actuated joints.
    pub fn n_actuated(&self) -> usize {
        self.actuated_indices().len()
    }

    /// Expansion matrix `E` with `q_full = E * q_act`, size n x m.
    pub fn coupling_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_joints();
        let act = self.actuated_indices();
        let mut e = nalgebra::DMatrix::zeros(n, act.len());
        for (col, &j) in act.iter().enumerate() {
            e[(j, col)] = 1.0;
        }
        for c in &self.coupling {
            let col = act
                .iter()
                .position(|&a| a == c.actuated)
                .expect("validated: coupling source is actuated");
            e[(c.passive, col)] = c.ratio;
        }
        e
    }

    /// Extract the actuated components of a full joint vector.
    pub fn actuated_of(&self, q_full: &[f64]) -> Vec<f64> {
        self.actuated_indices().iter().map(|&j| q_full[j]).collect()
    }

    /// Total chain length.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

/// Joint angles and velocities for the full chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
}

impl JointState {
    pub fn from_angles(q: Vec<f64>) -> Self {
        let dq = vec![0.0; q.len()];
        Self { q, dq }
    }

    /// Check both vectors against the model and the joint limits.
    pub fn check_limits(&self, model: &FingerModel) -> Result<(), KinematicsError> {
        if self.q.len() != model.n_joints() || self.dq.len() != model.n_joints() {
            return Err(KinematicsError::DimensionMismatch {
                got: self.q.len(),
                expected: model.n_joints(),
            });
        }
        for (j, (&qj, &(lo, hi))) in self.q.iter().zip(&model.joint_limits).enumerate() {
            if qj < lo || qj > hi {
                return Err(KinematicsError::InvalidModel(format!(
                    "q[{j}] = {qj:.4} outside limits [{lo:.4}, {hi:.4}]"
                )));
            }
        }
        Ok(())
    }
}

/// Fixed flat thumb. The prismatic coordinate `d` of the migrating contact
/// runs along `tangent` from `origin`, with `tangent = perp(normal)`, so a
/// positive goal rotation of the object produces increasing `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThumbModel {
    pub origin: Vec2,
    /// Unit normal of the thumb plane, pointing into the object.
    pub normal: Vec2,
    /// Valid range of the prismatic coordinate `d` in meters.
    pub d_range: (f64, f64),
}

impl ThumbModel {
    pub fn new(origin: Vec2, normal: Vec2, d_range: (f64, f64)) -> Result<Self, KinematicsError> {
        let norm = normal.norm();
        if !(norm > 1e-12) {
            return Err(KinematicsError::InvalidModel(
                "thumb normal must be nonzero".into(),
            ));
        }
        if !(d_range.0 < d_range.1) {
            return Err(KinematicsError::InvalidModel(
                "thumb d_range must have min < max".into(),
            ));
        }
        Ok(Self {
            origin,
            normal: normal / norm,
            d_range,
        })
    }

    /// Direction of increasing prismatic coordinate.
    pub fn tangent(&self) -> Vec2 {
        perp(self.normal)
    }

    /// Contact point at prismatic coordinate `d`.
    pub fn contact_point(&self, d: f64) -> Vec2 {
        self.origin + self.tangent() * d
    }

    /// Center of a radius-`r` object resting on the plane at coordinate `d`.
    pub fn object_center(&self, d: f64, r: f64) -> Vec2 {
        self.contact_point(d) + self.normal * r
    }

    /// Prismatic coordinate of the point on the plane closest to `p`.
    pub fn coordinate_of(&self, p: Vec2) -> f64 {
        (p - self.origin).dot(&self.tangent())
    }
}

/// Frames of every link plus the fingertip, from forward kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerPose {
    /// Joint origins followed by the fingertip: `n_joints + 1` points.
    pub points: Vec<Vec2>,
    /// Absolute orientation of each link.
    pub link_angles: Vec<f64>,
}

impl FingerPose {
    pub fn fingertip(&self) -> Vec2 {
        *self.points.last().expect("chain has at least one link")
    }

    /// Endpoints of link `i`.
    pub fn link_segment(&self, i: usize) -> (Vec2, Vec2) {
        (self.points[i], self.points[i + 1])
    }
}

/// Forward kinematics of the full chain.
///
/// `q` must contain one angle per joint (coupling already expanded).
pub fn forward_kinematics(model: &FingerModel, q: &[f64]) -> Result<FingerPose, KinematicsError> {
    let n = model.n_joints();
    if q.len() != n {
        return Err(KinematicsError::DimensionMismatch {
            got: q.len(),
            expected: n,
        });
    }
    let mut points = Vec::with_capacity(n + 1);
    let mut link_angles = Vec::with_capacity(n);
    let mut p = model.base_pose.position();
    let mut angle = model.base_pose.angle;
    points.push(p);
    for (i, &len) in model.link_lengths.iter().enumerate() {
        angle += q[i];
        link_angles.push(angle);
        p += Vec2::new(angle.cos(), angle.sin()) * len;
        points.push(p);
    }
    Ok(FingerPose {
        points,
        link_angles,
    })
}

/// A point rigidly attached to one link of the finger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub link: usize,
    pub point: Vec2,
}

/// Tolerance for deciding whether an attachment point lies on its link.
const ON_CHAIN_TOL: f64 = 1e-6;

/// Point Jacobian: maps full joint velocities to the planar velocity of
/// `attachment`, a 2 x n matrix. Column `j` is the perpendicular of the
/// lever arm from joint `j` for joints at or before the link, zero after.
pub fn jacobian(
    model: &FingerModel,
    q: &[f64],
    attachment: Attachment,
) -> Result<nalgebra::DMatrix<f64>, KinematicsError> {
    let pose = forward_kinematics(model, q)?;
    if attachment.link >= model.n_joints() {
        return Err(KinematicsError::LinkOutOfRange(attachment.link));
    }
    let (a, b) = pose.link_segment(attachment.link);
    let dist = point_segment_distance(attachment.point, a, b).0;
    if dist > ON_CHAIN_TOL {
        return Err(KinematicsError::AttachmentOffChain {
            link: attachment.link,
            dist,
        });
    }
    Ok(point_jacobian_unchecked(&pose, attachment.link, attachment.point))
}

/// Same as [`jacobian`] but trusting that `point` lies on `link`.
pub fn point_jacobian_unchecked(
    pose: &FingerPose,
    link: usize,
    point: Vec2,
) -> nalgebra::DMatrix<f64> {
    let n = pose.link_angles.len();
    let mut jac = nalgebra::DMatrix::zeros(2, n);
    for j in 0..=link {
        let lever = perp(point - pose.points[j]);
        jac[(0, j)] = lever.x;
        jac[(1, j)] = lever.y;
    }
    jac
}

/// Jacobian of the fingertip with respect to the full joint vector.
pub fn fingertip_jacobian(
    model: &FingerModel,
    q: &[f64],
) -> Result<nalgebra::DMatrix<f64>, KinematicsError> {
    let pose = forward_kinematics(model, q)?;
    Ok(point_jacobian_unchecked(
        &pose,
        model.n_joints() - 1,
        pose.fingertip(),
    ))
}

/// Expand actuated joint angles into the full joint vector.
///
/// Accepts either a vector of actuated angles (length `n_actuated`) or an
/// already-expanded full vector (length `n_joints`); re-applying the
/// coupling to a full vector is idempotent.
pub fn expand_coupling(model: &FingerModel, q_act: &[f64]) -> Result<JointState, KinematicsError> {
    let n = model.n_joints();
    let act = model.actuated_indices();
    let mut q = vec![0.0; n];
    if q_act.len() == act.len() {
        for (col, &j) in act.iter().enumerate() {
            q[j] = q_act[col];
        }
    } else if q_act.len() == n {
        q.copy_from_slice(q_act);
    } else {
        return Err(KinematicsError::DimensionMismatch {
            got: q_act.len(),
            expected: act.len(),
        });
    }
    for c in &model.coupling {
        q[c.passive] = c.ratio * q[c.actuated];
    }
    Ok(JointState::from_angles(q))
}

/// Closest point between the finger chain and a circular object.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosestPointResult {
    /// Surface-to-surface signed distance: negative means penetration.
    pub psi: f64,
    /// Closest point on the finger (on the link segment).
    pub point_on_finger: Vec2,
    /// Closest point on the object surface.
    pub point_on_object: Vec2,
    /// Unit vector from the finger surface into the object.
    pub normal: Vec2,
    /// Index of the link carrying the closest point.
    pub link_index: usize,
}

/// Distance from point `p` to segment `[a, b]`, with the clamped parameter
/// and the closest point.
pub(crate) fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> (f64, f64, Vec2) {
    let u = b - a;
    let len2 = u.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&u) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest = a + u * t;
    ((p - closest).norm(), t, closest)
}

/// Signed distance between the finger surface and the object surface.
///
/// `psi = min_links dist(center, link) - r`. When the object center falls
/// exactly on a link axis the normal is degenerate; `prev_normal` breaks
/// the tie (falling back to +y in the finger base frame).
pub fn signed_distance(
    model: &FingerModel,
    q: &[f64],
    center: Vec2,
    radius: f64,
    prev_normal: Option<Vec2>,
) -> Result<ClosestPointResult, KinematicsError> {
    if !(radius > 0.0) {
        return Err(KinematicsError::NonPositiveRadius(radius));
    }
    let pose = forward_kinematics(model, q)?;
    let mut best: Option<(f64, usize, Vec2)> = None;
    for i in 0..model.n_joints() {
        let (a, b) = pose.link_segment(i);
        let (dist, _, closest) = point_segment_distance(center, a, b);
        if best.map_or(true, |(d, _, _)| dist < d) {
            best = Some((dist, i, closest));
        }
    }
    let (dist, link_index, point_on_finger) = best.expect("chain has at least one link");
    let normal = if dist > 1e-12 {
        (center - point_on_finger) / dist
    } else {
        // Degenerate: center on the link axis. Keep the previous normal if
        // available, otherwise +y rotated into the finger base frame.
        let fallback = prev_normal.filter(|n| n.norm() > 1e-12);
        match fallback {
            Some(n) => n / n.norm(),
            None => {
                let a = model.base_pose.angle;
                Vec2::new(-a.sin(), a.cos())
            }
        }
    };
    let point_on_object = center - normal * radius;
    Ok(ClosestPointResult {
        psi: dist - radius,
        point_on_finger,
        point_on_object,
        normal,
        link_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn test_model() -> FingerModel {
        FingerModel::new(
            vec![0.045, 0.025, 0.026],
            Pose2::new(0.0, 0.0, 0.0),
            vec![(-1.6, 1.6); 3],
            vec![CouplingEntry {
                passive: 1,
                actuated: 0,
                ratio: 1.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn straight_chain_sums_lengths() {
        let model = test_model();
        let pose = forward_kinematics(&model, &[0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(pose.fingertip().x, 0.096, epsilon = 1e-12);
        assert_relative_eq!(pose.fingertip().y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn base_joint_rotates_whole_chain() {
        let model = test_model();
        let pose = forward_kinematics(&model, &[std::f64::consts::FRAC_PI_2, 0.0, 0.0]).unwrap();
        assert_relative_eq!(pose.fingertip().x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pose.fingertip().y, 0.096, epsilon = 1e-12);
    }

    /// Independent oracle: compose per-link 2x2 rotation matrices.
    fn fk_matrix_oracle(model: &FingerModel, q: &[f64]) -> Vec2 {
        let mut p = model.base_pose.position();
        let mut rot = nalgebra::Matrix2::new(
            model.base_pose.angle.cos(),
            -model.base_pose.angle.sin(),
            model.base_pose.angle.sin(),
            model.base_pose.angle.cos(),
        );
        for (i, &len) in model.link_lengths.iter().enumerate() {
            let r = nalgebra::Matrix2::new(q[i].cos(), -q[i].sin(), q[i].sin(), q[i].cos());
            rot *= r;
            p += rot * Vec2::new(len, 0.0);
        }
        p
    }

    #[test]
    fn fk_matches_matrix_product_oracle() {
        let model = test_model();
        let qs = [
            [0.3, 0.3, -0.5],
            [-0.9, 0.1, 1.2],
            [1.5, -1.5, 0.7],
            [0.123, 0.456, -0.789],
        ];
        for q in qs {
            let tip = forward_kinematics(&model, &q).unwrap().fingertip();
            let oracle = fk_matrix_oracle(&model, &q);
            assert_relative_eq!(tip.x, oracle.x, epsilon = 1e-12);
            assert_relative_eq!(tip.y, oracle.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn fk_rejects_dimension_mismatch() {
        let model = test_model();
        assert!(matches!(
            forward_kinematics(&model, &[0.0, 0.0]),
            Err(KinematicsError::DimensionMismatch { got: 2, expected: 3 })
        ));
    }

    #[test]
    fn straight_chain_tip_jacobian_first_column() {
        let model = test_model();
        let q = [0.0; 3];
        let jac = fingertip_jacobian(&model, &q).unwrap();
        // Lever arm of the base joint equals the total length, along +y.
        assert_relative_eq!(jac[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(jac[(1, 0)], 0.096, epsilon = 1e-12);
    }

    #[test]
    fn zero_velocity_maps_to_zero() {
        let model = test_model();
        let jac = fingertip_jacobian(&model, &[0.4, 0.4, -0.2]).unwrap();
        let v = &jac * nalgebra::DVector::zeros(3);
        assert_eq!(v.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = test_model();
        let qs = [[0.3, 0.3, -0.4], [0.9, 0.9, 0.2], [-0.5, -0.5, 1.1]];
        let h = 1e-6;
        for q in qs {
            let jac = fingertip_jacobian(&model, &q).unwrap();
            for j in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[j] += h;
                qm[j] -= h;
                let tp = forward_kinematics(&model, &qp).unwrap().fingertip();
                let tm = forward_kinematics(&model, &qm).unwrap().fingertip();
                let fd = (tp - tm) / (2.0 * h);
                assert_relative_eq!(jac[(0, j)], fd.x, max_relative = 1e-6, epsilon = 1e-9);
                assert_relative_eq!(jac[(1, j)], fd.y, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn jacobian_rejects_off_chain_attachment() {
        let model = test_model();
        let q = [0.0; 3];
        let err = jacobian(
            &model,
            &q,
            Attachment {
                link: 0,
                point: Vec2::new(0.02, 0.01),
            },
        )
        .unwrap_err();
        assert!(matches!(err, KinematicsError::AttachmentOffChain { .. }));
    }

    #[test]
    fn coupling_unit_ratio() {
        let model = test_model();
        let state = expand_coupling(&model, &[0.3, -0.2]).unwrap();
        assert_eq!(state.q, vec![0.3, 0.3, -0.2]);
        let zero = expand_coupling(&model, &[0.0, 0.0]).unwrap();
        assert_eq!(zero.q, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn coupling_half_ratio() {
        let model = FingerModel::new(
            vec![0.045, 0.025, 0.026],
            Pose2::new(0.0, 0.0, 0.0),
            vec![(-1.6, 1.6); 3],
            vec![CouplingEntry {
                passive: 1,
                actuated: 0,
                ratio: 0.5,
            }],
        )
        .unwrap();
        let state = expand_coupling(&model, &[0.8, 0.1]).unwrap();
        assert_relative_eq!(state.q[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn coupling_idempotent_on_expanded_states() {
        let model = test_model();
        let once = expand_coupling(&model, &[0.7, -0.3]).unwrap();
        let twice = expand_coupling(&model, &once.q).unwrap();
        assert_eq!(once.q, twice.q);
    }

    #[test]
    fn signed_distance_above_horizontal_link() {
        let model = test_model();
        let q = [0.0; 3];
        // Object center 10 mm above the first link, radius 7.5 mm.
        let res = signed_distance(&model, &q, Vec2::new(0.02, 0.010), 0.0075, None).unwrap();
        assert_relative_eq!(res.psi, 0.0025, epsilon = 1e-12);
        assert_relative_eq!(res.normal.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(res.normal.y, 1.0, epsilon = 1e-12);
        assert_eq!(res.link_index, 0);
        // Normal points from the finger into the object.
        assert!(res.point_on_object.y < res.point_on_finger.y + 0.0101);
    }

    #[test]
    fn signed_distance_touching() {
        let model = test_model();
        let res = signed_distance(&model, &[0.0; 3], Vec2::new(0.02, 0.0075), 0.0075, None).unwrap();
        assert_relative_eq!(res.psi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn signed_distance_degenerate_center_on_axis() {
        let model = test_model();
        let res = signed_distance(&model, &[0.0; 3], Vec2::new(0.02, 0.0), 0.0075, None).unwrap();
        assert_relative_eq!(res.psi, -0.0075, epsilon = 1e-12);
        // t=0 fallback: +y in the finger base frame.
        assert_relative_eq!(res.normal.y, 1.0, epsilon = 1e-12);
        let held = signed_distance(
            &model,
            &[0.0; 3],
            Vec2::new(0.02, 0.0),
            0.0075,
            Some(Vec2::new(0.0, -1.0)),
        )
        .unwrap();
        assert_relative_eq!(held.normal.y, -1.0, epsilon = 1e-12);
    }

    /// Dense-sampling oracle: distance to 10^4 points along the chain.
    fn sampled_distance(model: &FingerModel, q: &[f64], center: Vec2) -> f64 {
        let pose = forward_kinematics(model, q).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..model.n_joints() {
            let (a, b) = pose.link_segment(i);
            for s in 0..=10_000 {
                let t = s as f64 / 10_000.0;
                let p = a + (b - a) * t;
                best = best.min((center - p).norm());
            }
        }
        best
    }

    #[test]
    fn signed_distance_matches_dense_sampling() {
        let model = test_model();
        let cases = [
            ([0.4, 0.4, -0.3], Vec2::new(0.05, 0.02)),
            ([1.0, 1.0, 0.5], Vec2::new(0.01, 0.06)),
            ([-0.3, -0.3, 0.9], Vec2::new(0.08, -0.03)),
        ];
        for (q, center) in cases {
            let res = signed_distance(&model, &q, center, 0.0075, None).unwrap();
            let oracle = sampled_distance(&model, &q, center) - 0.0075;
            assert!(
                (res.psi - oracle).abs() <= 1e-6,
                "psi {} vs sampled {}",
                res.psi,
                oracle
            );
        }
    }

    proptest! {
        #[test]
        fn jacobian_fd_consistency(
            q0 in -1.5f64..1.5,
            q2 in -1.5f64..1.5,
        ) {
            let model = test_model();
            let q = expand_coupling(&model, &[q0, q2]).unwrap().q;
            let jac = fingertip_jacobian(&model, &q).unwrap();
            let h = 1e-6;
            for j in 0..3 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += h;
                qm[j] -= h;
                let tp = forward_kinematics(&model, &qp).unwrap().fingertip();
                let tm = forward_kinematics(&model, &qm).unwrap().fingertip();
                let fd = (tp - tm) / (2.0 * h);
                prop_assert!((jac[(0, j)] - fd.x).abs() <= 1e-5);
                prop_assert!((jac[(1, j)] - fd.y).abs() <= 1e-5);
            }
        }

        #[test]
        fn signed_distance_is_lipschitz(
            q0 in -1.0f64..1.0,
            q2 in -1.0f64..1.0,
            cx in -0.05f64..0.12,
            cy in -0.05f64..0.10,
            dq0 in -1e-4f64..1e-4,
            dq2 in -1e-4f64..1e-4,
        ) {
            let model = test_model();
            let q = expand_coupling(&model, &[q0, q2]).unwrap().q;
            let qd = expand_coupling(&model, &[q0 + dq0, q2 + dq2]).unwrap().q;
            let c = Vec2::new(cx, cy);
            let a = signed_distance(&model, &q, c, 0.0075, None).unwrap().psi;
            let b = signed_distance(&model, &qd, c, 0.0075, None).unwrap().psi;
            // Lipschitz constant bounded by total link length + 1.
            let lip = model.reach() + 1.0;
            let step = ((dq0 * dq0 + dq0 * dq0) as f64).sqrt() + dq2.abs();
            prop_assert!((a - b).abs() <= lip * step + 1e-12);
        }

        #[test]
        fn expand_coupling_idempotent(q0 in -1.5f64..1.5, q2 in -1.5f64..1.5) {
            let model = test_model();
            let once = expand_coupling(&model, &[q0, q2]).unwrap();
            let twice = expand_coupling(&model, &once.q).unwrap();
            prop_assert_eq!(once.q, twice.q);
        }
    }
}
