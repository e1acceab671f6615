//! Quasi-static contact mechanics for the rolled cylinder: equilibrium
//! residuals, Coulomb friction-cone margins, and the rolling-kinematics
//! residuals tying contact travel to object rotation.
//!
//! These are pure reference computations. The trajectory optimizer carries
//! its own derivative-aware versions; the functions here double as the
//! independent validator path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{cross2, perp, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum ContactError {
    #[error("contact normal has norm {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("normal force is negative: {0}")]
    NegativeNormalForce(f64),
    #[error("expected exactly contacts A and B, got {0}")]
    BadContactPair(String),
}

/// Planar pose and bulk properties of the rolled cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub radius: f64,
    pub mass: f64,
}

impl ObjectState {
    pub fn new(x: f64, y: f64, theta: f64, radius: f64, mass: f64) -> Self {
        Self {
            x,
            y,
            theta,
            radius,
            mass,
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactLabel {
    A,
    B,
}

/// One point contact: location, inward normal, and force decomposition.
///
/// The tangential direction is `perp(normal)`; `f_t` is the signed
/// magnitude along it. The total force applied to the object is
/// `f_n * normal + f_t * perp(normal)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub point: Vec2,
    /// Unit vector pointing into the object.
    pub normal: Vec2,
    pub f_n: f64,
    pub f_t: f64,
    pub mu: f64,
    pub label: ContactLabel,
}

impl ContactRecord {
    pub fn force(&self) -> Vec2 {
        self.normal * self.f_n + perp(self.normal) * self.f_t
    }

    fn check_normal(&self) -> Result<(), ContactError> {
        let n = self.normal.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(ContactError::NonUnitNormal(n));
        }
        Ok(())
    }
}

/// Contact travel and object motion between consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingPairStep {
    pub d_prev: f64,
    pub d_curr: f64,
    pub theta_prev: f64,
    pub theta_curr: f64,
    pub c_prev: Vec2,
    pub c_curr: Vec2,
}

/// Net force and moment on the object under gravity `g` (m/s^2, acting
/// along -y). Returns `(Fx, Fy, Mz)`; all zeros at quasi-static
/// equilibrium. Moments are taken about the object center, so gravity
/// contributes no moment.
pub fn equilibrium_residual(
    contacts: &[ContactRecord; 2],
    object: &ObjectState,
    gravity: f64,
) -> Result<[f64; 3], ContactError> {
    match (contacts[0].label, contacts[1].label) {
        (ContactLabel::A, ContactLabel::B) | (ContactLabel::B, ContactLabel::A) => {}
        other => return Err(ContactError::BadContactPair(format!("{other:?}"))),
    }
    let mut force = Vec2::new(0.0, -object.mass * gravity);
    let mut moment = 0.0;
    for c in contacts {
        c.check_normal()?;
        let f = c.force();
        force += f;
        moment += cross2(c.point - object.center(), f);
    }
    Ok([force.x, force.y, moment])
}

/// Coulomb cone margin `mu * f_n - |f_t|`; nonnegative inside the cone.
///
/// A negative normal force is an infeasibility of its own kind and is
/// reported as an error, distinct from a cone violation.
pub fn friction_margin(contact: &ContactRecord) -> Result<f64, ContactError> {
    if contact.f_n < 0.0 {
        return Err(ContactError::NegativeNormalForce(contact.f_n));
    }
    Ok(contact.mu * contact.f_n - contact.f_t.abs())
}

/// Residual of the virtual-prismatic rolling constraint:
/// `d_prev - d_curr - r * (theta_prev - theta_curr)`.
pub fn prismatic_rolling_residual(step: &RollingPairStep, r: f64) -> f64 {
    step.d_prev - step.d_curr - r * (step.theta_prev - step.theta_curr)
}

/// Residual of the object no-slip rolling constraint, with the center
/// travel signed by projection onto `tangent` (the direction of
/// increasing prismatic coordinate on the flat finger):
/// `(c_prev - c_curr) . tangent - r * (theta_prev - theta_curr)`.
///
/// The signed projection replaces the unsigned travel norm so the residual
/// stays smooth and sign-consistent through zero motion.
pub fn object_rolling_residual(step: &RollingPairStep, r: f64, tangent: Vec2) -> f64 {
    (step.c_prev - step.c_curr).dot(&tangent) - r * (step.theta_prev - step.theta_curr)
}
