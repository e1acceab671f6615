//! Planar two-finger in-hand rolling toolkit.
//!
//! A cylinder is pinched between an articulated finger and a flat thumb.
//! The crate plans rolling trajectories with a contact-implicit nonlinear
//! program, simulates execution on a compliant quasi-static plant with a
//! simulated magnetic tactile array, estimates the object state from the
//! tactile readings, and compares open-loop against force-controlled
//! execution in seeded Monte-Carlo batches.

pub mod config;
pub mod contact;
pub mod control;
pub mod io;
pub mod kinematics;
pub mod sim;
pub mod tactile;
pub mod trajopt;

pub use config::ExperimentConfig;
pub use contact::{ContactLabel, ContactRecord, ObjectState, RollingPairStep};
pub use kinematics::{ClosestPointResult, FingerModel, JointState, ThumbModel};
pub use trajopt::{RollingNlp, SolveReport, Trajectory, ValidationReport};

/// Planar vector used throughout the crate.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Rotate a planar vector by +90 degrees (counterclockwise).
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Planar cross product `a.x * b.y - a.y * b.x`.
#[inline]
pub fn cross2(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}
