//! Quasi-static closed-loop plant and the seeded trial harness.

mod plant;
mod trial;

pub use plant::{deflect, finger_layout, resolve_step, PlantError, PlantParams, PlantState, StepOutput};
pub use trial::{
    run_batch, run_trial, BatchSummary, TickRow, TrialError, TrialMode, TrialResult,
};
