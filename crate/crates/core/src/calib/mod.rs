//! Calibration of the compact model against measured data.

pub mod adam;
pub mod check;
pub mod cost;
pub mod gradient;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use check::{finite_difference_deviation, gradcheck, GradientCheck};
pub use cost::{cost, optimal_global_phase, CostKind};
pub use gradient::{model_cost, model_gradient};
pub use train::{
    calibrate, CalibratedModel, PilotChoice, PilotSet, StopReason, TraceRow, TrainOptions, TrainingReport,
};
