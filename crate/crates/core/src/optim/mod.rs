//! Optimizers and learning-rate schedules. Learners only produce gradient
//! directions; every learning rate, decay and moment lives here.
//!
//! Forward and feedback weights are always driven by separate instances.

mod optimizer;
mod schedule;

pub use optimizer::{Moments, OptimConfig, OptimKind, OptimState, Optimizer};
pub use schedule::Schedule;
