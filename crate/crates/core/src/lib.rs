//! Quality-aware task assignment for time-continuous spatial crowdsourcing.
//!
//! A task spans `m` time slots. Executing a slot costs the travel distance of
//! the worker who serves it; unexecuted slots are interpolated from their
//! `k` nearest executed slots on the timeline. Task quality is the entropy of
//! the per-slot finishing probabilities, and the solvers here maximize it
//! under a budget, for one task or for many tasks that share workers.

pub mod datagen;
pub mod error;
pub mod model;
pub mod multi;
pub mod quality;
mod segtree;
pub mod single;
pub mod timeline;
pub mod voronoi;
pub mod workers;

pub use error::{Error, Result, ValidationReport, Violation};
pub use model::{
    validate_instance, Assignment, AssignmentLedger, Budget, Distribution, Instance, Point,
    QualityMode, RunConfig, TaskId, TaskSpec, TaskState, WorkerId, WorkerSchedule,
};
pub use timeline::{ExecutedTimeline, InterpolationResult, Neighbor};
pub use workers::{CostQuote, WorkerPool};
