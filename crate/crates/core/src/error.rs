use std::fmt;

use crate::model::{TaskId, WorkerId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("instance failed validation: {0}")]
    Validation(ValidationReport),
    #[error("slot {slot} is outside [1, {m}]")]
    OutOfRangeSlot { slot: usize, m: usize },
    #[error("slot {0} is already on the timeline")]
    DuplicateSlot(usize),
    #[error("slot {0} is already executed")]
    SlotAlreadyExecuted(usize),
    #[error("no reliability recorded for worker {0}")]
    MissingReliability(WorkerId),
    #[error("quality_min needs at least one task")]
    EmptyTaskSet,
    #[error("node [{0}, {1}] has no unexecuted slot")]
    NoUnexecutedSlot(usize, usize),
    #[error("worker {worker} is already committed at slot {slot}")]
    SlotOccupied { worker: WorkerId, slot: usize },
    #[error("worker {worker} is not available at slot {slot}")]
    WorkerUnavailable { worker: WorkerId, slot: usize },
    #[error("worker {worker} has no commitment at slot {slot}")]
    NotCommitted { worker: WorkerId, slot: usize },
    #[error("unknown worker {0}")]
    UnknownWorker(WorkerId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("instance with m = {m} exceeds the enumeration limit {max_m}")]
    InstanceTooLarge { m: usize, max_m: usize },
    #[error("the tree-indexed solvers only support the plain quality metric")]
    UnsupportedQualityMode,
    #[error("executor for task {0} missed its heartbeat window")]
    CoordinatorTimeout(TaskId),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One broken invariant found by [`crate::model::validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyWorkerSet,
    EmptyTaskSet,
    SlotCountMismatch { worker: WorkerId, expected: usize, found: usize },
    TaskSlotCountMismatch { task: TaskId, expected: usize, found: usize },
    InvalidReliability { worker: WorkerId, value: f64 },
    NonFiniteLocation { task: TaskId },
    NonFinitePosition { worker: WorkerId, slot: usize },
    ZeroSlots { task: TaskId },
    DuplicateTaskId(TaskId),
    DuplicateWorkerId(WorkerId),
    InvalidConfig(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyWorkerSet => write!(f, "worker set is empty"),
            Violation::EmptyTaskSet => write!(f, "task set is empty"),
            Violation::SlotCountMismatch { worker, expected, found } => write!(
                f,
                "worker {worker} availability has {found} slots, tasks have {expected}"
            ),
            Violation::TaskSlotCountMismatch { task, expected, found } => {
                write!(f, "task {task} has m = {found}, expected {expected}")
            }
            Violation::InvalidReliability { worker, value } => {
                write!(f, "worker {worker} reliability {value} is outside [0, 1]")
            }
            Violation::NonFiniteLocation { task } => write!(f, "task {task} location is not finite"),
            Violation::NonFinitePosition { worker, slot } => {
                write!(f, "worker {worker} position at slot {slot} is not finite")
            }
            Violation::ZeroSlots { task } => write!(f, "task {task} has m = 0"),
            Violation::DuplicateTaskId(id) => write!(f, "task id {id} appears twice"),
            Violation::DuplicateWorkerId(id) => write!(f, "worker id {id} appears twice"),
            Violation::InvalidConfig(what) => write!(f, "config: {what}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
