//! Shared domain vocabulary: tasks, workers, assignments, budgets and run
//! configuration.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result, ValidationReport, Violation};
use crate::timeline::ExecutedTimeline;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(TaskId, "t");
id_type!(WorkerId, "w");

/// A point on the plane, in abstract distance units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub location: Point,
    /// Number of equal-sized time slots, addressed `1..=m`.
    pub m: usize,
}

impl TaskSpec {
    pub fn new(id: TaskId, location: Point, m: usize) -> Self {
        Self { id, location, m }
    }
}

/// When and where a worker can serve.
///
/// `positions[j - 1]` is the worker's location at slot `j`, or `None` when
/// the worker is unavailable there.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSchedule {
    pub id: WorkerId,
    pub positions: Vec<Option<Point>>,
    pub reliability: f64,
}

impl WorkerSchedule {
    pub fn new(id: WorkerId, positions: Vec<Option<Point>>) -> Self {
        Self { id, positions, reliability: 1.0 }
    }

    /// A worker standing still at `at` during every slot in `slots`.
    pub fn stationary(
        id: WorkerId,
        m: usize,
        at: Point,
        slots: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut positions = vec![None; m];
        for j in slots {
            positions[j - 1] = Some(at);
        }
        Self::new(id, positions)
    }

    pub fn with_reliability(mut self, reliability: f64) -> Self {
        self.reliability = reliability;
        self
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    pub fn is_available(&self, slot: usize) -> bool {
        self.position(slot).is_some()
    }

    pub fn position(&self, slot: usize) -> Option<Point> {
        slot.checked_sub(1)
            .and_then(|i| self.positions.get(i))
            .copied()
            .flatten()
    }

    pub fn availability(&self) -> impl Iterator<Item = bool> + '_ {
        self.positions.iter().map(Option::is_some)
    }

    pub fn available_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|_| i + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub worker: WorkerId,
    pub cost: f64,
}

/// Which worker executes which slot of one task, and at what cost.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentLedger {
    entries: BTreeMap<usize, Assignment>,
}

impl AssignmentLedger {
    pub fn get(&self, slot: usize) -> Option<&Assignment> {
        self.entries.get(&slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Assignment)> {
        self.entries.iter().map(|(s, a)| (*s, a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.entries.values().map(|a| a.cost).sum()
    }
}

/// One task's executed slots together with who executed them.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    spec: TaskSpec,
    timeline: ExecutedTimeline,
    ledger: AssignmentLedger,
    spent: f64,
}

impl TaskState {
    pub fn new(spec: TaskSpec) -> Self {
        let timeline = ExecutedTimeline::new(spec.m);
        Self { spec, timeline, ledger: AssignmentLedger::default(), spent: 0.0 }
    }

    /// Records that `worker` executes `slot` at `cost`.
    pub fn execute(&mut self, slot: usize, worker: WorkerId, cost: f64) -> Result<()> {
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(Error::InvalidConfig(format!("assignment cost {cost} is not a finite nonnegative value")));
        }
        self.timeline.insert(slot).map_err(|e| match e {
            Error::DuplicateSlot(s) => Error::SlotAlreadyExecuted(s),
            other => other,
        })?;
        self.ledger.entries.insert(slot, Assignment { worker, cost });
        self.spent += cost;
        Ok(())
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn id(&self) -> TaskId {
        self.spec.id
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn timeline(&self) -> &ExecutedTimeline {
        &self.timeline
    }

    pub fn executed(&self) -> &[usize] {
        self.timeline.slots()
    }

    pub fn is_executed(&self, slot: usize) -> bool {
        self.timeline.contains(slot)
    }

    pub fn ledger(&self) -> &AssignmentLedger {
        &self.ledger
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    total: f64,
    remaining: f64,
}

impl Budget {
    pub fn new(total: f64) -> Result<Self> {
        if !(total >= 0.0 && total.is_finite()) {
            return Err(Error::InvalidConfig(format!("budget {total} must be finite and nonnegative")));
        }
        Ok(Self { total, remaining: total })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn remaining(&self) -> f64 {
        self.remaining
    }

    pub fn spent(&self) -> f64 {
        self.total - self.remaining
    }

    pub fn can_afford(&self, cost: f64) -> bool {
        cost <= self.remaining
    }

    /// Deducts `cost`, which must be affordable.
    pub fn spend(&mut self, cost: f64) {
        debug_assert!(self.can_afford(cost));
        self.remaining = (self.remaining - cost).max(0.0);
    }

    /// A budget of the same total that has already spent `spent`.
    pub fn with_spent(total: f64, spent: f64) -> Result<Self> {
        let mut b = Self::new(total)?;
        b.remaining = (total - spent).max(0.0);
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Distribution {
    #[default]
    Uniform,
    Gaussian,
    Zipfian,
}

impl Distribution {
    pub const ALL: [Distribution; 3] =
        [Distribution::Uniform, Distribution::Gaussian, Distribution::Zipfian];

    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Gaussian => "gaussian",
            Distribution::Zipfian => "zipfian",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "zipfian" | "zipf" => Ok(Distribution::Zipfian),
            other => Err(Error::InvalidConfig(format!("unknown distribution {other:?}"))),
        }
    }
}

/// Whether finishing probabilities account for worker reliability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QualityMode {
    #[default]
    Plain,
    Reliability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Interpolation neighbors.
    pub k: usize,
    /// Splitting threshold of the segment tree.
    pub t_s: usize,
    pub seed: u64,
    pub cores: usize,
    pub distribution: Distribution,
    pub quality_mode: QualityMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 3,
            t_s: 4,
            seed: 0,
            cores: 1,
            distribution: Distribution::Uniform,
            quality_mode: QualityMode::Plain,
        }
    }
}

impl RunConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_ts(mut self, t_s: usize) -> Self {
        self.t_s = t_s;
        self
    }

    pub fn with_cores(mut self, cores: usize) -> Self {
        self.cores = cores;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_quality_mode(mut self, mode: QualityMode) -> Self {
        self.quality_mode = mode;
        self
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.t_s == 0 {
            return Err(Error::InvalidConfig("t_s must be at least 1".into()));
        }
        if self.cores == 0 {
            return Err(Error::InvalidConfig("cores must be at least 1".into()));
        }
        Ok(())
    }
}

/// Tasks and workers that passed [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tasks: Vec<TaskSpec>,
    pub workers: Vec<WorkerSchedule>,
    pub config: RunConfig,
}

impl Instance {
    pub fn m(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.m)
    }
}

/// Checks every structural invariant and collects all violations at once.
pub fn validate_instance(
    tasks: Vec<TaskSpec>,
    workers: Vec<WorkerSchedule>,
    config: RunConfig,
) -> Result<Instance> {
    let mut violations = Vec::new();
    if workers.is_empty() {
        violations.push(Violation::EmptyWorkerSet);
    }
    if tasks.is_empty() {
        violations.push(Violation::EmptyTaskSet);
    }
    if config.k == 0 {
        violations.push(Violation::InvalidConfig("k must be at least 1"));
    }
    if config.t_s == 0 {
        violations.push(Violation::InvalidConfig("t_s must be at least 1"));
    }
    if config.cores == 0 {
        violations.push(Violation::InvalidConfig("cores must be at least 1"));
    }

    let m = tasks.first().map_or(0, |t| t.m);
    let mut task_ids = HashSet::new();
    for t in &tasks {
        if t.m == 0 {
            violations.push(Violation::ZeroSlots { task: t.id });
        } else if t.m != m {
            violations.push(Violation::TaskSlotCountMismatch { task: t.id, expected: m, found: t.m });
        }
        if !t.location.is_finite() {
            violations.push(Violation::NonFiniteLocation { task: t.id });
        }
        if !task_ids.insert(t.id) {
            violations.push(Violation::DuplicateTaskId(t.id));
        }
    }

    let mut worker_ids = HashSet::new();
    for w in &workers {
        if !tasks.is_empty() && w.m() != m {
            violations.push(Violation::SlotCountMismatch { worker: w.id, expected: m, found: w.m() });
        }
        if !(0.0..=1.0).contains(&w.reliability) {
            violations.push(Violation::InvalidReliability { worker: w.id, value: w.reliability });
        }
        for (i, p) in w.positions.iter().enumerate() {
            if let Some(p) = p {
                if !p.is_finite() {
                    violations.push(Violation::NonFinitePosition { worker: w.id, slot: i + 1 });
                }
            }
        }
        if !worker_ids.insert(w.id) {
            violations.push(Violation::DuplicateWorkerId(w.id));
        }
    }

    if violations.is_empty() {
        Ok(Instance { tasks, workers, config })
    } else {
        Err(Error::Validation(ValidationReport { violations }))
    }
}
