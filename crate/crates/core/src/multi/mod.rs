//! Multi-task assignment over a shared worker pool and a shared budget.

mod graph;
mod oracle;
mod parallel;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{Budget, QualityMode, RunConfig, TaskId, TaskSpec, TaskState, WorkerId};
use crate::quality::{task_quality, FullyReliable};
use crate::single::{slot_quotes, IndexedTask, PhaseTimings};
use crate::voronoi::{Objective, Score};
use crate::workers::{CostQuote, WorkerPool};

pub use graph::{bound_radius, build_independence_graph, msqm_parallel_group, IndependenceGraph};
pub use oracle::{joint_optimum, JointObjective, JointOptimum, MAX_JOINT_SLOTS};
pub use parallel::{
    msqm_parallel_task, ConflictRecord, EntryStatus, HeartbeatTable, LogEntry, LoggingTable,
    ProtocolReport, Scheduler, TaskParallelOptions,
};

/// One executed (task, slot) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commit {
    pub task: TaskId,
    pub slot: usize,
    pub worker: WorkerId,
    pub cost: f64,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunResult {
    /// Final state of every task, in input order.
    pub states: Vec<TaskState>,
    pub q_sum: f64,
    pub q_min: f64,
    pub spent: f64,
    /// Executed pairs in commit order.
    pub commits: Vec<Commit>,
    /// Task pairs that share a cheapest worker at some slot in the initial
    /// pool.
    pub conflict_count: u64,
    pub used_singleton: bool,
    pub evaluations: usize,
    pub timings: PhaseTimings,
    /// Independent groups, for group-parallel runs.
    pub groups: Option<usize>,
    /// Coordinator statistics, for task-parallel runs.
    pub protocol: Option<ProtocolReport>,
}

impl MultiRunResult {
    /// The committed (task, slot, worker) triples.
    pub fn assignment_set(&self) -> BTreeSet<(TaskId, usize, WorkerId)> {
        self.commits.iter().map(|c| (c.task, c.slot, c.worker)).collect()
    }

    /// FNV-1a digest of [`Self::assignment_set`], as 16 hex digits.
    pub fn assignment_digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (t, s, w) in self.assignment_set() {
            for part in [u64::from(t.0), s as u64, u64::from(w.0)] {
                for b in part.to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        format!("{h:016x}")
    }
}

/// The best affordable slot of one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub task: usize,
    pub slot: usize,
    pub quote: CostQuote,
    pub score: Score,
}

/// `a` is picked over `b` by the serial greedy.
pub(crate) fn outranks(a: &Candidate, b: &Candidate) -> bool {
    a.score > b.score || (a.score == b.score && a.task < b.task)
}

pub(crate) fn check_multi(tasks: &[TaskSpec], pool: &WorkerPool, config: &RunConfig) -> Result<()> {
    config.check()?;
    if config.quality_mode != QualityMode::Plain {
        return Err(Error::UnsupportedQualityMode);
    }
    let mut ids = BTreeSet::new();
    for t in tasks {
        if t.m == 0 || t.m != pool.m() {
            return Err(Error::InvalidConfig(format!(
                "task {} has m = {}, worker pool has m = {}",
                t.id,
                t.m,
                pool.m()
            )));
        }
        if !ids.insert(t.id) {
            return Err(Error::InvalidConfig(format!("task id {} appears twice", t.id)));
        }
    }
    Ok(())
}

/// Shared mutable state of the greedy solvers: the pool, the budget, every
/// task's index and its current cheapest-worker quotes.
pub(crate) struct Engine<'a> {
    tasks: &'a [TaskSpec],
    pub pool: WorkerPool,
    pub budget: Budget,
    pub states: Vec<TaskState>,
    indexes: Vec<IndexedTask>,
    quotes: Vec<Vec<Option<CostQuote>>>,
    /// Tasks whose current quote at a slot names a worker.
    watchers: HashMap<(usize, WorkerId), Vec<usize>>,
    pub evaluations: usize,
    pub timings: PhaseTimings,
}

impl<'a> Engine<'a> {
    pub fn new(tasks: &'a [TaskSpec], pool: WorkerPool, budget: Budget, config: &RunConfig) -> Result<Self> {
        let t0 = Instant::now();
        let mut indexes = Vec::with_capacity(tasks.len());
        let mut quotes = Vec::with_capacity(tasks.len());
        let mut watchers: HashMap<(usize, WorkerId), Vec<usize>> = HashMap::new();
        let mut states = Vec::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            let q = slot_quotes(t, &pool);
            for (j, quote) in q.iter().enumerate() {
                if let Some(quote) = quote {
                    watchers.entry((j + 1, quote.worker)).or_default().push(i);
                }
            }
            let state = TaskState::new(t.clone());
            indexes.push(IndexedTask::new(state.timeline(), q.iter().map(|q| q.map(|q| q.cost)).collect(), config)?);
            quotes.push(q);
            states.push(state);
        }
        let timings = PhaseTimings { tree_build: t0.elapsed(), ..PhaseTimings::default() };
        Ok(Self { tasks, pool, budget, states, indexes, quotes, watchers, evaluations: 0, timings })
    }

    pub fn best_for(&mut self, task: usize, objective: Objective) -> Option<Candidate> {
        let t0 = Instant::now();
        let out = self.indexes[task].best(self.budget.remaining(), objective);
        self.timings.heuristic_eval += t0.elapsed();
        self.evaluations += out.evaluations;
        out.best.map(|c| Candidate {
            task,
            slot: c.slot,
            quote: self.quotes[task][c.slot - 1].expect("chosen slots are priced"),
            score: c.score,
        })
    }

    /// Executes a candidate and requotes every task that was relying on the
    /// worker just taken. Returns those tasks.
    pub fn commit(&mut self, c: &Candidate) -> Result<(Commit, Vec<usize>)> {
        let t0 = Instant::now();
        let task_id = self.tasks[c.task].id;
        let (slot, worker) = (c.slot, c.quote.worker);
        self.pool.commit(worker, slot, task_id)?;
        self.states[c.task].execute(slot, worker, c.quote.cost)?;
        self.indexes[c.task].execute(slot)?;
        self.budget.spend(c.quote.cost);
        let watchers = self.watchers.remove(&(slot, worker)).unwrap_or_default();
        let mut requoted = Vec::new();
        for &t in &watchers {
            if t == c.task || self.states[t].is_executed(slot) {
                continue;
            }
            let fresh = self.pool.kth_nearest_available(self.tasks[t].location, slot, 1);
            if let Some(q) = fresh {
                self.watchers.entry((slot, q.worker)).or_default().push(t);
            }
            self.quotes[t][slot - 1] = fresh;
            self.indexes[t].costs.set(slot, fresh.map(|q| q.cost));
            requoted.push(t);
        }
        self.timings.tree_update += t0.elapsed();
        Ok((
            Commit { task: task_id, slot, worker, cost: c.quote.cost, score: c.score },
            requoted,
        ))
    }
}

/// Number of task pairs that share a cheapest eligible worker at some slot.
pub fn conflict_count(tasks: &[TaskSpec], pool: &WorkerPool) -> u64 {
    let mut total = 0u64;
    for slot in 1..=pool.m() {
        let mut by_worker: HashMap<WorkerId, u64> = HashMap::new();
        for t in tasks {
            if let Some(q) = pool.kth_nearest_available(t.location, slot, 1) {
                *by_worker.entry(q.worker).or_default() += 1;
            }
        }
        total += by_worker.values().map(|&n| n * n.saturating_sub(1) / 2).sum::<u64>();
    }
    total
}

/// Best single (task, slot) by quality increase alone.
pub(crate) fn best_singleton(
    tasks: &[TaskSpec],
    pool: &WorkerPool,
    budget: Budget,
    config: &RunConfig,
) -> Result<(Option<Candidate>, usize)> {
    let mut engine = Engine::new(tasks, pool.clone(), budget, config)?;
    let mut best: Option<Candidate> = None;
    for t in 0..tasks.len() {
        if let Some(c) = engine.best_for(t, Objective::ByGain) {
            if best.as_ref().is_none_or(|b| outranks(&c, b)) {
                best = Some(c);
            }
        }
    }
    Ok((best, engine.evaluations))
}

pub(crate) fn summarize(
    states: Vec<TaskState>,
    commits: Vec<Commit>,
    conflict_count: u64,
    config: &RunConfig,
) -> Result<MultiRunResult> {
    let mut q_sum = 0.0;
    let mut q_min = f64::INFINITY;
    for s in &states {
        let q = task_quality(s, config.k, QualityMode::Plain, &FullyReliable)?;
        q_sum += q;
        q_min = q_min.min(q);
    }
    if states.is_empty() {
        q_min = 0.0;
    }
    let spent = commits.iter().map(|c| c.cost).sum();
    Ok(MultiRunResult {
        states,
        q_sum,
        q_min,
        spent,
        commits,
        conflict_count,
        used_singleton: false,
        evaluations: 0,
        timings: PhaseTimings::default(),
        groups: None,
        protocol: None,
    })
}

/// Replaces a greedy outcome by the best singleton when that is strictly
/// better, committing the winner's assignments into `pool`.
pub(crate) fn settle(
    tasks: &[TaskSpec],
    pool: &mut WorkerPool,
    greedy: (WorkerPool, Vec<TaskState>, Vec<Commit>),
    singleton: Option<Candidate>,
    conflicts: u64,
    config: &RunConfig,
) -> Result<MultiRunResult> {
    let (greedy_pool, states, commits) = greedy;
    let result = summarize(states, commits, conflicts, config)?;
    if let Some(c) = singleton {
        let mut states: Vec<TaskState> = tasks.iter().map(|t| TaskState::new(t.clone())).collect();
        states[c.task].execute(c.slot, c.quote.worker, c.quote.cost)?;
        let commit = Commit { task: tasks[c.task].id, slot: c.slot, worker: c.quote.worker, cost: c.quote.cost, score: c.score };
        let alt = summarize(states, vec![commit], conflicts, config)?;
        if alt.q_sum > result.q_sum {
            pool.commit(commit.worker, commit.slot, commit.task)?;
            return Ok(MultiRunResult { used_singleton: true, ..alt });
        }
    }
    *pool = greedy_pool;
    Ok(result)
}

/// Summation greedy: each iteration executes the (task, slot) pair with the
/// best quality increase per unit cost across all tasks. Commits the chosen
/// workers into `pool`.
pub fn msqm_serial(
    tasks: &[TaskSpec],
    pool: &mut WorkerPool,
    budget: Budget,
    config: &RunConfig,
) -> Result<MultiRunResult> {
    check_multi(tasks, pool, config)?;
    let start = Instant::now();
    let conflicts = conflict_count(tasks, pool);
    let (singleton, single_evals) = best_singleton(tasks, pool, budget, config)?;

    let mut engine = Engine::new(tasks, pool.clone(), budget, config)?;
    let mut cache: Vec<Option<Option<Candidate>>> = vec![None; tasks.len()];
    let mut commits = Vec::new();
    loop {
        let remaining = engine.budget.remaining();
        let mut best: Option<Candidate> = None;
        for (t, cached) in cache.iter_mut().enumerate() {
            let stale = match cached {
                None => true,
                Some(Some(c)) => c.quote.cost > remaining,
                Some(None) => false,
            };
            if stale {
                *cached = Some(engine.best_for(t, Objective::ByRatio));
            }
            if let Some(Some(c)) = cached {
                if best.as_ref().is_none_or(|b| outranks(c, b)) {
                    best = Some(*c);
                }
            }
        }
        let Some(choice) = best else { break };
        let (commit, requoted) = engine.commit(&choice)?;
        commits.push(commit);
        cache[choice.task] = None;
        for t in requoted {
            if matches!(&cache[t], Some(Some(c)) if c.slot == choice.slot) {
                cache[t] = None;
            }
        }
    }
    let evaluations = engine.evaluations + single_evals;
    let mut timings = engine.timings;
    let greedy = (engine.pool, engine.states, commits);
    let mut result = settle(tasks, pool, greedy, singleton, conflicts, config)?;
    result.evaluations = evaluations;
    timings.total = start.elapsed();
    result.timings = timings;
    Ok(result)
}

/// Minimum-quality greedy: repeatedly gives the currently worst task its
/// best affordable slot by quality increase per unit cost. Commits the
/// chosen workers into `pool`.
pub fn mmqm(
    tasks: &[TaskSpec],
    pool: &mut WorkerPool,
    budget: Budget,
    config: &RunConfig,
) -> Result<MultiRunResult> {
    check_multi(tasks, pool, config)?;
    let start = Instant::now();
    let conflicts = conflict_count(tasks, pool);
    let mut engine = Engine::new(tasks, pool.clone(), budget, config)?;
    let key = |q: f64| Reverse(crate::voronoi::Score::gain(q));
    let mut heap: BinaryHeap<(Reverse<Score>, Reverse<usize>)> =
        (0..tasks.len()).map(|t| (key(0.0), Reverse(t))).collect();
    let mut commits = Vec::new();
    while let Some((_, Reverse(t))) = heap.pop() {
        let Some(choice) = engine.best_for(t, Objective::ByRatio) else {
            continue;
        };
        let (commit, _) = engine.commit(&choice)?;
        commits.push(commit);
        let q = task_quality(&engine.states[t], config.k, QualityMode::Plain, &FullyReliable)?;
        heap.push((key(q), Reverse(t)));
    }
    let evaluations = engine.evaluations;
    let mut timings = engine.timings;
    let singleton = if tasks.len() == 1 { best_singleton(tasks, pool, budget, config)?.0 } else { None };
    let greedy = (engine.pool, engine.states, commits);
    let mut result = settle(tasks, pool, greedy, singleton, conflicts, config)?;
    result.evaluations = evaluations;
    timings.total = start.elapsed();
    result.timings = timings;
    Ok(result)
}

#[cfg(test)]
mod tests;
