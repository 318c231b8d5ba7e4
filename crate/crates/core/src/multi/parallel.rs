//! Task-level parallel summation greedy.
//!
//! Executors compute each task's best slot, plus a short chain of
//! speculative follow-ups, against a snapshot of the pool. A single
//! coordinator owns the real pool and budget and commits proposals in the
//! exact order the serial greedy would. Heartbeats are upper bounds on a
//! task's next heuristic value: options only disappear as the run goes on,
//! so a value computed on an older snapshot never underestimates.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{
    best_singleton, check_multi, conflict_count, msqm_serial, outranks, settle, Candidate, Commit,
    MultiRunResult,
};
use crate::error::{Error, Result};
use crate::model::{Budget, RunConfig, TaskId, TaskSpec, TaskState, WorkerId};
use crate::single::{slot_quotes, IndexedTask, PhaseTimings};
use crate::timeline::ExecutedTimeline;
use crate::voronoi::{Objective, Score};
use crate::workers::{CostQuote, WorkerPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    /// Deterministic round-robin over simulated execution contexts.
    #[default]
    Simulated,
    /// One OS thread per context, talking to the coordinator over channels.
    Threaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskParallelOptions {
    pub scheduler: Scheduler,
    /// Proposals computed per request: the best slot and its speculative
    /// successors.
    pub speculation_depth: usize,
    /// How long the threaded coordinator waits for any message.
    pub timeout: Duration,
    #[doc(hidden)]
    pub drop_messages_for: Option<TaskId>,
}

impl Default for TaskParallelOptions {
    fn default() -> Self {
        Self {
            scheduler: Scheduler::Simulated,
            speculation_depth: 2,
            timeout: Duration::from_secs(30),
            drop_messages_for: None,
        }
    }
}

/// Latest upper bound on each task's next heuristic value.
#[derive(Debug, Clone, PartialEq)]
pub struct HeartbeatTable {
    pub values: Vec<Score>,
    /// Number of updates received per task.
    pub updates: Vec<u64>,
}

impl HeartbeatTable {
    pub const UNKNOWN: Score = Score { free: true, value: f64::INFINITY };

    fn new(n: usize) -> Self {
        Self { values: vec![Self::UNKNOWN; n], updates: vec![0; n] }
    }

    fn set(&mut self, task: usize, value: Score) {
        self.values[task] = value;
        self.updates[task] += 1;
    }
}

/// Tasks competing for the same worker at a slot. Each commit at the slot
/// by a member consumes the current rank and moves on to the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictRecord {
    pub tasks: Vec<TaskId>,
    pub slot: usize,
    pub kth_rank: usize,
    /// (task, rank) in grant order.
    pub grants: Vec<(TaskId, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryStatus {
    Committed,
    Speculative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub step: u64,
    pub task: TaskId,
    pub slot: usize,
    pub worker: WorkerId,
    pub cost: f64,
    pub score: Score,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoggingTable {
    pub entries: Vec<LogEntry>,
}

impl LoggingTable {
    pub fn committed(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(|e| e.status == EntryStatus::Committed)
    }

    pub fn speculative(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(|e| e.status == EntryStatus::Speculative)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub heartbeats: HeartbeatTable,
    pub conflicts: Vec<ConflictRecord>,
    pub log: LoggingTable,
    pub requests: usize,
    pub rollbacks: usize,
    /// Speculative proposals discarded at the end.
    pub released: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Proposal {
    slot: usize,
    quote: CostQuote,
    score: Score,
}

#[derive(Debug, Clone)]
struct Request {
    task: usize,
    epoch: u64,
    priority: Score,
    executed: Vec<usize>,
    pool: Arc<WorkerPool>,
    remaining: f64,
}

#[derive(Debug, Clone)]
enum Response {
    Heartbeat { task: usize, epoch: u64, value: Score },
    /// `None` at the end of a chain means the task has nothing affordable
    /// left.
    Chain { task: usize, epoch: u64, chain: Vec<Option<Proposal>>, evaluations: usize },
}

impl Response {
    fn task(&self) -> usize {
        match self {
            Response::Heartbeat { task, .. } | Response::Chain { task, .. } => *task,
        }
    }
}

/// Executor side: best slot and speculative successors for one task.
fn compute(spec: &TaskSpec, config: &RunConfig, depth: usize, req: &Request) -> Result<Vec<Response>> {
    let timeline = ExecutedTimeline::from_slots(spec.m, req.executed.iter().copied())?;
    let quotes = slot_quotes(spec, &req.pool);
    let mut index = IndexedTask::new(&timeline, quotes.iter().map(|q| q.map(|q| q.cost)).collect(), config)?;
    let mut remaining = req.remaining;
    let mut chain = Vec::with_capacity(depth);
    let mut out = Vec::with_capacity(2);
    let mut evaluations = 0;
    for d in 0..depth.max(1) {
        let found = index.best(remaining, Objective::ByRatio);
        evaluations += found.evaluations;
        let Some(best) = found.best else {
            if d == 0 {
                out.push(Response::Heartbeat { task: req.task, epoch: req.epoch, value: Score::NONE });
            }
            chain.push(None);
            break;
        };
        let quote = quotes[best.slot - 1].expect("chosen slots are priced");
        if d == 0 {
            out.push(Response::Heartbeat { task: req.task, epoch: req.epoch, value: best.score });
        }
        chain.push(Some(Proposal { slot: best.slot, quote, score: best.score }));
        index.execute(best.slot)?;
        remaining = (remaining - quote.cost).max(0.0);
    }
    out.push(Response::Chain { task: req.task, epoch: req.epoch, chain, evaluations });
    Ok(out)
}

struct Coordinator<'a> {
    tasks: &'a [TaskSpec],
    pool: WorkerPool,
    budget: Budget,
    states: Vec<TaskState>,
    epoch: Vec<u64>,
    chains: Vec<VecDeque<Option<Proposal>>>,
    pending: Vec<bool>,
    finished: Vec<bool>,
    heartbeats: HeartbeatTable,
    conflicts: Vec<ConflictRecord>,
    conflicts_at: HashMap<usize, Vec<usize>>,
    log: LoggingTable,
    commits: Vec<Commit>,
    step: u64,
    requests: usize,
    rollbacks: usize,
    evaluations: usize,
    outbox: Vec<Request>,
}

impl<'a> Coordinator<'a> {
    fn new(tasks: &'a [TaskSpec], pool: WorkerPool, budget: Budget) -> Self {
        let n = tasks.len();
        let mut conflicts = Vec::new();
        let mut conflicts_at: HashMap<usize, Vec<usize>> = HashMap::new();
        for slot in 1..=pool.m() {
            let mut by_worker: HashMap<WorkerId, Vec<TaskId>> = HashMap::new();
            for t in tasks {
                if let Some(q) = pool.kth_nearest_available(t.location, slot, 1) {
                    by_worker.entry(q.worker).or_default().push(t.id);
                }
            }
            let mut groups: Vec<Vec<TaskId>> = by_worker.into_values().filter(|g| g.len() >= 2).collect();
            groups.sort();
            for g in groups {
                conflicts_at.entry(slot).or_default().push(conflicts.len());
                conflicts.push(ConflictRecord { tasks: g, slot, kth_rank: 1, grants: Vec::new() });
            }
        }
        let mut c = Self {
            tasks,
            pool,
            budget,
            states: tasks.iter().map(|t| TaskState::new(t.clone())).collect(),
            epoch: vec![0; n],
            chains: vec![VecDeque::new(); n],
            pending: vec![false; n],
            finished: vec![false; n],
            heartbeats: HeartbeatTable::new(n),
            conflicts,
            conflicts_at,
            log: LoggingTable::default(),
            commits: Vec::new(),
            step: 0,
            requests: 0,
            rollbacks: 0,
            evaluations: 0,
            outbox: Vec::new(),
        };
        for t in 0..n {
            c.request(t);
        }
        c
    }

    fn done(&self) -> bool {
        self.finished.iter().all(|&f| f)
    }

    fn request(&mut self, t: usize) {
        self.pending[t] = true;
        self.requests += 1;
        self.outbox.push(Request {
            task: t,
            epoch: self.epoch[t],
            priority: self.heartbeats.values[t],
            executed: self.states[t].executed().to_vec(),
            pool: Arc::new(self.pool.clone()),
            remaining: self.budget.remaining(),
        });
    }

    fn log(&mut self, t: usize, p: &Proposal, status: EntryStatus) {
        self.step += 1;
        self.log.entries.push(LogEntry {
            step: self.step,
            task: self.tasks[t].id,
            slot: p.slot,
            worker: p.quote.worker,
            cost: p.quote.cost,
            score: p.score,
            status,
        });
    }

    fn handle(&mut self, resp: Response) -> Result<()> {
        match resp {
            Response::Heartbeat { task, epoch, value } => {
                if epoch == self.epoch[task] && self.pending[task] {
                    self.heartbeats.set(task, value);
                }
            }
            Response::Chain { task, epoch, chain, evaluations } => {
                self.evaluations += evaluations;
                if epoch != self.epoch[task] {
                    return Ok(());
                }
                self.pending[task] = false;
                for p in chain.iter().skip(1).flatten() {
                    self.log(task, p, EntryStatus::Speculative);
                }
                self.chains[task] = chain.into();
                self.refresh_head(task);
            }
        }
        self.advance()
    }

    /// Publishes the head of a chain, requesting a new chain when it ran out.
    fn refresh_head(&mut self, t: usize) {
        match self.chains[t].front() {
            Some(Some(p)) => self.heartbeats.set(t, p.score),
            Some(None) => {
                self.heartbeats.set(t, Score::NONE);
                self.finished[t] = true;
            }
            None => self.request(t),
        }
    }

    fn head(&self, t: usize) -> Option<&Proposal> {
        self.chains[t].front().and_then(Option::as_ref)
    }

    fn valid(&self, p: &Proposal) -> bool {
        self.pool.occupant(p.quote.worker, p.slot).is_none() && self.budget.can_afford(p.quote.cost)
    }

    /// Commits every head that the serial greedy would commit next.
    fn advance(&mut self) -> Result<()> {
        loop {
            for t in 0..self.tasks.len() {
                if self.finished[t] || self.pending[t] {
                    continue;
                }
                if let Some(p) = self.head(t).copied() {
                    if !self.valid(&p) {
                        self.rollbacks += 1;
                        self.epoch[t] += 1;
                        self.chains[t].clear();
                        self.request(t);
                    }
                }
            }
            let mut best: Option<Candidate> = None;
            for t in 0..self.tasks.len() {
                if self.finished[t] || self.pending[t] {
                    continue;
                }
                if let Some(p) = self.head(t) {
                    let c = Candidate { task: t, slot: p.slot, quote: p.quote, score: p.score };
                    if best.as_ref().is_none_or(|b| outranks(&c, b)) {
                        best = Some(c);
                    }
                }
            }
            let Some(c) = best else { return Ok(()) };
            let blocked = (0..self.tasks.len()).any(|u| {
                u != c.task && !self.finished[u] && self.pending[u] && {
                    let hb = self.heartbeats.values[u];
                    hb > c.score || (hb == c.score && u < c.task)
                }
            });
            if blocked {
                return Ok(());
            }
            self.commit(&c)?;
        }
    }

    fn commit(&mut self, c: &Candidate) -> Result<()> {
        let id = self.tasks[c.task].id;
        self.pool.commit(c.quote.worker, c.slot, id)?;
        self.states[c.task].execute(c.slot, c.quote.worker, c.quote.cost)?;
        self.budget.spend(c.quote.cost);
        let p = Proposal { slot: c.slot, quote: c.quote, score: c.score };
        self.log(c.task, &p, EntryStatus::Committed);
        self.commits.push(Commit { task: id, slot: c.slot, worker: c.quote.worker, cost: c.quote.cost, score: c.score });
        for &r in self.conflicts_at.get(&c.slot).into_iter().flatten() {
            let record = &mut self.conflicts[r];
            if record.tasks.contains(&id) {
                record.grants.push((id, record.kth_rank));
                record.kth_rank += 1;
            }
        }
        self.chains[c.task].pop_front();
        self.refresh_head(c.task);
        Ok(())
    }

    fn oldest_pending(&self) -> TaskId {
        let t = (0..self.tasks.len()).find(|&t| self.pending[t]).unwrap_or(0);
        self.tasks[t].id
    }

    /// Rebuilds the final assignment from the committed log entries alone,
    /// in decreasing heuristic order, against the initial pool.
    fn replay(&self, initial: &WorkerPool, total: Budget) -> Result<Vec<Commit>> {
        let mut order: Vec<&LogEntry> = self.log.committed().collect();
        order.sort_by(|a, b| b.score.cmp(&a.score).then(a.step.cmp(&b.step)));
        let mut pool = initial.clone();
        let mut budget = total;
        let mut out = Vec::with_capacity(order.len());
        for e in order {
            if !budget.can_afford(e.cost) {
                break;
            }
            pool.commit(e.worker, e.slot, e.task)?;
            budget.spend(e.cost);
            out.push(Commit { task: e.task, slot: e.slot, worker: e.worker, cost: e.cost, score: e.score });
        }
        Ok(out)
    }
}

/// Per-context queue ordered by request priority, ties to the smaller task.
#[derive(Default)]
struct Queue(BinaryHeap<(Score, Reverse<usize>, Reverse<u64>, QueuedRequest)>);

struct QueuedRequest(Request);

impl PartialEq for QueuedRequest {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for QueuedRequest {}
impl PartialOrd for QueuedRequest {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedRequest {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl Queue {
    fn push(&mut self, r: Request) {
        self.0.push((r.priority, Reverse(r.task), Reverse(r.epoch), QueuedRequest(r)));
    }

    fn pop(&mut self) -> Option<Request> {
        self.0.pop().map(|(_, _, _, QueuedRequest(r))| r)
    }
}

fn run_simulated(
    coord: &mut Coordinator<'_>,
    config: &RunConfig,
    opts: &TaskParallelOptions,
) -> Result<()> {
    let cores = config.cores;
    let mut queues: Vec<Queue> = (0..cores).map(|_| Queue::default()).collect();
    while !coord.done() {
        for r in coord.outbox.drain(..) {
            queues[r.task % cores].push(r);
        }
        let mut inbox = Vec::new();
        for q in &mut queues {
            if let Some(r) = q.pop() {
                let resp = compute(&coord.tasks[r.task], config, opts.speculation_depth, &r)?;
                inbox.extend(resp);
            }
        }
        if inbox.is_empty() && coord.outbox.is_empty() && queues.iter().all(|q| q.0.is_empty()) {
            return Err(Error::CoordinatorTimeout(coord.oldest_pending()));
        }
        for resp in inbox {
            if opts.drop_messages_for == Some(coord.tasks[resp.task()].id) {
                continue;
            }
            coord.handle(resp)?;
        }
    }
    Ok(())
}

fn executor(
    tasks: &[TaskSpec],
    config: &RunConfig,
    opts: &TaskParallelOptions,
    requests: Receiver<Request>,
    responses: Sender<Result<Response>>,
) {
    let mut queue = Queue::default();
    loop {
        if queue.0.is_empty() {
            match requests.recv() {
                Ok(r) => queue.push(r),
                Err(_) => return,
            }
        }
        while let Ok(r) = requests.try_recv() {
            queue.push(r);
        }
        let Some(r) = queue.pop() else { continue };
        let dropped = opts.drop_messages_for == Some(tasks[r.task].id);
        match compute(&tasks[r.task], config, opts.speculation_depth, &r) {
            Ok(resp) => {
                for m in resp {
                    if !dropped && responses.send(Ok(m)).is_err() {
                        return;
                    }
                }
            }
            Err(e) => {
                let _ = responses.send(Err(e));
                return;
            }
        }
    }
}

fn run_threaded(
    coord: &mut Coordinator<'_>,
    config: &RunConfig,
    opts: &TaskParallelOptions,
) -> Result<()> {
    let cores = config.cores;
    let tasks = coord.tasks;
    let (resp_tx, resp_rx) = unbounded::<Result<Response>>();
    std::thread::scope(|scope| {
        let mut senders = Vec::with_capacity(cores);
        for _ in 0..cores {
            let (tx, rx) = unbounded::<Request>();
            let resp_tx = resp_tx.clone();
            scope.spawn(move || executor(tasks, config, opts, rx, resp_tx));
            senders.push(tx);
        }
        drop(resp_tx);
        let outcome = (|| {
            loop {
                for r in coord.outbox.drain(..) {
                    let _ = senders[r.task % cores].send(r);
                }
                if coord.done() {
                    return Ok(());
                }
                match resp_rx.recv_timeout(opts.timeout) {
                    Ok(resp) => coord.handle(resp?)?,
                    Err(RecvTimeoutError::Timeout) => return Err(Error::CoordinatorTimeout(coord.oldest_pending())),
                    Err(RecvTimeoutError::Disconnected) => {
                        return Err(Error::CoordinatorTimeout(coord.oldest_pending()))
                    }
                }
            }
        })();
        drop(senders);
        outcome
    })
}

/// Task-level parallel summation greedy. Produces exactly the assignment
/// of [`msqm_serial`] for any number of contexts. Commits the chosen
/// workers into `pool`.
pub fn msqm_parallel_task(
    tasks: &[TaskSpec],
    pool: &mut WorkerPool,
    budget: Budget,
    config: &RunConfig,
    opts: &TaskParallelOptions,
) -> Result<MultiRunResult> {
    check_multi(tasks, pool, config)?;
    if opts.speculation_depth == 0 {
        return Err(Error::InvalidConfig("speculation depth must be at least 1".into()));
    }
    if config.cores == 1 {
        return msqm_serial(tasks, pool, budget, config);
    }
    let start = Instant::now();
    let conflicts = conflict_count(tasks, pool);
    let (singleton, single_evals) = best_singleton(tasks, pool, budget, config)?;
    let mut coord = Coordinator::new(tasks, pool.clone(), budget);
    match opts.scheduler {
        Scheduler::Simulated => run_simulated(&mut coord, config, opts)?,
        Scheduler::Threaded => run_threaded(&mut coord, config, opts)?,
    }
    let replayed = coord.replay(pool, budget)?;
    debug_assert_eq!(replayed.len(), coord.commits.len());
    let report = ProtocolReport {
        heartbeats: coord.heartbeats.clone(),
        conflicts: coord.conflicts.clone(),
        released: coord.log.speculative().count(),
        log: coord.log.clone(),
        requests: coord.requests,
        rollbacks: coord.rollbacks,
    };
    let evaluations = coord.evaluations + single_evals;
    let greedy = (coord.pool, coord.states, coord.commits);
    let mut result = settle(tasks, pool, greedy, singleton, conflicts, config)?;
    result.evaluations = evaluations;
    result.timings = PhaseTimings { total: start.elapsed(), ..PhaseTimings::default() };
    result.protocol = Some(report);
    Ok(result)
}
