//! Budgeted single-task assignment: the exhaustive greedy, the tree-indexed
//! greedy, and an exact enumerator for small instances.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{Budget, QualityMode, RunConfig, TaskSpec, TaskState, WorkerId};
use crate::quality::{
    entropy_term, finishing_probability, finishing_probability_reliable, task_quality,
    timeline_quality,
};
use crate::timeline::ExecutedTimeline;
use crate::voronoi::{best_slot, CostModel, Objective, Score, SlotChoice, VoronoiTree};
use crate::workers::{CostQuote, WorkerPool};

/// Largest `m` the exact enumerator accepts.
pub const MAX_ENUMERATION_M: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub knn_interp: Duration,
    pub heuristic_eval: Duration,
    pub tree_build: Duration,
    pub tree_update: Duration,
    pub total: Duration,
}

impl std::ops::AddAssign for PhaseTimings {
    fn add_assign(&mut self, o: Self) {
        self.knn_interp += o.knn_interp;
        self.heuristic_eval += o.heuristic_eval;
        self.tree_build += o.tree_build;
        self.tree_update += o.tree_update;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleRunResult {
    pub final_state: TaskState,
    pub quality: f64,
    pub spent: f64,
    /// Greedy iterations that executed a slot.
    pub iterations: usize,
    /// Slots in execution order.
    pub sequence: Vec<usize>,
    /// Whether the best single slot beat the greedy set.
    pub used_singleton: bool,
    /// Exact heuristic evaluations performed.
    pub evaluations: usize,
    /// Evaluations the exhaustive greedy performs over the same run.
    pub baseline_evaluations: usize,
    /// Share of baseline evaluations avoided; tree-indexed runs only.
    pub pruning_ratio: Option<f64>,
    pub timings: PhaseTimings,
}

/// Rank-1 eligible quote for every slot of `task`, indexed by `slot - 1`.
pub fn slot_quotes(task: &TaskSpec, pool: &WorkerPool) -> Vec<Option<CostQuote>> {
    (1..=task.m).map(|j| pool.kth_nearest_available(task.location, j, 1)).collect()
}

fn check_inputs(task: &TaskSpec, pool: &WorkerPool, config: &RunConfig) -> Result<()> {
    config.check()?;
    if task.m == 0 || task.m != pool.m() {
        return Err(Error::InvalidConfig(format!(
            "task {} has m = {}, worker pool has m = {}",
            task.id,
            task.m,
            pool.m()
        )));
    }
    Ok(())
}

fn feasible_open(state: &TaskState, quotes: &[Option<CostQuote>], remaining: f64) -> usize {
    (1..=state.m())
        .filter(|&j| !state.is_executed(j) && quotes[j - 1].is_some_and(|q| q.cost <= remaining))
        .count()
}

/// Per-slot entropy terms of the current state under `mode`.
fn entropy_terms(state: &TaskState, k: usize, mode: QualityMode, pool: &WorkerPool) -> Result<Vec<f64>> {
    (1..=state.m())
        .map(|j| {
            Ok(entropy_term(match mode {
                QualityMode::Plain => finishing_probability(j, state.timeline(), k)?,
                QualityMode::Reliability => finishing_probability_reliable(j, state, pool, k)?,
            }))
        })
        .collect()
}

/// Quality increase of executing `e`, re-interpolating every slot of a
/// tentative copy of the state.
fn exhaustive_gain(
    state: &TaskState,
    current: &[f64],
    e: usize,
    quote: CostQuote,
    k: usize,
    mode: QualityMode,
    pool: &WorkerPool,
) -> Result<f64> {
    let mut delta = 0.0;
    match mode {
        QualityMode::Plain => {
            let mut tentative = state.timeline().clone();
            tentative.insert(e)?;
            for j in 1..=state.m() {
                delta += entropy_term(finishing_probability(j, &tentative, k)?) - current[j - 1];
            }
        }
        QualityMode::Reliability => {
            let mut tentative = state.clone();
            tentative.execute(e, quote.worker, quote.cost)?;
            for j in 1..=state.m() {
                delta += entropy_term(finishing_probability_reliable(j, &tentative, pool, k)?)
                    - current[j - 1];
            }
        }
    }
    Ok(delta)
}

struct ExhaustivePick {
    slot: usize,
    evaluations: usize,
}

fn exhaustive_pick(
    state: &TaskState,
    quotes: &[Option<CostQuote>],
    remaining: f64,
    objective: Objective,
    config: &RunConfig,
    pool: &WorkerPool,
    timings: &mut PhaseTimings,
) -> Result<Option<ExhaustivePick>> {
    let t0 = Instant::now();
    let current = entropy_terms(state, config.k, config.quality_mode, pool)?;
    timings.knn_interp += t0.elapsed();
    let t1 = Instant::now();
    let mut best: Option<(Score, ExhaustivePick)> = None;
    let mut evaluations = 0;
    for e in 1..=state.m() {
        if state.is_executed(e) {
            continue;
        }
        let Some(q) = quotes[e - 1].filter(|q| q.cost <= remaining) else {
            continue;
        };
        evaluations += 1;
        let gain = exhaustive_gain(state, &current, e, q, config.k, config.quality_mode, pool)?;
        let score = objective.score(gain, q.cost);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, ExhaustivePick { slot: e, evaluations: 0 }));
        }
    }
    timings.heuristic_eval += t1.elapsed();
    Ok(best.map(|(_, mut p)| {
        p.evaluations = evaluations;
        p
    }))
}

fn execute_quote(state: &mut TaskState, e: usize, quote: CostQuote, budget: &mut Budget) -> Result<()> {
    state.execute(e, quote.worker, quote.cost)?;
    budget.spend(quote.cost);
    Ok(())
}

fn finish(
    task: &TaskSpec,
    greedy: TaskState,
    greedy_seq: Vec<usize>,
    singleton: Option<(usize, CostQuote)>,
    config: &RunConfig,
    pool: &WorkerPool,
) -> Result<(TaskState, Vec<usize>, bool, f64)> {
    let q_greedy = task_quality(&greedy, config.k, config.quality_mode, pool)?;
    if let Some((e, quote)) = singleton {
        let mut single = TaskState::new(task.clone());
        single.execute(e, quote.worker, quote.cost)?;
        let q_single = task_quality(&single, config.k, config.quality_mode, pool)?;
        if q_single > q_greedy {
            return Ok((single, vec![e], true, q_single));
        }
    }
    Ok((greedy, greedy_seq, false, q_greedy))
}

/// Greedy that evaluates every affordable slot exactly in each iteration.
pub fn approx(
    task: &TaskSpec,
    pool: &WorkerPool,
    budget: Budget,
    config: &RunConfig,
) -> Result<SingleRunResult> {
    check_inputs(task, pool, config)?;
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let quotes = slot_quotes(task, pool);
    let mut evaluations = 0;

    let empty = TaskState::new(task.clone());
    let singleton = exhaustive_pick(&empty, &quotes, budget.total(), Objective::ByGain, config, pool, &mut timings)?;
    if let Some(p) = &singleton {
        evaluations += p.evaluations;
    }

    let mut state = empty;
    let mut remaining = budget;
    let mut sequence = Vec::new();
    while let Some(p) = exhaustive_pick(
        &state,
        &quotes,
        remaining.remaining(),
        Objective::ByRatio,
        config,
        pool,
        &mut timings,
    )? {
        evaluations += p.evaluations;
        let q = quotes[p.slot - 1].expect("picked slots are priced");
        execute_quote(&mut state, p.slot, q, &mut remaining)?;
        sequence.push(p.slot);
    }
    let iterations = sequence.len();
    let singleton = singleton.map(|p| (p.slot, quotes[p.slot - 1].expect("priced")));
    let (final_state, sequence, used_singleton, quality) =
        finish(task, state, sequence, singleton, config, pool)?;
    timings.total = start.elapsed();
    Ok(SingleRunResult {
        spent: final_state.spent(),
        final_state,
        quality,
        iterations,
        sequence,
        used_singleton,
        evaluations,
        baseline_evaluations: evaluations,
        pruning_ratio: None,
        timings,
    })
}

/// One task's index together with its prices; the unit the tree-based
/// solvers operate on.
#[derive(Debug, Clone)]
pub struct IndexedTask {
    pub tree: VoronoiTree,
    pub costs: CostModel,
}

impl IndexedTask {
    pub fn new(timeline: &ExecutedTimeline, costs: Vec<Option<f64>>, config: &RunConfig) -> Result<Self> {
        let tree = VoronoiTree::build(timeline, config.k, config.t_s)?;
        let costs = CostModel::new(costs, timeline);
        Ok(Self { tree, costs })
    }

    pub fn best(&self, remaining: f64, objective: Objective) -> crate::voronoi::SearchOutcome {
        best_slot(&self.tree, &self.costs, remaining, objective)
    }

    pub fn execute(&mut self, slot: usize) -> Result<()> {
        self.tree.update_on_execute(slot)?;
        self.costs.mark_executed(slot);
        Ok(())
    }
}

/// Greedy driven by best-first search over the segment tree. Selects the
/// same slots as [`approx`] while evaluating far fewer of them.
pub fn approx_star(
    task: &TaskSpec,
    pool: &WorkerPool,
    budget: Budget,
    config: &RunConfig,
) -> Result<SingleRunResult> {
    check_inputs(task, pool, config)?;
    if config.quality_mode != QualityMode::Plain {
        return Err(Error::UnsupportedQualityMode);
    }
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let quotes = slot_quotes(task, pool);

    let t0 = Instant::now();
    let empty = TaskState::new(task.clone());
    let mut index = IndexedTask::new(empty.timeline(), quotes.iter().map(|q| q.map(|q| q.cost)).collect(), config)?;
    timings.tree_build += t0.elapsed();

    let mut evaluations = 0;
    let mut baseline = feasible_open(&empty, &quotes, budget.total());
    let t1 = Instant::now();
    let singleton = index.best(budget.total(), Objective::ByGain);
    timings.heuristic_eval += t1.elapsed();
    evaluations += singleton.evaluations;

    let mut state = empty;
    let mut remaining = budget;
    let mut sequence = Vec::new();
    loop {
        baseline += feasible_open(&state, &quotes, remaining.remaining());
        let t = Instant::now();
        let out = index.best(remaining.remaining(), Objective::ByRatio);
        timings.heuristic_eval += t.elapsed();
        evaluations += out.evaluations;
        let Some(SlotChoice { slot, .. }) = out.best else {
            break;
        };
        let q = quotes[slot - 1].expect("picked slots are priced");
        execute_quote(&mut state, slot, q, &mut remaining)?;
        let t = Instant::now();
        index.execute(slot)?;
        timings.tree_update += t.elapsed();
        sequence.push(slot);
    }
    let iterations = sequence.len();
    let singleton = singleton.best.map(|c| (c.slot, quotes[c.slot - 1].expect("priced")));
    let (final_state, sequence, used_singleton, quality) =
        finish(task, state, sequence, singleton, config, pool)?;
    timings.total = start.elapsed();
    let pruning_ratio = if baseline == 0 { 0.0 } else { 1.0 - evaluations as f64 / baseline as f64 };
    Ok(SingleRunResult {
        spent: final_state.spent(),
        final_state,
        quality,
        iterations,
        sequence,
        used_singleton,
        evaluations,
        baseline_evaluations: baseline,
        pruning_ratio: Some(pruning_ratio),
        timings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimumSet {
    pub slots: Vec<usize>,
    pub quality: f64,
}

/// Exact optimum over every executed-slot subset whose rank-1 prices fit the
/// budget. Among equal-quality subsets the larger one wins.
pub fn brute_force_optimum(
    task: &TaskSpec,
    pool: &WorkerPool,
    budget: Budget,
    config: &RunConfig,
    max_m: usize,
) -> Result<OptimumSet> {
    check_inputs(task, pool, config)?;
    let limit = max_m.min(MAX_ENUMERATION_M);
    if task.m > limit {
        return Err(Error::InstanceTooLarge { m: task.m, max_m: limit });
    }
    let quotes = slot_quotes(task, pool);
    let priced: Vec<(usize, CostQuote)> =
        quotes.iter().enumerate().filter_map(|(i, q)| q.map(|q| (i + 1, q))).collect();
    let mut best = OptimumSet { slots: Vec::new(), quality: 0.0 };
    for mask in 1u32..(1u32 << priced.len()) {
        let chosen: Vec<(usize, CostQuote)> =
            (0..priced.len()).filter(|b| mask >> b & 1 == 1).map(|b| priced[b]).collect();
        let cost: f64 = chosen.iter().map(|(_, q)| q.cost).sum();
        if cost > budget.total() {
            continue;
        }
        let quality = match config.quality_mode {
            QualityMode::Plain => timeline_quality(
                &ExecutedTimeline::from_slots(task.m, chosen.iter().map(|c| c.0))?,
                config.k,
            ),
            QualityMode::Reliability => {
                let mut s = TaskState::new(task.clone());
                for (j, q) in &chosen {
                    s.execute(*j, q.worker, q.cost)?;
                }
                task_quality(&s, config.k, config.quality_mode, pool)?
            }
        };
        let better = quality > best.quality
            || (quality == best.quality && chosen.len() > best.slots.len());
        if better {
            best = OptimumSet { slots: chosen.iter().map(|c| c.0).collect(), quality };
        }
    }
    Ok(best)
}

/// Worker ids of a result, in slot order.
pub fn assigned_workers(state: &TaskState) -> Vec<(usize, WorkerId)> {
    state.ledger().iter().map(|(s, a)| (s, a.worker)).collect()
}
