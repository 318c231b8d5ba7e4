//! Exhaustive optimum over joint assignments of tiny multi-task instances.

use crate::error::{Error, Result};
use crate::model::{Budget, RunConfig, TaskSpec, WorkerId};
use crate::quality::timeline_quality;
use crate::timeline::ExecutedTimeline;
use crate::workers::WorkerPool;

/// Largest `|T| * m` the joint enumeration accepts.
pub const MAX_JOINT_SLOTS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointObjective {
    Sum,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOptimum {
    pub quality: f64,
    /// Executed slots per task, in input order.
    pub slots: Vec<Vec<usize>>,
    pub cost: f64,
}

/// Cheapest way to serve the tasks in `mask` at one slot with distinct
/// eligible workers.
fn slot_cost(tasks: &[TaskSpec], pool: &WorkerPool, slot: usize, mask: usize) -> f64 {
    let members: Vec<usize> = (0..tasks.len()).filter(|t| mask >> t & 1 == 1).collect();
    let options: Vec<Vec<(WorkerId, f64)>> = members
        .iter()
        .map(|&t| pool.nearest(tasks[t].location, slot, usize::MAX).into_iter().map(|q| (q.worker, q.cost)).collect())
        .collect();
    fn search(options: &[Vec<(WorkerId, f64)>], used: &mut Vec<WorkerId>, acc: f64, best: &mut f64) {
        let Some((first, rest)) = options.split_first() else {
            *best = best.min(acc);
            return;
        };
        for &(w, c) in first {
            if !used.contains(&w) {
                used.push(w);
                search(rest, used, acc + c, best);
                used.pop();
            }
        }
    }
    let mut best = f64::INFINITY;
    search(&options, &mut Vec::new(), 0.0, &mut best);
    best
}

/// Best joint execution under the budget with each (worker, slot) serving at
/// most one task.
pub fn joint_optimum(
    tasks: &[TaskSpec],
    pool: &WorkerPool,
    budget: Budget,
    config: &RunConfig,
    objective: JointObjective,
) -> Result<JointOptimum> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let m = pool.m();
    let n = tasks.len();
    if n * m > MAX_JOINT_SLOTS {
        return Err(Error::InstanceTooLarge { m: n * m, max_m: MAX_JOINT_SLOTS });
    }
    let costs: Vec<Vec<f64>> =
        (1..=m).map(|s| (0..1usize << n).map(|mask| slot_cost(tasks, pool, s, mask)).collect()).collect();
    let subsets = 1usize << m;
    let slots_of = |bits: usize| (1..=m).filter(|s| bits >> (s - 1) & 1 == 1).collect::<Vec<_>>();
    let mut quality = vec![0.0; subsets];
    for (bits, q) in quality.iter_mut().enumerate() {
        let timeline = ExecutedTimeline::from_slots(m, slots_of(bits))?;
        *q = timeline_quality(&timeline, config.k);
    }
    let mut best = JointOptimum { quality: f64::NEG_INFINITY, slots: Vec::new(), cost: 0.0 };
    let mut choice = vec![0usize; n];
    loop {
        let mut cost = 0.0;
        for (s, row) in costs.iter().enumerate() {
            let mask = (0..n).filter(|&t| choice[t] >> s & 1 == 1).fold(0, |acc, t| acc | 1 << t);
            cost += row[mask];
        }
        if cost <= budget.remaining() {
            let qs = choice.iter().map(|&b| quality[b]);
            let value = match objective {
                JointObjective::Sum => qs.sum(),
                JointObjective::Min => qs.fold(f64::INFINITY, f64::min),
            };
            if value > best.quality {
                best = JointOptimum { quality: value, slots: choice.iter().map(|&b| slots_of(b)).collect(), cost };
            }
        }
        let mut t = 0;
        while t < n {
            choice[t] += 1;
            if choice[t] < subsets {
                break;
            }
            choice[t] = 0;
            t += 1;
        }
        if t == n {
            break;
        }
    }
    Ok(best)
}
