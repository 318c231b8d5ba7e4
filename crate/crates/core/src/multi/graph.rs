//! Independence graph over tasks and the group-parallel solver built on it.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use super::{check_multi, conflict_count, msqm_serial, summarize, Commit, MultiRunResult};
use crate::error::{Error, Result};
use crate::model::{Budget, Point, RunConfig, TaskSpec, TaskState, WorkerId};
use crate::single::PhaseTimings;
use crate::workers::WorkerPool;

/// Tasks are adjacent when, at some slot, one available worker lies within
/// both tasks' bound radii. A task's radius at a slot is the cost of its
/// `rank`-th nearest available worker there, where `rank` is its degree
/// plus one; with fewer workers the radius is unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceGraph {
    adjacency: Vec<Vec<u64>>,
    /// Final rank of each task.
    pub ranks: Vec<usize>,
    /// Connected components as task indices, each sorted, ordered by their
    /// smallest member.
    pub groups: Vec<Vec<usize>>,
    /// Edge sets after each round, as sorted index pairs.
    pub round_edges: Vec<Vec<(usize, usize)>>,
}

impl IndependenceGraph {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b / 64] >> (b % 64) & 1 == 1
    }

    pub fn degree(&self, t: usize) -> usize {
        self.adjacency[t].iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n).flat_map(|a| (a + 1..n).filter(move |&b| self.adjacent(a, b)).map(move |b| (a, b))).collect()
    }

    pub fn rounds(&self) -> usize {
        self.round_edges.len()
    }
}

/// Bound radius of a task at a slot for a given rank.
pub fn bound_radius(task: &TaskSpec, pool: &WorkerPool, slot: usize, rank: usize) -> f64 {
    pool.kth_nearest_available(task.location, slot, rank).map_or(f64::INFINITY, |q| q.cost)
}

/// Runs edge-adding rounds until the ranks stop changing.
pub fn build_independence_graph(tasks: &[TaskSpec], pool: &WorkerPool) -> IndependenceGraph {
    let n = tasks.len();
    let words = n.div_ceil(64);
    let mut adjacency = vec![vec![0u64; words]; n];
    let mut ranks = vec![1usize; n];
    let mut round_edges = Vec::new();
    loop {
        let mut added = false;
        for slot in 1..=pool.m() {
            let workers: Vec<(WorkerId, Point)> =
                pool.available_at(slot).filter(|(w, _)| pool.occupant(*w, slot).is_none()).collect();
            let mut near: HashMap<WorkerId, Vec<usize>> = HashMap::new();
            for (t, task) in tasks.iter().enumerate() {
                let radius = bound_radius(task, pool, slot, ranks[t]);
                for &(w, at) in &workers {
                    if task.location.distance(at) <= radius {
                        near.entry(w).or_default().push(t);
                    }
                }
            }
            for group in near.values() {
                for (i, &a) in group.iter().enumerate() {
                    for &b in &group[i + 1..] {
                        if adjacency[a][b / 64] >> (b % 64) & 1 == 0 {
                            adjacency[a][b / 64] |= 1 << (b % 64);
                            adjacency[b][a / 64] |= 1 << (a % 64);
                            added = true;
                        }
                    }
                }
            }
        }
        let graph = IndependenceGraph {
            adjacency: adjacency.clone(),
            ranks: ranks.clone(),
            groups: Vec::new(),
            round_edges: Vec::new(),
        };
        round_edges.push(graph.edges());
        let next: Vec<usize> = (0..n).map(|t| graph.degree(t) + 1).collect();
        if !added && next == ranks {
            break;
        }
        ranks = next;
    }
    let groups = components(&adjacency);
    IndependenceGraph { adjacency, ranks, groups, round_edges }
}

fn components(adjacency: &[Vec<u64>]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, row) in adjacency.iter().enumerate() {
        for b in a + 1..n {
            if row[b / 64] >> (b % 64) & 1 == 1 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot_of: HashMap<usize, usize> = HashMap::new();
    for t in 0..n {
        let root = find(&mut parent, t);
        let g = *slot_of.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(t);
    }
    groups
}

/// Solves each independent group serially on its own thread with a budget
/// share proportional to its size, then merges the groups in order. A group
/// whose workers clash with an earlier group is re-solved on the merged pool.
pub fn msqm_parallel_group(
    tasks: &[TaskSpec],
    pool: &mut WorkerPool,
    budget: Budget,
    config: &RunConfig,
) -> Result<MultiRunResult> {
    check_multi(tasks, pool, config)?;
    let start = Instant::now();
    let conflicts = conflict_count(tasks, pool);
    let t0 = Instant::now();
    let graph = build_independence_graph(tasks, pool);
    let build = t0.elapsed();
    let n = tasks.len().max(1) as f64;
    let shares: Vec<Budget> = graph
        .groups
        .iter()
        .map(|g| Budget::new(budget.remaining() * g.len() as f64 / n))
        .collect::<Result<_>>()?;
    let subsets: Vec<Vec<TaskSpec>> =
        graph.groups.iter().map(|g| g.iter().map(|&t| tasks[t].clone()).collect()).collect();

    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.cores)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let base = pool.clone();
    let solved: Vec<Result<MultiRunResult>> = threads.install(|| {
        subsets
            .par_iter()
            .zip(shares.par_iter())
            .map(|(subset, share)| msqm_serial(subset, &mut base.clone(), *share, config))
            .collect()
    });

    let mut merged = pool.clone();
    let mut states: Vec<Option<TaskState>> = vec![None; tasks.len()];
    let mut commits: Vec<Commit> = Vec::new();
    let mut evaluations = 0;
    let mut timings = PhaseTimings { tree_build: build, ..PhaseTimings::default() };
    for ((group, subset), (result, share)) in graph.groups.iter().zip(&subsets).zip(solved.into_iter().zip(&shares)) {
        let mut result = result?;
        if !try_merge(&mut merged, &result.commits) {
            result = msqm_serial(subset, &mut merged, *share, config)?;
        }
        evaluations += result.evaluations;
        timings += result.timings;
        commits.extend(result.commits);
        for (&t, s) in group.iter().zip(result.states) {
            states[t] = Some(s);
        }
    }
    let states = states.into_iter().map(|s| s.expect("every task is in a group")).collect();
    let mut result = summarize(states, commits, conflicts, config)?;
    result.evaluations = evaluations;
    timings.total = start.elapsed();
    result.timings = timings;
    result.groups = Some(graph.groups.len());
    *pool = merged;
    Ok(result)
}

/// Commits all of a group's assignments or none of them.
fn try_merge(pool: &mut WorkerPool, commits: &[Commit]) -> bool {
    for (i, c) in commits.iter().enumerate() {
        if pool.commit(c.worker, c.slot, c.task).is_err() {
            for undo in &commits[..i] {
                pool.release(undo.worker, undo.slot).expect("just committed");
            }
            return false;
        }
    }
    true
}
