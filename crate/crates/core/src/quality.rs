//! Entropy-based task quality over k-NN interpolated slots.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{QualityMode, TaskState, WorkerId, WorkerSchedule};
use crate::timeline::{ExecutedTimeline, InterpolationResult};

/// Maps a worker to its reliability.
pub trait ReliabilityLookup {
    fn reliability(&self, worker: WorkerId) -> Option<f64>;
}

impl ReliabilityLookup for HashMap<WorkerId, f64> {
    fn reliability(&self, worker: WorkerId) -> Option<f64> {
        self.get(&worker).copied()
    }
}

impl ReliabilityLookup for [WorkerSchedule] {
    fn reliability(&self, worker: WorkerId) -> Option<f64> {
        self.iter().find(|w| w.id == worker).map(|w| w.reliability)
    }
}

/// Every worker is perfectly reliable.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullyReliable;

impl ReliabilityLookup for FullyReliable {
    fn reliability(&self, _: WorkerId) -> Option<f64> {
        Some(1.0)
    }
}

/// `-p log2 p`, with `0 log 0 = 0`.
#[inline]
pub fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Largest entropy term over `[a, b]`.
pub(crate) fn entropy_term_max(a: f64, b: f64) -> f64 {
    let peak = std::f64::consts::E.recip();
    if a <= peak && peak <= b {
        entropy_term(peak)
    } else {
        entropy_term(a).max(entropy_term(b))
    }
}

/// Finishing probability of an interpolated slot whose padded k-NN
/// distances add up to `dsum`.
#[inline]
pub(crate) fn p_from_dsum(dsum: usize, k: usize, m: usize) -> f64 {
    let (k, m) = (k as f64, m as f64);
    (1.0 - dsum as f64 / (k * m)) / m
}

pub fn error_ratio(slot: usize, timeline: &ExecutedTimeline, k: usize) -> Result<f64> {
    timeline.check_slot(slot)?;
    if timeline.contains(slot) {
        return Ok(0.0);
    }
    let (dsum, _) = timeline.dsum_kth(slot, k);
    Ok(dsum as f64 / (k * timeline.m()) as f64)
}

pub fn finishing_probability(slot: usize, timeline: &ExecutedTimeline, k: usize) -> Result<f64> {
    timeline.check_slot(slot)?;
    let m = timeline.m();
    Ok(if timeline.contains(slot) {
        1.0 / m as f64
    } else {
        p_from_dsum(timeline.dsum_kth(slot, k).0, k, m)
    })
}

/// k-NN of `slot` with each neighbor's executing-worker reliability.
pub fn interpolate_reliable(
    slot: usize,
    state: &TaskState,
    workers: &(impl ReliabilityLookup + ?Sized),
    k: usize,
) -> Result<InterpolationResult> {
    let mut r = state.timeline().knn(slot, k)?;
    for n in &mut r.neighbors {
        n.reliability = executed_reliability(state, n.slot, workers)?;
    }
    Ok(r)
}

fn executed_reliability(
    state: &TaskState,
    slot: usize,
    workers: &(impl ReliabilityLookup + ?Sized),
) -> Result<f64> {
    let worker = state
        .ledger()
        .get(slot)
        .map(|a| a.worker)
        .expect("executed slots always have a ledger entry");
    workers.reliability(worker).ok_or(Error::MissingReliability(worker))
}

pub fn finishing_probability_reliable(
    slot: usize,
    state: &TaskState,
    workers: &(impl ReliabilityLookup + ?Sized),
    k: usize,
) -> Result<f64> {
    let m = state.m();
    state.timeline().check_slot(slot)?;
    if state.is_executed(slot) {
        return Ok(executed_reliability(state, slot, workers)? / m as f64);
    }
    let r = interpolate_reliable(slot, state, workers, k)?;
    Ok(p_reliable(&r, k, m))
}

pub(crate) fn p_reliable(r: &InterpolationResult, k: usize, m: usize) -> f64 {
    let mut lam_sum = r.padded_count as f64;
    let mut lam_dsum = (r.padded_count * m) as f64;
    for n in &r.neighbors {
        lam_sum += n.reliability;
        lam_dsum += n.reliability * n.distance as f64;
    }
    let (kf, mf) = (k as f64, m as f64);
    (lam_sum / kf - lam_dsum / (kf * mf)) / mf
}

/// Plain-metric quality of an executed set.
pub fn timeline_quality(timeline: &ExecutedTimeline, k: usize) -> f64 {
    (1..=timeline.m())
        .map(|j| entropy_term(finishing_probability(j, timeline, k).expect("slot in range")))
        .sum()
}

pub fn task_quality(
    state: &TaskState,
    k: usize,
    mode: QualityMode,
    workers: &(impl ReliabilityLookup + ?Sized),
) -> Result<f64> {
    match mode {
        QualityMode::Plain => Ok(timeline_quality(state.timeline(), k)),
        QualityMode::Reliability => {
            let mut q = 0.0;
            for j in 1..=state.m() {
                q += entropy_term(finishing_probability_reliable(j, state, workers, k)?);
            }
            Ok(q)
        }
    }
}

pub fn quality_sum(
    states: &[TaskState],
    k: usize,
    mode: QualityMode,
    workers: &(impl ReliabilityLookup + ?Sized),
) -> Result<f64> {
    states.iter().map(|s| task_quality(s, k, mode, workers)).sum()
}

pub fn quality_min(
    states: &[TaskState],
    k: usize,
    mode: QualityMode,
    workers: &(impl ReliabilityLookup + ?Sized),
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let mut q = f64::INFINITY;
    for s in states {
        q = q.min(task_quality(s, k, mode, workers)?);
    }
    Ok(q)
}
