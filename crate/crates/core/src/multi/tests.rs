use super::*;
use crate::datagen::{generate, GenSpec};
use crate::model::{Distribution, Point, WorkerSchedule};
use crate::quality::{entropy_term, finishing_probability};
use crate::single::approx;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Duration;

fn cfg() -> RunConfig {
    RunConfig::default()
}

fn budget(b: f64) -> Budget {
    Budget::new(b).unwrap()
}

fn generated(seed: u64, n_tasks: usize, n_workers: usize, m: usize, d: Distribution) -> (Vec<TaskSpec>, WorkerPool) {
    let spec = GenSpec { n_tasks, n_workers, m, distribution: d, seed, ..GenSpec::default() };
    let (tasks, workers) = generate(&spec);
    (tasks, WorkerPool::new(m, workers).unwrap())
}

fn tiny(seed: u64, n_tasks: usize, m: usize, n_workers: usize) -> (Vec<TaskSpec>, WorkerPool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..n_tasks)
        .map(|i| TaskSpec::new(TaskId(i as u32), Point::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)), m))
        .collect();
    let ws = (0..n_workers)
        .map(|i| {
            let at = Point::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
            let slots: Vec<usize> = (1..=m).filter(|_| rng.random_bool(0.5)).collect();
            WorkerSchedule::stationary(WorkerId(i as u32), m, at, slots)
        })
        .collect();
    (tasks, WorkerPool::new(m, ws).unwrap())
}

fn state_gain(state: &TaskState, slot: usize, k: usize) -> f64 {
    let before = state.timeline();
    let mut after = before.clone();
    after.insert(slot).unwrap();
    let m = before.m();
    let mut gain = 0.0;
    for j in 1..=m {
        let d = entropy_term(finishing_probability(j, &after, k).unwrap())
            - entropy_term(finishing_probability(j, before, k).unwrap());
        if d != 0.0 {
            gain += d;
        }
    }
    gain
}

// Naive summation greedy: every iteration rescans every (task, slot) pair
// with quotes fetched fresh from the pool.
fn naive_greedy(tasks: &[TaskSpec], pool: &WorkerPool, b: f64, k: usize) -> Vec<(TaskId, usize, WorkerId)> {
    let mut pool = pool.clone();
    let mut states: Vec<TaskState> = tasks.iter().map(|t| TaskState::new(t.clone())).collect();
    let mut left = b;
    let mut out = Vec::new();
    loop {
        let mut best: Option<(Score, usize, usize, CostQuote)> = None;
        for (t, task) in tasks.iter().enumerate() {
            for slot in 1..=task.m {
                if states[t].is_executed(slot) {
                    continue;
                }
                let Some(q) = pool.kth_nearest_available(task.location, slot, 1) else { continue };
                if q.cost > left {
                    continue;
                }
                let score = Score::ratio(state_gain(&states[t], slot, k), q.cost);
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, t, slot, q));
                }
            }
        }
        let Some((_, t, slot, q)) = best else { break };
        pool.commit(q.worker, slot, tasks[t].id).unwrap();
        states[t].execute(slot, q.worker, q.cost).unwrap();
        left -= q.cost;
        out.push((tasks[t].id, slot, q.worker));
    }
    out
}

fn exclusive(result: &MultiRunResult) -> bool {
    let pairs: BTreeSet<(WorkerId, usize)> = result.commits.iter().map(|c| (c.worker, c.slot)).collect();
    pairs.len() == result.commits.len()
}

#[test]
fn single_task_matches_approx() {
    for seed in 0..6 {
        let (tasks, pool) = generated(seed, 1, 120, 40, Distribution::Uniform);
        let single = approx(&tasks[0], &pool, budget(900.0), &cfg()).unwrap();
        for solver in [msqm_serial, mmqm] {
            let r = solver(&tasks, &mut pool.clone(), budget(900.0), &cfg()).unwrap();
            let seq: Vec<usize> = r.commits.iter().map(|c| c.slot).collect();
            assert_eq!(seq, single.sequence);
            assert_eq!(r.used_singleton, single.used_singleton);
            assert!((r.q_sum - single.quality).abs() <= 1e-9);
        }
    }
}

#[test]
fn serial_matches_naive_rescan() {
    for seed in 0..8 {
        let (tasks, pool) = generated(seed, 6, 60, 24, Distribution::Gaussian);
        let r = msqm_serial(&tasks, &mut pool.clone(), budget(700.0), &cfg()).unwrap();
        if r.used_singleton {
            continue;
        }
        let got: Vec<(TaskId, usize, WorkerId)> = r.commits.iter().map(|c| (c.task, c.slot, c.worker)).collect();
        assert_eq!(got, naive_greedy(&tasks, &pool, 700.0, 3), "seed {seed}");
        assert!(exclusive(&r));
    }
}

#[test]
fn disjoint_neighborhoods_share_only_the_budget() {
    let m = 12;
    let tasks = vec![
        TaskSpec::new(TaskId(0), Point::new(0.0, 0.0), m),
        TaskSpec::new(TaskId(1), Point::new(1000.0, 1000.0), m),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ws = Vec::new();
    for (i, base) in [(0.0, 0.0), (1000.0, 1000.0)].into_iter().enumerate() {
        for j in 0..4 {
            let at = Point::new(base.0 + rng.random_range(1.0..9.0), base.1 + rng.random_range(1.0..9.0));
            let slots: Vec<usize> = (1..=m).filter(|_| j == 0 || rng.random_bool(0.5)).collect();
            ws.push(WorkerSchedule::stationary(WorkerId((i * 4 + j) as u32), m, at, slots));
        }
    }
    let pool = WorkerPool::new(m, ws).unwrap();
    let r = msqm_serial(&tasks, &mut pool.clone(), budget(40.0), &cfg()).unwrap();
    let got: Vec<(TaskId, usize, WorkerId)> = r.commits.iter().map(|c| (c.task, c.slot, c.worker)).collect();
    assert_eq!(got, naive_greedy(&tasks, &pool, 40.0, 3));
    assert_eq!(conflict_count(&tasks, &pool), 0);
    let g = build_independence_graph(&tasks, &pool);
    assert_eq!(g.groups, vec![vec![0], vec![1]]);
}

#[test]
fn commits_reach_the_pool() {
    let (tasks, pool) = generated(2, 10, 100, 30, Distribution::Uniform);
    let mut p = pool.clone();
    let r = msqm_serial(&tasks, &mut p, budget(600.0), &cfg()).unwrap();
    assert_eq!(p.committed_count(), r.commits.len());
    for c in &r.commits {
        assert_eq!(p.occupant(c.worker, c.slot), Some(c.task));
    }
    assert!(r.spent <= 600.0 + 1e-9);
    let q_sum: f64 = r.states.iter().map(|s| task_quality(s, 3, QualityMode::Plain, &FullyReliable).unwrap()).sum();
    assert!((q_sum - r.q_sum).abs() < 1e-12);
}

#[test]
fn conflict_count_counts_pairs() {
    let m = 2;
    let ws = vec![
        WorkerSchedule::stationary(WorkerId(0), m, Point::new(0.0, 0.0), [1, 2]),
        WorkerSchedule::stationary(WorkerId(1), m, Point::new(100.0, 0.0), [1]),
    ];
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks: Vec<TaskSpec> =
        (0..3).map(|i| TaskSpec::new(TaskId(i), Point::new(f64::from(i), 0.0), m)).collect();
    // Slot 1: all three share w0, three pairs. Slot 2: same again.
    assert_eq!(conflict_count(&tasks, &pool), 6);
}

#[test]
fn reliability_mode_is_rejected() {
    let (tasks, pool) = generated(1, 3, 30, 10, Distribution::Uniform);
    let c = cfg().with_quality_mode(QualityMode::Reliability);
    assert_eq!(msqm_serial(&tasks, &mut pool.clone(), budget(10.0), &c), Err(Error::UnsupportedQualityMode));
    assert_eq!(mmqm(&tasks, &mut pool.clone(), budget(10.0), &c), Err(Error::UnsupportedQualityMode));
}

#[test]
fn mismatched_or_duplicate_tasks_are_rejected() {
    let (mut tasks, pool) = generated(1, 3, 30, 10, Distribution::Uniform);
    tasks[1].id = tasks[0].id;
    assert!(matches!(msqm_serial(&tasks, &mut pool.clone(), budget(10.0), &cfg()), Err(Error::InvalidConfig(_))));
    tasks[1].id = TaskId(1);
    tasks[2].m = 11;
    assert!(matches!(mmqm(&tasks, &mut pool.clone(), budget(10.0), &cfg()), Err(Error::InvalidConfig(_))));
}

#[test]
fn empty_task_list_is_a_no_op() {
    let (_, pool) = generated(1, 1, 30, 10, Distribution::Uniform);
    let r = msqm_serial(&[], &mut pool.clone(), budget(10.0), &cfg()).unwrap();
    assert!(r.commits.is_empty());
    assert_eq!(r.q_sum, 0.0);
}

#[test]
fn mmqm_twins_end_equal() {
    let m = 8;
    let ws: Vec<WorkerSchedule> =
        (0..2).map(|i| WorkerSchedule::stationary(WorkerId(i), m, Point::new(1.0 + f64::from(i), 0.0), 1..=m)).collect();
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks: Vec<TaskSpec> = (0..2).map(|i| TaskSpec::new(TaskId(i), Point::new(0.0, 0.0), m)).collect();
    let r = mmqm(&tasks, &mut pool.clone(), budget(1000.0), &cfg()).unwrap();
    let q0 = task_quality(&r.states[0], 3, QualityMode::Plain, &FullyReliable).unwrap();
    let q1 = task_quality(&r.states[1], 3, QualityMode::Plain, &FullyReliable).unwrap();
    assert!((q0 - q1).abs() < 1e-9);
    assert!((r.q_min - (m as f64).log2()).abs() < 1e-9);
}

#[test]
fn mmqm_raises_the_worst_task_first() {
    let (tasks, pool) = generated(7, 5, 80, 20, Distribution::Uniform);
    let r = mmqm(&tasks, &mut pool.clone(), budget(400.0), &cfg()).unwrap();
    // The first five commits go to five distinct tasks, all starting at zero.
    let firsts: BTreeSet<TaskId> = r.commits.iter().take(5).map(|c| c.task).collect();
    assert_eq!(firsts.len(), r.commits.len().min(5));
    assert!(exclusive(&r));
}

#[test]
fn greedy_ratios_hold_on_tiny_instances() {
    let bound = 1.0 - (-0.5f64).exp();
    for seed in 0..20 {
        let (tasks, pool) = tiny(seed, 2, 5, 3);
        let b = budget(25.0);
        let sum = msqm_serial(&tasks, &mut pool.clone(), b, &cfg()).unwrap();
        let opt = joint_optimum(&tasks, &pool, b, &cfg(), JointObjective::Sum).unwrap();
        assert!(sum.q_sum >= bound * opt.quality - 1e-12, "seed {seed}");
        assert!(sum.q_sum <= opt.quality + 1e-9);
        let min = mmqm(&tasks, &mut pool.clone(), b, &cfg()).unwrap();
        let opt = joint_optimum(&tasks, &pool, b, &cfg(), JointObjective::Min).unwrap();
        assert!(min.q_min <= opt.quality + 1e-9);
    }
}

#[test]
fn joint_optimum_respects_exclusivity() {
    let m = 3;
    let ws = vec![WorkerSchedule::stationary(WorkerId(0), m, Point::new(0.0, 0.0), 1..=m)];
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks: Vec<TaskSpec> = (0..2).map(|i| TaskSpec::new(TaskId(i), Point::new(1.0, 0.0), m)).collect();
    let opt = joint_optimum(&tasks, &pool, budget(100.0), &cfg(), JointObjective::Sum).unwrap();
    let total: usize = opt.slots.iter().map(Vec::len).sum();
    assert_eq!(total, 3);
    assert!(joint_optimum(&tasks, &WorkerPool::new(10, vec![]).unwrap(), budget(1.0), &cfg(), JointObjective::Sum).is_err());
}

// w1 and w2 sit at slot 1; tau2 and tau3 both reach w1 first, and
// tau1 only joins once their bounds widen to the second-nearest worker.
#[test]
fn grouping_widens_with_rank() {
    let m = 1;
    let ws = vec![
        WorkerSchedule::stationary(WorkerId(1), m, Point::new(0.0, 0.0), [1]),
        WorkerSchedule::stationary(WorkerId(2), m, Point::new(10.0, 0.0), [1]),
    ];
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks = vec![
        TaskSpec::new(TaskId(1), Point::new(14.0, 0.0), m),
        TaskSpec::new(TaskId(2), Point::new(-2.0, 0.0), m),
        TaskSpec::new(TaskId(3), Point::new(3.0, 0.0), m),
    ];
    let g = build_independence_graph(&tasks, &pool);
    assert_eq!(g.round_edges[0], vec![(1, 2)]);
    assert_eq!(g.groups, vec![vec![0, 1, 2]]);
    assert!(g.rounds() >= 2);
}

fn brute_force_edges(tasks: &[TaskSpec], pool: &WorkerPool, ranks: &[usize]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..tasks.len() {
        for b in a + 1..tasks.len() {
            let linked = (1..=pool.m()).any(|s| {
                let ra = bound_radius(&tasks[a], pool, s, ranks[a]);
                let rb = bound_radius(&tasks[b], pool, s, ranks[b]);
                pool.workers().iter().any(|w| {
                    w.position(s).is_some_and(|at| {
                        pool.occupant(w.id, s).is_none()
                            && tasks[a].location.distance(at) <= ra
                            && tasks[b].location.distance(at) <= rb
                    })
                })
            });
            if linked {
                edges.push((a, b));
            }
        }
    }
    edges
}

#[test]
fn graph_edges_match_pairwise_check() {
    for seed in 0..10 {
        let (tasks, pool) = generated(seed, 12, 60, 10, Distribution::Uniform);
        let g = build_independence_graph(&tasks, &pool);
        assert_eq!(g.edges(), brute_force_edges(&tasks, &pool, &g.ranks), "seed {seed}");
        for t in 0..g.len() {
            assert_eq!(g.ranks[t], g.degree(t) + 1);
        }
        let mut seen: Vec<usize> = g.groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..tasks.len()).collect::<Vec<_>>());
        for (a, b) in g.edges() {
            assert!(g.groups.iter().any(|grp| grp.contains(&a) && grp.contains(&b)));
        }
    }
}

#[test]
fn far_apart_tasks_form_singleton_groups() {
    let m = 4;
    let ws: Vec<WorkerSchedule> = (0..3)
        .flat_map(|i| {
            (0..2).map(move |j| {
                WorkerSchedule::stationary(WorkerId(i * 2 + j), m, Point::new(f64::from(i) * 1000.0 + f64::from(j), 0.0), 1..=m)
            })
        })
        .collect();
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks: Vec<TaskSpec> =
        (0..3).map(|i| TaskSpec::new(TaskId(i), Point::new(f64::from(i) * 1000.0, 1.0), m)).collect();
    let g = build_independence_graph(&tasks, &pool);
    assert_eq!(g.groups.len(), 3);
    let r = msqm_parallel_group(&tasks, &mut pool.clone(), budget(30.0), &cfg().with_cores(3)).unwrap();
    assert_eq!(r.groups, Some(3));
    for (t, state) in tasks.iter().zip(&r.states) {
        let single = approx(t, &pool, budget(10.0), &cfg()).unwrap();
        assert_eq!(state.executed(), single.final_state.executed());
    }
}

#[test]
fn group_mode_tracks_serial() {
    for seed in 0..5 {
        let (tasks, pool) = generated(seed, 40, 400, 40, Distribution::Uniform);
        let b = budget(800.0);
        let serial = msqm_serial(&tasks, &mut pool.clone(), b, &cfg()).unwrap();
        let mut p = pool.clone();
        let group = msqm_parallel_group(&tasks, &mut p, b, &cfg().with_cores(4)).unwrap();
        assert!(exclusive(&group));
        assert!(group.spent <= 800.0 + 1e-9);
        assert_eq!(p.committed_count(), group.commits.len());
        assert!((group.q_sum - serial.q_sum).abs() <= 0.05 * serial.q_sum, "seed {seed}");
    }
}

#[test]
fn one_giant_group_degenerates_to_serial() {
    let m = 6;
    let ws = vec![WorkerSchedule::stationary(WorkerId(0), m, Point::new(0.0, 0.0), 1..=m)];
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks: Vec<TaskSpec> = (0..3).map(|i| TaskSpec::new(TaskId(i), Point::new(f64::from(i), 1.0), m)).collect();
    let serial = msqm_serial(&tasks, &mut pool.clone(), budget(9.0), &cfg()).unwrap();
    let group = msqm_parallel_group(&tasks, &mut pool.clone(), budget(9.0), &cfg().with_cores(2)).unwrap();
    assert_eq!(group.groups, Some(1));
    assert_eq!(group.assignment_set(), serial.assignment_set());
}

fn task_opts(scheduler: Scheduler) -> TaskParallelOptions {
    TaskParallelOptions { scheduler, timeout: Duration::from_secs(20), ..TaskParallelOptions::default() }
}

#[test]
fn task_parallel_matches_serial() {
    for seed in 0..4 {
        let (tasks, pool) = generated(seed, 20, 200, 30, Distribution::Zipfian);
        let b = budget(500.0);
        let serial = msqm_serial(&tasks, &mut pool.clone(), b, &cfg()).unwrap();
        for cores in [2, 4, 8] {
            for scheduler in [Scheduler::Simulated, Scheduler::Threaded] {
                let mut p = pool.clone();
                let r = msqm_parallel_task(&tasks, &mut p, b, &cfg().with_cores(cores), &task_opts(scheduler)).unwrap();
                assert_eq!(r.assignment_set(), serial.assignment_set(), "seed {seed} cores {cores} {scheduler:?}");
                assert_eq!(r.assignment_digest(), serial.assignment_digest());
                assert_eq!(p, {
                    let mut s = pool.clone();
                    msqm_serial(&tasks, &mut s, b, &cfg()).unwrap();
                    s
                });
                let log = &r.protocol.as_ref().unwrap().log;
                assert!(log.entries.windows(2).all(|w| w[0].step < w[1].step));
                assert_eq!(log.committed().count(), serial.commits.len() - usize::from(serial.used_singleton));
            }
        }
    }
}

#[test]
fn task_parallel_with_one_core_is_serial() {
    let (tasks, pool) = generated(3, 8, 80, 20, Distribution::Uniform);
    let serial = msqm_serial(&tasks, &mut pool.clone(), budget(300.0), &cfg()).unwrap();
    let r = msqm_parallel_task(&tasks, &mut pool.clone(), budget(300.0), &cfg(), &TaskParallelOptions::default()).unwrap();
    assert_eq!(r, serial.clone().with_timings(r.timings));
}

impl MultiRunResult {
    fn with_timings(mut self, t: PhaseTimings) -> Self {
        self.timings = t;
        self
    }
}

#[test]
fn conflict_ranks_advance_per_grant() {
    let m = 2;
    let ws: Vec<WorkerSchedule> = (0..3)
        .map(|i| WorkerSchedule::stationary(WorkerId(i), m, Point::new(f64::from(i) * 5.0, 0.0), [1]))
        .collect();
    let pool = WorkerPool::new(m, ws).unwrap();
    let tasks: Vec<TaskSpec> =
        (0..3).map(|i| TaskSpec::new(TaskId(i), Point::new(-1.0 - f64::from(i), 0.0), m)).collect();
    let r = msqm_parallel_task(&tasks, &mut pool.clone(), budget(1000.0), &cfg().with_cores(2), &task_opts(Scheduler::Simulated))
        .unwrap();
    let report = r.protocol.unwrap();
    assert_eq!(report.conflicts.len(), 1);
    let record = &report.conflicts[0];
    assert_eq!(record.slot, 1);
    assert_eq!(record.tasks.len(), 3);
    assert_eq!(record.grants.iter().map(|g| g.1).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(record.kth_rank, 4);
    assert_eq!(r.commits.len(), 3);
}

#[test]
fn silent_executor_times_out() {
    let (tasks, pool) = generated(1, 6, 60, 15, Distribution::Uniform);
    for scheduler in [Scheduler::Simulated, Scheduler::Threaded] {
        let opts = TaskParallelOptions {
            scheduler,
            timeout: Duration::from_millis(200),
            drop_messages_for: Some(TaskId(2)),
            ..TaskParallelOptions::default()
        };
        let r = msqm_parallel_task(&tasks, &mut pool.clone(), budget(200.0), &cfg().with_cores(2), &opts);
        assert_eq!(r, Err(Error::CoordinatorTimeout(TaskId(2))));
    }
}

#[test]
fn speculation_depth_does_not_change_the_outcome() {
    let (tasks, pool) = generated(9, 12, 120, 25, Distribution::Gaussian);
    let serial = msqm_serial(&tasks, &mut pool.clone(), budget(400.0), &cfg()).unwrap();
    for depth in [1, 3, 5] {
        let opts = TaskParallelOptions { speculation_depth: depth, ..TaskParallelOptions::default() };
        let r = msqm_parallel_task(&tasks, &mut pool.clone(), budget(400.0), &cfg().with_cores(3), &opts).unwrap();
        assert_eq!(r.assignment_set(), serial.assignment_set());
    }
    let bad = TaskParallelOptions { speculation_depth: 0, ..TaskParallelOptions::default() };
    assert!(msqm_parallel_task(&tasks, &mut pool.clone(), budget(1.0), &cfg().with_cores(2), &bad).is_err());
}

#[test]
fn digest_depends_only_on_the_set() {
    let (tasks, pool) = generated(5, 5, 60, 12, Distribution::Uniform);
    let r = msqm_serial(&tasks, &mut pool.clone(), budget(300.0), &cfg()).unwrap();
    let mut shuffled = r.clone();
    shuffled.commits.reverse();
    assert_eq!(r.assignment_digest(), shuffled.assignment_digest());
    assert_eq!(r.assignment_digest().len(), 16);
}
