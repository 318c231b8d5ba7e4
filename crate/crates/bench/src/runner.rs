//! Executes one configured run and collects its metrics.

use std::path::PathBuf;
use std::time::Duration;

use clap::ValueEnum;
use serde::Serialize;
use tcsc_core::datagen::{generate, GenSpec};
use tcsc_core::multi::{
    mmqm, msqm_parallel_group, msqm_parallel_task, msqm_serial, MultiRunResult, Scheduler, TaskParallelOptions,
};
use tcsc_core::single::{approx, approx_star, slot_quotes, PhaseTimings, SingleRunResult};
use tcsc_core::{validate_instance, Budget, Distribution, QualityMode, RunConfig, TaskSpec, WorkerPool};

use crate::dataset::Dataset;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleApprox,
    SingleApproxStar,
    MsqmSerial,
    MsqmGroup,
    MsqmTask,
    Mmqm,
}

impl Mode {
    pub fn is_single(self) -> bool {
        matches!(self, Mode::SingleApprox | Mode::SingleApproxStar)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::SingleApprox => "single-approx",
            Mode::SingleApproxStar => "single-approx-star",
            Mode::MsqmSerial => "msqm-serial",
            Mode::MsqmGroup => "msqm-group",
            Mode::MsqmTask => "msqm-task",
            Mode::Mmqm => "mmqm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerArg {
    Simulated,
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityArg {
    Plain,
    Reliability,
}

/// Everything needed to reproduce a run apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub mode: Mode,
    pub m: usize,
    pub tasks: usize,
    pub workers: usize,
    pub budget: f64,
    pub k: usize,
    pub ts: usize,
    pub cores: usize,
    pub dist: String,
    pub scheduler: SchedulerArg,
    pub quality: QualityArg,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl RunSpec {
    pub fn distribution(&self) -> Result<Distribution, CliError> {
        self.dist.parse().map_err(|_| CliError::Usage(format!("unknown distribution '{}'", self.dist)))
    }

    fn config(&self, seed: u64) -> Result<RunConfig, CliError> {
        Ok(RunConfig {
            distribution: self.distribution()?,
            quality_mode: match self.quality {
                QualityArg::Plain => QualityMode::Plain,
                QualityArg::Reliability => QualityMode::Reliability,
            },
            ..RunConfig::default()
        }
        .with_k(self.k)
        .with_ts(self.ts)
        .with_cores(self.cores)
        .with_seed(seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub knn_interp: f64,
    pub heuristic_eval: f64,
    pub tree_build: f64,
    pub tree_update: f64,
    pub total: f64,
}

impl From<PhaseTimings> for Timings {
    fn from(t: PhaseTimings) -> Self {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        Self {
            knn_interp: ms(t.knn_interp),
            heuristic_eval: ms(t.heuristic_eval),
            tree_build: ms(t.tree_build),
            tree_update: ms(t.tree_update),
            total: ms(t.total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub mode: Mode,
    pub seed: u64,
    /// q for single-task modes, q_sum for summation modes, q_min for mmqm.
    pub quality: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    pub spent: f64,
    /// Budget over the mean cost of executing every slot of one task.
    pub budget_cost_ratio: Option<f64>,
    pub pruning_ratio: Option<f64>,
    pub conflict_count: Option<u64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub used_singleton: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollbacks: Option<usize>,
    /// Digest of the committed (task, slot, worker) set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    pub timings_ms: Timings,
    pub config: RunSpec,
}

/// Mean cost of executing every slot of a task with its cheapest workers.
fn mean_task_cost(tasks: &[TaskSpec], pool: &WorkerPool) -> Option<f64> {
    if tasks.is_empty() {
        return None;
    }
    let total: f64 = tasks.iter().map(|t| slot_quotes(t, pool).iter().flatten().map(|q| q.cost).sum::<f64>()).sum();
    let mean = total / tasks.len() as f64;
    (mean > 0.0).then_some(mean)
}

pub fn run_once(spec: &RunSpec, seed: u64) -> Result<RunMetrics, CliError> {
    if !(spec.budget >= 0.0 && spec.budget.is_finite()) {
        return Err(CliError::Usage(format!("budget must be a nonnegative number, got {}", spec.budget)));
    }
    let config = spec.config(seed)?;
    let mut echo = spec.clone();
    let (tasks, workers) = match &spec.data {
        Some(path) => {
            let (tasks, workers) = Dataset::load(path)?.into_instance()?;
            echo.m = workers.first().map_or(tasks.first().map_or(spec.m, |t| t.m), |w| w.m());
            echo.tasks = tasks.len();
            echo.workers = workers.len();
            (tasks, workers)
        }
        None => {
            let n_tasks = if spec.mode.is_single() { 1 } else { spec.tasks };
            let gen = GenSpec {
                n_tasks,
                n_workers: spec.workers,
                m: spec.m,
                distribution: spec.distribution()?,
                seed,
                ..GenSpec::default()
            };
            echo.tasks = n_tasks;
            generate(&gen)
        }
    };
    let instance = validate_instance(tasks, workers, config)?;
    let mut pool = WorkerPool::new(instance.m(), instance.workers)?;
    let mut tasks = instance.tasks;
    if spec.mode.is_single() {
        tasks.truncate(1);
    }
    let config = instance.config;
    let budget = Budget::new(spec.budget)?;
    let ratio = mean_task_cost(&tasks, &pool).map(|c| spec.budget / c);

    let metrics = if spec.mode.is_single() {
        let r: SingleRunResult = match spec.mode {
            Mode::SingleApprox => approx(&tasks[0], &pool, budget, &config)?,
            _ => approx_star(&tasks[0], &pool, budget, &config)?,
        };
        RunMetrics {
            mode: spec.mode,
            seed,
            quality: r.quality,
            q_sum: None,
            q_min: None,
            spent: r.spent,
            budget_cost_ratio: ratio,
            pruning_ratio: r.pruning_ratio,
            conflict_count: None,
            iterations: r.iterations,
            evaluations: r.evaluations,
            used_singleton: r.used_singleton,
            groups: None,
            rollbacks: None,
            digest: None,
            timings_ms: r.timings.into(),
            config: echo,
        }
    } else {
        let r: MultiRunResult = match spec.mode {
            Mode::MsqmSerial => msqm_serial(&tasks, &mut pool, budget, &config)?,
            Mode::MsqmGroup => msqm_parallel_group(&tasks, &mut pool, budget, &config)?,
            Mode::MsqmTask => {
                let opts = TaskParallelOptions {
                    scheduler: match spec.scheduler {
                        SchedulerArg::Simulated => Scheduler::Simulated,
                        SchedulerArg::Threaded => Scheduler::Threaded,
                    },
                    ..TaskParallelOptions::default()
                };
                msqm_parallel_task(&tasks, &mut pool, budget, &config, &opts)?
            }
            _ => mmqm(&tasks, &mut pool, budget, &config)?,
        };
        let quality = if spec.mode == Mode::Mmqm { r.q_min } else { r.q_sum };
        RunMetrics {
            mode: spec.mode,
            seed,
            quality,
            q_sum: Some(r.q_sum),
            q_min: Some(r.q_min),
            spent: r.spent,
            budget_cost_ratio: ratio,
            pruning_ratio: None,
            conflict_count: Some(r.conflict_count),
            iterations: r.commits.len(),
            evaluations: r.evaluations,
            used_singleton: r.used_singleton,
            groups: r.groups,
            rollbacks: r.protocol.as_ref().map(|p| p.rollbacks),
            digest: Some(r.assignment_digest()),
            timings_ms: r.timings.into(),
            config: echo,
        }
    };
    Ok(metrics)
}
