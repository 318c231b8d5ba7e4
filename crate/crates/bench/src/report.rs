//! JSON and CSV report writers.

use std::io::Write;

use serde::Serialize;

use crate::runner::RunMetrics;
use crate::CliError;

/// One CSV line: a run, or a per-configuration mean or standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub row: &'static str,
    pub axis_value: String,
    pub mode: String,
    pub seed: Option<u64>,
    pub runs: usize,
    pub quality: f64,
    pub spent: f64,
    pub budget_cost_ratio: Option<f64>,
    pub pruning_ratio: Option<f64>,
    pub conflict_count: Option<f64>,
    pub iterations: f64,
    pub evaluations: f64,
    pub knn_interp_ms: f64,
    pub heuristic_eval_ms: f64,
    pub tree_build_ms: f64,
    pub tree_update_ms: f64,
    pub total_ms: f64,
    pub m: usize,
    pub tasks: usize,
    pub workers: usize,
    pub budget: f64,
    pub k: usize,
    pub ts: usize,
    pub cores: usize,
    pub dist: String,
    pub digest: Option<String>,
}

impl CsvRow {
    pub fn from_run(axis_value: &str, r: &RunMetrics) -> Self {
        let c = &r.config;
        Self {
            row: "run",
            axis_value: axis_value.to_string(),
            mode: r.mode.name().to_string(),
            seed: Some(r.seed),
            runs: 1,
            quality: r.quality,
            spent: r.spent,
            budget_cost_ratio: r.budget_cost_ratio,
            pruning_ratio: r.pruning_ratio,
            conflict_count: r.conflict_count.map(|c| c as f64),
            iterations: r.iterations as f64,
            evaluations: r.evaluations as f64,
            knn_interp_ms: r.timings_ms.knn_interp,
            heuristic_eval_ms: r.timings_ms.heuristic_eval,
            tree_build_ms: r.timings_ms.tree_build,
            tree_update_ms: r.timings_ms.tree_update,
            total_ms: r.timings_ms.total,
            m: c.m,
            tasks: c.tasks,
            workers: c.workers,
            budget: c.budget,
            k: c.k,
            ts: c.ts,
            cores: c.cores,
            dist: c.dist.clone(),
            digest: r.digest.clone(),
        }
    }
}

/// Mean and sample standard deviation of a configuration's runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub axis_value: String,
    pub runs: usize,
    pub mean: CsvRow,
    pub stddev: CsvRow,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn aggregate(axis_value: &str, runs: &[RunMetrics]) -> Aggregate {
    let rows: Vec<CsvRow> = runs.iter().map(|r| CsvRow::from_run(axis_value, r)).collect();
    let first = rows[0].clone();
    let stat = |f: &dyn Fn(&CsvRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
    let opt_stat = |f: &dyn Fn(&CsvRow) -> Option<f64>| {
        let xs: Option<Vec<f64>> = rows.iter().map(f).collect();
        xs.map(|xs| mean_std(&xs))
    };
    let fill = |pick: fn((f64, f64)) -> f64, name: &'static str| CsvRow {
        row: name,
        seed: None,
        runs: rows.len(),
        quality: pick(stat(&|r| r.quality)),
        spent: pick(stat(&|r| r.spent)),
        budget_cost_ratio: opt_stat(&|r| r.budget_cost_ratio).map(pick),
        pruning_ratio: opt_stat(&|r| r.pruning_ratio).map(pick),
        conflict_count: opt_stat(&|r| r.conflict_count).map(pick),
        iterations: pick(stat(&|r| r.iterations)),
        evaluations: pick(stat(&|r| r.evaluations)),
        knn_interp_ms: pick(stat(&|r| r.knn_interp_ms)),
        heuristic_eval_ms: pick(stat(&|r| r.heuristic_eval_ms)),
        tree_build_ms: pick(stat(&|r| r.tree_build_ms)),
        tree_update_ms: pick(stat(&|r| r.tree_update_ms)),
        total_ms: pick(stat(&|r| r.total_ms)),
        digest: None,
        ..first.clone()
    };
    Aggregate {
        axis_value: axis_value.to_string(),
        runs: rows.len(),
        mean: fill(|(m, _)| m, "mean"),
        stddev: fill(|(_, s)| s, "stddev"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub runs: Vec<(String, RunMetrics)>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepReport {
    pub fn rows(&self) -> Vec<CsvRow> {
        let mut rows: Vec<CsvRow> = self.runs.iter().map(|(v, r)| CsvRow::from_run(v, r)).collect();
        for a in &self.aggregates {
            rows.push(a.mean.clone());
            rows.push(a.stddev.clone());
        }
        rows
    }
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io("report".into(), e.into()))?;
    writeln!(out).map_err(|e| CliError::Io("report".into(), e))
}

pub fn write_csv(out: &mut dyn Write, rows: &[CsvRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io("report".into(), e.into()))?;
    }
    w.flush().map_err(|e| CliError::Io("report".into(), e))
}
