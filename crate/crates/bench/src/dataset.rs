//! JSON dataset format.
//!
//! ```json
//! {"version": 1, "m": 500,
//!  "tasks": [{"id": 0, "x": 1.5, "y": 2.0}],
//!  "workers": [{"id": 0, "reliability": 1.0,
//!               "pieces": [{"start": 3, "len": 2, "x": 10.0, "y": 4.0}]}]}
//! ```
//!
//! Slots are 1-based unless the document sets `"slot_base": 0`. A piece may
//! carry a `path` of per-slot `[x, y]` positions; without one the worker
//! stays at the piece's `(x, y)`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tcsc_core::datagen::Piece;
use tcsc_core::{Point, TaskId, TaskSpec, WorkerId, WorkerSchedule};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: u32,
    pub m: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub slot_base: usize,
    pub tasks: Vec<TaskRecord>,
    pub workers: Vec<WorkerRecord>,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub id: u32,
    #[serde(default = "full")]
    pub reliability: f64,
    pub pieces: Vec<PieceRecord>,
}

fn full() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceRecord {
    pub start: usize,
    pub len: usize,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<[f64; 2]>>,
}

impl Dataset {
    /// Builds a dataset from generated workers, keeping their exact per-slot
    /// positions.
    pub fn from_generated(m: usize, tasks: &[TaskSpec], workers: &[(WorkerSchedule, Vec<Piece>)]) -> Self {
        Self {
            version: FORMAT_VERSION,
            m,
            slot_base: 1,
            tasks: tasks.iter().map(|t| TaskRecord { id: t.id.0, x: t.location.x, y: t.location.y }).collect(),
            workers: workers
                .iter()
                .map(|(w, pieces)| WorkerRecord {
                    id: w.id.0,
                    reliability: w.reliability,
                    pieces: pieces
                        .iter()
                        .map(|p| PieceRecord {
                            start: p.start,
                            len: p.len,
                            x: p.at.x,
                            y: p.at.y,
                            path: Some(
                                (p.start..p.start + p.len)
                                    .map(|s| {
                                        let at = w.position(s).expect("piece slots are active");
                                        [at.x, at.y]
                                    })
                                    .collect(),
                            ),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Converts to core types. Structural problems in the document are
    /// reported here; semantic ones are left to instance validation.
    pub fn into_instance(self) -> Result<(Vec<TaskSpec>, Vec<WorkerSchedule>), CliError> {
        if self.version != FORMAT_VERSION {
            return Err(CliError::Dataset(format!("unsupported version {}", self.version)));
        }
        if self.slot_base > 1 {
            return Err(CliError::Dataset(format!("slot_base must be 0 or 1, got {}", self.slot_base)));
        }
        let m = self.m;
        let shift = 1 - self.slot_base;
        let tasks = self
            .tasks
            .iter()
            .map(|t| TaskSpec::new(TaskId(t.id), Point::new(t.x, t.y), m))
            .collect();
        let mut workers = Vec::with_capacity(self.workers.len());
        for w in self.workers {
            let mut positions = vec![None; m];
            for p in &w.pieces {
                let start = p.start + shift;
                if p.len == 0 || start == 0 || start + p.len - 1 > m {
                    return Err(CliError::Dataset(format!(
                        "worker {} has a piece at {}..+{} outside 1..={m}",
                        w.id, start, p.len
                    )));
                }
                if let Some(path) = &p.path {
                    if path.len() != p.len {
                        return Err(CliError::Dataset(format!(
                            "worker {} has a path of {} points for a piece of {} slots",
                            w.id,
                            path.len(),
                            p.len
                        )));
                    }
                }
                for i in 0..p.len {
                    let slot = &mut positions[start - 1 + i];
                    if slot.is_some() {
                        return Err(CliError::Dataset(format!("worker {} has overlapping pieces", w.id)));
                    }
                    let at = p.path.as_ref().map_or(Point::new(p.x, p.y), |path| Point::new(path[i][0], path[i][1]));
                    *slot = Some(at);
                }
            }
            workers.push(WorkerSchedule::new(WorkerId(w.id), positions).with_reliability(w.reliability));
        }
        Ok((tasks, workers))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string(self).expect("datasets serialize");
        std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcsc_core::datagen::{gen_tasks, gen_workers_with_pieces, GenSpec};

    #[test]
    fn generated_data_round_trips_exactly() {
        let spec = GenSpec { n_tasks: 5, n_workers: 40, m: 30, seed: 2, ..GenSpec::default() };
        let tasks = gen_tasks(&spec);
        let workers = gen_workers_with_pieces(&spec);
        let ds = Dataset::from_generated(30, &tasks, &workers);
        let text = serde_json::to_string(&ds).unwrap();
        let back: Dataset = serde_json::from_str(&text).unwrap();
        let (t, w) = back.into_instance().unwrap();
        assert_eq!(t, tasks);
        assert_eq!(w, workers.into_iter().map(|(w, _)| w).collect::<Vec<_>>());
    }

    #[test]
    fn minimal_document_parses() {
        let text = r#"{"version":1,"m":4,"tasks":[{"id":0,"x":0,"y":0}],
            "workers":[{"id":7,"pieces":[{"start":0,"len":2,"x":1,"y":1}]}],"slot_base":0}"#;
        let ds: Dataset = serde_json::from_str(text).unwrap();
        let (_, w) = ds.into_instance().unwrap();
        assert_eq!(w[0].available_slots().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(w[0].reliability, 1.0);
    }

    #[test]
    fn bad_pieces_are_rejected() {
        let piece = |start, len| PieceRecord { start, len, x: 0.0, y: 0.0, path: None };
        let ds = |pieces| Dataset {
            version: 1,
            m: 5,
            slot_base: 1,
            tasks: vec![],
            workers: vec![WorkerRecord { id: 0, reliability: 1.0, pieces }],
        };
        assert!(ds(vec![piece(5, 2)]).into_instance().is_err());
        assert!(ds(vec![piece(0, 1)]).into_instance().is_err());
        assert!(ds(vec![piece(1, 3), piece(3, 1)]).into_instance().is_err());
        assert!(ds(vec![piece(1, 3), piece(4, 2)]).into_instance().is_ok());
        let mut bad_version = ds(vec![]);
        bad_version.version = 2;
        assert!(bad_version.into_instance().is_err());
    }
}
