//! Worker retrieval by travel cost, with per-slot exclusivity across tasks.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Point, TaskId, WorkerId, WorkerSchedule};
use crate::quality::ReliabilityLookup;

/// Below this many workers at a slot the index is a plain scan.
const GRID_MIN_WORKERS: usize = 64;
const GRID_TARGET_PER_CELL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostQuote {
    pub worker: WorkerId,
    /// 1 for the cheapest eligible worker.
    pub rank: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct SlotEntry {
    at: Point,
    worker: WorkerId,
}

#[derive(Debug, Clone, PartialEq)]
struct Grid {
    origin: Point,
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl Grid {
    fn build(entries: &[SlotEntry]) -> Self {
        let (mut lo, mut hi) = (entries[0].at, entries[0].at);
        for e in entries {
            lo.x = lo.x.min(e.at.x);
            lo.y = lo.y.min(e.at.y);
            hi.x = hi.x.max(e.at.x);
            hi.y = hi.y.max(e.at.y);
        }
        let area = ((hi.x - lo.x) * (hi.y - lo.y)).max(0.0);
        let mut cell = (area * GRID_TARGET_PER_CELL / entries.len() as f64).sqrt();
        if !(cell > 0.0 && cell.is_finite()) {
            cell = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        }
        let nx = ((hi.x - lo.x) / cell).floor() as i64 + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as i64 + 1;
        let mut cells = vec![Vec::new(); (nx * ny) as usize];
        let mut grid = Grid { origin: lo, cell, nx, ny, cells: Vec::new() };
        for (i, e) in entries.iter().enumerate() {
            let (cx, cy) = grid.cell_of(e.at);
            cells[(cy * nx + cx) as usize].push(i as u32);
        }
        grid.cells = cells;
        grid
    }

    fn cell_of(&self, p: Point) -> (i64, i64) {
        let cx = ((p.x - self.origin.x) / self.cell).floor() as i64;
        let cy = ((p.y - self.origin.y) / self.cell).floor() as i64;
        (cx, cy)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct SlotIndex {
    entries: Vec<SlotEntry>,
    grid: Option<Grid>,
}

impl SlotIndex {
    fn build(entries: Vec<SlotEntry>) -> Self {
        let grid = (entries.len() >= GRID_MIN_WORKERS).then(|| Grid::build(&entries));
        Self { entries, grid }
    }
}

/// Shared worker resource: schedules, committed occupancy and a per-slot
/// spatial index. Cloning shares the immutable parts.
#[derive(Debug, Clone)]
pub struct WorkerPool {
    m: usize,
    workers: Arc<Vec<WorkerSchedule>>,
    by_id: Arc<HashMap<WorkerId, usize>>,
    slots: Arc<Vec<SlotIndex>>,
    occupancy: HashMap<(WorkerId, usize), TaskId>,
}

impl PartialEq for WorkerPool {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.workers == other.workers && self.occupancy == other.occupancy
    }
}

impl WorkerPool {
    pub fn new(m: usize, workers: Vec<WorkerSchedule>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(workers.len());
        let mut per_slot: Vec<Vec<SlotEntry>> = vec![Vec::new(); m];
        for (i, w) in workers.iter().enumerate() {
            if w.m() != m {
                return Err(Error::InvalidConfig(format!(
                    "worker {} has {} slots, expected {m}",
                    w.id,
                    w.m()
                )));
            }
            if by_id.insert(w.id, i).is_some() {
                return Err(Error::InvalidConfig(format!("worker id {} appears twice", w.id)));
            }
            for (j, p) in w.positions.iter().enumerate() {
                if let Some(at) = p {
                    per_slot[j].push(SlotEntry { at: *at, worker: w.id });
                }
            }
        }
        let slots = per_slot.into_iter().map(SlotIndex::build).collect();
        Ok(Self {
            m,
            workers: Arc::new(workers),
            by_id: Arc::new(by_id),
            slots: Arc::new(slots),
            occupancy: HashMap::new(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn workers(&self) -> &[WorkerSchedule] {
        &self.workers
    }

    pub fn worker(&self, id: WorkerId) -> Option<&WorkerSchedule> {
        self.by_id.get(&id).map(|&i| &self.workers[i])
    }

    /// Task that holds `worker` at `slot`, if any.
    pub fn occupant(&self, worker: WorkerId, slot: usize) -> Option<TaskId> {
        self.occupancy.get(&(worker, slot)).copied()
    }

    pub fn commitments(&self) -> impl Iterator<Item = (WorkerId, usize, TaskId)> + '_ {
        self.occupancy.iter().map(|(&(w, s), &t)| (w, s, t))
    }

    pub fn committed_count(&self) -> usize {
        self.occupancy.len()
    }

    /// Workers available at `slot`, whether or not they are committed.
    pub fn available_at(&self, slot: usize) -> impl Iterator<Item = (WorkerId, Point)> + '_ {
        self.slot_index(slot)
            .into_iter()
            .flat_map(|s| s.entries.iter().map(|e| (e.worker, e.at)))
    }

    fn slot_index(&self, slot: usize) -> Option<&SlotIndex> {
        slot.checked_sub(1).and_then(|i| self.slots.get(i))
    }

    fn eligible(&self, slot: usize, e: &SlotEntry) -> bool {
        !self.occupancy.contains_key(&(e.worker, slot))
    }

    /// The `rank`-th cheapest eligible worker at `slot`.
    pub fn kth_nearest_available(&self, at: Point, slot: usize, rank: usize) -> Option<CostQuote> {
        if rank == 0 {
            return None;
        }
        self.nearest(at, slot, rank).into_iter().nth(rank - 1)
    }

    /// The `n` cheapest eligible workers at `slot`, cheapest first.
    pub fn nearest(&self, at: Point, slot: usize, n: usize) -> Vec<CostQuote> {
        let Some(index) = self.slot_index(slot) else {
            return Vec::new();
        };
        let mut found: Vec<(f64, WorkerId)> = match &index.grid {
            None => index
                .entries
                .iter()
                .filter(|e| self.eligible(slot, e))
                .map(|e| (at.distance(e.at), e.worker))
                .collect(),
            Some(grid) => self.grid_search(index, grid, at, slot, n),
        };
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(n);
        found
            .into_iter()
            .enumerate()
            .map(|(i, (cost, worker))| CostQuote { worker, rank: i + 1, cost })
            .collect()
    }

    fn grid_search(
        &self,
        index: &SlotIndex,
        grid: &Grid,
        at: Point,
        slot: usize,
        n: usize,
    ) -> Vec<(f64, WorkerId)> {
        let (cx, cy) = grid.cell_of(at);
        let mut found: Vec<(f64, WorkerId)> = Vec::new();
        let mut r: i64 = 0;
        loop {
            for y in (cy - r)..=(cy + r) {
                if y < 0 || y >= grid.ny {
                    continue;
                }
                let on_edge_row = y == cy - r || y == cy + r;
                let xs: Box<dyn Iterator<Item = i64>> = if on_edge_row {
                    Box::new((cx - r)..=(cx + r))
                } else if r == 0 {
                    Box::new(std::iter::once(cx))
                } else {
                    Box::new([cx - r, cx + r].into_iter())
                };
                for x in xs {
                    if x < 0 || x >= grid.nx {
                        continue;
                    }
                    for &i in &grid.cells[(y * grid.nx + x) as usize] {
                        let e = &index.entries[i as usize];
                        if self.eligible(slot, e) {
                            found.push((at.distance(e.at), e.worker));
                        }
                    }
                }
            }
            let covers_all = cx - r <= 0 && cx + r >= grid.nx - 1 && cy - r <= 0 && cy + r >= grid.ny - 1;
            if covers_all {
                return found;
            }
            if found.len() >= n {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if found[n - 1].0 < r as f64 * grid.cell {
                    return found;
                }
            }
            r += 1;
        }
    }

    /// Reserves `worker` at `slot` for `task`.
    pub fn commit(&mut self, worker: WorkerId, slot: usize, task: TaskId) -> Result<()> {
        let w = self.worker(worker).ok_or(Error::UnknownWorker(worker))?;
        if !w.is_available(slot) {
            return Err(Error::WorkerUnavailable { worker, slot });
        }
        if self.occupancy.contains_key(&(worker, slot)) {
            return Err(Error::SlotOccupied { worker, slot });
        }
        self.occupancy.insert((worker, slot), task);
        Ok(())
    }

    /// Undoes a [`Self::commit`], returning the task that held the worker.
    pub fn release(&mut self, worker: WorkerId, slot: usize) -> Result<TaskId> {
        self.occupancy.remove(&(worker, slot)).ok_or(Error::NotCommitted { worker, slot })
    }
}

impl ReliabilityLookup for WorkerPool {
    fn reliability(&self, worker: WorkerId) -> Option<f64> {
        self.worker(worker).map(|w| w.reliability)
    }
}
