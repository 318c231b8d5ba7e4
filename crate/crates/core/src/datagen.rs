//! Seeded synthetic instances: task locations under three spatial
//! distributions and workers with short random activity pieces.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use crate::model::{Distribution, Point, TaskId, TaskSpec, WorkerId, WorkerSchedule};

pub const ZIPF_GRID: usize = 32;
pub const MAX_PIECE_LEN: usize = 5;
pub const MAX_PIECES: usize = 3;
const PIECE_ATTEMPTS: usize = 32;
const JITTER_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n_tasks: usize,
    pub n_workers: usize,
    pub m: usize,
    pub distribution: Distribution,
    /// Side length of the square arena.
    pub arena: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n_tasks: 300,
            n_workers: 2000,
            m: 500,
            distribution: Distribution::Uniform,
            arena: 1000.0,
            seed: 0,
        }
    }
}

/// Derives an independent 64-bit seed for the stream called `name`.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name))
}

/// Cells of the Zipf grid, most popular first: ordered by distance of the
/// cell center from the arena center, ties in row-major order.
pub fn zipf_cell_order() -> Vec<(usize, usize)> {
    let c = ZIPF_GRID as f64 / 2.0;
    let mut cells: Vec<(usize, usize)> =
        (0..ZIPF_GRID).flat_map(|r| (0..ZIPF_GRID).map(move |col| (r, col))).collect();
    let d = |&(r, col): &(usize, usize)| {
        let (y, x) = (r as f64 + 0.5 - c, col as f64 + 0.5 - c);
        x * x + y * y
    };
    cells.sort_by(|a, b| d(a).total_cmp(&d(b)));
    cells
}

pub fn gen_tasks(spec: &GenSpec) -> Vec<TaskSpec> {
    let mut rng = stream_rng(spec.seed, "tasks");
    let a = spec.arena;
    let mut place: Box<dyn FnMut(&mut ChaCha8Rng) -> Point> = match spec.distribution {
        Distribution::Uniform => Box::new(move |rng| Point::new(rng.random_range(0.0..a), rng.random_range(0.0..a))),
        Distribution::Gaussian => {
            let n = Normal::new(a / 2.0, a / 6.0).expect("positive sigma");
            Box::new(move |rng| Point::new(n.sample(rng).clamp(0.0, a), n.sample(rng).clamp(0.0, a)))
        }
        Distribution::Zipfian => {
            let cells = zipf_cell_order();
            let weights = WeightedIndex::new((1..=cells.len()).map(|r| 1.0 / r as f64)).expect("valid weights");
            let side = a / ZIPF_GRID as f64;
            Box::new(move |rng| {
                let (r, c) = cells[weights.sample(rng)];
                Point::new(
                    (c as f64 + rng.random_range(0.0..1.0)) * side,
                    (r as f64 + rng.random_range(0.0..1.0)) * side,
                )
            })
        }
    };
    (0..spec.n_tasks)
        .map(|i| TaskSpec::new(TaskId(i as u32), place(&mut rng), spec.m))
        .collect()
}

/// A contiguous run of active slots starting at `start` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: usize,
    pub len: usize,
    /// Base position; per-slot positions add a small jitter.
    pub at: Point,
}

/// Workers together with the pieces their schedules were built from.
pub fn gen_workers_with_pieces(spec: &GenSpec) -> Vec<(WorkerSchedule, Vec<Piece>)> {
    let mut rng = stream_rng(spec.seed, "workers");
    let jitter = Normal::new(0.0, JITTER_SIGMA).expect("positive sigma");
    let m = spec.m;
    let max_len = MAX_PIECE_LEN.min(m);
    (0..spec.n_workers)
        .map(|i| {
            let mut positions = vec![None; m];
            let mut pieces = Vec::new();
            let count = rng.random_range(1..=MAX_PIECES);
            for _ in 0..count {
                for _ in 0..PIECE_ATTEMPTS {
                    let len = rng.random_range(1..=max_len);
                    let start = rng.random_range(1..=m - len + 1);
                    if positions[start - 1..start - 1 + len].iter().any(Option::is_some) {
                        continue;
                    }
                    let at = Point::new(rng.random_range(0.0..spec.arena), rng.random_range(0.0..spec.arena));
                    for slot in positions.iter_mut().skip(start - 1).take(len) {
                        *slot = Some(Point::new(at.x + jitter.sample(&mut rng), at.y + jitter.sample(&mut rng)));
                    }
                    pieces.push(Piece { start, len, at });
                    break;
                }
            }
            pieces.sort_by_key(|p| p.start);
            (WorkerSchedule::new(WorkerId(i as u32), positions), pieces)
        })
        .collect()
}

pub fn gen_workers(spec: &GenSpec) -> Vec<WorkerSchedule> {
    gen_workers_with_pieces(spec).into_iter().map(|(w, _)| w).collect()
}

pub fn generate(spec: &GenSpec) -> (Vec<TaskSpec>, Vec<WorkerSchedule>) {
    (gen_tasks(spec), gen_workers(spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, RunConfig};

    fn spec(n_tasks: usize, distribution: Distribution) -> GenSpec {
        GenSpec { n_tasks, distribution, seed: 11, ..GenSpec::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        for d in Distribution::ALL {
            let s = GenSpec { n_workers: 200, distribution: d, seed: 5, ..GenSpec::default() };
            assert_eq!(generate(&s), generate(&s));
            let other = GenSpec { seed: 6, ..s.clone() };
            assert_ne!(gen_tasks(&s), gen_tasks(&other));
        }
    }

    #[test]
    fn streams_are_independent() {
        assert_ne!(stream_seed(1, "tasks"), stream_seed(1, "workers"));
        assert_ne!(stream_seed(1, "tasks"), stream_seed(2, "tasks"));
        assert_eq!(stream_seed(9, "x"), stream_seed(9, "x"));
    }

    #[test]
    fn uniform_quadrants_are_balanced() {
        let tasks = gen_tasks(&spec(10_000, Distribution::Uniform));
        let mut counts = [0usize; 4];
        for t in &tasks {
            let q = usize::from(t.location.x >= 500.0) + 2 * usize::from(t.location.y >= 500.0);
            counts[q] += 1;
        }
        let sigma = (10_000.0 * 0.25 * 0.75f64).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn gaussian_stays_in_arena_and_centers() {
        let tasks = gen_tasks(&spec(10_000, Distribution::Gaussian));
        let mean_x = tasks.iter().map(|t| t.location.x).sum::<f64>() / tasks.len() as f64;
        assert!((mean_x - 500.0).abs() < 10.0);
        assert!(tasks.iter().all(|t| (0.0..=1000.0).contains(&t.location.x) && (0.0..=1000.0).contains(&t.location.y)));
    }

    #[test]
    fn zipf_top_cells_follow_rank_ratio() {
        let tasks = gen_tasks(&spec(10_000, Distribution::Zipfian));
        let side = 1000.0 / ZIPF_GRID as f64;
        let mut counts = vec![0usize; ZIPF_GRID * ZIPF_GRID];
        for t in &tasks {
            let c = (t.location.x / side) as usize;
            let r = (t.location.y / side) as usize;
            counts[r * ZIPF_GRID + c] += 1;
        }
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let ratio = counts[0] as f64 / counts[1] as f64;
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn pieces_are_short_disjoint_and_account_for_availability() {
        let s = GenSpec { n_workers: 1000, m: 60, seed: 3, ..GenSpec::default() };
        for (w, pieces) in gen_workers_with_pieces(&s) {
            assert!(!pieces.is_empty() && pieces.len() <= MAX_PIECES);
            let total: usize = pieces.iter().map(|p| p.len).sum();
            assert_eq!(w.availability().filter(|&a| a).count(), total);
            for p in &pieces {
                assert!((1..=MAX_PIECE_LEN).contains(&p.len));
                assert!(p.start >= 1 && p.start + p.len - 1 <= 60);
            }
            assert_eq!(w.reliability, 1.0);
        }
    }

    #[test]
    fn generated_instances_validate() {
        for d in Distribution::ALL {
            let s = GenSpec { n_tasks: 50, n_workers: 300, m: 40, distribution: d, seed: 8, ..GenSpec::default() };
            let (tasks, workers) = generate(&s);
            assert!(validate_instance(tasks, workers, RunConfig::default()).is_ok());
        }
    }

    #[test]
    fn tiny_timelines_still_generate() {
        let s = GenSpec { n_tasks: 2, n_workers: 20, m: 2, seed: 1, ..GenSpec::default() };
        let (tasks, workers) = generate(&s);
        assert!(validate_instance(tasks, workers, RunConfig::default()).is_ok());
    }
}
