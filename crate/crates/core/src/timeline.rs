//! Sorted executed-slot list with exact timeline k-NN queries.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutedTimeline {
    m: usize,
    slots: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub slot: usize,
    pub distance: usize,
    /// Reliability of the executing worker; 1.0 unless filled in by the
    /// reliability-aware metric.
    pub reliability: f64,
}

/// The `k` nearest executed slots of a probe.
///
/// Missing neighbors are virtual entries at distance `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationResult {
    pub neighbors: Vec<Neighbor>,
    pub padded_count: usize,
}

impl InterpolationResult {
    pub fn slots(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.slot).collect()
    }

    pub fn distances(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.distance).collect()
    }
}

impl ExecutedTimeline {
    pub fn new(m: usize) -> Self {
        Self { m, slots: Vec::new() }
    }

    pub fn from_slots(m: usize, slots: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut t = Self::new(m);
        for s in slots {
            t.insert(s)?;
        }
        Ok(t)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, slot: usize) -> bool {
        self.slots.binary_search(&slot).is_ok()
    }

    pub fn check_slot(&self, slot: usize) -> Result<()> {
        if slot == 0 || slot > self.m {
            Err(Error::OutOfRangeSlot { slot, m: self.m })
        } else {
            Ok(())
        }
    }

    pub fn insert(&mut self, slot: usize) -> Result<()> {
        self.check_slot(slot)?;
        match self.slots.binary_search(&slot) {
            Ok(_) => Err(Error::DuplicateSlot(slot)),
            Err(pos) => {
                self.slots.insert(pos, slot);
                Ok(())
            }
        }
    }

    /// Position range `[start, end)` in [`Self::slots`] holding the k-NN of
    /// `probe`. Ties in distance go to the smaller slot.
    pub(crate) fn knn_window(&self, probe: usize, k: usize) -> (usize, usize) {
        let s = &self.slots;
        let want = k.min(s.len());
        let mut right = s.partition_point(|&x| x < probe);
        let mut left = right;
        while right - left < want {
            let take_left = if left == 0 {
                false
            } else if right == s.len() {
                true
            } else {
                probe - s[left - 1] <= s[right] - probe
            };
            if take_left {
                left -= 1;
            } else {
                right += 1;
            }
        }
        (left, right)
    }

    pub fn knn(&self, probe: usize, k: usize) -> Result<InterpolationResult> {
        self.check_slot(probe)?;
        let (lo, hi) = self.knn_window(probe, k);
        let mut neighbors: Vec<Neighbor> = self.slots[lo..hi]
            .iter()
            .map(|&slot| Neighbor { slot, distance: slot.abs_diff(probe), reliability: 1.0 })
            .collect();
        neighbors.sort_by_key(|n| (n.distance, n.slot));
        Ok(InterpolationResult { padded_count: k - neighbors.len(), neighbors })
    }

    /// Sum of k-NN distances, padding included, and the k-th distance.
    pub(crate) fn dsum_kth(&self, probe: usize, k: usize) -> (usize, usize) {
        let (lo, hi) = self.knn_window(probe, k);
        let window = &self.slots[lo..hi];
        let padded = k - window.len();
        let mut sum = padded * self.m;
        let mut kth = if padded > 0 { self.m } else { 0 };
        for &s in window {
            let d = s.abs_diff(probe);
            sum += d;
            kth = kth.max(d);
        }
        (sum, kth)
    }

    /// Slot of the `k`-th executed slot strictly left of `slot`, or 0.
    pub(crate) fn kth_left_of(&self, slot: usize, k: usize) -> usize {
        let pos = self.slots.partition_point(|&x| x < slot);
        if pos >= k {
            self.slots[pos - k]
        } else {
            0
        }
    }

    /// Slot of the `k`-th executed slot strictly right of `slot`, or `m + 1`.
    pub(crate) fn kth_right_of(&self, slot: usize, k: usize) -> usize {
        let pos = self.slots.partition_point(|&x| x <= slot);
        if pos + k <= self.slots.len() {
            self.slots[pos + k - 1]
        } else {
            self.m + 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scan(slots: &[usize], m: usize, probe: usize, k: usize) -> (Vec<usize>, Vec<usize>, usize) {
        let mut all: Vec<(usize, usize)> = slots.iter().map(|&s| (s.abs_diff(probe), s)).collect();
        all.sort();
        all.truncate(k);
        let padded = k - all.len();
        let _ = m;
        (all.iter().map(|p| p.1).collect(), all.iter().map(|p| p.0).collect(), padded)
    }

    #[test]
    fn ordered_insert() {
        let mut t = ExecutedTimeline::from_slots(10, [2, 7]).unwrap();
        t.insert(5).unwrap();
        assert_eq!(t.slots(), &[2, 5, 7]);
        assert_eq!(t.insert(2), Err(Error::DuplicateSlot(2)));
        let mut e = ExecutedTimeline::new(10);
        e.insert(1).unwrap();
        assert_eq!(e.slots(), &[1]);
        assert_eq!(e.insert(0), Err(Error::OutOfRangeSlot { slot: 0, m: 10 }));
        assert_eq!(e.insert(11), Err(Error::OutOfRangeSlot { slot: 11, m: 10 }));
    }

    #[test]
    fn knn_examples() {
        let t = ExecutedTimeline::from_slots(100, [2, 4, 7, 9]).unwrap();
        let r = t.knn(1, 2).unwrap();
        assert_eq!(r.slots(), vec![2, 4]);
        assert_eq!(r.distances(), vec![1, 3]);
        assert_eq!(r.padded_count, 0);

        let r = t.knn(6, 2).unwrap();
        assert_eq!(r.slots(), vec![7, 4]);
        assert_eq!(r.distances(), vec![1, 2]);

        let r = ExecutedTimeline::new(100).knn(5, 2).unwrap();
        assert!(r.neighbors.is_empty());
        assert_eq!(r.padded_count, 2);
        assert_eq!(ExecutedTimeline::new(100).dsum_kth(5, 2), (200, 100));

        assert_eq!(t.knn(101, 2), Err(Error::OutOfRangeSlot { slot: 101, m: 100 }));
    }

    #[test]
    fn ties_prefer_smaller_slot() {
        let t = ExecutedTimeline::from_slots(20, [3, 7]).unwrap();
        assert_eq!(t.knn(5, 1).unwrap().slots(), vec![3]);
        assert_eq!(t.knn(5, 2).unwrap().slots(), vec![3, 7]);
    }

    #[test]
    fn kth_neighbors_by_side() {
        let t = ExecutedTimeline::from_slots(20, [2, 4, 7, 9]).unwrap();
        assert_eq!(t.kth_left_of(7, 1), 4);
        assert_eq!(t.kth_left_of(7, 2), 2);
        assert_eq!(t.kth_left_of(7, 3), 0);
        assert_eq!(t.kth_right_of(4, 1), 7);
        assert_eq!(t.kth_right_of(4, 2), 9);
        assert_eq!(t.kth_right_of(4, 3), 21);
    }

    fn timeline_strategy() -> impl Strategy<Value = (usize, Vec<usize>)> {
        (1usize..60).prop_flat_map(|m| (Just(m), proptest::sample::subsequence((1..=m).collect::<Vec<_>>(), 0..=m)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn knn_matches_exhaustive_scan((m, slots) in timeline_strategy(), probe_seed in 0usize..1000, k in 1usize..6) {
            let t = ExecutedTimeline::from_slots(m, slots.iter().copied()).unwrap();
            let probe = probe_seed % m + 1;
            let r = t.knn(probe, k).unwrap();
            let (s, d, padded) = scan(&slots, m, probe, k);
            prop_assert_eq!(r.slots(), s);
            prop_assert_eq!(r.distances(), d.clone());
            prop_assert_eq!(r.padded_count, padded);
            prop_assert!(r.distances().windows(2).all(|w| w[0] <= w[1]));
            let (dsum, kth) = t.dsum_kth(probe, k);
            prop_assert_eq!(dsum, d.iter().sum::<usize>() + padded * m);
            prop_assert_eq!(kth, if padded > 0 { m } else { *d.last().unwrap() });
        }
    }
}
