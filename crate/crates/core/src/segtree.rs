//! Point-update, range-query segment trees over slots `1..=m`.
//!
//! Internal values are always recomputed from the current leaves, so a
//! query result depends only on the leaf values and never on the update
//! history.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SegTree<Op: Monoid> {
    size: usize,
    data: Vec<f64>,
    _op: std::marker::PhantomData<Op>,
}

pub(crate) trait Monoid {
    const IDENTITY: f64;
    fn combine(a: f64, b: f64) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sum;
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Min;

impl Monoid for Sum {
    const IDENTITY: f64 = 0.0;
    fn combine(a: f64, b: f64) -> f64 {
        a + b
    }
}

impl Monoid for Min {
    const IDENTITY: f64 = f64::INFINITY;
    fn combine(a: f64, b: f64) -> f64 {
        a.min(b)
    }
}

pub(crate) type SumTree = SegTree<Sum>;
pub(crate) type MinTree = SegTree<Min>;

impl<Op: Monoid> SegTree<Op> {
    /// `values[j - 1]` is the value at slot `j`.
    pub fn from_values(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut data = vec![Op::IDENTITY; 2 * size];
        data[size..size + values.len()].copy_from_slice(values);
        for i in (1..size).rev() {
            data[i] = Op::combine(data[2 * i], data[2 * i + 1]);
        }
        Self { size, data, _op: std::marker::PhantomData }
    }

    pub fn set(&mut self, slot: usize, value: f64) {
        let mut i = self.size + slot - 1;
        self.data[i] = value;
        while i > 1 {
            i /= 2;
            self.data[i] = Op::combine(self.data[2 * i], self.data[2 * i + 1]);
        }
    }

    /// Sets slots `lo..` to `values` and recomputes their ancestors once.
    pub fn set_range(&mut self, lo: usize, values: &[f64]) {
        if values.is_empty() {
            return;
        }
        let (mut a, mut b) = (self.size + lo - 1, self.size + lo - 1 + values.len() - 1);
        self.data[a..=b].copy_from_slice(values);
        while a > 1 {
            a /= 2;
            b /= 2;
            for i in a..=b {
                self.data[i] = Op::combine(self.data[2 * i], self.data[2 * i + 1]);
            }
        }
    }

    /// Aggregate over slots `lo..=hi`; identity when empty.
    pub fn query(&self, lo: usize, hi: usize) -> f64 {
        if lo > hi {
            return Op::IDENTITY;
        }
        let (mut l, mut r) = (lo - 1 + self.size, hi + self.size);
        let (mut left, mut right) = (Op::IDENTITY, Op::IDENTITY);
        while l < r {
            if l & 1 == 1 {
                left = Op::combine(left, self.data[l]);
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                right = Op::combine(self.data[r], right);
            }
            l >>= 1;
            r >>= 1;
        }
        Op::combine(left, right)
    }
}
