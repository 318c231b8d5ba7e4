//! Aggregated segment tree approximating the 1-D order-k Voronoi diagram of
//! the executed slots, with admissible upper bounds and best-first retrieval
//! of the slot with the largest heuristic value.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quality::{entropy_term, entropy_term_max, p_from_dsum};
use crate::segtree::{MinTree, SumTree};
use crate::timeline::ExecutedTimeline;

const BOUND_REL_SLACK: f64 = 1e-10;
const BOUND_ABS_SLACK: f64 = 1e-15;

/// Per-slot interpolation state of one task, kept in sync with its timeline.
///
/// Vectors are indexed by slot; index 0 is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotField {
    m: usize,
    k: usize,
    executed: Vec<bool>,
    dsum: Vec<usize>,
    kth: Vec<usize>,
    h: Vec<f64>,
}

impl SlotField {
    pub fn build(timeline: &ExecutedTimeline, k: usize) -> Self {
        let m = timeline.m();
        let mut f = Self {
            m,
            k,
            executed: vec![false; m + 1],
            dsum: vec![0; m + 1],
            kth: vec![0; m + 1],
            h: vec![0.0; m + 1],
        };
        for j in 1..=m {
            f.refresh(timeline, j);
        }
        f
    }

    fn refresh(&mut self, timeline: &ExecutedTimeline, j: usize) {
        let (dsum, kth) = timeline.dsum_kth(j, self.k);
        self.executed[j] = timeline.contains(j);
        self.dsum[j] = dsum;
        self.kth[j] = kth;
        self.h[j] = entropy_term(self.p(j));
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_executed(&self, j: usize) -> bool {
        self.executed[j]
    }

    /// Finishing probability of slot `j`.
    pub fn p(&self, j: usize) -> f64 {
        if self.executed[j] {
            1.0 / self.m as f64
        } else {
            p_from_dsum(self.dsum[j], self.k, self.m)
        }
    }

    /// Entropy contribution `-p log2 p` of slot `j`.
    pub fn h(&self, j: usize) -> f64 {
        self.h[j]
    }

    /// Distance to the k-th nearest executed slot, `m` when padded.
    pub fn kth(&self, j: usize) -> usize {
        self.kth[j]
    }

    fn affected(&self, j: usize, e: usize) -> bool {
        self.kth[j] > j.abs_diff(e)
    }

    /// Slots whose interpolation would change if `e` were executed.
    pub fn affected_range(&self, e: usize) -> (usize, usize) {
        let mut lo = e;
        while lo > 1 && self.affected(lo - 1, e) {
            lo -= 1;
        }
        let mut hi = e;
        while hi < self.m && self.affected(hi + 1, e) {
            hi += 1;
        }
        (lo, hi)
    }

    /// Exact quality increase from executing the unexecuted slot `e`.
    pub fn gain(&self, e: usize) -> f64 {
        debug_assert!(!self.executed[e]);
        let (lo, hi) = self.affected_range(e);
        let full = entropy_term(1.0 / self.m as f64);
        let mut delta = 0.0;
        for j in lo..=hi {
            if j == e {
                delta += full - self.h[j];
            } else if !self.executed[j] {
                let dsum = self.dsum[j] - (self.kth[j] - j.abs_diff(e));
                delta += entropy_term(p_from_dsum(dsum, self.k, self.m)) - self.h[j];
            }
        }
        delta
    }

    /// Largest increase a single new neighbor at distance at least `min_d`
    /// can give slot `j`.
    pub fn gain_potential(&self, j: usize, min_d: usize) -> f64 {
        if self.executed[j] || min_d >= self.kth[j] {
            return 0.0;
        }
        let best = p_from_dsum(self.dsum[j] - self.kth[j] + min_d, self.k, self.m);
        (entropy_term_max(self.p(j), best) - self.h[j]).max(0.0)
    }

    /// Refreshes the slots affected by executing `e`; `timeline` must
    /// already contain `e`. Returns the refreshed range.
    pub fn apply_execute(&mut self, timeline: &ExecutedTimeline, e: usize) -> (usize, usize) {
        let (lo, hi) = self.affected_range(e);
        for j in lo..=hi {
            self.refresh(timeline, j);
        }
        (lo, hi)
    }
}

/// Lower bound on the error ratio slot `j` can reach after one more
/// execution elsewhere.
pub fn error_ratio_lower_bound(timeline: &ExecutedTimeline, j: usize, k: usize) -> Result<f64> {
    timeline.check_slot(j)?;
    let (dsum, kth) = timeline.dsum_kth(j, k);
    Ok((dsum - kth + 1) as f64 / (k * timeline.m()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCondition {
    /// Both end slots share the same k-NN set.
    UniformKnn,
    /// The segment is no longer than the splitting threshold.
    Threshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeQuadruple {
    /// Executed slots that are a k-NN of some slot in the segment, ascending.
    pub k_set: Vec<usize>,
    /// k-NN of the left end, nearest first.
    pub knn_l: Vec<usize>,
    /// k-NN of the right end, nearest first.
    pub knn_r: Vec<usize>,
    /// Sum of `-p log2 p` over the segment.
    pub q_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    l: usize,
    r: usize,
    quad: NodeQuadruple,
    influence: (usize, usize),
    stop: Option<StopCondition>,
    children: Option<Box<(Node, Node)>>,
}

impl Node {
    pub fn segment(&self) -> (usize, usize) {
        (self.l, self.r)
    }

    pub fn len(&self) -> usize {
        self.r - self.l + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn quad(&self) -> &NodeQuadruple {
        &self.quad
    }

    pub fn influence(&self) -> (usize, usize) {
        self.influence
    }

    /// Why this node is a leaf; `None` for internal nodes.
    pub fn stop(&self) -> Option<StopCondition> {
        self.stop
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn children(&self) -> Option<(&Node, &Node)> {
        self.children.as_deref().map(|(a, b)| (a, b))
    }

    fn depth(&self) -> usize {
        match self.children() {
            None => 1,
            Some((a, b)) => 1 + a.depth().max(b.depth()),
        }
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a Node>) {
        out.push(self);
        if let Some((a, b)) = self.children() {
            a.visit(out);
            b.visit(out);
        }
    }

    /// Same structure and annotations, with `q_prime` compared to `tol`.
    pub fn matches(&self, other: &Node, tol: f64) -> bool {
        let same_here = self.l == other.l
            && self.r == other.r
            && self.influence == other.influence
            && self.stop == other.stop
            && self.quad.k_set == other.quad.k_set
            && self.quad.knn_l == other.quad.knn_l
            && self.quad.knn_r == other.quad.knn_r
            && (self.quad.q_prime - other.quad.q_prime).abs() <= tol;
        same_here
            && match (self.children(), other.children()) {
                (None, None) => true,
                (Some((a, b)), Some((c, d))) => a.matches(c, tol) && b.matches(d, tol),
                _ => false,
            }
    }
}

fn potential_levels(m: usize) -> usize {
    (usize::BITS - m.max(1).leading_zeros()) as usize
}

fn same_set(a: &[usize], b: &[usize]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Index over one task's timeline.
#[derive(Debug, Clone)]
pub struct VoronoiTree {
    m: usize,
    k: usize,
    t_s: usize,
    timeline: ExecutedTimeline,
    field: SlotField,
    /// `potential[i]` holds each slot's gain potential for a new neighbor
    /// at distance at least `2^i`.
    potential: Vec<SumTree>,
    min_h: MinTree,
    root: Node,
}

impl VoronoiTree {
    pub fn build(timeline: &ExecutedTimeline, k: usize, t_s: usize) -> Result<Self> {
        if k == 0 || t_s == 0 {
            return Err(Error::InvalidConfig("k and t_s must be at least 1".into()));
        }
        let m = timeline.m();
        if m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        let field = SlotField::build(timeline, k);
        let potential = (0..potential_levels(m))
            .map(|i| SumTree::from_values(&(1..=m).map(|j| field.gain_potential(j, 1 << i)).collect::<Vec<_>>()))
            .collect();
        let min_h = MinTree::from_values(
            &(1..=m)
                .map(|j| if field.is_executed(j) { f64::INFINITY } else { field.h(j) })
                .collect::<Vec<_>>(),
        );
        let mut tree = Self {
            m,
            k,
            t_s,
            timeline: timeline.clone(),
            field,
            potential,
            min_h,
            root: Node {
                l: 1,
                r: m,
                quad: NodeQuadruple { k_set: vec![], knn_l: vec![], knn_r: vec![], q_prime: 0.0 },
                influence: (1, m),
                stop: None,
                children: None,
            },
        };
        tree.root = tree.build_node(1, m);
        Ok(tree)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t_s(&self) -> usize {
        self.t_s
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn timeline(&self) -> &ExecutedTimeline {
        &self.timeline
    }

    pub fn field(&self) -> &SlotField {
        &self.field
    }

    /// Number of levels.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// All nodes in pre-order.
    pub fn nodes(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.root.visit(&mut out);
        out
    }

    pub fn quality(&self) -> f64 {
        self.root.quad.q_prime
    }

    fn annotate(&self, l: usize, r: usize) -> (NodeQuadruple, (usize, usize), bool) {
        let knn_l = self.timeline.knn(l, self.k).expect("segment in range").slots();
        let knn_r = self.timeline.knn(r, self.k).expect("segment in range").slots();
        let (lo, _) = self.timeline.knn_window(l, self.k);
        let (_, hi) = self.timeline.knn_window(r, self.k);
        let k_set = self.timeline.slots()[lo..hi].to_vec();
        let influence = (
            l.saturating_sub(self.field.kth(l)).max(1),
            (r + self.field.kth(r)).min(self.m),
        );
        let uniform = same_set(&knn_l, &knn_r);
        (NodeQuadruple { k_set, knn_l, knn_r, q_prime: 0.0 }, influence, uniform)
    }

    fn leaf_sum(&self, l: usize, r: usize) -> f64 {
        (l..=r).map(|j| self.field.h(j)).sum()
    }

    fn build_node(&self, l: usize, r: usize) -> Node {
        let (mut quad, influence, uniform) = self.annotate(l, r);
        let len = r - l + 1;
        let stop = if uniform {
            Some(StopCondition::UniformKnn)
        } else if len <= self.t_s {
            Some(StopCondition::Threshold)
        } else {
            None
        };
        let children = match stop {
            Some(_) => {
                quad.q_prime = self.leaf_sum(l, r);
                None
            }
            None => {
                let mid = l + len.div_ceil(2) - 1;
                let a = self.build_node(l, mid);
                let b = self.build_node(mid + 1, r);
                quad.q_prime = a.quad.q_prime + b.quad.q_prime;
                Some(Box::new((a, b)))
            }
        };
        Node { l, r, quad, influence, stop, children }
    }

    /// Executes slot `e` and restores every annotation.
    pub fn update_on_execute(&mut self, e: usize) -> Result<()> {
        self.timeline.check_slot(e)?;
        if self.timeline.contains(e) {
            return Err(Error::SlotAlreadyExecuted(e));
        }
        self.timeline.insert(e)?;
        let (lo, hi) = self.field.apply_execute(&self.timeline, e);
        let mut buf = Vec::with_capacity(hi - lo + 1);
        for (i, tree) in self.potential.iter_mut().enumerate() {
            buf.clear();
            buf.extend((lo..=hi).map(|j| self.field.gain_potential(j, 1 << i)));
            tree.set_range(lo, &buf);
        }
        buf.clear();
        buf.extend((lo..=hi).map(|j| if self.field.is_executed(j) { f64::INFINITY } else { self.field.h(j) }));
        self.min_h.set_range(lo, &buf);
        let mut root = std::mem::replace(
            &mut self.root,
            Node {
                l: 0,
                r: 0,
                quad: NodeQuadruple { k_set: vec![], knn_l: vec![], knn_r: vec![], q_prime: 0.0 },
                influence: (0, 0),
                stop: None,
                children: None,
            },
        );
        self.update_node(&mut root, e);
        self.root = root;
        Ok(())
    }

    fn update_node(&self, node: &mut Node, e: usize) {
        if e < node.influence.0 || e > node.influence.1 {
            return;
        }
        let (l, r) = (node.l, node.r);
        let (quad, influence, uniform) = self.annotate(l, r);
        node.influence = influence;
        node.quad = quad;
        if uniform {
            node.stop = Some(StopCondition::UniformKnn);
            node.children = None;
            node.quad.q_prime = self.leaf_sum(l, r);
            return;
        }
        let len = node.len();
        match node.children.as_deref_mut() {
            None if len <= self.t_s => {
                node.stop = Some(StopCondition::Threshold);
                node.quad.q_prime = self.leaf_sum(l, r);
            }
            None => *node = self.build_node(l, r),
            Some((a, b)) => {
                self.update_node(a, e);
                self.update_node(b, e);
                node.quad.q_prime = a.quad.q_prime + b.quad.q_prime;
            }
        }
    }

    fn unexecuted_in(&self, l: usize, r: usize) -> usize {
        let s = self.timeline.slots();
        let inside = s.partition_point(|&x| x <= r) - s.partition_point(|&x| x < l);
        r - l + 1 - inside
    }

    /// Upper bound on the quality gain of executing any unexecuted slot in
    /// `[l, r]`. Slots outside the segment are charged by their distance
    /// band to it; slots past the k-th executed slot on either side cannot
    /// change.
    fn gain_bound(&self, l: usize, r: usize, min_h: f64) -> f64 {
        let lo = self.timeline.kth_left_of(l, self.k) + 1;
        let hi = self.timeline.kth_right_of(r, self.k) - 1;
        let full = entropy_term(1.0 / self.m as f64);
        let mut g = full - min_h;
        if l < r {
            g += self.potential[0].query(l, r);
        }
        for (i, tree) in self.potential.iter().enumerate() {
            let (dlo, dhi) = (1usize << i, (1usize << (i + 1)) - 1);
            if l > dlo {
                let a = l.saturating_sub(dhi).max(lo).max(1);
                g += tree.query(a, l - dlo);
            }
            g += tree.query(r + dlo, (r + dhi).min(hi).min(self.m));
        }
        g * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK
    }

    fn slot_gain_bound(&self, e: usize) -> f64 {
        self.gain_bound(e, e, self.field.h(e))
    }

    /// Dumps segments, influence ranges and quadruples as indented text.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        dump_node(&self.root, 0, &mut out);
        out
    }
}

fn dump_node(n: &Node, depth: usize, out: &mut String) {
    let stop = match n.stop {
        None => "",
        Some(StopCondition::UniformKnn) => " leaf:uniform",
        Some(StopCondition::Threshold) => " leaf:threshold",
    };
    let _ = writeln!(
        out,
        "{:indent$}[{}, {}] infl=[{}, {}] knn_l={:?} knn_r={:?} k_set={:?} q'={:.9}{}",
        "",
        n.l,
        n.r,
        n.influence.0,
        n.influence.1,
        n.quad.knn_l,
        n.quad.knn_r,
        n.quad.k_set,
        n.quad.q_prime,
        stop,
        indent = depth * 2
    );
    if let Some((a, b)) = n.children() {
        dump_node(a, depth + 1, out);
        dump_node(b, depth + 1, out);
    }
}

/// Per-slot price of executing a slot, with a range-minimum index over the
/// slots that are still unexecuted.
#[derive(Debug, Clone)]
pub struct CostModel {
    costs: Vec<Option<f64>>,
    open: MinTree,
}

impl CostModel {
    /// `costs[j - 1]` is the price of slot `j`, `None` when no worker can
    /// serve it.
    pub fn new(costs: Vec<Option<f64>>, timeline: &ExecutedTimeline) -> Self {
        let values: Vec<f64> = costs
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Some(c) if !timeline.contains(i + 1) => *c,
                _ => f64::INFINITY,
            })
            .collect();
        Self { open: MinTree::from_values(&values), costs }
    }

    /// Unit price for every slot.
    pub fn uniform(m: usize, cost: f64, timeline: &ExecutedTimeline) -> Self {
        Self::new(vec![Some(cost); m], timeline)
    }

    pub fn cost(&self, slot: usize) -> Option<f64> {
        self.costs[slot - 1]
    }

    /// Reprices an unexecuted slot.
    pub fn set(&mut self, slot: usize, cost: Option<f64>) {
        self.costs[slot - 1] = cost;
        self.open.set(slot, cost.unwrap_or(f64::INFINITY));
    }

    pub fn mark_executed(&mut self, slot: usize) {
        self.open.set(slot, f64::INFINITY);
    }

    /// Cheapest unexecuted slot price over `[l, r]`.
    pub fn min_open(&self, l: usize, r: usize) -> f64 {
        self.open.query(l, r)
    }
}

/// Ranking key of a candidate slot. Free slots outrank every paid slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub free: bool,
    pub value: f64,
}

impl Score {
    pub const NONE: Score = Score { free: false, value: f64::NEG_INFINITY };

    pub fn ratio(gain: f64, cost: f64) -> Self {
        if cost == 0.0 {
            Score { free: true, value: gain }
        } else {
            Score { free: false, value: gain / cost }
        }
    }

    pub fn gain(gain: f64) -> Self {
        Score { free: false, value: gain }
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.free.cmp(&other.free).then(self.value.total_cmp(&other.value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Quality increase per unit cost.
    ByRatio,
    /// Quality increase alone.
    ByGain,
}

impl Objective {
    pub fn score(self, gain: f64, cost: f64) -> Score {
        match self {
            Objective::ByRatio => Score::ratio(gain, cost),
            Objective::ByGain => Score::gain(gain),
        }
    }
}

/// Upper bound on the heuristic value of every unexecuted slot in `node`.
pub fn node_upper_bound(
    tree: &VoronoiTree,
    node: &Node,
    costs: &CostModel,
    objective: Objective,
) -> Result<Score> {
    let (l, r) = node.segment();
    if tree.unexecuted_in(l, r) == 0 {
        return Err(Error::NoUnexecutedSlot(l, r));
    }
    Ok(segment_bound(tree, costs, l, r, objective))
}

fn segment_bound(tree: &VoronoiTree, costs: &CostModel, l: usize, r: usize, objective: Objective) -> Score {
    let min_cost = costs.min_open(l, r);
    if min_cost.is_infinite() {
        return Score::NONE;
    }
    let gain = tree.gain_bound(l, r, tree.min_h.query(l, r));
    objective.score(gain, min_cost)
}

/// Leaves longer than this are searched through virtual halves instead of
/// slot by slot.
const LEAF_SCAN_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotChoice {
    pub slot: usize,
    pub gain: f64,
    pub cost: f64,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchOutcome {
    pub best: Option<SlotChoice>,
    /// Slots whose heuristic was evaluated exactly.
    pub evaluations: usize,
    pub nodes_visited: usize,
}

enum Payload<'a> {
    Node(&'a Node),
    /// Part of a leaf segment.
    Segment(usize, usize),
    Candidate(usize),
}

struct Entry<'a> {
    priority: Score,
    payload: Payload<'a>,
}

impl Entry<'_> {
    fn key(&self) -> (Score, u8, std::cmp::Reverse<usize>) {
        match self.payload {
            Payload::Candidate(j) => (self.priority, 1, std::cmp::Reverse(j)),
            Payload::Node(n) => (self.priority, 0, std::cmp::Reverse(n.l)),
            Payload::Segment(l, _) => (self.priority, 0, std::cmp::Reverse(l)),
        }
    }
}

impl PartialEq for Entry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Entry<'_> {}
impl PartialOrd for Entry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Best-first search for the affordable unexecuted slot with the largest
/// heuristic value; ties go to the smaller slot.
pub fn best_slot(
    tree: &VoronoiTree,
    costs: &CostModel,
    remaining: f64,
    objective: Objective,
) -> SearchOutcome {
    let mut out = SearchOutcome::default();
    let mut heap = BinaryHeap::new();
    let feasible = |l: usize, r: usize| costs.min_open(l, r) <= remaining;
    if feasible(1, tree.m) {
        if let Ok(p) = node_upper_bound(tree, &tree.root, costs, objective) {
            heap.push(Entry { priority: p, payload: Payload::Node(&tree.root) });
        }
    }
    let beats = |s: Score, best: &Option<SlotChoice>| best.is_none_or(|b| s >= b.score);

    while let Some(top) = heap.pop() {
        if !beats(top.priority, &out.best) {
            break;
        }
        let (l, r) = match top.payload {
            Payload::Node(n) => {
                out.nodes_visited += 1;
                if let Some((a, b)) = n.children() {
                    for child in [a, b] {
                        let (l, r) = child.segment();
                        if !feasible(l, r) {
                            continue;
                        }
                        let p = segment_bound(tree, costs, l, r, objective);
                        if beats(p, &out.best) {
                            heap.push(Entry { priority: p, payload: Payload::Node(child) });
                        }
                    }
                    continue;
                }
                n.segment()
            }
            Payload::Segment(l, r) => (l, r),
            Payload::Candidate(j) => {
                out.evaluations += 1;
                let cost = costs.cost(j).expect("candidates are priced");
                let gain = tree.field.gain(j);
                let score = objective.score(gain, cost);
                let better = match out.best {
                    None => true,
                    Some(b) => score > b.score || (score == b.score && j < b.slot),
                };
                if better {
                    out.best = Some(SlotChoice { slot: j, gain, cost, score });
                }
                continue;
            }
        };
        if r - l + 1 > LEAF_SCAN_LEN.max(tree.t_s) {
            let mid = l + (r - l + 1).div_ceil(2) - 1;
            for (a, b) in [(l, mid), (mid + 1, r)] {
                if !feasible(a, b) {
                    continue;
                }
                let p = segment_bound(tree, costs, a, b, objective);
                if beats(p, &out.best) {
                    heap.push(Entry { priority: p, payload: Payload::Segment(a, b) });
                }
            }
            continue;
        }
        for j in l..=r {
            if tree.field.is_executed(j) {
                continue;
            }
            let Some(c) = costs.cost(j).filter(|&c| c <= remaining) else {
                continue;
            };
            let p = objective.score(tree.slot_gain_bound(j), c);
            if beats(p, &out.best) {
                heap.push(Entry { priority: p, payload: Payload::Candidate(j) });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::timeline_quality;

    fn tl(m: usize, s: &[usize]) -> ExecutedTimeline {
        ExecutedTimeline::from_slots(m, s.iter().copied()).unwrap()
    }

    fn find_leaf(n: &Node, j: usize) -> &Node {
        match n.children() {
            None => n,
            Some((a, b)) => find_leaf(if j <= a.r { a } else { b }, j),
        }
    }

    /// Reference heuristic: tentative timeline, every slot re-interpolated.
    fn naive_gain(t: &ExecutedTimeline, e: usize, k: usize) -> f64 {
        let mut with = t.clone();
        with.insert(e).unwrap();
        timeline_quality(&with, k) - timeline_quality(t, k)
    }

    #[test]
    fn worked_example_leftmost_leaf() {
        let tree = VoronoiTree::build(&tl(100, &[2, 4, 7, 9]), 2, 4).unwrap();
        assert_eq!(tree.root().segment(), (1, 100));
        let leaf = find_leaf(tree.root(), 1);
        assert_eq!(leaf.segment(), (1, 4));
        assert_eq!(leaf.stop(), Some(StopCondition::UniformKnn));
        assert!(same_set(&leaf.quad().knn_l, &[2, 4]));
        assert_eq!(leaf.quad().k_set, vec![2, 4]);
    }

    #[test]
    fn empty_timeline_is_single_leaf() {
        let tree = VoronoiTree::build(&tl(8, &[]), 3, 2).unwrap();
        assert!(tree.root().is_leaf());
        assert_eq!(tree.root().quad().q_prime, 0.0);
        assert!(tree.root().quad().knn_l.is_empty());
        assert_eq!(tree.root().influence(), (1, 8));
    }

    #[test]
    fn node_sums_match_per_slot_terms() {
        let t = tl(100, &[2, 4, 7, 9]);
        let tree = VoronoiTree::build(&t, 2, 4).unwrap();
        for n in tree.nodes() {
            let (l, r) = n.segment();
            let direct: f64 = (l..=r)
                .map(|j| entropy_term(crate::quality::finishing_probability(j, &t, 2).unwrap()))
                .sum();
            assert!((n.quad().q_prime - direct).abs() < 1e-9, "[{l}, {r}]");
        }
        assert!((tree.quality() - timeline_quality(&t, 2)).abs() < 1e-12);
    }

    #[test]
    fn executing_five_moves_sixth_neighbors() {
        let mut tree = VoronoiTree::build(&tl(100, &[2, 4, 7, 9]), 2, 4).unwrap();
        assert!(same_set(&tree.timeline().knn(6, 2).unwrap().slots(), &[4, 7]));
        tree.update_on_execute(5).unwrap();
        assert!(same_set(&tree.timeline().knn(6, 2).unwrap().slots(), &[5, 7]));
        let fresh = VoronoiTree::build(tree.timeline(), 2, 4).unwrap();
        assert!(tree.root().matches(fresh.root(), 0.0));
        assert_eq!(tree.update_on_execute(5), Err(Error::SlotAlreadyExecuted(5)));
        assert_eq!(tree.update_on_execute(0), Err(Error::OutOfRangeSlot { slot: 0, m: 100 }));
    }

    #[test]
    fn lower_bound_example() {
        let t = tl(100, &[2]);
        assert_eq!(error_ratio_lower_bound(&t, 3, 2).unwrap(), 0.01);
    }

    #[test]
    fn fully_executed_node_has_no_bound() {
        let t = tl(10, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let tree = VoronoiTree::build(&t, 2, 2).unwrap();
        let costs = CostModel::uniform(10, 1.0, &t);
        assert_eq!(
            node_upper_bound(&tree, tree.root(), &costs, Objective::ByRatio),
            Err(Error::NoUnexecutedSlot(1, 10))
        );
        assert_eq!(best_slot(&tree, &costs, 5.0, Objective::ByRatio).best, None);
    }

    #[test]
    fn zero_budget_finds_nothing() {
        let t = tl(50, &[10]);
        let tree = VoronoiTree::build(&t, 3, 4).unwrap();
        let costs = CostModel::uniform(50, 1.0, &t);
        assert_eq!(best_slot(&tree, &costs, 0.0, Objective::ByRatio).best, None);
    }

    #[test]
    fn field_gain_equals_naive_difference() {
        let t = tl(40, &[3, 11, 12, 30]);
        let f = SlotField::build(&t, 3);
        for e in 1..=40 {
            if t.contains(e) {
                continue;
            }
            assert!((f.gain(e) - naive_gain(&t, e, 3)).abs() < 1e-12, "slot {e}");
        }
    }

    #[test]
    fn small_tie_picks_first_slot() {
        let t = tl(10, &[2, 4, 7, 9]);
        let tree = VoronoiTree::build(&t, 2, 4).unwrap();
        let costs = CostModel::uniform(10, 1.0, &t);
        let best = best_slot(&tree, &costs, 1.0, Objective::ByRatio).best.unwrap();
        assert_eq!(best.slot, 1);
        assert_eq!(tree.field().gain(1), tree.field().gain(10));
    }

    #[test]
    fn worked_example_true_argmax() {
        let t = tl(100, &[2, 4, 7, 9]);
        let tree = VoronoiTree::build(&t, 2, 4).unwrap();
        let costs = CostModel::uniform(100, 1.0, &t);
        let out = best_slot(&tree, &costs, 1.0, Objective::ByRatio);
        let mut best = (0, f64::NEG_INFINITY);
        for e in 1..=100 {
            if !t.contains(e) {
                let g = naive_gain(&t, e, 2);
                if g > best.1 + 1e-15 {
                    best = (e, g);
                }
            }
        }
        assert_eq!(out.best.unwrap().slot, best.0);
        assert!((naive_gain(&t, 1, 2) - 0.0010).abs() < 1e-4);
    }

    #[test]
    fn dump_lists_every_node() {
        let tree = VoronoiTree::build(&tl(16, &[3, 9]), 1, 2).unwrap();
        let text = tree.dump();
        assert_eq!(text.lines().count(), tree.nodes().len());
        assert!(text.starts_with("[1, 16]"));
    }

    #[test]
    fn score_order() {
        assert!(Score::ratio(0.0, 0.0) > Score::ratio(100.0, 1e-9));
        assert!(Score::ratio(2.0, 1.0) > Score::ratio(1.0, 1.0));
        assert!(Score::NONE < Score::ratio(0.0, 5.0));
    }
}
