//! Hierarchical partition refinement: a binary tree over the sample space
//! with ESS-triggered leaf splitting, sample push-down and tree-walk
//! sampling through aggregated node masses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::daisee::{boost, sample_uniform_in, BoostSpec};
use crate::error::{Error, Result};
use crate::partition::{ArmState, KahanSum};
use crate::targets::{Rectangle, TargetDensity};

/// `ESS = (Σ Y)² / Σ Y²`, in `[1, n]`. When every recorded weight is zero
/// the ratio is 0/0; the convention is `ESS = n` (no information to split
/// on).
pub fn ess(state: &ArmState) -> f64 {
    let s2 = state.sum_y2();
    if s2 == 0.0 {
        return state.n() as f64;
    }
    let s = state.sum_y();
    s * s / s2
}

/// When a leaf may split: pulled at least `n_min` times and its ESS has
/// dropped below `ess_ratio · N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPolicy {
    pub n_min: u64,
    pub ess_ratio: f64,
}

impl SplitPolicy {
    pub fn new(n_min: u64, ess_ratio: f64) -> Result<Self> {
        if n_min == 0 {
            return Err(Error::Config("n_min must be positive".into()));
        }
        if !(ess_ratio > 0.0 && ess_ratio < 1.0) {
            return Err(Error::Config(format!(
                "ess_ratio must lie in (0, 1), got {ess_ratio}"
            )));
        }
        Ok(Self { n_min, ess_ratio })
    }

    pub fn should_split(&self, state: &ArmState) -> bool {
        state.n() >= self.n_min && ess(state) < self.ess_ratio * state.n() as f64
    }
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self { n_min: 10, ess_ratio: 0.5 }
    }
}

/// How a child's variance factor derives from its parent's on a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauRule {
    /// Children get τ/2 (consistent with the `(M/2)·vol` auto rule).
    Halve,
    /// Children inherit τ unchanged.
    Constant,
}

/// Leaf mass maintenance strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassMode {
    /// Recompute every leaf numerator each iteration (O(K)); all boosts see
    /// the current `t`.
    Exact,
    /// Refresh only the traversal path (O(depth)); off-path boosts go stale
    /// until their leaf is next visited.
    Lazy,
}

/// Archived draw kept for push-down: position plus the raw target value, so
/// child weights can be recomputed exactly without re-evaluating `f`.
#[derive(Debug, Clone)]
pub struct ArchivedSample {
    pub x: Vec<f64>,
    pub f_val: f64,
}

#[derive(Debug, Clone)]
pub struct LeafState {
    pub state: ArmState,
    pub archive: Vec<ArchivedSample>,
    pub tau: f64,
    /// Frozen numerator inherited at split time; used in place of `Ẑ + σ`
    /// until the first pull.
    pub pending_num: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: usize,
    pub cell: Rectangle,
    pub parent: Option<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub depth: usize,
    /// Unnormalized selection mass: for a leaf `Ẑ + σ` (or the pending
    /// value), for an internal node the sum over its children.
    pub num: f64,
    pub split_dim: Option<usize>,
    pub leaf: Option<LeafState>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.leaf.is_some()
    }
}

/// Per-leaf entry of a serialized tree snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct LeafSnapshot {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub q: f64,
    pub n: u64,
    pub ess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeSnapshot {
    pub t: u64,
    pub leaves: Vec<LeafSnapshot>,
}

/// True at the logarithmically spaced milestones {1,2,5}·10^k.
pub fn is_snapshot_time(t: u64) -> bool {
    if t == 0 {
        return false;
    }
    let mut lead = t;
    let mut pow = 1u64;
    while lead >= 10 {
        if lead % 10 != 0 {
            return false;
        }
        lead /= 10;
        pow *= 10;
    }
    let _ = pow;
    matches!(lead, 1 | 2 | 5)
}

#[derive(Debug, Clone)]
pub struct HiDaiseeOptions {
    pub policy: SplitPolicy,
    pub boost: BoostSpec,
    pub tau_rule: TauRule,
    pub mass_mode: MassMode,
    /// Initial τ at the root; `None` selects `(M/2)·vol(root)` from the
    /// target supremum.
    pub root_tau: Option<f64>,
    pub seed: u64,
}

impl HiDaiseeOptions {
    pub fn new(policy: SplitPolicy, boost: BoostSpec, seed: u64) -> Self {
        Self {
            policy,
            boost,
            tau_rule: TauRule::Halve,
            mass_mode: MassMode::Exact,
            root_tau: None,
            seed,
        }
    }
}

/// One tree-walk draw.
#[derive(Debug, Clone)]
pub struct HiSample {
    pub t: u64,
    pub leaf: usize,
    pub x: Vec<f64>,
    pub f_val: f64,
    pub y: f64,
    /// Probability of reaching the leaf at traversal time.
    pub q_leaf: f64,
    /// Nodes visited by the traversal (= depth of the leaf + 1).
    pub nodes_touched: usize,
    /// Whether this iteration split the sampled leaf.
    pub split: bool,
}

pub struct HiDaisee {
    target: TargetDensity,
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
    t: u64,
    rng: ChaCha8Rng,
    opts: HiDaiseeOptions,
    w_sum: KahanSum,
    last_split_t: u64,
}

const ROOT: usize = 0;

impl HiDaisee {
    pub fn new(target: TargetDensity, opts: HiDaiseeOptions) -> Result<Self> {
        let cell = target.domain().clone();
        let tau = match opts.root_tau {
            Some(t) if t > 0.0 => t,
            Some(t) => {
                return Err(Error::Config(format!("root tau must be positive, got {t}")))
            }
            None => {
                let sup = target.sup_bound().ok_or_else(|| {
                    Error::Config(
                        "tau auto rule requires a target with a known supremum".into(),
                    )
                })?;
                0.5 * sup * cell.volume()
            }
        };
        let root = TreeNode {
            id: ROOT,
            cell,
            parent: None,
            left: None,
            right: None,
            depth: 0,
            num: 1.0,
            split_dim: None,
            leaf: Some(LeafState {
                state: ArmState::new(),
                archive: Vec::new(),
                tau,
                // The root has no parent mass to inherit; any positive
                // placeholder works since it is the only leaf.
                pending_num: Some(1.0),
            }),
        };
        Ok(Self {
            target,
            nodes: vec![root],
            leaves: vec![ROOT],
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            opts,
            w_sum: KahanSum::default(),
            last_split_t: 0,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn last_split_t(&self) -> u64 {
        self.last_split_t
    }

    pub fn depth(&self) -> usize {
        self.leaves.iter().map(|&l| self.nodes[l].depth).max().unwrap_or(0)
    }

    /// Leaf cells in stable (creation-order) sequence.
    pub fn partition(&self) -> Vec<Rectangle> {
        self.leaves.iter().map(|&l| self.nodes[l].cell.clone()).collect()
    }

    /// Normalized leaf masses in the same order as [`partition`](Self::partition).
    pub fn q(&self) -> Vec<f64> {
        let root = self.nodes[ROOT].num;
        self.leaves.iter().map(|&l| self.nodes[l].num / root).collect()
    }

    /// Running mixture-weighted estimate of `Z`.
    pub fn z_hat_total(&self) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        self.w_sum.value() / self.t as f64
    }

    fn leaf_numerator(&self, id: usize) -> Result<f64> {
        let node = &self.nodes[id];
        let leaf = node.leaf.as_ref().expect("leaf_numerator on internal node");
        if let Some(p) = leaf.pending_num {
            if leaf.state.n() == 0 {
                return Ok(p);
            }
        }
        let sigma = boost(&self.opts.boost, leaf.tau, self.t.max(2), leaf.state.n())?;
        Ok(leaf.state.z_hat()? + sigma)
    }

    /// Recompute every leaf numerator at the current `t` and rebuild the
    /// internal aggregates bottom-up.
    fn refresh_all_masses(&mut self) -> Result<()> {
        for i in 0..self.leaves.len() {
            let id = self.leaves[i];
            self.nodes[id].num = self.leaf_numerator(id)?;
        }
        // Node ids increase from parent to child, so a reverse sweep is a
        // valid bottom-up order.
        for id in (0..self.nodes.len()).rev() {
            if let (Some(l), Some(r)) = (self.nodes[id].left, self.nodes[id].right) {
                self.nodes[id].num = self.nodes[l].num + self.nodes[r].num;
            }
        }
        if !(self.nodes[ROOT].num > 0.0) {
            return Err(Error::DegenerateProposal);
        }
        Ok(())
    }

    /// Refresh only the sampled leaf and its ancestors (O(depth)).
    fn refresh_path_masses(&mut self, leaf: usize) -> Result<()> {
        self.nodes[leaf].num = self.leaf_numerator(leaf)?;
        let mut cur = self.nodes[leaf].parent;
        while let Some(id) = cur {
            let (l, r) = (self.nodes[id].left.unwrap(), self.nodes[id].right.unwrap());
            self.nodes[id].num = self.nodes[l].num + self.nodes[r].num;
            cur = self.nodes[id].parent;
        }
        if !(self.nodes[ROOT].num > 0.0) {
            return Err(Error::DegenerateProposal);
        }
        Ok(())
    }

    /// Walk from the root to a leaf, branching with probability proportional
    /// to the child masses. Returns the leaf, its reach probability and the
    /// number of nodes touched.
    fn traverse(&mut self) -> Result<(usize, f64, usize)> {
        let mut id = ROOT;
        let mut prob = 1.0;
        let mut touched = 1;
        while !self.nodes[id].is_leaf() {
            let l = self.nodes[id].left.unwrap();
            let r = self.nodes[id].right.unwrap();
            let (ml, mr) = (self.nodes[l].num, self.nodes[r].num);
            let total = ml + mr;
            if !(total > 0.0) {
                return Err(Error::Tree(format!(
                    "zero mass at internal node {id} (children {ml} + {mr})"
                )));
            }
            let q_left = ml / total;
            let u: f64 = self.rng.gen();
            if u < q_left {
                id = l;
                prob *= q_left;
            } else {
                id = r;
                prob *= 1.0 - q_left;
            }
            touched += 1;
        }
        Ok((id, prob, touched))
    }

    fn split_leaf(&mut self, leaf_id: usize) -> Result<()> {
        let (cell, depth, tau, parent_num) = {
            let node = &self.nodes[leaf_id];
            let leaf = node.leaf.as_ref().ok_or_else(|| {
                Error::Tree(format!("split target {leaf_id} is not a leaf"))
            })?;
            (node.cell.clone(), node.depth, leaf.tau, node.num)
        };
        let dim = depth % cell.dim();
        let (lc, rc) = cell.split(dim);
        let mid = lc.hi()[dim];

        let parent_leaf = self.nodes[leaf_id].leaf.take().unwrap();
        let child_tau = match self.opts.tau_rule {
            TauRule::Halve => tau * 0.5,
            TauRule::Constant => tau,
        };

        let mut child_states = [ArmState::new(), ArmState::new()];
        let mut child_archives = [Vec::new(), Vec::new()];
        let vols = [lc.volume(), rc.volume()];
        for s in parent_leaf.archive {
            // Half-open routing: the midpoint belongs to the right child.
            let side = usize::from(s.x[dim] >= mid);
            let y = s.f_val * vols[side];
            child_states[side]
                .record_pull(y)
                .map_err(|_| Error::NonFiniteWeight { arm: leaf_id, t: self.t, y })?;
            child_archives[side].push(s);
        }

        let [ls, rs] = child_states;
        let [la, ra] = child_archives;
        let lid = self.nodes.len();
        let rid = lid + 1;
        for (id, c, st, ar) in [(lid, lc, ls, la), (rid, rc, rs, ra)] {
            // An empty child keeps half the parent's mass frozen until its
            // first pull.
            let pending = if st.n() == 0 { Some(0.5 * parent_num) } else { None };
            self.nodes.push(TreeNode {
                id,
                cell: c,
                parent: Some(leaf_id),
                left: None,
                right: None,
                depth: depth + 1,
                num: 0.0,
                split_dim: None,
                leaf: Some(LeafState {
                    state: st,
                    archive: ar,
                    tau: child_tau,
                    pending_num: pending,
                }),
            });
        }
        let node = &mut self.nodes[leaf_id];
        node.left = Some(lid);
        node.right = Some(rid);
        node.split_dim = Some(dim);
        let pos = self.leaves.iter().position(|&l| l == leaf_id).unwrap();
        self.leaves.swap_remove(pos);
        self.leaves.push(lid);
        self.leaves.push(rid);
        self.last_split_t = self.t;
        // A split always rebuilds all masses: every leaf numerator is cheap
        // relative to the push-down just performed.
        self.refresh_all_masses()
    }

    /// One iteration of Algorithm 2: traverse, sample, update masses, then
    /// evaluate the split policy on the sampled leaf (at most one split).
    pub fn step(&mut self) -> Result<HiSample> {
        let (leaf_id, q_leaf, touched) = self.traverse()?;
        let x = sample_uniform_in(&self.nodes[leaf_id].cell, &mut self.rng);
        let f_val = self.target.eval(&x);
        if !f_val.is_finite() {
            return Err(Error::NonFiniteTarget { x });
        }
        if let Some(sup) = self.target.sup_bound() {
            if f_val > sup * (1.0 + 1e-9) {
                return Err(Error::SupBoundViolated { value: f_val, sup, x });
            }
        }
        let vol = self.nodes[leaf_id].cell.volume();
        let y = f_val * vol;
        {
            let leaf = self.nodes[leaf_id].leaf.as_mut().unwrap();
            leaf.state
                .record_pull(y)
                .map_err(|_| Error::NonFiniteWeight { arm: leaf_id, t: self.t + 1, y })?;
            leaf.archive.push(ArchivedSample { x: x.clone(), f_val });
            leaf.pending_num = None;
        }
        self.t += 1;
        self.w_sum.add(y / q_leaf);

        match self.opts.mass_mode {
            MassMode::Exact => self.refresh_all_masses()?,
            MassMode::Lazy => self.refresh_path_masses(leaf_id)?,
        }

        let mut split = false;
        {
            let leaf = self.nodes[leaf_id].leaf.as_ref().unwrap();
            if self.opts.policy.should_split(&leaf.state) {
                split = true;
            }
        }
        if split {
            self.split_leaf(leaf_id)?;
        }
        Ok(HiSample {
            t: self.t,
            leaf: leaf_id,
            x,
            f_val,
            y,
            q_leaf,
            nodes_touched: touched,
            split,
        })
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        let root = self.nodes[ROOT].num;
        let leaves = self
            .leaves
            .iter()
            .map(|&l| {
                let node = &self.nodes[l];
                let leaf = node.leaf.as_ref().unwrap();
                LeafSnapshot {
                    lo: node.cell.lo().to_vec(),
                    hi: node.cell.hi().to_vec(),
                    q: node.num / root,
                    n: leaf.state.n(),
                    ess: ess(&leaf.state),
                }
            })
            .collect();
        TreeSnapshot { t: self.t, leaves }
    }

    /// Structural and mass invariants; used by tests and the fuzz harness.
    pub fn check_invariants(&self) -> Result<()> {
        let root = &self.nodes[ROOT];
        // Normalized root mass is 1 by construction; check the aggregates.
        for node in &self.nodes {
            match (node.left, node.right, node.is_leaf()) {
                (Some(l), Some(r), false) => {
                    let sum = self.nodes[l].num + self.nodes[r].num;
                    let scale = node.num.abs().max(1.0);
                    if (node.num - sum).abs() > 1e-12 * scale {
                        return Err(Error::Tree(format!(
                            "node {}: mass {} != children sum {}",
                            node.id, node.num, sum
                        )));
                    }
                    for c in [l, r] {
                        if self.nodes[c].parent != Some(node.id)
                            || self.nodes[c].depth != node.depth + 1
                        {
                            return Err(Error::Tree(format!("bad linkage at {}", node.id)));
                        }
                        if !self.nodes[c].cell.subset_of(&node.cell) {
                            return Err(Error::Tree(format!(
                                "child cell escapes parent at {}",
                                node.id
                            )));
                        }
                    }
                }
                (None, None, true) => {}
                _ => {
                    return Err(Error::Tree(format!(
                        "node {} is neither a proper leaf nor internal",
                        node.id
                    )))
                }
            }
        }
        // Leaves partition the root cell: volumes sum and cells are disjoint.
        let vol_sum: f64 = self.leaves.iter().map(|&l| self.nodes[l].cell.volume()).sum();
        if ((vol_sum - root.cell.volume()) / root.cell.volume()).abs() > 1e-9 {
            return Err(Error::Tree(format!(
                "leaf volumes {} != root volume {}",
                vol_sum,
                root.cell.volume()
            )));
        }
        crate::oracle::check_partition(&root.cell, &self.partition())?;
        let q_sum: f64 = self.q().iter().sum();
        if (q_sum - 1.0).abs() > 1e-10 {
            return Err(Error::Tree(format!("leaf masses sum to {q_sum}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{builtin_target, piecewise_target, Builtin, PiecewiseConstantSpec};

    fn mk_state(ys: &[f64]) -> ArmState {
        let mut s = ArmState::new();
        for &y in ys {
            s.record_pull(y).unwrap();
        }
        s
    }

    #[test]
    fn ess_values() {
        assert_eq!(ess(&mk_state(&[1.0, 1.0, 1.0, 1.0])), 4.0);
        assert_eq!(ess(&mk_state(&[1.0, 0.0, 0.0])), 1.0);
        let e = ess(&mk_state(&[1.0, 2.0, 3.0]));
        assert!((e - 36.0 / 14.0).abs() < 1e-12);
        // all-zero convention
        assert_eq!(ess(&mk_state(&[0.0, 0.0])), 2.0);
    }

    #[test]
    fn split_policy_thresholds() {
        let p = SplitPolicy::default();
        assert_eq!(p.n_min, 10);
        assert_eq!(p.ess_ratio, 0.5);
        // equal weights never split
        assert!(!p.should_split(&mk_state(&[2.0; 50])));
        // skewed weights below n_min don't split
        let skew: Vec<f64> = (0..9).map(|i| if i == 0 { 100.0 } else { 0.0 }).collect();
        assert!(!p.should_split(&mk_state(&skew)));
        // past n_min with collapsed ESS they do
        let skew: Vec<f64> = (0..20).map(|i| if i == 0 { 100.0 } else { 0.0 }).collect();
        assert!(p.should_split(&mk_state(&skew)));
        assert!(SplitPolicy::new(0, 0.5).is_err());
        assert!(SplitPolicy::new(10, 1.0).is_err());
    }

    fn exp_flat_engine(seed: u64, ess_ratio: f64) -> HiDaisee {
        let target = builtin_target(&Builtin::ExpFlat).unwrap();
        let opts = HiDaiseeOptions::new(
            SplitPolicy::new(10, ess_ratio).unwrap(),
            BoostSpec::ucb(),
            seed,
        );
        HiDaisee::new(target, opts).unwrap()
    }

    #[test]
    fn snapshot_times() {
        let expect = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000];
        for t in 1..=1000u64 {
            assert_eq!(is_snapshot_time(t), expect.contains(&t), "t={t}");
        }
    }

    #[test]
    fn constant_target_never_splits() {
        let target = piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![2.0]).unwrap(),
            Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let opts = HiDaiseeOptions::new(SplitPolicy::default(), BoostSpec::ucb(), 7);
        let mut e = HiDaisee::new(target, opts).unwrap();
        for _ in 0..2000 {
            e.step().unwrap();
        }
        assert_eq!(e.leaf_count(), 1);
        // Constant weights: the Z estimate is exact.
        assert!((e.z_hat_total() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn exp_flat_splits_and_flat_cell_freezes() {
        let mut e = exp_flat_engine(3, 0.5);
        for _ in 0..20_000 {
            e.step().unwrap();
        }
        assert!(e.leaf_count() > 1, "exp-flat must trigger splits");
        e.check_invariants().unwrap();
        // Any leaf fully inside the flat region (0, 0.25] has constant
        // weights, hence ESS = N, hence never splits: it must still be a
        // leaf whose cell lies in [0, 0.25].
        let flat_leaves: Vec<_> = e
            .partition()
            .into_iter()
            .filter(|c| c.hi()[0] <= 0.25 + 1e-12)
            .collect();
        assert!(!flat_leaves.is_empty(), "flat region should be isolated, not shredded");
        // No leaf strictly inside the flat region is deeper than needed to
        // isolate it: [0, 0.25] is reachable at depth 2, so flat leaves
        // should sit at depth <= 3 or so; more robustly, check that flat
        // cells are not tiny.
        for c in &flat_leaves {
            assert!(c.volume() >= 0.25 / 4.0, "flat cell over-split: {c:?}");
        }
    }

    #[test]
    fn push_down_counts_and_weights() {
        let mut e = exp_flat_engine(11, 0.5);
        let mut total_splits = 0;
        for _ in 0..5_000 {
            let s = e.step().unwrap();
            if s.split {
                total_splits += 1;
                // After a split, every leaf archive must agree with its
                // state and cell.
                for node in e.nodes() {
                    if let Some(leaf) = &node.leaf {
                        assert_eq!(leaf.archive.len() as u64, leaf.state.n());
                        let vol = node.cell.volume();
                        let mut sum = 0.0;
                        for a in &leaf.archive {
                            assert!(node.cell.contains(&a.x), "sample outside cell");
                            sum += a.f_val * vol;
                        }
                        assert!(
                            (sum - leaf.state.sum_y()).abs() <= 1e-9 * sum.abs().max(1.0),
                            "recomputed weights disagree with state"
                        );
                    }
                }
            }
        }
        assert!(total_splits > 0);
    }

    #[test]
    fn split_preserves_z_hat_for_constant_density() {
        // Split a leaf over a constant density by hand: each child's Ẑ
        // equals the parent's.
        let target = piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![3.0]).unwrap(),
            Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let opts = HiDaiseeOptions::new(SplitPolicy::default(), BoostSpec::ucb(), 1);
        let mut e = HiDaisee::new(target, opts).unwrap();
        for _ in 0..50 {
            e.step().unwrap();
        }
        let parent_z = e.nodes()[ROOT].leaf.as_ref().unwrap().state.z_hat().unwrap();
        e.split_leaf(ROOT).unwrap();
        for &l in &[1usize, 2] {
            let leaf = e.nodes()[l].leaf.as_ref().unwrap();
            if leaf.state.n() > 0 {
                assert!((leaf.state.z_hat().unwrap() - 0.5 * parent_z).abs() < 1e-12);
            }
        }
        let n_sum: u64 = [1usize, 2]
            .iter()
            .map(|&l| e.nodes()[l].leaf.as_ref().unwrap().state.n())
            .sum();
        assert_eq!(n_sum, 50);
        e.check_invariants().unwrap();
    }

    #[test]
    fn traversal_frequencies_match_masses() {
        // Freeze a tree after some adaptation, then check empirical leaf
        // frequencies against the leaf masses.
        let mut e = exp_flat_engine(5, 0.5);
        for _ in 0..3_000 {
            e.step().unwrap();
        }
        let q = e.q();
        let parts = e.partition();
        let k = parts.len();
        assert!(k >= 2);
        let mut counts = vec![0u64; k];
        let trials = 100_000u64;
        let max_depth = e.depth();
        for _ in 0..trials {
            let (leaf, q_leaf, touched) = e.traverse().unwrap();
            assert!(touched <= max_depth + 1);
            let pos = e.leaves.iter().position(|&l| l == leaf).unwrap();
            counts[pos] += 1;
            assert!((q_leaf - q[pos]).abs() < 1e-12);
        }
        for i in 0..k {
            let p = q[i];
            let freq = counts[i] as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-9,
                "leaf {i}: freq {freq} vs mass {p} (se {se})"
            );
        }
    }

    #[test]
    fn first_decision_uses_subtree_mass() {
        // Balanced depth-2 tree with leaf masses (0.1, 0.2, 0.3, 0.4):
        // the root's left probability is 0.3. A constant target never
        // splits on its own, so the structure is forced by hand.
        let target = piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![1.0]).unwrap(),
            Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let opts = HiDaiseeOptions::new(SplitPolicy::default(), BoostSpec::ucb(), 9);
        let mut e = HiDaisee::new(target, opts).unwrap();
        for _ in 0..20 {
            e.step().unwrap();
        }
        e.split_leaf(ROOT).unwrap();
        let (l, r) = (e.nodes()[ROOT].left.unwrap(), e.nodes()[ROOT].right.unwrap());
        e.split_leaf(l).unwrap();
        e.split_leaf(r).unwrap();
        // overwrite leaf masses directly
        let masses = [0.1, 0.2, 0.3, 0.4];
        let leaf_ids: Vec<usize> = e
            .nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.id)
            .collect();
        assert_eq!(leaf_ids.len(), 4);
        for (&id, &m) in leaf_ids.iter().zip(&masses) {
            e.nodes[id].num = m;
        }
        for id in (0..e.nodes.len()).rev() {
            if let (Some(l), Some(r)) = (e.nodes[id].left, e.nodes[id].right) {
                e.nodes[id].num = e.nodes[l].num + e.nodes[r].num;
            }
        }
        let (l, r) = (e.nodes[ROOT].left.unwrap(), e.nodes[ROOT].right.unwrap());
        let q_left = e.nodes[l].num / (e.nodes[l].num + e.nodes[r].num);
        assert!((q_left - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_child_pending_mass() {
        // Constant density on [0,1]; sample only a handful of times so one
        // child may come up empty after a forced split.
        let target = piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![1.0]).unwrap(),
            Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let opts = HiDaiseeOptions::new(SplitPolicy::default(), BoostSpec::ucb(), 2);
        let mut e = HiDaisee::new(target, opts).unwrap();
        e.step().unwrap();
        let parent_num = e.nodes()[ROOT].num;
        e.split_leaf(ROOT).unwrap();
        let mut saw_pending = false;
        for &l in &[1usize, 2] {
            let leaf = e.nodes()[l].leaf.as_ref().unwrap();
            if leaf.state.n() == 0 {
                saw_pending = true;
                assert_eq!(leaf.pending_num, Some(0.5 * parent_num));
                assert_eq!(e.nodes()[l].num, 0.5 * parent_num);
            }
        }
        assert!(saw_pending, "single sample must leave one child empty");
        // The empty child is still reachable and clears its pending state on
        // first pull.
        for _ in 0..200 {
            e.step().unwrap();
        }
        for &l in &[1usize, 2] {
            let leaf = e.nodes()[l].leaf.as_ref().unwrap();
            if !e.nodes()[l].is_leaf() {
                continue;
            }
            assert!(leaf.state.n() > 0);
            assert_eq!(leaf.pending_num, None);
        }
        e.check_invariants().unwrap();
    }

    #[test]
    fn lazy_mode_matches_exact_structure() {
        // Lazy mass maintenance still preserves the aggregation invariant
        // and produces a working sampler.
        let target = builtin_target(&Builtin::ExpFlat).unwrap();
        let mut opts = HiDaiseeOptions::new(SplitPolicy::default(), BoostSpec::ucb(), 13);
        opts.mass_mode = MassMode::Lazy;
        let mut e = HiDaisee::new(target, opts).unwrap();
        for _ in 0..10_000 {
            e.step().unwrap();
        }
        e.check_invariants().unwrap();
        assert!(e.leaf_count() > 1);
        let z = e.z_hat_total();
        assert!((z - 0.2249).abs() < 0.05, "z = {z}");
    }

    #[test]
    fn exp_flat_partition_growth_levels_off() {
        let mut e = exp_flat_engine(17, 0.5);
        let t_total = 50_000u64;
        for _ in 0..t_total {
            e.step().unwrap();
        }
        assert!(
            e.last_split_t() <= (0.8 * t_total as f64) as u64,
            "still splitting at t = {}",
            e.last_split_t()
        );
        let z = e.z_hat_total();
        assert!((z - 0.22494469).abs() < 0.01, "z = {z}");
    }

    #[test]
    fn deterministic_given_seed() {
        let run = |seed| {
            let mut e = exp_flat_engine(seed, 0.5);
            let mut trace = Vec::new();
            for _ in 0..2_000 {
                let s = e.step().unwrap();
                trace.push((s.leaf, s.x.clone(), s.y.to_bits()));
            }
            (trace, e.leaf_count())
        };
        let (a, ka) = run(21);
        let (b, kb) = run(21);
        assert_eq!(a, b);
        assert_eq!(ka, kb);
        let (c, _) = run(22);
        assert_ne!(a, c);
    }

    #[test]
    fn snapshot_serializes() {
        let mut e = exp_flat_engine(1, 0.5);
        for _ in 0..1_000 {
            e.step().unwrap();
        }
        let snap = e.snapshot();
        assert_eq!(snap.t, 1_000);
        let json = serde_json::to_value(&snap).unwrap();
        let leaves = json["leaves"].as_array().unwrap();
        assert_eq!(leaves.len(), e.leaf_count());
        let q_sum: f64 = leaves.iter().map(|l| l["q"].as_f64().unwrap()).sum();
        assert!((q_sum - 1.0).abs() < 1e-10);
        for l in leaves {
            assert!(l["lo"].is_array() && l["hi"].is_array());
            assert!(l["n"].as_u64().unwrap() > 0 || l["ess"].as_f64().is_some());
        }
    }
}
