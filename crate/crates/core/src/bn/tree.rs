//! Decision-tree CPDs and greedy top-down tree growth.
//!
//! A discrete target gets multinomial leaves; a continuous target gets
//! binary-Gaussian leaves (presence probability plus a Gaussian over the
//! present values). Discrete parents split fully on their states. Continuous
//! parents split on a binary predicate: either presence, or `value > t` with
//! `t` taken from the deciles of the present values reaching the node.
//! Absent values always fall on the low side.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::data::{Column, Dataset, Standardizer, Value, VarId, VarKind};
use super::score::{
    binary_gaussian_log_ml, multinomial_log_ml, BinaryGaussianStats, NigPrior,
};

/// Splits must improve the score by more than this.
const MIN_GAIN: f64 = 1e-9;

/// Prior hyperparameters shared by every leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Total Dirichlet pseudo-count of a multinomial leaf.
    pub dirichlet_ess: f64,
    /// Total Beta pseudo-count of the presence term (2.0 is Beta(1,1)).
    pub presence_ess: f64,
    /// Prior over standardized present values.
    pub nig: NigPrior<f64>,
    /// Uniform prior over split choices: a split costs ln V for picking one
    /// of the V other variables, plus ln C for picking one of that
    /// variable's C candidate cuts at the node.
    #[serde(default = "yes")]
    pub split_choice_prior: bool,
}

fn yes() -> bool {
    true
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            dirichlet_ess: 1.0,
            presence_ess: 2.0,
            nig: NigPrior::standard(),
            split_choice_prior: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLeaf {
    pub counts: Vec<f64>,
    /// Counts plus the per-state Dirichlet pseudo-count.
    pub pseudo_counts: Vec<f64>,
}

impl MultinomialLeaf {
    pub fn new(counts: Vec<f64>, ess: f64) -> Self {
        let a = ess / counts.len() as f64;
        let pseudo_counts = counts.iter().map(|c| c + a).collect();
        MultinomialLeaf {
            counts,
            pseudo_counts,
        }
    }

    pub fn distribution(&self) -> Vec<f64> {
        let total: f64 = self.pseudo_counts.iter().sum();
        self.pseudo_counts.iter().map(|c| c / total).collect()
    }

    pub fn probability(&self, state: usize) -> f64 {
        let total: f64 = self.pseudo_counts.iter().sum();
        self.pseudo_counts.get(state).map_or(0.0, |c| c / total)
    }
}

/// Presence probability plus a posterior over standardized present values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryGaussianLeaf {
    pub present: f64,
    pub absent: f64,
    /// Beta pseudo-counts for (present, absent).
    pub presence_pseudo: [f64; 2],
    /// Normal–Inverse-Gamma posterior in standardized units.
    pub posterior: NigPrior<f64>,
}

impl BinaryGaussianLeaf {
    pub fn new(stats: &BinaryGaussianStats<f64>, priors: &Priors) -> Self {
        let a = priors.presence_ess / 2.0;
        BinaryGaussianLeaf {
            present: stats.present.n,
            absent: stats.absent,
            presence_pseudo: [stats.present.n + a, stats.absent + a],
            posterior: priors.nig.posterior(&stats.present),
        }
    }

    pub fn p_present(&self) -> f64 {
        self.presence_pseudo[0] / (self.presence_pseudo[0] + self.presence_pseudo[1])
    }

    /// Predictive mean and standard deviation in raw units.
    pub fn moments(&self, standardizer: &Standardizer) -> (f64, f64) {
        let mean = standardizer.inverse(self.posterior.mu);
        let std = self.posterior.predictive_variance().sqrt() * standardizer.std;
        (mean, std)
    }

    /// Likelihood of an observed raw value (density for present values).
    pub fn likelihood(&self, value: Option<f64>, standardizer: &Standardizer) -> f64 {
        match value {
            None => 1.0 - self.p_present(),
            Some(x) => {
                let z = standardizer.forward(x);
                self.p_present() * self.posterior.predictive_ln_pdf(z).exp() / standardizer.std
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Leaf {
    Multinomial(MultinomialLeaf),
    BinaryGaussian(BinaryGaussianLeaf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum TreeNode {
    Leaf {
        leaf: Leaf,
        score: f64,
    },
    /// One child per state of a discrete parent.
    Discrete {
        var: VarId,
        children: Vec<TreeNode>,
    },
    /// `high` receives present values above `threshold` (or every present
    /// value when `threshold` is `None`); everything else goes `low`.
    Threshold {
        var: VarId,
        threshold: Option<f64>,
        low: Box<TreeNode>,
        high: Box<TreeNode>,
    },
}

impl TreeNode {
    fn route_high(threshold: Option<f64>, x: f64) -> bool {
        !x.is_nan() && threshold.map_or(true, |t| x > t)
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        out.push(self);
        match self {
            TreeNode::Leaf { .. } => {}
            TreeNode::Discrete { children, .. } => children.iter().for_each(|c| c.visit(out)),
            TreeNode::Threshold { low, high, .. } => {
                low.visit(out);
                high.visit(out);
            }
        }
    }
}

/// A CPD for one variable, stored as a decision tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeCPD {
    pub target: VarId,
    pub root: TreeNode,
    /// Sum of leaf log marginal likelihoods plus `structure_log_prior`.
    pub score: f64,
    #[serde(default)]
    pub structure_log_prior: f64,
    /// Present only for continuous targets.
    pub standardizer: Option<Standardizer>,
}

impl DecisionTreeCPD {
    /// Follows the tree using `lookup`; returns the first unobserved
    /// split variable when the path cannot be completed.
    pub fn leaf_for(&self, lookup: impl Fn(VarId) -> Option<Value>) -> Result<&Leaf, VarId> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { leaf, .. } => return Ok(leaf),
                TreeNode::Discrete { var, children } => match lookup(*var) {
                    Some(Value::State(s)) if s < children.len() => node = &children[s],
                    _ => return Err(*var),
                },
                TreeNode::Threshold {
                    var,
                    threshold,
                    low,
                    high,
                } => match lookup(*var) {
                    Some(v @ (Value::Present(_) | Value::Absent)) => {
                        node = if TreeNode::route_high(*threshold, v.as_raw()) {
                            high
                        } else {
                            low
                        };
                    }
                    _ => return Err(*var),
                },
            }
        }
    }

    /// Variables tested anywhere in the tree.
    pub fn used_parents(&self) -> BTreeSet<VarId> {
        self.nodes()
            .into_iter()
            .filter_map(|n| match n {
                TreeNode::Discrete { var, .. } | TreeNode::Threshold { var, .. } => Some(*var),
                TreeNode::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn nodes(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.root.visit(&mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes()
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Sum of leaf scores alone.
    pub fn leaf_score_sum(&self) -> f64 {
        self.nodes()
            .iter()
            .map(|n| match n {
                TreeNode::Leaf { score, .. } => *score,
                _ => 0.0,
            })
            .sum()
    }
}

enum TargetData<'a> {
    Discrete { codes: &'a [u16], arity: usize },
    Continuous { z: &'a [f64] },
}

#[derive(Clone)]
enum Acc {
    Counts(Vec<f64>),
    Bg(BinaryGaussianStats<f64>),
}

impl Acc {
    fn minus(&self, other: &Acc) -> Acc {
        match (self, other) {
            (Acc::Counts(a), Acc::Counts(b)) => {
                Acc::Counts(a.iter().zip(b).map(|(x, y)| x - y).collect())
            }
            (Acc::Bg(a), Acc::Bg(b)) => Acc::Bg(*a - *b),
            _ => unreachable!("accumulators share the target kind"),
        }
    }

    fn score(&self, priors: &Priors) -> f64 {
        match self {
            Acc::Counts(c) => multinomial_log_ml(c, priors.dirichlet_ess),
            Acc::Bg(s) => binary_gaussian_log_ml(s, priors.presence_ess, &priors.nig),
        }
    }

    fn leaf(&self, priors: &Priors) -> Leaf {
        match self {
            Acc::Counts(c) => Leaf::Multinomial(MultinomialLeaf::new(c.clone(), priors.dirichlet_ess)),
            Acc::Bg(s) => Leaf::BinaryGaussian(BinaryGaussianLeaf::new(s, priors)),
        }
    }
}

enum SplitChoice {
    Discrete { var: VarId },
    Threshold { var: VarId, threshold: Option<f64> },
}

struct Grower<'a> {
    data: &'a Dataset,
    target: TargetData<'a>,
    priors: &'a Priors,
    /// Allowed parents in lexicographic name order.
    parents: Vec<VarId>,
    /// Continuous parents, in the order their sorted lists are carried.
    continuous: Vec<VarId>,
    /// ln of the number of variables a split could test.
    choose_var: f64,
    log_prior: std::cell::Cell<f64>,
}

impl<'a> Grower<'a> {
    fn empty_acc(&self) -> Acc {
        match self.target {
            TargetData::Discrete { arity, .. } => Acc::Counts(vec![0.0; arity]),
            TargetData::Continuous { .. } => Acc::Bg(BinaryGaussianStats::default()),
        }
    }

    #[inline]
    fn add(&self, acc: &mut Acc, row: u32) {
        match (&self.target, acc) {
            (TargetData::Discrete { codes, .. }, Acc::Counts(c)) => c[codes[row as usize] as usize] += 1.0,
            (TargetData::Continuous { z }, Acc::Bg(s)) => {
                let x = z[row as usize];
                if x.is_nan() {
                    s.absent += 1.0;
                } else {
                    s.present.push(x);
                }
            }
            _ => unreachable!("accumulators share the target kind"),
        }
    }

    fn acc_of(&self, rows: &[u32]) -> Acc {
        let mut acc = self.empty_acc();
        for &r in rows {
            self.add(&mut acc, r);
        }
        acc
    }

    fn build(&self, rows: Vec<u32>, sorted: Vec<Vec<u32>>, used_discrete: &mut Vec<VarId>) -> TreeNode {
        let total = self.acc_of(&rows);
        let node_score = total.score(self.priors);
        let mut best: Option<(f64, f64, SplitChoice)> = None;
        let prior = self.priors.split_choice_prior;
        let consider = |gain: f64, cost: f64, choice: SplitChoice, best: &mut Option<(f64, f64, SplitChoice)>| {
            let cost = if prior { cost } else { 0.0 };
            if gain - cost > MIN_GAIN && best.as_ref().map_or(true, |(g, c, _)| gain - cost > g - c) {
                *best = Some((gain, cost, choice));
            }
        };

        for &var in &self.parents {
            match self.data.column(var) {
                Column::Discrete(codes) => {
                    if used_discrete.contains(&var) {
                        continue;
                    }
                    let arity = self.data.schema().var(var).arity().unwrap_or(2);
                    let mut accs = vec![self.empty_acc(); arity];
                    for &r in &rows {
                        self.add(&mut accs[codes[r as usize] as usize], r);
                    }
                    let s: f64 = accs.iter().map(|a| a.score(self.priors)).sum();
                    consider(s - node_score, self.choose_var, SplitChoice::Discrete { var }, &mut best);
                }
                Column::Continuous(values) => {
                    let k = self.continuous.iter().position(|&c| c == var).expect("continuous parent tracked");
                    let list = &sorted[k];
                    let cuts = candidate_cuts(list, values);
                    if cuts.is_empty() {
                        continue;
                    }
                    let cost = self.choose_var + (cuts.len() as f64).ln();
                    let mut left = self.empty_acc();
                    let mut pos = 0usize;
                    for (cut, threshold) in cuts {
                        while pos < cut {
                            self.add(&mut left, list[pos]);
                            pos += 1;
                        }
                        let right = total.minus(&left);
                        let s = left.score(self.priors) + right.score(self.priors);
                        consider(s - node_score, cost, SplitChoice::Threshold { var, threshold }, &mut best);
                    }
                }
            }
        }

        let Some((_, cost, choice)) = best else {
            return TreeNode::Leaf {
                leaf: total.leaf(self.priors),
                score: node_score,
            };
        };
        self.log_prior.set(self.log_prior.get() - cost);

        match choice {
            SplitChoice::Discrete { var } => {
                let Column::Discrete(codes) = self.data.column(var) else {
                    unreachable!()
                };
                let arity = self.data.schema().var(var).arity().unwrap_or(2);
                let mut child_rows = vec![Vec::new(); arity];
                for &r in &rows {
                    child_rows[codes[r as usize] as usize].push(r);
                }
                let mut child_sorted: Vec<Vec<Vec<u32>>> = vec![Vec::with_capacity(sorted.len()); arity];
                for list in &sorted {
                    let mut parts = vec![Vec::new(); arity];
                    for &r in list {
                        parts[codes[r as usize] as usize].push(r);
                    }
                    for (c, p) in parts.into_iter().enumerate() {
                        child_sorted[c].push(p);
                    }
                }
                drop(rows);
                drop(sorted);
                used_discrete.push(var);
                let children = child_rows
                    .into_iter()
                    .zip(child_sorted)
                    .map(|(r, s)| self.build(r, s, used_discrete))
                    .collect();
                used_discrete.pop();
                TreeNode::Discrete { var, children }
            }
            SplitChoice::Threshold { var, threshold } => {
                let Column::Continuous(values) = self.data.column(var) else {
                    unreachable!()
                };
                let high = |r: u32| TreeNode::route_high(threshold, values[r as usize]);
                let (hi_rows, lo_rows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| high(r));
                let mut lo_sorted = Vec::with_capacity(sorted.len());
                let mut hi_sorted = Vec::with_capacity(sorted.len());
                for list in &sorted {
                    let (h, l): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&r| high(r));
                    lo_sorted.push(l);
                    hi_sorted.push(h);
                }
                drop(rows);
                drop(sorted);
                let low = self.build(lo_rows, lo_sorted, used_discrete);
                let high = self.build(hi_rows, hi_sorted, used_discrete);
                TreeNode::Threshold {
                    var,
                    threshold,
                    low: Box::new(low),
                    high: Box::new(high),
                }
            }
        }
    }
}

/// Split positions into a sorted row list (absent rows first): the presence
/// cut, then one cut per distinct decile of the present values. Each entry is
/// `(rows on the low side, threshold)`.
fn candidate_cuts(list: &[u32], values: &[f64]) -> Vec<(usize, Option<f64>)> {
    let m = list.len();
    let absent = list.partition_point(|&r| values[r as usize].is_nan());
    let present = m - absent;
    let mut cuts = Vec::with_capacity(10);
    if absent > 0 && present > 0 {
        cuts.push((absent, None));
    }
    if present < 2 {
        return cuts;
    }
    let tail = &list[absent..];
    let mut last_cut = absent;
    for k in 1..10 {
        let q = values[tail[k * present / 10] as usize];
        let cut = absent + tail.partition_point(|&r| values[r as usize] <= q);
        if cut > last_cut && cut < m {
            cuts.push((cut, Some(q)));
            last_cut = cut;
        }
    }
    cuts
}

/// Greedy top-down growth of the CPD tree for `target`, splitting only on
/// `allowed_parents`. Each leaf takes the split with the largest positive
/// score gain; ties go to the lexicographically smaller (name, threshold).
pub fn grow_tree(target: VarId, allowed_parents: &[VarId], data: &Dataset, priors: &Priors) -> DecisionTreeCPD {
    let schema = data.schema();
    let target_data = match (schema.var(target).kind, data.column(target)) {
        (VarKind::Discrete { arity }, Column::Discrete(codes)) => TargetData::Discrete { codes, arity },
        (VarKind::Continuous, Column::Continuous(_)) => TargetData::Continuous {
            z: data.standardized(target).expect("continuous column is standardized"),
        },
        _ => unreachable!("dataset validated column kinds"),
    };
    let mut parents: Vec<VarId> = allowed_parents
        .iter()
        .copied()
        .filter(|&p| p != target)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    parents.sort_by(|&a, &b| schema.var(a).name.cmp(&schema.var(b).name));
    let continuous: Vec<VarId> = parents
        .iter()
        .copied()
        .filter(|&p| schema.var(p).is_continuous())
        .collect();
    let grower = Grower {
        data,
        target: target_data,
        priors,
        parents,
        continuous,
        choose_var: (schema.len().saturating_sub(1).max(1) as f64).ln(),
        log_prior: std::cell::Cell::new(0.0),
    };
    let rows: Vec<u32> = (0..data.rows() as u32).collect();
    let sorted = grower
        .continuous
        .iter()
        .map(|&p| data.sorted_rows(p).expect("continuous parent presorted").to_vec())
        .collect();
    let root = grower.build(rows, sorted, &mut Vec::new());
    let structure_log_prior = grower.log_prior.get();
    let mut cpd = DecisionTreeCPD {
        target,
        root,
        score: 0.0,
        structure_log_prior,
        standardizer: data.standardizer(target),
    };
    cpd.score = cpd.leaf_score_sum() + structure_log_prior;
    cpd
}
