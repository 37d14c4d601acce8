//! Greedy hill-climbing over DAGs with tree CPDs.
//!
//! Moves are edge additions, deletions and reversals. A move into child `y`
//! is scored by regrowing `y`'s tree with the new allowed-parent set, so the
//! delta of every candidate into `y` depends only on `y`'s current parents
//! and is cached until those change. A reversal `x→y ⇒ y→x` reuses the
//! cached deletion delta at `y` and addition delta at `x`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Role, VarId};
use super::net::{topological_order, BayesNet, TrainingMeta};
use super::tree::{grow_tree, DecisionTreeCPD, Priors};
use super::BnError;

const MIN_IMPROVEMENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_parents: usize,
    /// Perturb-and-climb restarts after the first local optimum.
    pub restarts: usize,
    /// Random edge changes per restart.
    pub perturbation_moves: usize,
    pub allow_reversals: bool,
    /// Variables with the target role never become parents.
    pub targets_are_sinks: bool,
    /// When set, only these variables may receive parents.
    pub learnable_children: Option<Vec<VarId>>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_parents: 8,
            restarts: 3,
            perturbation_moves: 4,
            allow_reversals: true,
            targets_are_sinks: true,
            learnable_children: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Move {
    Add { from: VarId, to: VarId },
    Delete { from: VarId, to: VarId },
    Reverse { from: VarId, to: VarId },
}

struct ChildCache {
    /// Delta of adding each candidate parent (NaN when not applicable).
    add: Vec<f64>,
    /// Delta of deleting each current parent (NaN when not a parent).
    delete: Vec<f64>,
}

struct Searcher<'a> {
    data: &'a Dataset,
    priors: &'a Priors,
    config: &'a SearchConfig,
    learnable: Vec<bool>,
    /// Variable ids in name order, for deterministic tie-breaking.
    by_name: Vec<VarId>,
}

#[derive(Clone)]
struct State {
    parents: Vec<Vec<VarId>>,
    trees: Vec<DecisionTreeCPD>,
}

impl State {
    fn score(&self) -> f64 {
        self.trees.iter().map(|t| t.score).sum()
    }
}

impl<'a> Searcher<'a> {
    fn edge_allowed(&self, from: VarId, to: VarId) -> bool {
        if from == to || !self.learnable[to] {
            return false;
        }
        !(self.config.targets_are_sinks && self.data.schema().var(from).role == Role::Target)
    }

    fn grow(&self, child: VarId, parents: &[VarId]) -> DecisionTreeCPD {
        grow_tree(child, parents, self.data, self.priors)
    }

    fn child_cache(&self, state: &State, y: VarId) -> ChildCache {
        let n = self.data.schema().len();
        let base = state.trees[y].score;
        let mut add = vec![f64::NAN; n];
        let mut delete = vec![f64::NAN; n];
        let current = &state.parents[y];
        if current.len() < self.config.max_parents {
            for x in 0..n {
                if current.contains(&x) || !self.edge_allowed(x, y) {
                    continue;
                }
                let mut ps = current.clone();
                ps.push(x);
                add[x] = self.grow(y, &ps).score - base;
            }
        }
        for &x in current {
            let ps: Vec<VarId> = current.iter().copied().filter(|&p| p != x).collect();
            delete[x] = self.grow(y, &ps).score - base;
        }
        ChildCache { add, delete }
    }

    /// reach[a][b]: b is reachable from a along directed edges.
    fn reachability(parents: &[Vec<VarId>]) -> Vec<Vec<bool>> {
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        (0..n)
            .map(|s| {
                let mut seen = vec![false; n];
                let mut stack = children[s].clone();
                while let Some(v) = stack.pop() {
                    if !seen[v] {
                        seen[v] = true;
                        stack.extend(children[v].iter().copied());
                    }
                }
                seen
            })
            .collect()
    }

    /// Whether `to` is reachable from `from` without the direct edge `from→to`.
    fn reachable_indirectly(parents: &[Vec<VarId>], from: VarId, to: VarId) -> bool {
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                if !(p == from && c == to) {
                    children[p].push(c);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = children[from].clone();
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if !seen[v] {
                seen[v] = true;
                stack.extend(children[v].iter().copied());
            }
        }
        false
    }

    fn best_move(&self, state: &State, caches: &[Option<ChildCache>]) -> Option<(f64, Move)> {
        let reach = Self::reachability(&state.parents);
        let mut best: Option<(f64, Move)> = None;
        let offer = |delta: f64, mv: Move, best: &mut Option<(f64, Move)>| {
            if delta > MIN_IMPROVEMENT && best.map_or(true, |(d, _)| delta > d) {
                *best = Some((delta, mv));
            }
        };
        for &y in &self.by_name {
            let Some(cache) = &caches[y] else { continue };
            for &x in &self.by_name {
                let d = cache.add[x];
                if !d.is_nan() && !reach[y][x] {
                    offer(d, Move::Add { from: x, to: y }, &mut best);
                }
                let d = cache.delete[x];
                if !d.is_nan() {
                    offer(d, Move::Delete { from: x, to: y }, &mut best);
                    if self.config.allow_reversals {
                        if let Some(xc) = &caches[x] {
                            let rev = xc.add[y];
                            if !rev.is_nan() {
                                let total = d + rev;
                                let improves = total > MIN_IMPROVEMENT && best.map_or(true, |(b, _)| total > b);
                                if improves && !Self::reachable_indirectly(&state.parents, x, y) {
                                    offer(total, Move::Reverse { from: x, to: y }, &mut best);
                                }
                            }
                        }
                    }
                }
            }
        }
        best
    }

    /// Regrows `child` with `parents`, then drops parents the tree ignores.
    fn set_parents(&self, state: &mut State, child: VarId, mut parents: Vec<VarId>, prune: bool) {
        let tree = self.grow(child, &parents);
        if prune {
            let used = tree.used_parents();
            parents.retain(|p| used.contains(p));
        }
        parents.sort_unstable();
        state.parents[child] = parents;
        state.trees[child] = tree;
    }

    fn apply(&self, state: &mut State, mv: Move) -> Vec<VarId> {
        match mv {
            Move::Add { from, to } => {
                let mut ps = state.parents[to].clone();
                ps.push(from);
                self.set_parents(state, to, ps, true);
                vec![to]
            }
            Move::Delete { from, to } => {
                let ps = state.parents[to].iter().copied().filter(|&p| p != from).collect();
                self.set_parents(state, to, ps, true);
                vec![to]
            }
            Move::Reverse { from, to } => {
                let ps = state.parents[to].iter().copied().filter(|&p| p != from).collect();
                self.set_parents(state, to, ps, true);
                let mut ps = state.parents[from].clone();
                ps.push(to);
                self.set_parents(state, from, ps, true);
                vec![to, from]
            }
        }
    }

    fn climb(&self, state: &mut State, caches: &mut [Option<ChildCache>]) -> Result<(), BnError> {
        for y in 0..state.parents.len() {
            if self.learnable[y] && caches[y].is_none() {
                caches[y] = Some(self.child_cache(state, y));
            }
        }
        while let Some((delta, mv)) = self.best_move(state, caches) {
            let before = state.score();
            let touched = self.apply(state, mv);
            topological_order(&state.parents)?;
            let after = state.score();
            debug_assert!(
                after - before > MIN_IMPROVEMENT / 2.0,
                "accepted move {mv:?} did not improve ({before} -> {after}, cached {delta})"
            );
            for y in touched {
                caches[y] = Some(self.child_cache(state, y));
            }
        }
        Ok(())
    }

    fn perturb(&self, state: &mut State, rng: &mut ChaCha8Rng) -> Vec<VarId> {
        let n = state.parents.len();
        let mut touched = Vec::new();
        let children: Vec<VarId> = (0..n).filter(|&v| self.learnable[v]).collect();
        if children.is_empty() {
            return touched;
        }
        let mut attempts = 0;
        let mut done = 0;
        while done < self.config.perturbation_moves && attempts < 100 * self.config.perturbation_moves.max(1) {
            attempts += 1;
            let y = *children.choose(rng).expect("nonempty");
            let x = rng.gen_range(0..n);
            if !self.edge_allowed(x, y) {
                continue;
            }
            if let Some(pos) = state.parents[y].iter().position(|&p| p == x) {
                let mut ps = state.parents[y].clone();
                ps.remove(pos);
                self.set_parents(state, y, ps, false);
            } else {
                if state.parents[y].len() >= self.config.max_parents {
                    continue;
                }
                let reach = Self::reachability(&state.parents);
                if reach[y][x] {
                    continue;
                }
                let mut ps = state.parents[y].clone();
                ps.push(x);
                self.set_parents(state, y, ps, false);
            }
            touched.push(y);
            done += 1;
        }
        touched
    }
}

/// Learns a network by greedy hill-climbing from the empty graph, followed by
/// `restarts` perturb-and-climb rounds. The best structure found wins.
pub fn structure_search(data: &Dataset, priors: &Priors, config: &SearchConfig) -> Result<BayesNet, BnError> {
    let schema = data.schema();
    let n = schema.len();
    if n < 2 {
        return Err(BnError::InvalidSchema("structure search needs at least two variables".into()));
    }
    if data.rows() == 0 {
        return Err(BnError::InvalidData("structure search needs data".into()));
    }
    let mut learnable = vec![config.learnable_children.is_none(); n];
    if let Some(children) = &config.learnable_children {
        for &c in children {
            if c >= n {
                return Err(BnError::UnknownVariable(format!("variable index {c}")));
            }
            learnable[c] = true;
        }
    }
    let mut by_name: Vec<VarId> = (0..n).collect();
    by_name.sort_by(|&a, &b| schema.var(a).name.cmp(&schema.var(b).name));
    let searcher = Searcher {
        data,
        priors,
        config,
        learnable,
        by_name,
    };

    let mut state = State {
        parents: vec![Vec::new(); n],
        trees: (0..n).map(|v| searcher.grow(v, &[])).collect(),
    };
    let mut caches: Vec<Option<ChildCache>> = (0..n).map(|_| None).collect();
    searcher.climb(&mut state, &mut caches)?;

    let mut best = state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        let mut trial = best.clone();
        let mut trial_caches: Vec<Option<ChildCache>> = (0..n).map(|_| None).collect();
        let touched = searcher.perturb(&mut trial, &mut rng);
        if touched.is_empty() {
            break;
        }
        searcher.climb(&mut trial, &mut trial_caches)?;
        if trial.score() > best.score() + MIN_IMPROVEMENT {
            best = trial;
        }
    }

    // Drop declared parents that no tree split uses; scores are unchanged.
    for v in 0..n {
        let used = best.trees[v].used_parents();
        best.parents[v].retain(|p| used.contains(p));
    }
    BayesNet::new(
        schema.clone(),
        best.parents,
        best.trees,
        TrainingMeta {
            priors: *priors,
            search: config.clone(),
            rows: data.rows(),
            data_span: None,
        },
    )
}
