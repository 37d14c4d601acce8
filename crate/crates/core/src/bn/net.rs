use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::data::{Schema, VarId};
use super::search::SearchConfig;
use super::tree::{DecisionTreeCPD, Priors};
use super::BnError;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub priors: Priors,
    pub search: SearchConfig,
    pub rows: usize,
    /// Free-form description of the training span.
    pub data_span: Option<String>,
}

/// A DAG over `schema` with one tree CPD per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNet {
    pub schema_version: u32,
    pub schema: Schema,
    /// Sorted parent list per variable.
    pub parents: Vec<Vec<VarId>>,
    pub cpds: Vec<DecisionTreeCPD>,
    pub meta: TrainingMeta,
}

impl BayesNet {
    pub fn new(
        schema: Schema,
        parents: Vec<Vec<VarId>>,
        cpds: Vec<DecisionTreeCPD>,
        meta: TrainingMeta,
    ) -> Result<Self, BnError> {
        let net = BayesNet {
            schema_version: MODEL_SCHEMA_VERSION,
            schema,
            parents,
            cpds,
            meta,
        };
        net.validate()?;
        Ok(net)
    }

    /// Sum of per-variable CPD scores.
    pub fn score(&self) -> f64 {
        self.cpds.iter().map(|c| c.score).sum()
    }

    pub fn edges(&self) -> Vec<(VarId, VarId)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(child, ps)| ps.iter().map(move |&p| (p, child)))
            .collect()
    }

    /// Undirected edge set, each pair ordered `(min, max)`.
    pub fn skeleton(&self) -> BTreeSet<(VarId, VarId)> {
        self.edges()
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    pub fn topological_order(&self) -> Result<Vec<VarId>, BnError> {
        topological_order(&self.parents)
    }

    /// Every ancestor of `vars`, including `vars` themselves.
    pub fn ancestors(&self, vars: &[VarId]) -> BTreeSet<VarId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<VarId> = vars.to_vec();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.parents[v].iter().copied());
            }
        }
        seen
    }

    pub fn validate(&self) -> Result<(), BnError> {
        let n = self.schema.len();
        if self.parents.len() != n || self.cpds.len() != n {
            return Err(BnError::InvalidModel("parent or CPD list length mismatch".into()));
        }
        for (id, cpd) in self.cpds.iter().enumerate() {
            if cpd.target != id {
                return Err(BnError::InvalidModel(format!("CPD {id} targets {}", cpd.target)));
            }
            let declared: BTreeSet<VarId> = self.parents[id].iter().copied().collect();
            if declared.iter().any(|&p| p >= n || p == id) {
                return Err(BnError::InvalidModel(format!("bad parent of {}", self.schema.var(id).name)));
            }
            if !cpd.used_parents().is_subset(&declared) {
                return Err(BnError::InvalidModel(format!(
                    "CPD of {} splits on a non-parent",
                    self.schema.var(id).name
                )));
            }
            if self.schema.var(id).is_continuous() != cpd.standardizer.is_some() {
                return Err(BnError::InvalidModel(format!(
                    "CPD of {} has mismatched leaf kind",
                    self.schema.var(id).name
                )));
            }
        }
        self.topological_order().map(|_| ())
    }

    pub fn to_json(&self) -> Result<String, BnError> {
        serde_json::to_string_pretty(self).map_err(|e| BnError::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, BnError> {
        let net: BayesNet = serde_json::from_str(s).map_err(|e| BnError::Serialization(e.to_string()))?;
        if net.schema_version != MODEL_SCHEMA_VERSION {
            return Err(BnError::Serialization(format!(
                "unsupported model schema_version {}",
                net.schema_version
            )));
        }
        net.validate()?;
        Ok(net)
    }
}

/// Kahn's algorithm; ties resolved by index for a stable order.
pub(crate) fn topological_order(parents: &[Vec<VarId>]) -> Result<Vec<VarId>, BnError> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: BTreeSet<VarId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(BnError::Cycle)
    }
}
