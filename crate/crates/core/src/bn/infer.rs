//! Posterior queries.
//!
//! When the target's tree path is fully observed and no evidence lies below
//! the target, the leaf at the end of that path is the exact posterior.
//! Otherwise the query falls back to likelihood weighting over the
//! ancestors of the target and the evidence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT, WeightedIndex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::data::{Value, VarId};
use super::net::BayesNet;
use super::tree::Leaf;
use super::BnError;

/// Observed values, indexed by variable id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evidence {
    values: Vec<Option<Value>>,
}

impl Evidence {
    pub fn new(len: usize) -> Self {
        Evidence { values: vec![None; len] }
    }

    pub fn set(&mut self, id: VarId, value: Value) {
        self.values[id] = Some(value);
    }

    pub fn clear(&mut self, id: VarId) {
        self.values[id] = None;
    }

    pub fn get(&self, id: VarId) -> Option<Value> {
        self.values.get(id).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(Option::is_none)
    }

    pub fn observed(&self) -> impl Iterator<Item = (VarId, Value)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Likelihood-weighting sample count.
    pub samples: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    LikelihoodWeighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Posterior {
    Discrete {
        probabilities: Vec<f64>,
        method: Method,
    },
    /// `mean` and `std` describe the value given that it is present.
    Continuous {
        p_present: f64,
        mean: f64,
        std: f64,
        method: Method,
    },
}

impl Posterior {
    pub fn method(&self) -> Method {
        match self {
            Posterior::Discrete { method, .. } | Posterior::Continuous { method, .. } => *method,
        }
    }
}

fn leaf_posterior(net: &BayesNet, target: VarId, leaf: &Leaf, method: Method) -> Posterior {
    match leaf {
        Leaf::Multinomial(m) => Posterior::Discrete {
            probabilities: m.distribution(),
            method,
        },
        Leaf::BinaryGaussian(g) => {
            let std = net.cpds[target].standardizer.expect("continuous CPD has a standardizer");
            let (mean, sd) = g.moments(&std);
            Posterior::Continuous {
                p_present: g.p_present(),
                mean,
                std: sd,
                method,
            }
        }
    }
}

fn check_evidence(net: &BayesNet, evidence: &Evidence) -> Result<(), BnError> {
    if evidence.len() != net.schema.len() {
        return Err(BnError::InvalidData(format!(
            "evidence has {} slots, model has {} variables",
            evidence.len(),
            net.schema.len()
        )));
    }
    for (id, v) in evidence.observed() {
        let var = net.schema.var(id);
        if !v.compatible(var) {
            return Err(BnError::TypeMismatch(format!("evidence for {} is {v:?}", var.name)));
        }
    }
    Ok(())
}

fn has_observed_descendant(net: &BayesNet, target: VarId, evidence: &Evidence) -> bool {
    let n = net.schema.len();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in net.parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = children[target].clone();
    while let Some(v) = stack.pop() {
        if evidence.get(v).is_some() {
            return true;
        }
        if !seen[v] {
            seen[v] = true;
            stack.extend(children[v].iter().copied());
        }
    }
    false
}

/// Posterior of `target` given `evidence`. Evidence on the target itself is ignored.
pub fn query(net: &BayesNet, evidence: &Evidence, target: VarId, config: &InferenceConfig) -> Result<Posterior, BnError> {
    check_evidence(net, evidence)?;
    if target >= net.schema.len() {
        return Err(BnError::UnknownVariable(format!("variable index {target}")));
    }
    let mut evidence = evidence.clone();
    evidence.clear(target);
    let below = has_observed_descendant(net, target, &evidence);
    if !below {
        if let Ok(leaf) = net.cpds[target].leaf_for(|v| evidence.get(v)) {
            return Ok(leaf_posterior(net, target, leaf, Method::Exact));
        }
    }
    likelihood_weighting(net, &evidence, target, config, !below)
}

enum Accum {
    Discrete(Vec<f64>),
    /// Weighted sums of p, p*m, p*(s^2+m^2).
    Continuous { w: f64, wp: f64, wpm: f64, wpm2: f64 },
}

fn sample_leaf(leaf: &Leaf, standardizer: Option<&super::data::Standardizer>, rng: &mut ChaCha8Rng) -> Value {
    match leaf {
        Leaf::Multinomial(m) => {
            let dist = WeightedIndex::new(m.distribution()).expect("positive pseudo-counts");
            Value::State(dist.sample(rng))
        }
        Leaf::BinaryGaussian(g) => {
            if !rng.gen_bool(g.p_present().clamp(0.0, 1.0)) {
                return Value::Absent;
            }
            let (loc, scale2, dof) = g.posterior.predictive();
            let t = StudentT::new(dof).expect("positive dof").sample(rng);
            let z = loc + scale2.sqrt() * t;
            Value::Present(standardizer.expect("continuous CPD has a standardizer").inverse(z))
        }
    }
}

fn likelihood_weighting(
    net: &BayesNet,
    evidence: &Evidence,
    target: VarId,
    config: &InferenceConfig,
    rao_blackwell: bool,
) -> Result<Posterior, BnError> {
    if config.samples == 0 {
        return Err(BnError::Inference("sample count must be positive".into()));
    }
    let mut roots: Vec<VarId> = evidence.observed().map(|(v, _)| v).collect();
    roots.push(target);
    let relevant: BTreeSet<VarId> = net.ancestors(&roots);
    let order: Vec<VarId> = net
        .topological_order()?
        .into_iter()
        .filter(|v| relevant.contains(v))
        .collect();
    let continuous = net.schema.var(target).is_continuous();
    let mut acc = if continuous {
        Accum::Continuous {
            w: 0.0,
            wp: 0.0,
            wpm: 0.0,
            wpm2: 0.0,
        }
    } else {
        Accum::Discrete(vec![0.0; net.schema.var(target).arity().unwrap_or(0)])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sample: Vec<Option<Value>> = vec![None; net.schema.len()];
    for _ in 0..config.samples {
        sample.iter_mut().for_each(|s| *s = None);
        let mut weight = 1.0;
        for &v in &order {
            let cpd = &net.cpds[v];
            let leaf = cpd
                .leaf_for(|p| sample[p])
                .map_err(|p| BnError::Inference(format!("parent {p} sampled after child {v}")))?;
            if v == target && rao_blackwell {
                match (&mut acc, leaf) {
                    (Accum::Discrete(sums), Leaf::Multinomial(m)) => {
                        for (s, p) in sums.iter_mut().zip(m.distribution()) {
                            *s += weight * p;
                        }
                    }
                    (Accum::Continuous { w, wp, wpm, wpm2 }, Leaf::BinaryGaussian(g)) => {
                        let (m, s) = g.moments(cpd.standardizer.as_ref().expect("standardizer"));
                        let p = g.p_present();
                        *w += weight;
                        *wp += weight * p;
                        *wpm += weight * p * m;
                        *wpm2 += weight * p * (s * s + m * m);
                    }
                    _ => return Err(BnError::InvalidModel("leaf kind does not match variable".into())),
                }
                continue;
            }
            match evidence.get(v) {
                Some(obs) => {
                    weight *= match leaf {
                        Leaf::Multinomial(m) => match obs {
                            Value::State(s) => m.probability(s),
                            _ => 0.0,
                        },
                        Leaf::BinaryGaussian(g) => {
                            let std = cpd.standardizer.as_ref().expect("standardizer");
                            match obs {
                                Value::Present(x) => g.likelihood(Some(x), std),
                                Value::Absent => g.likelihood(None, std),
                                Value::State(_) => 0.0,
                            }
                        }
                    };
                    sample[v] = Some(obs);
                }
                None => sample[v] = Some(sample_leaf(leaf, cpd.standardizer.as_ref(), &mut rng)),
            }
        }
        if !rao_blackwell {
            match (&mut acc, sample[target]) {
                (Accum::Discrete(sums), Some(Value::State(s))) => sums[s] += weight,
                (Accum::Continuous { w, wp, wpm, wpm2 }, Some(val)) => {
                    *w += weight;
                    if let Value::Present(x) = val {
                        *wp += weight;
                        *wpm += weight * x;
                        *wpm2 += weight * x * x;
                    }
                }
                _ => return Err(BnError::InvalidModel("target sample has the wrong type".into())),
            }
        }
    }
    match acc {
        Accum::Discrete(sums) => {
            let total: f64 = sums.iter().sum();
            if !(total > 0.0) {
                return Err(BnError::Inference("evidence has zero likelihood under the model".into()));
            }
            Ok(Posterior::Discrete {
                probabilities: sums.iter().map(|s| s / total).collect(),
                method: Method::LikelihoodWeighting,
            })
        }
        Accum::Continuous { w, wp, wpm, wpm2 } => {
            if !(w > 0.0) {
                return Err(BnError::Inference("evidence has zero likelihood under the model".into()));
            }
            let (mean, std) = if wp > 0.0 {
                let mean = wpm / wp;
                (mean, (wpm2 / wp - mean * mean).max(0.0).sqrt())
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok(Posterior::Continuous {
                p_present: wp / w,
                mean,
                std,
                method: Method::LikelihoodWeighting,
            })
        }
    }
}
