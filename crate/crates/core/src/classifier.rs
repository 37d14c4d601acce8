//! Binary classifiers learned as networks whose only learnable child is
//! the label.

use serde::{Deserialize, Serialize};

use crate::bn::{
    query, structure_search, BayesNet, BnError, Dataset, Evidence, InferenceConfig, Posterior, Priors, Role, Schema,
    SearchConfig, Value, Variable,
};

pub const LABEL: &str = "label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub net: Option<BayesNet>,
    /// Probability used when no network could be learned.
    pub constant: Option<f64>,
    /// Set when the training labels were all one class (or absent).
    pub degenerate: bool,
    pub positives: usize,
    pub rows: usize,
}

/// Observation variables with the label appended.
pub fn label_schema(features: &[Variable]) -> Result<Schema, BnError> {
    let mut vars: Vec<Variable> = features
        .iter()
        .map(|v| Variable {
            role: Role::Evidence,
            ..v.clone()
        })
        .collect();
    vars.push(Variable::discrete(LABEL, 2, Role::Target));
    Schema::new(vars)
}

pub fn fit_classifier(
    features: &[Variable],
    rows: &[Vec<Value>],
    labels: &[bool],
    priors: &Priors,
    search: &SearchConfig,
) -> Result<Classifier, BnError> {
    if rows.len() != labels.len() {
        return Err(BnError::InvalidData("one label per row required".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let n = labels.len();
    if positives == 0 || positives == n {
        // Dirichlet-smoothed constant.
        let half = priors.dirichlet_ess / 2.0;
        return Ok(Classifier {
            net: None,
            constant: Some((positives as f64 + half) / (n as f64 + priors.dirichlet_ess)),
            degenerate: true,
            positives,
            rows: n,
        });
    }
    let schema = label_schema(features)?;
    let label = features.len();
    let full: Vec<Vec<Value>> = rows
        .iter()
        .zip(labels)
        .map(|(r, &l)| {
            let mut r = r.clone();
            r.push(Value::State(usize::from(l)));
            r
        })
        .collect();
    let data = Dataset::from_rows(schema, &full)?;
    let cfg = SearchConfig {
        learnable_children: Some(vec![label]),
        ..search.clone()
    };
    Ok(Classifier {
        net: Some(structure_search(&data, priors, &cfg)?),
        constant: None,
        degenerate: false,
        positives,
        rows: n,
    })
}

impl Classifier {
    /// Probability of the positive label given observation values in
    /// feature order.
    pub fn probability(&self, observation: &[Value], config: &InferenceConfig) -> Result<f64, BnError> {
        let Some(net) = &self.net else {
            return Ok(self.constant.unwrap_or(0.5));
        };
        let label = net.schema.len() - 1;
        if observation.len() != label {
            return Err(BnError::InvalidData(format!(
                "{} observation values for {label} features",
                observation.len()
            )));
        }
        let mut ev = Evidence::new(net.schema.len());
        for (id, v) in observation.iter().enumerate() {
            ev.set(id, *v);
        }
        self.probability_given(&ev, config)
    }

    /// Probability of the positive label given any subset of the features.
    pub fn probability_given(&self, evidence: &Evidence, config: &InferenceConfig) -> Result<f64, BnError> {
        let Some(net) = &self.net else {
            return Ok(self.constant.unwrap_or(0.5));
        };
        let label = net.schema.len() - 1;
        match query(net, evidence, label, config)? {
            Posterior::Discrete { probabilities, .. } => Ok(probabilities[1]),
            Posterior::Continuous { .. } => Err(BnError::InvalidModel("label is not discrete".into())),
        }
    }

    /// Features the label's tree actually splits on.
    pub fn used_features(&self) -> Vec<String> {
        let Some(net) = &self.net else { return Vec::new() };
        let label = net.schema.len() - 1;
        net.cpds[label]
            .used_parents()
            .into_iter()
            .map(|p| net.schema.var(p).name.clone())
            .collect()
    }
}
