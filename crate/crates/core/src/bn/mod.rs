//! Bayesian networks with decision-tree CPDs: scoring, structure search,
//! serialization and inference.

pub mod data;
pub mod infer;
pub mod net;
pub mod score;
pub mod search;
pub mod tree;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown variable: {0}")]
    UnknownVariable(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("graph contains a cycle")]
    Cycle,
    #[error("model serialization: {0}")]
    Serialization(String),
    #[error("inference failed: {0}")]
    Inference(String),
}

pub use data::{Column, Dataset, Role, Schema, Standardizer, Value, VarId, VarKind, Variable};
pub use infer::{query, Evidence, InferenceConfig, Method, Posterior};
pub use net::{BayesNet, TrainingMeta, MODEL_SCHEMA_VERSION};
pub use search::{structure_search, SearchConfig};
pub use tree::{grow_tree, DecisionTreeCPD, Leaf, Priors, TreeNode};
