//! Traffic jam forecasting with Bayesian networks.

pub mod alerting;
pub mod bn;
pub mod bottleneck;
pub mod cases;
pub mod classifier;
pub mod forecast;
pub mod future_surprise;
pub mod incident;
pub mod reliability;
pub mod sim;
pub mod surprise;
pub mod time;

/// Normal-inverse-gamma prior over standardized values.
pub type NigPrior = bn::score::NigPrior<f64>;
pub type GaussianStats = bn::score::GaussianStats<f64>;
pub type BinaryGaussianStats = bn::score::BinaryGaussianStats<f64>;
