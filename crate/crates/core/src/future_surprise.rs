//! Forecasting whether a bottleneck will be in a surprising state a fixed
//! lead time ahead, and the FN/FP trade-off of alerting on it.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::bn::{BnError, InferenceConfig, Priors, Role, Schema, SearchConfig, Value, Variable};
use crate::cases::{case_schema, observation_values, observation_variables, observe, var_name, CaseConfig, CaseError, Inputs, StreamView};
use crate::classifier::{fit_classifier, Classifier};
use crate::surprise::{bottleneck_states, BucketKey, MarginalModel, SurpriseError};
use crate::time::Minute;

pub const DEFAULT_LEAD_MINUTES: u32 = 30;
pub const DEFAULT_SURPRISE_SAMPLE_MINUTES: u32 = 5;
pub const SURPRISE_NOW: &str = "surprise_now";
/// Target miss rate for the default alerting threshold.
pub const OPERATING_FN: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FutureSurpriseError {
    #[error("lead must be positive")]
    ZeroLead,
    #[error("lead of {lead} minutes leaves no cases in a {span}-minute stream")]
    LeadTooLong { lead: u32, span: Minute },
    #[error("feature at minute {minute} read data from minute {read}")]
    Leakage { minute: Minute, read: Minute },
    #[error("bottleneck {0} has no surprises among the evaluated cases")]
    NoSurprises(usize),
    #[error("bottleneck {0} has no non-surprise cases to evaluate")]
    NoNegatives(usize),
    #[error("bottleneck {0} is not in the model")]
    UnknownBottleneck(usize),
    #[error("need at least two cases to split, got {0}")]
    TooFewCases(usize),
    #[error(transparent)]
    Surprise(#[from] SurpriseError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Bn(#[from] BnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurpriseCaseConfig {
    pub lead_minutes: u32,
    pub sample_interval_minutes: u32,
    pub case: CaseConfig,
}

impl Default for SurpriseCaseConfig {
    fn default() -> Self {
        SurpriseCaseConfig {
            lead_minutes: DEFAULT_LEAD_MINUTES,
            sample_interval_minutes: DEFAULT_SURPRISE_SAMPLE_MINUTES,
            case: CaseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureSurpriseCase {
    pub minute: Minute,
    pub timestamp: DateTime<Utc>,
    /// Values for [`SurpriseLibrary::features`].
    pub observation: Vec<Value>,
    pub surprise_now: Vec<bool>,
    pub label_minute: Minute,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurpriseLibrary {
    pub features: Vec<Variable>,
    pub cases: Vec<FutureSurpriseCase>,
    pub bottleneck_count: usize,
    pub config: SurpriseCaseConfig,
}

/// Case observation variables followed by one current-surprise flag per
/// bottleneck.
pub fn surprise_features(bottleneck_cells: &[usize]) -> Vec<Variable> {
    let mut vars = observation_variables(&case_schema(bottleneck_cells));
    vars.extend((0..bottleneck_cells.len()).map(|b| Variable::discrete(var_name(b, SURPRISE_NOW), 2, Role::Evidence)));
    vars
}

/// Observation at `t` with current surprise flags, reading speeds only up to
/// `t`.
pub fn observe_surprise(
    inputs: &Inputs,
    schema: &Schema,
    marginal: &MarginalModel,
    t: Minute,
    cfg: &CaseConfig,
) -> Result<(Vec<Value>, Vec<bool>), FutureSurpriseError> {
    let view = StreamView::new(inputs.stream, t);
    let case = observe(inputs, &view, t, cfg)?;
    if let Some(read) = view.high_water().filter(|&h| h > t) {
        return Err(FutureSurpriseError::Leakage { minute: t, read });
    }
    if view.violations() > 0 {
        return Err(FutureSurpriseError::Leakage { minute: t, read: t + 1 });
    }
    let cal = inputs.stream.calendar();
    let key = BucketKey::at(cal, inputs.context, t)?;
    let mut values = observation_values(schema, &case);
    let mut now = Vec::with_capacity(case.bottlenecks.len());
    for (b, bc) in case.bottlenecks.iter().enumerate() {
        let jammed = bc.features.currently_jammed;
        let tag = marginal.surprise_now(b, cal, t, key, jammed, marginal.threshold)?;
        now.push(tag.is_some());
        values.push(Value::State(usize::from(tag.is_some())));
    }
    Ok((values, now))
}

/// Outcome of re-observing case minutes through a guarded stream view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub checked: usize,
    /// Cases whose features read a minute after the case timestamp.
    pub violations: usize,
}

pub fn audit_leakage(inputs: &Inputs, cfg: &CaseConfig, minutes: &[Minute]) -> Result<LeakageAudit, FutureSurpriseError> {
    let mut violations = 0;
    for &t in minutes {
        let view = StreamView::new(inputs.stream, t);
        observe(inputs, &view, t, cfg)?;
        let late = view.high_water().is_some_and(|h| h > t);
        violations += usize::from(late || view.violations() > 0);
    }
    Ok(LeakageAudit {
        checked: minutes.len(),
        violations,
    })
}

/// Whether each bottleneck is surprising at `m`, judged from the full
/// stream.
pub fn surprise_labels(inputs: &Inputs, marginal: &MarginalModel, m: Minute) -> Result<Vec<bool>, FutureSurpriseError> {
    let cal = inputs.stream.calendar();
    let key = BucketKey::at(cal, inputs.context, m)?;
    bottleneck_states(inputs.stream, inputs.bottlenecks, m)
        .into_iter()
        .enumerate()
        .map(|(b, jammed)| Ok(marginal.surprise_now(b, cal, m, key, jammed, marginal.threshold)?.is_some()))
        .collect()
}

pub fn build_surprise_cases(
    inputs: &Inputs,
    marginal: &MarginalModel,
    cfg: &SurpriseCaseConfig,
) -> Result<SurpriseLibrary, FutureSurpriseError> {
    inputs.check_aligned()?;
    if cfg.lead_minutes == 0 {
        return Err(FutureSurpriseError::ZeroLead);
    }
    if cfg.sample_interval_minutes == 0 {
        return Err(CaseError::Format("sample interval must be positive".into()).into());
    }
    if marginal.bottleneck_count() != inputs.bottlenecks.len() {
        return Err(SurpriseError::Format(format!(
            "marginal model covers {} bottlenecks, not {}",
            marginal.bottleneck_count(),
            inputs.bottlenecks.len()
        ))
        .into());
    }
    let span = inputs.stream.minutes();
    let step = cfg.sample_interval_minutes;
    let first = cfg.case.features.horizon_minutes.max(1).div_ceil(step) * step;
    if first + cfg.lead_minutes >= span {
        return Err(FutureSurpriseError::LeadTooLong {
            lead: cfg.lead_minutes,
            span,
        });
    }
    let cal = inputs.stream.calendar();
    let cells: Vec<usize> = inputs.bottlenecks.bottlenecks.iter().map(|b| b.cells.len()).collect();
    let schema = case_schema(&cells);
    let mut cases = Vec::new();
    let mut t = first;
    while t + cfg.lead_minutes < span {
        let (observation, surprise_now) = observe_surprise(inputs, &schema, marginal, t, &cfg.case)?;
        let label_minute = t + cfg.lead_minutes;
        cases.push(FutureSurpriseCase {
            minute: t,
            timestamp: DateTime::<Utc>::from_naive_utc_and_offset(cal.datetime(t), Utc),
            observation,
            surprise_now,
            label_minute,
            labels: surprise_labels(inputs, marginal, label_minute)?,
        });
        t += step;
    }
    Ok(SurpriseLibrary {
        features: surprise_features(&cells),
        cases,
        bottleneck_count: cells.len(),
        config: *cfg,
    })
}

impl SurpriseLibrary {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// First `ceil(n * train_fraction)` cases and the rest.
    pub fn split_sequential(&self, train_fraction: f64) -> Result<(SurpriseLibrary, SurpriseLibrary), FutureSurpriseError> {
        let n = self.len();
        if n < 2 {
            return Err(FutureSurpriseError::TooFewCases(n));
        }
        let k = (n as f64 * train_fraction).ceil() as usize;
        if !(train_fraction > 0.0 && train_fraction < 1.0) || k >= n {
            return Err(CaseError::Fraction(train_fraction).into());
        }
        let part = |cases: &[FutureSurpriseCase]| SurpriseLibrary {
            cases: cases.to_vec(),
            features: self.features.clone(),
            bottleneck_count: self.bottleneck_count,
            config: self.config,
        };
        Ok((part(&self.cases[..k]), part(&self.cases[k..])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureSurpriseEntry {
    pub bottleneck: usize,
    pub classifier: Classifier,
    /// Alert threshold chosen on held-out cases, when they had surprises.
    pub operating_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureSurpriseModel {
    pub lead_minutes: u32,
    pub features: Vec<Variable>,
    pub entries: Vec<FutureSurpriseEntry>,
}

/// One classifier per bottleneck over every case in `train`.
pub fn train_future_surprise(
    train: &SurpriseLibrary,
    priors: &Priors,
    search: &SearchConfig,
) -> Result<FutureSurpriseModel, FutureSurpriseError> {
    let rows: Vec<Vec<Value>> = train.cases.iter().map(|c| c.observation.clone()).collect();
    let entries = (0..train.bottleneck_count)
        .map(|b| {
            let ys: Vec<bool> = train.cases.iter().map(|c| c.labels[b]).collect();
            Ok(FutureSurpriseEntry {
                bottleneck: b,
                classifier: fit_classifier(&train.features, &rows, &ys, priors, search)?,
                operating_threshold: None,
            })
        })
        .collect::<Result<_, FutureSurpriseError>>()?;
    Ok(FutureSurpriseModel {
        lead_minutes: train.config.lead_minutes,
        features: train.features.clone(),
        entries,
    })
}

impl FutureSurpriseModel {
    pub fn entry(&self, bottleneck: usize) -> Result<&FutureSurpriseEntry, FutureSurpriseError> {
        self.entries
            .get(bottleneck)
            .ok_or(FutureSurpriseError::UnknownBottleneck(bottleneck))
    }

    pub fn probability(&self, bottleneck: usize, observation: &[Value], config: &InferenceConfig) -> Result<f64, FutureSurpriseError> {
        Ok(self.entry(bottleneck)?.classifier.probability(observation, config)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("future-surprise model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnFpPoint {
    pub threshold: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnFpCurve {
    pub bottleneck: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Ordered by increasing threshold.
    pub points: Vec<FnFpPoint>,
}

/// Sweeps the alert threshold over scored cases: an alert fires when the
/// predicted probability exceeds the threshold.
pub fn sweep(bottleneck: usize, scored: &[(f64, bool)]) -> Result<FnFpCurve, FutureSurpriseError> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 {
        return Err(FutureSurpriseError::NoSurprises(bottleneck));
    }
    if negatives == 0 {
        return Err(FutureSurpriseError::NoNegatives(bottleneck));
    }
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).filter(|p| *p > 0.0 && *p < 1.0).collect();
    thresholds.extend([0.0, 1.0]);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut by_p: Vec<(f64, bool)> = scored.to_vec();
    by_p.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Walk thresholds from high to low, admitting cases whose p exceeds it.
    let (mut tp, mut fp, mut i) = (0usize, 0usize, 0usize);
    let mut points = Vec::with_capacity(thresholds.len());
    for &thr in thresholds.iter().rev() {
        while i < by_p.len() && by_p[i].0 > thr {
            if by_p[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(FnFpPoint {
            threshold: thr,
            fn_rate: (positives - tp) as f64 / positives as f64,
            fp_rate: fp as f64 / negatives as f64,
        });
    }
    points.reverse();
    Ok(FnFpCurve {
        bottleneck,
        positives,
        negatives,
        points,
    })
}

/// Held-out curve for one bottleneck, leaving out cases where it is
/// surprising already.
pub fn fnfp_curve(
    model: &FutureSurpriseModel,
    bottleneck: usize,
    test: &SurpriseLibrary,
    config: &InferenceConfig,
) -> Result<FnFpCurve, FutureSurpriseError> {
    let scored = test
        .cases
        .iter()
        .filter(|c| !c.surprise_now[bottleneck])
        .map(|c| Ok((model.probability(bottleneck, &c.observation, config)?, c.labels[bottleneck])))
        .collect::<Result<Vec<_>, FutureSurpriseError>>()?;
    sweep(bottleneck, &scored)
}

impl FnFpCurve {
    /// The point with the fewest false alerts among those missing at most
    /// `max_fn` of surprises.
    pub fn operating_point(&self, max_fn: f64) -> Option<FnFpPoint> {
        self.points
            .iter()
            .filter(|p| p.fn_rate <= max_fn)
            .min_by(|a, b| a.fp_rate.total_cmp(&b.fp_rate).then(b.threshold.total_cmp(&a.threshold)))
            .copied()
    }

    /// FN never rises as FP grows along the sweep.
    pub fn is_monotone(&self) -> bool {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.fp_rate.total_cmp(&b.fp_rate).then(b.fn_rate.total_cmp(&a.fn_rate)));
        pts.windows(2).all(|w| w[1].fn_rate <= w[0].fn_rate)
    }
}

pub fn write_fnfp_csv<W: Write>(mut w: W, curves: &[FnFpCurve]) -> std::io::Result<()> {
    writeln!(w, "bottleneck,threshold,fn,fp")?;
    for c in curves {
        for p in &c.points {
            writeln!(w, "{},{:.6},{:.6},{:.6}", c.bottleneck, p.threshold, p.fn_rate, p.fp_rate)?;
        }
    }
    w.flush()
}
