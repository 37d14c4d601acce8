//! Time-to-event forecasts, the display clamp, and the tolerance-based
//! accuracy protocol.

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::bn::{query, BayesNet, BnError, Evidence, InferenceConfig, Method, Posterior, Role, VarId};
use crate::cases::{target_name, Case, CaseLibrary, TargetKind};

/// Forecasts at or beyond this many minutes show as a full clock.
pub const DISPLAY_CLAMP_MINUTES: f64 = 60.0;
pub const DEFAULT_TOLERANCE_MINUTES: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("{0} is not a continuous variable")]
    NotContinuous(String),
    #[error("no test cases")]
    EmptyTestSet,
    #[error("bottleneck {0} is not in the model")]
    UnknownBottleneck(usize),
    #[error(transparent)]
    Bn(#[from] BnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisplayBucket {
    Minutes { minutes: u32 },
    AtLeastHour,
    /// The event is more likely not to happen within the horizon.
    NoEvent,
}

impl DisplayBucket {
    pub fn from_moments(p_present: f64, mean: f64) -> DisplayBucket {
        if p_present < 0.5 {
            DisplayBucket::NoEvent
        } else if mean >= DISPLAY_CLAMP_MINUTES {
            DisplayBucket::AtLeastHour
        } else {
            DisplayBucket::Minutes {
                minutes: mean.round().clamp(1.0, 59.0) as u32,
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DisplayBucket::Minutes { minutes } => minutes.to_string(),
            DisplayBucket::AtLeastHour => "≥60".into(),
            DisplayBucket::NoEvent => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub target: String,
    pub p_present: f64,
    pub mean_minutes: f64,
    pub std_minutes: f64,
    pub display_bucket: DisplayBucket,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability_flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surprise_flag: Option<bool>,
}

pub fn predict(net: &BayesNet, evidence: &Evidence, target: VarId, config: &InferenceConfig) -> Result<Forecast, ForecastError> {
    let name = net.schema.var(target).name.clone();
    match query(net, evidence, target, config)? {
        Posterior::Continuous {
            p_present,
            mean,
            std,
            method,
        } => Ok(Forecast {
            display_bucket: DisplayBucket::from_moments(p_present, mean),
            target: name,
            p_present,
            mean_minutes: mean,
            std_minutes: std.max(0.0),
            method,
            reliability_flag: None,
            surprise_flag: None,
        }),
        Posterior::Discrete { .. } => Err(ForecastError::NotContinuous(name)),
    }
}

/// Whether a forecast counts as correct given the actual outcome; `None`
/// means the event did not happen within the censoring horizon.
pub fn is_success(forecast_mean: f64, bucket: DisplayBucket, actual: Option<f64>, tolerance: f64) -> bool {
    match bucket {
        DisplayBucket::Minutes { .. } => actual.is_some_and(|a| (forecast_mean - a).abs() <= tolerance),
        DisplayBucket::AtLeastHour | DisplayBucket::NoEvent => actual.map_or(true, |a| a > DISPLAY_CLAMP_MINUTES),
    }
}

impl Forecast {
    pub fn succeeds(&self, actual: Option<f64>, tolerance: f64) -> bool {
        is_success(self.mean_minutes, self.display_bucket, actual, tolerance)
    }
}

/// Evidence from every observed variable of a case.
pub fn case_evidence(net: &BayesNet, case: &Case) -> Evidence {
    let mut ev = Evidence::new(net.schema.len());
    for (id, v) in case.values().into_iter().enumerate() {
        if net.schema.var(id).role == Role::Evidence {
            ev.set(id, v);
        }
    }
    ev
}

/// Whether a case is evaluated for `kind` at a bottleneck: clear forecasts
/// on jammed cases, jam forecasts on open ones.
pub fn applies(case: &Case, bottleneck: usize, kind: TargetKind) -> bool {
    let jammed = case.bottlenecks[bottleneck].features.currently_jammed;
    match kind {
        TargetKind::Clear => jammed,
        TargetKind::Jam => !jammed,
    }
}

pub fn forecast_case(
    net: &BayesNet,
    case: &Case,
    bottleneck: usize,
    kind: TargetKind,
    config: &InferenceConfig,
) -> Result<Forecast, ForecastError> {
    let target = net
        .schema
        .id(&target_name(bottleneck, kind))
        .ok_or(ForecastError::UnknownBottleneck(bottleneck))?;
    predict(net, &case_evidence(net, case), target, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub bottleneck: usize,
    pub clear_acc: Option<f64>,
    pub jam_acc: Option<f64>,
    pub clear_n: usize,
    pub jam_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub tolerance_minutes: f64,
    pub rows: Vec<AccuracyRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl AccuracyTable {
    /// Average over bottlenecks that had cases.
    pub fn mean_clear(&self) -> Option<f64> {
        mean(self.rows.iter().filter_map(|r| r.clear_acc))
    }

    pub fn mean_jam(&self) -> Option<f64> {
        mean(self.rows.iter().filter_map(|r| r.jam_acc))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(w, "bottleneck,clear_acc,jam_acc,clear_n,jam_n")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.bottleneck, f(r.clear_acc), f(r.jam_acc), r.clear_n, r.jam_n)?;
        }
        w.flush()
    }
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub case_index: usize,
    pub bottleneck: usize,
    pub kind: TargetKind,
    pub forecast: Forecast,
    pub actual: Option<f64>,
    pub success: bool,
}

/// Every applicable prediction over `cases`, in case then bottleneck order.
pub fn outcomes(
    net: &BayesNet,
    cases: &CaseLibrary,
    tolerance: f64,
    config: &InferenceConfig,
) -> Result<Vec<Outcome>, ForecastError> {
    let mut out = Vec::new();
    for (i, case) in cases.cases.iter().enumerate() {
        for b in 0..cases.bottleneck_count() {
            for kind in TargetKind::ALL {
                if !applies(case, b, kind) {
                    continue;
                }
                let forecast = forecast_case(net, case, b, kind, config)?;
                let actual = case.bottlenecks[b].target(kind);
                out.push(Outcome {
                    case_index: i,
                    bottleneck: b,
                    kind,
                    success: forecast.succeeds(actual, tolerance),
                    forecast,
                    actual,
                });
            }
        }
    }
    Ok(out)
}

pub fn tabulate(outcomes: &[Outcome], bottlenecks: usize, tolerance: f64) -> AccuracyTable {
    let rows = (0..bottlenecks)
        .map(|b| {
            let rate = |kind: TargetKind| {
                let (ok, n) = outcomes
                    .iter()
                    .filter(|o| o.bottleneck == b && o.kind == kind)
                    .fold((0usize, 0usize), |(ok, n), o| (ok + usize::from(o.success), n + 1));
                ((n > 0).then(|| ok as f64 / n as f64), n)
            };
            let (clear_acc, clear_n) = rate(TargetKind::Clear);
            let (jam_acc, jam_n) = rate(TargetKind::Jam);
            AccuracyRow {
                bottleneck: b,
                clear_acc,
                jam_acc,
                clear_n,
                jam_n,
            }
        })
        .collect();
    AccuracyTable {
        tolerance_minutes: tolerance,
        rows,
    }
}

/// Per-bottleneck success fractions for clearing and jamming forecasts.
pub fn evaluate(net: &BayesNet, test: &CaseLibrary, tolerance: f64, config: &InferenceConfig) -> Result<AccuracyTable, ForecastError> {
    if test.is_empty() {
        return Err(ForecastError::EmptyTestSet);
    }
    let scored = outcomes(net, test, tolerance, config)?;
    Ok(tabulate(&scored, test.bottleneck_count(), tolerance))
}
