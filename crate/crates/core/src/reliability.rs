//! Per-bottleneck meta-models that predict whether a base forecast will land
//! within tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{BayesNet, BnError, InferenceConfig, Priors, Schema, SearchConfig};
use crate::cases::{observation_values, observation_variables, Case, CaseLibrary, TargetKind};
use crate::classifier::{fit_classifier, Classifier};
use crate::forecast::{outcomes, Forecast, ForecastError, Outcome};

pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.6;

/// A base prediction paired with whether it was within tolerance.
pub type ReliabilityCase = Outcome;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("no cases to label")]
    EmptyCases,
    #[error("no reliability model for bottleneck {0} ({1:?})")]
    Missing(usize, TargetKind),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Bn(#[from] BnError),
}

pub fn label_reliability(
    base: &BayesNet,
    cases: &CaseLibrary,
    tolerance: f64,
    config: &InferenceConfig,
) -> Result<Vec<ReliabilityCase>, ReliabilityError> {
    if cases.is_empty() {
        return Err(ReliabilityError::EmptyCases);
    }
    Ok(outcomes(base, cases, tolerance, config)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub n: usize,
    /// Share of held-out cases whose success label the model predicts.
    pub accuracy: f64,
    /// Share of held-out base predictions that succeeded.
    pub base_success_rate: f64,
    pub flags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEntry {
    pub bottleneck: usize,
    pub kind: TargetKind,
    pub classifier: Classifier,
    pub heldout: Option<HeldOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityModel {
    pub flag_threshold: f64,
    pub tolerance_minutes: f64,
    pub entries: Vec<ReliabilityEntry>,
}

/// Learns one classifier per bottleneck and target kind from labeled
/// validation cases.
pub fn train_reliability(
    validation: &CaseLibrary,
    labels: &[ReliabilityCase],
    tolerance: f64,
    priors: &Priors,
    search: &SearchConfig,
) -> Result<ReliabilityModel, ReliabilityError> {
    if labels.is_empty() {
        return Err(ReliabilityError::EmptyCases);
    }
    let features = observation_variables(validation.schema());
    let mut entries = Vec::new();
    for b in 0..validation.bottleneck_count() {
        for kind in TargetKind::ALL {
            let mine: Vec<&Outcome> = labels.iter().filter(|o| o.bottleneck == b && o.kind == kind).collect();
            let rows: Vec<_> = mine
                .iter()
                .map(|o| observation_values(validation.schema(), &validation.cases[o.case_index]))
                .collect();
            let ys: Vec<bool> = mine.iter().map(|o| o.success).collect();
            entries.push(ReliabilityEntry {
                bottleneck: b,
                kind,
                classifier: fit_classifier(&features, &rows, &ys, priors, search)?,
                heldout: None,
            });
        }
    }
    Ok(ReliabilityModel {
        flag_threshold: DEFAULT_FLAG_THRESHOLD,
        tolerance_minutes: tolerance,
        entries,
    })
}

impl ReliabilityModel {
    pub fn entry(&self, bottleneck: usize, kind: TargetKind) -> Result<&ReliabilityEntry, ReliabilityError> {
        self.entries
            .iter()
            .find(|e| e.bottleneck == bottleneck && e.kind == kind)
            .ok_or(ReliabilityError::Missing(bottleneck, kind))
    }

    pub fn p_success(
        &self,
        schema: &Schema,
        case: &Case,
        bottleneck: usize,
        kind: TargetKind,
        config: &InferenceConfig,
    ) -> Result<f64, ReliabilityError> {
        let obs = observation_values(schema, case);
        Ok(self.entry(bottleneck, kind)?.classifier.probability(&obs, config)?)
    }

    /// Sets the forecast's reliability flag when predicted success falls
    /// below the threshold.
    pub fn annotate(&self, forecast: &mut Forecast, p_success: f64) {
        forecast.reliability_flag = Some(p_success < self.flag_threshold);
    }

    /// Scores every entry against labeled held-out cases.
    pub fn score_heldout(
        &mut self,
        test: &CaseLibrary,
        labels: &[ReliabilityCase],
        config: &InferenceConfig,
    ) -> Result<(), ReliabilityError> {
        let threshold = self.flag_threshold;
        for e in &mut self.entries {
            let mine: Vec<&Outcome> = labels
                .iter()
                .filter(|o| o.bottleneck == e.bottleneck && o.kind == e.kind)
                .collect();
            if mine.is_empty() {
                e.heldout = None;
                continue;
            }
            let (mut right, mut ok, mut flags) = (0usize, 0usize, 0usize);
            for o in &mine {
                let obs = observation_values(test.schema(), &test.cases[o.case_index]);
                let p = e.classifier.probability(&obs, config)?;
                right += usize::from((p >= 0.5) == o.success);
                ok += usize::from(o.success);
                flags += usize::from(p < threshold);
            }
            let n = mine.len();
            e.heldout = Some(HeldOut {
                n,
                accuracy: right as f64 / n as f64,
                base_success_rate: ok as f64 / n as f64,
                flags,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reliability model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
