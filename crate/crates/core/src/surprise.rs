//! Marginal user model of typical bottleneck states and current-surprise
//! tags.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bottleneck::BottleneckSet;
use crate::sim::{ContextRecord, SensorStream, Weather};
use crate::time::{Calendar, Minute, MINUTES_PER_DAY, SLOTS_PER_DAY, SLOT_MINUTES};

pub const DEFAULT_SURPRISE_THRESHOLD: f64 = 0.10;
pub const DEFAULT_LAPLACE: f64 = 1.0;
pub const DEFAULT_MIN_SUPPORT: u32 = 25;
pub const MARGINAL_SCHEMA_VERSION: u32 = 1;

const CELLS: usize = 7 * SLOTS_PER_DAY * 3 * 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurpriseError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history covers {0} minutes, less than one week")]
    ShortHistory(Minute),
    #[error("context does not cover minute {0}")]
    Misaligned(Minute),
    #[error("bottleneck {0} is not in the model")]
    UnknownBottleneck(usize),
    #[error("threshold {0} is outside (0, 1)")]
    Threshold(f64),
    #[error("bad marginal model: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BucketKey {
    /// Monday is 0.
    pub day_of_week: usize,
    pub slot: usize,
    pub weather: Weather,
    pub holiday: bool,
}

impl BucketKey {
    pub fn at(calendar: Calendar, context: &[ContextRecord], m: Minute) -> Result<Self, SurpriseError> {
        let rec = context
            .get((m / SLOT_MINUTES) as usize)
            .ok_or(SurpriseError::Misaligned(m))?;
        Ok(BucketKey {
            day_of_week: calendar.day_of_week(m),
            slot: calendar.slot(m),
            weather: rec.weather,
            holiday: rec.holiday,
        })
    }

    fn index(&self) -> usize {
        ((self.day_of_week * SLOTS_PER_DAY + self.slot) * 3 + self.weather.index()) * 2 + usize::from(self.holiday)
    }
}

/// How far a lookup backed off from the full bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Full,
    NoWeather,
    DaySlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SurprisingJam,
    SurprisingFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseTag {
    pub bottleneck: usize,
    pub minute: Minute,
    pub timestamp: DateTime<Utc>,
    pub jammed: bool,
    pub likelihood: f64,
    pub direction: Direction,
    pub level: Level,
}

/// Smoothed probability of a state and the bucket it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    pub p: f64,
    pub level: Level,
    pub support: u32,
}

/// Per-minute counts of open and jammed states for each bottleneck and
/// bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub schema_version: u32,
    pub laplace: f64,
    pub min_support: u32,
    pub threshold: f64,
    /// `counts[b][bucket] = [open, jammed]`.
    counts: Vec<Vec<[u32; 2]>>,
}

/// Jam state of every bottleneck at `m`.
pub fn bottleneck_states(stream: &SensorStream, bottlenecks: &BottleneckSet, m: Minute) -> Vec<bool> {
    let frame = stream.frame(m);
    bottlenecks.bottlenecks.iter().map(|b| b.is_jammed(frame)).collect()
}

/// Counts states over `[from, to)` of the stream.
pub fn fit_marginal(
    stream: &SensorStream,
    context: &[ContextRecord],
    bottlenecks: &BottleneckSet,
    from: Minute,
    to: Minute,
) -> Result<MarginalModel, SurpriseError> {
    let to = to.min(stream.minutes());
    if from >= to || bottlenecks.is_empty() {
        return Err(SurpriseError::EmptyHistory);
    }
    if to - from < 7 * MINUTES_PER_DAY {
        return Err(SurpriseError::ShortHistory(to - from));
    }
    let cal = stream.calendar();
    let mut counts = vec![vec![[0u32; 2]; CELLS]; bottlenecks.len()];
    for m in from..to {
        let key = BucketKey::at(cal, context, m)?.index();
        for (b, jammed) in bottleneck_states(stream, bottlenecks, m).into_iter().enumerate() {
            counts[b][key][usize::from(jammed)] += 1;
        }
    }
    Ok(MarginalModel {
        schema_version: MARGINAL_SCHEMA_VERSION,
        laplace: DEFAULT_LAPLACE,
        min_support: DEFAULT_MIN_SUPPORT,
        threshold: DEFAULT_SURPRISE_THRESHOLD,
        counts,
    })
}

impl MarginalModel {
    pub fn bottleneck_count(&self) -> usize {
        self.counts.len()
    }

    /// Raw `[open, jammed]` counts pooled at `level`.
    pub fn counts(&self, bottleneck: usize, key: BucketKey, level: Level) -> Result<[u32; 2], SurpriseError> {
        let table = self
            .counts
            .get(bottleneck)
            .ok_or(SurpriseError::UnknownBottleneck(bottleneck))?;
        let weathers: &[Weather] = match level {
            Level::Full => std::slice::from_ref(&key.weather),
            _ => &Weather::ALL,
        };
        let holidays: &[bool] = match level {
            Level::DaySlot => &[false, true],
            _ => std::slice::from_ref(&key.holiday),
        };
        let mut total = [0u32; 2];
        for &weather in weathers {
            for &holiday in holidays {
                let c = table[BucketKey { weather, holiday, ..key }.index()];
                total[0] += c[0];
                total[1] += c[1];
            }
        }
        Ok(total)
    }

    /// Smoothed probability of `jammed`, backing off to coarser buckets
    /// while support is below the minimum.
    pub fn likelihood(&self, bottleneck: usize, key: BucketKey, jammed: bool) -> Result<Likelihood, SurpriseError> {
        let mut c = [0, 0];
        let mut level = Level::Full;
        for l in [Level::Full, Level::NoWeather, Level::DaySlot] {
            c = self.counts(bottleneck, key, l)?;
            level = l;
            if c[0] + c[1] >= self.min_support {
                break;
            }
        }
        let n = f64::from(c[0] + c[1]);
        Ok(Likelihood {
            p: (f64::from(c[usize::from(jammed)]) + self.laplace) / (n + 2.0 * self.laplace),
            level,
            support: c[0] + c[1],
        })
    }

    /// Tag for a bottleneck observed `jammed` at `m`, if the state is
    /// unlikely enough.
    pub fn surprise_now(
        &self,
        bottleneck: usize,
        calendar: Calendar,
        m: Minute,
        key: BucketKey,
        jammed: bool,
        threshold: f64,
    ) -> Result<Option<SurpriseTag>, SurpriseError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(SurpriseError::Threshold(threshold));
        }
        let l = self.likelihood(bottleneck, key, jammed)?;
        Ok((l.p <= threshold).then(|| SurpriseTag {
            bottleneck,
            minute: m,
            timestamp: DateTime::<Utc>::from_naive_utc_and_offset(calendar.datetime(m), Utc),
            jammed,
            likelihood: l.p,
            direction: if jammed {
                Direction::SurprisingJam
            } else {
                Direction::SurprisingFlow
            },
            level: l.level,
        }))
    }

    /// Tags for every bottleneck at `m`.
    pub fn tags_at(
        &self,
        stream: &SensorStream,
        context: &[ContextRecord],
        bottlenecks: &BottleneckSet,
        m: Minute,
    ) -> Result<Vec<SurpriseTag>, SurpriseError> {
        let cal = stream.calendar();
        let key = BucketKey::at(cal, context, m)?;
        let mut out = Vec::new();
        for (b, jammed) in bottleneck_states(stream, bottlenecks, m).into_iter().enumerate() {
            out.extend(self.surprise_now(b, cal, m, key, jammed, self.threshold)?);
        }
        Ok(out)
    }

    /// Tags over `[from, to)`, in minute then bottleneck order.
    pub fn tag_range(
        &self,
        stream: &SensorStream,
        context: &[ContextRecord],
        bottlenecks: &BottleneckSet,
        from: Minute,
        to: Minute,
    ) -> Result<Vec<SurpriseTag>, SurpriseError> {
        let mut out = Vec::new();
        for m in from..to.min(stream.minutes()) {
            out.extend(self.tags_at(stream, context, bottlenecks, m)?);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("marginal model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SurpriseError> {
        let m: MarginalModel = serde_json::from_str(s).map_err(|e| SurpriseError::Format(e.to_string()))?;
        if m.schema_version != MARGINAL_SCHEMA_VERSION {
            return Err(SurpriseError::Format(format!("unsupported schema version {}", m.schema_version)));
        }
        if m.counts.iter().any(|t| t.len() != CELLS) {
            return Err(SurpriseError::Format("bucket table has the wrong size".into()));
        }
        if !(m.laplace > 0.0) || !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(SurpriseError::Format("laplace and threshold must be positive".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> BucketKey {
        BucketKey {
            day_of_week: 1,
            slot: 32,
            weather: Weather::Dry,
            holiday: false,
        }
    }

    fn model_with(cells: &[(BucketKey, [u32; 2])]) -> MarginalModel {
        let mut counts = vec![vec![[0u32; 2]; CELLS]];
        for (k, c) in cells {
            counts[0][k.index()] = *c;
        }
        MarginalModel {
            schema_version: MARGINAL_SCHEMA_VERSION,
            laplace: 1.0,
            min_support: 10,
            threshold: 0.1,
            counts,
        }
    }

    #[test]
    fn laplace_arithmetic() {
        let m = model_with(&[(key(), [7, 3])]);
        let l = m.likelihood(0, key(), true).unwrap();
        assert!((l.p - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(l.level, Level::Full);
        let sum = l.p + m.likelihood(0, key(), false).unwrap().p;
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bucket_indices_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for day_of_week in 0..7 {
            for slot in 0..SLOTS_PER_DAY {
                for weather in Weather::ALL {
                    for holiday in [false, true] {
                        let k = BucketKey {
                            day_of_week,
                            slot,
                            weather,
                            holiday,
                        };
                        assert!(k.index() < CELLS && seen.insert(k.index()));
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_bucket_backs_off() {
        let rain = BucketKey {
            weather: Weather::Rain,
            ..key()
        };
        let m = model_with(&[(rain, [1, 4]), (key(), [40, 2])]);
        let l = m.likelihood(0, rain, true).unwrap();
        assert_eq!(l.level, Level::NoWeather);
        assert!((l.p - 7.0 / 49.0).abs() < 1e-12);
    }
}
