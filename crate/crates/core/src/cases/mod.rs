//! The case library: timestamped observations with censored time-to-event
//! targets, one case per sampling step.

pub mod features;
pub mod io;

use chrono::{DateTime, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{BnError, Column, Dataset, Role, Schema, Value, VarId, Variable};
use crate::bottleneck::{cells_jammed, BottleneckSet};
use crate::incident::IncidentEvent;
use crate::sim::{CellId, ContextRecord, RoadNetwork, SensorStream, Weather};
use crate::time::{Calendar, Minute, SLOT_MINUTES};
pub use features::{extract_features, BottleneckFeatures, FeatureConfig, StreamView};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("window ending at minute {minute} is shorter than the {horizon}-minute horizon")]
    ShortWindow { minute: Minute, horizon: u32 },
    #[error("streams are misaligned: {0}")]
    Misaligned(String),
    #[error("read of minute {0} past the observation time")]
    Leakage(Minute),
    #[error("need at least two cases to split, got {0}")]
    TooFewCases(usize),
    #[error("train fraction {0} leaves an empty side")]
    Fraction(f64),
    #[error("malformed case data: {0}")]
    Format(String),
    #[error(transparent)]
    Bn(#[from] BnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseConfig {
    pub sample_interval_minutes: u32,
    pub censor_minutes: u32,
    pub features: FeatureConfig,
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            sample_interval_minutes: 15,
            censor_minutes: 120,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Clear,
    Jam,
}

impl TargetKind {
    pub const ALL: [TargetKind; 2] = [TargetKind::Clear, TargetKind::Jam];

    pub fn var_suffix(self) -> &'static str {
        match self {
            TargetKind::Clear => "time_to_clear",
            TargetKind::Jam => "time_to_jam",
        }
    }
}

/// An accident or other report placed on the minute grid and the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedIncident {
    pub minute: Minute,
    pub timestamp: String,
    pub event: IncidentEvent,
    pub cells: Vec<CellId>,
    pub bottlenecks: Vec<usize>,
}

/// Places parsed reports on the stream's minute grid. Reports without a
/// date continue from the previous report's day, advancing when the clock
/// goes backwards. Reports without a time or outside the span are dropped.
pub fn resolve_incidents(
    events: &[IncidentEvent],
    network: &RoadNetwork,
    bottlenecks: &BottleneckSet,
    calendar: Calendar,
    minutes: Minute,
) -> Vec<ResolvedIncident> {
    let mut day: NaiveDate = calendar.start;
    let mut last_tod: Option<u32> = None;
    let mut out = Vec::new();
    for ev in events {
        let Some(time) = ev.reported else { continue };
        let tod = time.hour() * 60 + time.minute();
        match ev.date {
            Some(d) => day = d,
            None => {
                if last_tod.is_some_and(|l| tod < l) {
                    day = day.succ_opt().unwrap_or(day);
                }
            }
        }
        last_tod = Some(tod);
        let Some(minute) = calendar.minute_at(day, tod) else {
            continue;
        };
        if minute >= minutes {
            continue;
        }
        let cells: Vec<CellId> = match (&ev.road, &ev.landmark) {
            (Some(road), Some(landmark)) => network
                .resolve_landmark(road, ev.direction, landmark)
                .map(<[CellId]>::to_vec)
                .unwrap_or_default(),
            _ => Vec::new(),
        };
        out.push(ResolvedIncident {
            minute,
            timestamp: calendar.rfc3339(minute),
            bottlenecks: bottlenecks.touching(&cells),
            cells,
            event: ev.clone(),
        });
    }
    out.sort_by_key(|i| i.minute);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseContext {
    /// Monday is 0.
    pub day_of_week: u8,
    pub slot: u32,
    pub holiday: bool,
    pub school_in_session: bool,
    pub weather: Weather,
    pub temperature: f64,
    pub major_event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckCase {
    pub features: BottleneckFeatures,
    pub incident: bool,
    pub time_to_clear: Option<f64>,
    pub time_to_jam: Option<f64>,
}

impl BottleneckCase {
    pub fn target(&self, kind: TargetKind) -> Option<f64> {
        match kind {
            TargetKind::Clear => self.time_to_clear,
            TargetKind::Jam => self.time_to_jam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub minute: Minute,
    pub timestamp: DateTime<Utc>,
    pub context: CaseContext,
    pub bottlenecks: Vec<BottleneckCase>,
}

/// Everything needed to observe the system at a minute.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub network: &'a RoadNetwork,
    pub bottlenecks: &'a BottleneckSet,
    pub stream: &'a SensorStream,
    pub context: &'a [ContextRecord],
    pub incidents: &'a [ResolvedIncident],
}

impl Inputs<'_> {
    pub fn check_aligned(&self) -> Result<(), CaseError> {
        if self.stream.cells() != self.network.len() {
            return Err(CaseError::Misaligned("stream and network cell counts differ".into()));
        }
        if self.context.len() as u64 * u64::from(SLOT_MINUTES) != u64::from(self.stream.minutes()) {
            return Err(CaseError::Misaligned("context slots do not cover the readings".into()));
        }
        if let Some(b) = self
            .bottlenecks
            .bottlenecks
            .iter()
            .find(|b| b.cells.iter().any(|&c| c >= self.network.len()))
        {
            return Err(CaseError::Misaligned(format!("bottleneck {} has cells outside the network", b.id)));
        }
        Ok(())
    }
}

/// Observation at `t` using only data timestamped at or before `t`; targets
/// are left empty.
pub fn observe(inputs: &Inputs, view: &StreamView, t: Minute, cfg: &CaseConfig) -> Result<Case, CaseError> {
    if view.upto() < t {
        return Err(CaseError::Leakage(t));
    }
    let cal = inputs.stream.calendar();
    let rec = inputs
        .context
        .get((t / SLOT_MINUTES) as usize)
        .ok_or_else(|| CaseError::Misaligned(format!("no context for minute {t}")))?;
    let context = CaseContext {
        day_of_week: cal.day_of_week(t) as u8,
        slot: cal.slot(t) as u32,
        holiday: rec.holiday,
        school_in_session: rec.school_in_session,
        weather: rec.weather,
        temperature: rec.temperature,
        major_event: rec.major_event.is_some(),
    };
    let lookback = cfg.features.incident_lookback_minutes;
    let recent: Vec<&ResolvedIncident> = inputs
        .incidents
        .iter()
        .filter(|i| i.minute <= t && i.minute + lookback >= t && i.event.is_accident())
        .collect();
    let bottlenecks = inputs
        .bottlenecks
        .bottlenecks
        .iter()
        .map(|b| {
            Ok(BottleneckCase {
                features: extract_features(view, inputs.network, b, t, &cfg.features)?,
                incident: recent.iter().any(|i| i.bottlenecks.contains(&b.id)),
                time_to_clear: None,
                time_to_jam: None,
            })
        })
        .collect::<Result<_, CaseError>>()?;
    Ok(Case {
        minute: t,
        timestamp: DateTime::<Utc>::from_naive_utc_and_offset(cal.datetime(t), Utc),
        context,
        bottlenecks,
    })
}

/// Minutes until the bottleneck's jam state flips, scanning forward from
/// `t`; `None` when it holds through the censoring horizon.
pub fn time_to_flip(stream: &SensorStream, cells: &[CellId], t: Minute, censor: u32) -> Option<f64> {
    let now = cells_jammed(stream.frame(t), cells);
    (1..=censor)
        .take_while(|d| t + d < stream.minutes())
        .find(|d| cells_jammed(stream.frame(t + d), cells) != now)
        .map(f64::from)
}

/// Ordered cases with a uniform schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseLibrary {
    pub cases: Vec<Case>,
    /// Cell count per bottleneck, which fixes count-variable arities.
    pub bottleneck_cells: Vec<usize>,
    pub config: CaseConfig,
    schema: Schema,
}

pub fn var_name(bottleneck: usize, name: &str) -> String {
    format!("b{bottleneck}.{name}")
}

pub fn target_name(bottleneck: usize, kind: TargetKind) -> String {
    var_name(bottleneck, kind.var_suffix())
}

pub const CONTEXT_VARS: [&str; 7] = [
    "day_of_week",
    "slot",
    "holiday",
    "school_in_session",
    "weather",
    "temperature",
    "major_event",
];

pub const BOTTLENECK_VARS: [&str; 9] = [
    "blocked_count",
    "max_adjacent_blocked",
    "minutes_since_block_start",
    "velocity_change_rate",
    "velocity_change_density",
    "currently_jammed",
    "incident",
    "time_to_clear",
    "time_to_jam",
];

pub fn case_schema(bottleneck_cells: &[usize]) -> Schema {
    let mut vars = vec![
        Variable::discrete("day_of_week", 7, Role::Evidence),
        Variable::continuous("slot", Role::Evidence),
        Variable::discrete("holiday", 2, Role::Evidence),
        Variable::discrete("school_in_session", 2, Role::Evidence),
        Variable::discrete("weather", 3, Role::Evidence),
        Variable::continuous("temperature", Role::Evidence),
        Variable::discrete("major_event", 2, Role::Evidence),
    ];
    for (b, &cells) in bottleneck_cells.iter().enumerate() {
        let n = |s: &str| var_name(b, s);
        vars.extend([
            Variable::discrete(n("blocked_count"), cells + 1, Role::Evidence),
            Variable::discrete(n("max_adjacent_blocked"), cells + 1, Role::Evidence),
            Variable::continuous(n("minutes_since_block_start"), Role::Evidence),
            Variable::continuous(n("velocity_change_rate"), Role::Evidence),
            Variable::continuous(n("velocity_change_density"), Role::Evidence),
            Variable::discrete(n("currently_jammed"), 2, Role::Evidence),
            Variable::discrete(n("incident"), 2, Role::Evidence),
            Variable::continuous(n("time_to_clear"), Role::Target),
            Variable::continuous(n("time_to_jam"), Role::Target),
        ]);
    }
    Schema::new(vars).expect("case schema is well formed")
}

fn flag(b: bool) -> Value {
    Value::State(usize::from(b))
}

impl Case {
    /// Values in [`case_schema`] order.
    pub fn values(&self) -> Vec<Value> {
        let c = &self.context;
        let mut out = vec![
            Value::State(usize::from(c.day_of_week)),
            Value::Present(f64::from(c.slot)),
            flag(c.holiday),
            flag(c.school_in_session),
            Value::State(c.weather.index()),
            Value::Present(c.temperature),
            flag(c.major_event),
        ];
        for b in &self.bottlenecks {
            let f = &b.features;
            out.extend([
                Value::State(f.blocked_count as usize),
                Value::State(f.max_adjacent_blocked as usize),
                Value::from_option(f.minutes_since_block_start),
                Value::Present(f.velocity_change_rate),
                Value::Present(f.velocity_change_density),
                flag(f.currently_jammed),
                flag(b.incident),
                Value::from_option(b.time_to_clear),
                Value::from_option(b.time_to_jam),
            ]);
        }
        out
    }

    /// Inverse of [`Case::values`].
    pub fn from_values(minute: Minute, timestamp: DateTime<Utc>, values: &[Value], bottlenecks: usize) -> Result<Case, CaseError> {
        if values.len() != CONTEXT_VARS.len() + bottlenecks * BOTTLENECK_VARS.len() {
            return Err(CaseError::Format(format!("{} values for {bottlenecks} bottlenecks", values.len())));
        }
        let bad = |i: usize| CaseError::Format(format!("value {i} has the wrong kind"));
        let state = |i: usize| match values[i] {
            Value::State(s) => Ok(s),
            _ => Err(bad(i)),
        };
        let num = |i: usize| match values[i] {
            Value::Present(x) => Ok(Some(x)),
            Value::Absent => Ok(None),
            _ => Err(bad(i)),
        };
        let req = |i: usize| num(i)?.ok_or_else(|| bad(i));
        let context = CaseContext {
            day_of_week: state(0)? as u8,
            slot: req(1)? as u32,
            holiday: state(2)? == 1,
            school_in_session: state(3)? == 1,
            weather: *Weather::ALL.get(state(4)?).ok_or_else(|| bad(4))?,
            temperature: req(5)?,
            major_event: state(6)? == 1,
        };
        let per = (0..bottlenecks)
            .map(|b| {
                let o = CONTEXT_VARS.len() + b * BOTTLENECK_VARS.len();
                Ok(BottleneckCase {
                    features: BottleneckFeatures {
                        blocked_count: state(o)? as u32,
                        max_adjacent_blocked: state(o + 1)? as u32,
                        minutes_since_block_start: num(o + 2)?,
                        velocity_change_rate: req(o + 3)?,
                        velocity_change_density: req(o + 4)?,
                        currently_jammed: state(o + 5)? == 1,
                    },
                    incident: state(o + 6)? == 1,
                    time_to_clear: num(o + 7)?,
                    time_to_jam: num(o + 8)?,
                })
            })
            .collect::<Result<_, CaseError>>()?;
        Ok(Case {
            minute,
            timestamp,
            context,
            bottlenecks: per,
        })
    }
}

impl CaseLibrary {
    pub fn new(cases: Vec<Case>, bottleneck_cells: Vec<usize>, config: CaseConfig) -> Result<Self, CaseError> {
        for w in cases.windows(2) {
            if w[1].minute <= w[0].minute {
                return Err(CaseError::Format("case timestamps must increase".into()));
            }
        }
        if let Some(c) = cases.iter().find(|c| c.bottlenecks.len() != bottleneck_cells.len()) {
            return Err(CaseError::Format(format!("case at minute {} has a different bottleneck count", c.minute)));
        }
        Ok(CaseLibrary {
            schema: case_schema(&bottleneck_cells),
            cases,
            bottleneck_cells,
            config,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn bottleneck_count(&self) -> usize {
        self.bottleneck_cells.len()
    }

    pub fn target_id(&self, bottleneck: usize, kind: TargetKind) -> VarId {
        self.schema.id(&target_name(bottleneck, kind)).expect("target in schema")
    }

    pub fn to_dataset(&self) -> Result<Dataset, CaseError> {
        let mut cols: Vec<Column> = self
            .schema
            .variables()
            .iter()
            .map(|v| {
                if v.is_continuous() {
                    Column::Continuous(Vec::with_capacity(self.len()))
                } else {
                    Column::Discrete(Vec::with_capacity(self.len()))
                }
            })
            .collect();
        for case in &self.cases {
            for (col, v) in cols.iter_mut().zip(case.values()) {
                match (col, v) {
                    (Column::Discrete(c), Value::State(s)) => c.push(s as u16),
                    (Column::Continuous(c), Value::Present(x)) => c.push(x),
                    (Column::Continuous(c), Value::Absent) => c.push(f64::NAN),
                    _ => return Err(CaseError::Format("value kind disagrees with schema".into())),
                }
            }
        }
        Ok(Dataset::new(self.schema.clone(), cols)?)
    }

    fn with_cases(&self, cases: Vec<Case>) -> CaseLibrary {
        CaseLibrary {
            cases,
            bottleneck_cells: self.bottleneck_cells.clone(),
            config: self.config,
            schema: self.schema.clone(),
        }
    }
}

pub fn build_cases(inputs: &Inputs, cfg: &CaseConfig) -> Result<CaseLibrary, CaseError> {
    inputs.check_aligned()?;
    if cfg.sample_interval_minutes == 0 {
        return Err(CaseError::Format("sample interval must be positive".into()));
    }
    let stream = inputs.stream;
    let first = cfg.features.horizon_minutes.max(1);
    let mut cases = Vec::new();
    let mut t = first.div_ceil(cfg.sample_interval_minutes) * cfg.sample_interval_minutes;
    while t + cfg.censor_minutes < stream.minutes() {
        let view = StreamView::new(stream, t);
        let mut case = observe(inputs, &view, t, cfg)?;
        for (bc, b) in case.bottlenecks.iter_mut().zip(&inputs.bottlenecks.bottlenecks) {
            let flip = time_to_flip(stream, &b.cells, t, cfg.censor_minutes);
            if bc.features.currently_jammed {
                bc.time_to_clear = flip;
            } else {
                bc.time_to_jam = flip;
            }
        }
        cases.push(case);
        t += cfg.sample_interval_minutes;
    }
    CaseLibrary::new(
        cases,
        inputs.bottlenecks.bottlenecks.iter().map(|b| b.cells.len()).collect(),
        *cfg,
    )
}

/// First `ceil(n * train_fraction)` cases and the rest, in time order.
pub fn split_sequential(lib: &CaseLibrary, train_fraction: f64) -> Result<(CaseLibrary, CaseLibrary), CaseError> {
    let n = lib.len();
    if n < 2 {
        return Err(CaseError::TooFewCases(n));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CaseError::Fraction(train_fraction));
    }
    let k = (n as f64 * train_fraction).ceil() as usize;
    if k == 0 || k >= n {
        return Err(CaseError::Fraction(train_fraction));
    }
    Ok((lib.with_cases(lib.cases[..k].to_vec()), lib.with_cases(lib.cases[k..].to_vec())))
}

/// Span of a library as `first/last` timestamps.
pub fn data_span(lib: &CaseLibrary) -> Option<String> {
    let first = lib.cases.first()?;
    let last = lib.cases.last()?;
    Some(format!(
        "{}/{}",
        first.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
        last.timestamp.format("%Y-%m-%dT%H:%M:%SZ")
    ))
}

/// Variables of `schema` observable at case time (everything but targets).
pub fn observation_variables(schema: &Schema) -> Vec<Variable> {
    schema
        .variables()
        .iter()
        .filter(|v| v.role == Role::Evidence)
        .cloned()
        .collect()
}

/// A case's values for [`observation_variables`], in the same order.
pub fn observation_values(schema: &Schema, case: &Case) -> Vec<Value> {
    case.values()
        .into_iter()
        .zip(schema.variables())
        .filter(|(_, var)| var.role == Role::Evidence)
        .map(|(v, _)| v)
        .collect()
}
