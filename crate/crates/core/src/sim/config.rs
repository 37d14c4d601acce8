use chrono::{NaiveDate, NaiveDateTime, Weekday};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::incident::{Direction, IncidentKind};
use crate::time::{parse_hhmm_colon, MINUTES_PER_DAY};

/// Simulation settings. Times of day are `HH:MM` strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub days: u32,
    pub start_date: NaiveDate,
    #[serde(default)]
    pub speeds: SpeedConfig,
    pub network: NetworkConfig,
    #[serde(default)]
    pub regimes: Vec<Regime>,
    #[serde(default)]
    pub incidents: IncidentConfig,
    #[serde(default)]
    pub injected: Vec<InjectedIncident>,
    #[serde(default)]
    pub propagation: Vec<PropagationRule>,
    #[serde(default)]
    pub weather: WeatherConfig,
    #[serde(default)]
    pub calendar: CalendarConfig,
    #[serde(default)]
    pub events: EventConfig,
    #[serde(default)]
    pub background: BackgroundConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedConfig {
    pub free_mean: f64,
    pub free_std: f64,
    pub jam_mean: f64,
    pub jam_std: f64,
    pub max: f64,
    /// Delay between successive cells of a region entering and leaving a jam.
    pub onset_lag_minutes: u32,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig {
            free_mean: 60.0,
            free_std: 5.0,
            jam_mean: 12.0,
            jam_std: 4.0,
            max: 75.0,
            onset_lag_minutes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_cells_per_region")]
    pub cells_per_region: usize,
    /// Background cells before, between and after regions on each road.
    #[serde(default = "default_gap_cells")]
    pub gap_cells: usize,
    pub roads: Vec<RoadConfig>,
}

fn default_cells_per_region() -> usize {
    3
}

fn default_gap_cells() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadConfig {
    pub name: String,
    pub direction: Direction,
    pub regions: Vec<String>,
    /// Cross-street name per region; generated when empty.
    #[serde(default)]
    pub landmarks: Vec<String>,
}

/// Recurring congestion window for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub region: String,
    pub days: Vec<Weekday>,
    pub start: String,
    pub end: String,
    pub probability: f64,
    /// Episode edges are widened by up to this many minutes.
    #[serde(default = "default_shoulder")]
    pub shoulder_minutes: u32,
}

fn default_shoulder() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentRate {
    pub region: String,
    pub per_day: f64,
    #[serde(default = "default_day_start")]
    pub start: String,
    #[serde(default = "default_day_end")]
    pub end: String,
}

fn default_day_start() -> String {
    "00:00".into()
}

fn default_day_end() -> String {
    "24:00".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncidentConfig {
    pub rates: Vec<IncidentRate>,
    pub min_duration_minutes: u32,
    pub max_duration_minutes: u32,
}

impl Default for IncidentConfig {
    fn default() -> Self {
        IncidentConfig {
            rates: Vec::new(),
            min_duration_minutes: 30,
            max_duration_minutes: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedIncident {
    pub region: String,
    pub time: NaiveDateTime,
    pub kind: IncidentKind,
    #[serde(default)]
    pub duration_minutes: Option<u32>,
}

/// An accident at `source` jams `target` around `lag_minutes` later with
/// probability `effect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationRule {
    pub source: String,
    pub target: String,
    pub lag_minutes: u32,
    pub effect: f64,
    #[serde(default = "default_propagation_duration")]
    pub duration_minutes: u32,
}

fn default_propagation_duration() -> u32 {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherConfig {
    /// Chance per slot that the weather keeps its category.
    pub stay_probability: f64,
    /// Weights of dry, rain and heavy rain when the weather changes.
    pub weights: [f64; 3],
    pub heavy_rain_chaos: Option<ChaosConfig>,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            stay_probability: 0.97,
            weights: [0.7, 0.22, 0.08],
            heavy_rain_chaos: None,
        }
    }
}

/// Random jams during heavy rain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosConfig {
    pub mean_gap_minutes: f64,
    pub mean_duration_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CalendarConfig {
    pub holidays: Vec<NaiveDate>,
    pub school_terms: Vec<SchoolTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchoolTerm {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Evening events that may jam one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventConfig {
    pub per_week: f64,
    pub region: Option<String>,
    pub jam_probability: f64,
    pub names: Vec<String>,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            per_week: 0.0,
            region: None,
            jam_probability: 0.8,
            names: vec!["stadium".into(), "concert".into(), "convention".into()],
        }
    }
}

/// Short jams on cells outside every region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    pub jams_per_cell_per_day: f64,
    pub min_duration_minutes: u32,
    pub max_duration_minutes: u32,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            jams_per_cell_per_day: 0.02,
            min_duration_minutes: 3,
            max_duration_minutes: 12,
        }
    }
}

fn check_prob(p: f64, what: &str) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{what} probability {p} outside [0, 1]")))
    }
}

pub(crate) fn window(start: &str, end: &str, what: &str) -> Result<(u32, u32), SimError> {
    let s = parse_hhmm_colon(start).ok_or_else(|| SimError::Config(format!("{what}: bad time {start:?}")))?;
    let e = parse_hhmm_colon(end).ok_or_else(|| SimError::Config(format!("{what}: bad time {end:?}")))?;
    if s >= e || s >= MINUTES_PER_DAY {
        return Err(SimError::Config(format!("{what}: empty window {start}-{end}")));
    }
    Ok((s, e))
}

impl SimConfig {
    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn region_names(&self) -> Vec<&str> {
        self.network
            .roads
            .iter()
            .flat_map(|r| r.regions.iter().map(String::as_str))
            .collect()
    }

    fn require_region(&self, name: &str, what: &str) -> Result<(), SimError> {
        if self.region_names().contains(&name) {
            Ok(())
        } else {
            Err(SimError::UnknownRegion(format!("{what} references {name}")))
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.days == 0 {
            return Err(SimError::Config("duration must be at least one day".into()));
        }
        let s = &self.speeds;
        if !(s.free_std >= 0.0 && s.jam_std >= 0.0 && s.max > 0.0 && s.jam_mean < s.free_mean) {
            return Err(SimError::Config("invalid speed model".into()));
        }
        if self.network.cells_per_region == 0 || self.network.roads.is_empty() {
            return Err(SimError::Config("network needs roads and cells".into()));
        }
        let names = self.region_names();
        if names.is_empty() {
            return Err(SimError::Config("network has no regions".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(SimError::Config(format!("duplicate region {n}")));
            }
        }
        for road in &self.network.roads {
            if road.direction == Direction::Unknown {
                return Err(SimError::Config(format!("road {} needs a direction", road.name)));
            }
            if !road.landmarks.is_empty() && road.landmarks.len() != road.regions.len() {
                return Err(SimError::Config(format!("road {} needs one landmark per region", road.name)));
            }
        }
        for r in &self.regimes {
            self.require_region(&r.region, "regime")?;
            check_prob(r.probability, "regime")?;
            window(&r.start, &r.end, "regime")?;
        }
        let inc = &self.incidents;
        if inc.min_duration_minutes == 0 || inc.min_duration_minutes > inc.max_duration_minutes {
            return Err(SimError::Config("invalid incident duration range".into()));
        }
        for r in &inc.rates {
            self.require_region(&r.region, "incident rate")?;
            if !(r.per_day >= 0.0 && r.per_day.is_finite()) {
                return Err(SimError::Config("incident rate must be nonnegative".into()));
            }
            window(&r.start, &r.end, "incident rate")?;
        }
        for inj in &self.injected {
            self.require_region(&inj.region, "injected incident")?;
            self.injected_minute(inj.time)?;
        }
        for p in &self.propagation {
            self.require_region(&p.source, "propagation")?;
            self.require_region(&p.target, "propagation")?;
            check_prob(p.effect, "propagation")?;
            if p.lag_minutes == 0 || p.duration_minutes == 0 {
                return Err(SimError::Config("propagation lag and duration must be positive".into()));
            }
        }
        let w = &self.weather;
        check_prob(w.stay_probability, "weather stay")?;
        if w.weights.iter().any(|x| !(*x >= 0.0)) || w.weights.iter().sum::<f64>() <= 0.0 {
            return Err(SimError::Config("weather weights must be nonnegative and not all zero".into()));
        }
        if let Some(c) = &w.heavy_rain_chaos {
            if !(c.mean_gap_minutes > 0.0 && c.mean_duration_minutes > 0.0) {
                return Err(SimError::Config("chaos means must be positive".into()));
            }
        }
        let e = &self.events;
        check_prob(e.jam_probability, "event jam")?;
        if !(e.per_week >= 0.0 && e.per_week <= 7.0) {
            return Err(SimError::Config("events per week must be in [0, 7]".into()));
        }
        if let Some(r) = &e.region {
            self.require_region(r, "events")?;
        }
        if e.per_week > 0.0 && e.names.is_empty() {
            return Err(SimError::Config("events need names".into()));
        }
        let b = &self.background;
        if !(b.jams_per_cell_per_day >= 0.0)
            || b.min_duration_minutes == 0
            || b.min_duration_minutes > b.max_duration_minutes
        {
            return Err(SimError::Config("invalid background jam settings".into()));
        }
        Ok(())
    }

    pub fn total_minutes(&self) -> u32 {
        self.days * MINUTES_PER_DAY
    }

    pub(crate) fn injected_minute(&self, time: NaiveDateTime) -> Result<u32, SimError> {
        let start = self.start_date.and_hms_opt(0, 0, 0).expect("midnight");
        let delta = (time - start).num_minutes();
        if delta < 0 || delta >= i64::from(self.total_minutes()) {
            return Err(SimError::OutOfRange(format!("{time} is outside the simulated span")));
        }
        Ok(delta as u32)
    }

    /// Schedules an extra incident; the next [`simulate`](super::simulate) run includes it.
    pub fn inject_incident(&mut self, region: &str, time: NaiveDateTime, kind: IncidentKind) -> Result<(), SimError> {
        self.require_region(region, "injected incident")?;
        self.injected_minute(time)?;
        self.injected.push(InjectedIncident {
            region: region.to_string(),
            time,
            kind,
            duration_minutes: None,
        });
        Ok(())
    }
}
