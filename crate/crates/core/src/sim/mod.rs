//! Seeded generator of sensor, context and incident streams with planted
//! congestion structure.

pub mod config;
pub mod io;
pub mod network;
pub mod presets;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal, WeightedIndex};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::incident::{self, IncidentEvent, IncidentKind};
use crate::time::{Calendar, Minute, MINUTES_PER_DAY, SLOT_MINUTES};
pub use config::SimConfig;
pub use network::{CellId, RoadNetwork};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("unknown region: {0}")]
    UnknownRegion(String),
    #[error("time out of range: {0}")]
    OutOfRange(String),
    #[error("invalid network: {0}")]
    Network(String),
    #[error("invalid stream data: {0}")]
    Data(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Dry,
    Rain,
    HeavyRain,
}

impl Weather {
    pub const ALL: [Weather; 3] = [Weather::Dry, Weather::Rain, Weather::HeavyRain];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Conditions during one 15-minute slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub timestamp: DateTime<Utc>,
    pub weather: Weather,
    pub temperature: f64,
    pub holiday: bool,
    pub school_in_session: bool,
    pub major_event: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellReading {
    pub minute: Minute,
    pub cell: CellId,
    pub speed: f32,
}

/// Speeds for every cell and minute, stored minute-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    calendar: Calendar,
    cells: usize,
    minutes: Minute,
    speeds: Vec<f32>,
}

impl SensorStream {
    pub fn new(calendar: Calendar, cells: usize, minutes: Minute, speeds: Vec<f32>) -> Result<Self, SimError> {
        if speeds.len() != cells * minutes as usize {
            return Err(SimError::Data("speed grid does not match cells x minutes".into()));
        }
        if speeds.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::Data("speeds must be finite and nonnegative".into()));
        }
        Ok(SensorStream {
            calendar,
            cells,
            minutes,
            speeds,
        })
    }

    pub fn calendar(&self) -> Calendar {
        self.calendar
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn minutes(&self) -> Minute {
        self.minutes
    }

    pub fn speed(&self, minute: Minute, cell: CellId) -> f32 {
        self.speeds[minute as usize * self.cells + cell]
    }

    pub fn frame(&self, minute: Minute) -> &[f32] {
        let i = minute as usize * self.cells;
        &self.speeds[i..i + self.cells]
    }

    pub fn readings(&self) -> impl Iterator<Item = CellReading> + '_ {
        self.speeds.iter().enumerate().map(move |(i, &speed)| CellReading {
            minute: (i / self.cells) as Minute,
            cell: i % self.cells,
            speed,
        })
    }

    /// Copy of the stream with the speeds of `cell` over `[from, to)` replaced.
    pub fn with_speeds(&self, cell: CellId, from: Minute, to: Minute, speed: f32) -> SensorStream {
        let mut s = self.clone();
        for m in from..to.min(self.minutes) {
            s.speeds[m as usize * self.cells + cell] = speed;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeCause {
    Regime,
    Incident,
    Propagation,
    Event,
    Chaos,
    Background,
}

/// A planted jam over `[start, end)` on the first cell of `cells`; later
/// cells follow with the configured onset lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub region: Option<String>,
    pub cells: Vec<CellId>,
    pub start: Minute,
    pub end: Minute,
    pub cause: EpisodeCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedIncident {
    pub minute: Minute,
    pub region: String,
    pub kind: IncidentKind,
    pub duration: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub network: RoadNetwork,
    pub stream: SensorStream,
    pub context: Vec<ContextRecord>,
    pub incidents: Vec<EmittedIncident>,
    pub episodes: Vec<Episode>,
}

impl SimOutput {
    pub fn calendar(&self) -> Calendar {
        self.stream.calendar()
    }

    /// Raw incident feed: report blocks separated by blank lines.
    pub fn incident_feed(&self) -> String {
        let mut s = self
            .incidents
            .iter()
            .map(|i| i.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

#[repr(u64)]
#[derive(Clone, Copy)]
enum Purpose {
    Weather = 1,
    Temperature,
    Regime,
    Incident,
    Propagation,
    Event,
    Chaos,
    Background,
    Speed,
    Text,
    Injected,
}

/// Independent generator per purpose so that changing one part of the
/// configuration leaves the other draws untouched.
fn rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((purpose as u64) << 40) | index);
    r
}

struct Scheduled {
    minute: Minute,
    region: usize,
    kind: IncidentKind,
    duration: u32,
    injected: Option<usize>,
    /// Stream index for the report text draws.
    key: u64,
}

const OPERATORS: &[&str] = &["Nick", "Dana", "Ravi", "Lena", "Omar", "Jo"];

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let network = RoadNetwork::from_config(&cfg.network)?;
    let cal = Calendar::new(cfg.start_date);
    let total = cfg.total_minutes();
    let days = cfg.days;
    let holidays: HashSet<NaiveDate> = cfg.calendar.holidays.iter().copied().collect();
    let region_index = |name: &str| {
        network
            .regions()
            .iter()
            .position(|r| r.name == name)
            .expect("validated region")
    };

    let context = generate_context(cfg, &cal, &holidays);
    let weather_at = |m: Minute| context[(m / SLOT_MINUTES) as usize].weather;

    let mut episodes: Vec<Episode> = Vec::new();
    let region_episode = |region: usize, start: Minute, end: Minute, cause: EpisodeCause| Episode {
        region: Some(network.regions()[region].name.clone()),
        cells: network.regions()[region].cells.clone(),
        start,
        end: end.min(total),
        cause,
    };

    for (ri, regime) in cfg.regimes.iter().enumerate() {
        let mut r = rng(cfg.seed, Purpose::Regime, ri as u64);
        let (ws, we) = config::window(&regime.start, &regime.end, "regime")?;
        let region = region_index(&regime.region);
        let matching: Vec<u32> = (0..days)
            .filter(|&d| {
                let date = cal.date(d * MINUTES_PER_DAY);
                regime.days.contains(&date.weekday()) && !holidays.contains(&date)
            })
            .collect();
        // Stratified occurrence: each block of 20 matching days holds
        // round(p * len) jams, with randomized rounding.
        for block in matching.chunks(20) {
            let k = block.len();
            let n = ((regime.probability * k as f64 + r.gen::<f64>()).floor() as usize).min(k);
            let mut chosen: Vec<usize> = sample(&mut r, k, n).into_vec();
            chosen.sort_unstable();
            let mut picked = vec![false; k];
            chosen.iter().for_each(|&i| picked[i] = true);
            for (i, &day) in block.iter().enumerate() {
                let lead = r.gen_range(0..=regime.shoulder_minutes);
                let tail = r.gen_range(0..=regime.shoulder_minutes);
                if picked[i] {
                    let base = day * MINUTES_PER_DAY;
                    episodes.push(region_episode(
                        region,
                        (base + ws).saturating_sub(lead),
                        base + we + tail,
                        EpisodeCause::Regime,
                    ));
                }
            }
        }
    }

    let mut scheduled: Vec<Scheduled> = Vec::new();
    for (ii, rate) in cfg.incidents.rates.iter().enumerate() {
        let mut r = rng(cfg.seed, Purpose::Incident, ii as u64);
        let (s, e) = config::window(&rate.start, &rate.end, "incident rate")?;
        let region = region_index(&rate.region);
        let mut seq = 0u64;
        for day in 0..days {
            let count = if rate.per_day > 0.0 {
                Poisson::new(rate.per_day).expect("positive rate").sample(&mut r) as u32
            } else {
                0
            };
            for _ in 0..count {
                let minute = day * MINUTES_PER_DAY + r.gen_range(s..e);
                let duration = r.gen_range(cfg.incidents.min_duration_minutes..=cfg.incidents.max_duration_minutes);
                scheduled.push(Scheduled {
                    minute,
                    region,
                    kind: IncidentKind::Accident,
                    duration,
                    injected: None,
                    key: (ii as u64) << 24 | seq,
                });
                seq += 1;
            }
        }
    }
    for (k, inj) in cfg.injected.iter().enumerate() {
        let mut r = rng(cfg.seed, Purpose::Injected, k as u64);
        let duration = inj.duration_minutes.unwrap_or_else(|| {
            r.gen_range(cfg.incidents.min_duration_minutes..=cfg.incidents.max_duration_minutes)
        });
        scheduled.push(Scheduled {
            minute: cfg.injected_minute(inj.time)?,
            region: region_index(&inj.region),
            kind: inj.kind,
            duration,
            injected: Some(k),
            key: 1 << 36 | k as u64,
        });
    }
    scheduled.sort_by_key(|s| (s.minute, s.region, s.injected.map_or(0, |k| k + 1)));

    let mut prop_rng = rng(cfg.seed, Purpose::Propagation, 0);
    let mut incidents = Vec::new();
    for s in &scheduled {
        episodes.push(region_episode(s.region, s.minute, s.minute + s.duration, EpisodeCause::Incident));
        let source = &network.regions()[s.region].name;
        if s.kind == IncidentKind::Accident {
            let mut injected_rng = s.injected.map(|k| rng(cfg.seed, Purpose::Injected, 1 << 20 | k as u64));
            for rule in cfg.propagation.iter().filter(|p| &p.source == source) {
                let r: &mut ChaCha8Rng = injected_rng.as_mut().unwrap_or(&mut prop_rng);
                if r.gen_bool(rule.effect) {
                    let start = (s.minute + rule.lag_minutes).saturating_sub(10);
                    episodes.push(region_episode(
                        region_index(&rule.target),
                        start,
                        start + rule.duration_minutes,
                        EpisodeCause::Propagation,
                    ));
                }
            }
        }
        let text = incident_text(&network, &cal, s, &mut rng(cfg.seed, Purpose::Text, s.key));
        incidents.push(EmittedIncident {
            minute: s.minute,
            region: source.clone(),
            kind: s.kind,
            duration: s.duration,
            text,
        });
    }

    if cfg.events.per_week > 0.0 {
        let mut r = rng(cfg.seed, Purpose::Event, 0);
        for (day, start) in event_days(cfg) {
            let jam = r.gen_bool(cfg.events.jam_probability);
            if let (true, Some(region)) = (jam, &cfg.events.region) {
                let m = day * MINUTES_PER_DAY + start;
                episodes.push(region_episode(region_index(region), m - 30, m + 30, EpisodeCause::Event));
            }
        }
    }

    if let Some(chaos) = &cfg.weather.heavy_rain_chaos {
        let birth = 1.0 / chaos.mean_gap_minutes;
        let dur = Exp::new(1.0 / chaos.mean_duration_minutes).expect("positive mean");
        for region in 0..network.regions().len() {
            let mut r = rng(cfg.seed, Purpose::Chaos, region as u64);
            let mut m = 0;
            while m < total {
                if weather_at(m) == Weather::HeavyRain && r.gen_bool(birth.min(1.0)) {
                    let d = (dur.sample(&mut r).ceil() as u32).max(1);
                    episodes.push(region_episode(region, m, m + d, EpisodeCause::Chaos));
                    m += d;
                } else {
                    m += 1;
                }
            }
        }
    }

    let in_region: HashSet<CellId> = network.regions().iter().flat_map(|r| r.cells.iter().copied()).collect();
    let bg = &cfg.background;
    if bg.jams_per_cell_per_day > 0.0 {
        let pois = Poisson::new(bg.jams_per_cell_per_day).expect("positive rate");
        for cell in (0..network.len()).filter(|c| !in_region.contains(c)) {
            let mut r = rng(cfg.seed, Purpose::Background, cell as u64);
            for day in 0..days {
                for _ in 0..pois.sample(&mut r) as u32 {
                    let m = day * MINUTES_PER_DAY + r.gen_range(0..MINUTES_PER_DAY);
                    let d = r.gen_range(bg.min_duration_minutes..=bg.max_duration_minutes);
                    episodes.push(Episode {
                        region: None,
                        cells: vec![cell],
                        start: m,
                        end: (m + d).min(total),
                        cause: EpisodeCause::Background,
                    });
                }
            }
        }
    }

    let n = network.len();
    let mut jam = vec![false; n * total as usize];
    let lag = cfg.speeds.onset_lag_minutes;
    for ep in &episodes {
        for (k, &cell) in ep.cells.iter().enumerate() {
            let off = lag * k as u32;
            for m in (ep.start + off).min(total)..(ep.end + off).min(total) {
                jam[m as usize * n + cell] = true;
            }
        }
    }

    let sp = &cfg.speeds;
    let mut r = rng(cfg.seed, Purpose::Speed, 0);
    let speeds: Vec<f32> = jam
        .iter()
        .map(|&j| {
            let z: f64 = StandardNormal.sample(&mut r);
            let v = if j {
                sp.jam_mean + sp.jam_std * z
            } else {
                sp.free_mean + sp.free_std * z
            };
            quantize(v.clamp(0.0, sp.max))
        })
        .collect();
    let stream = SensorStream::new(cal, n, total, speeds)?;
    Ok(SimOutput {
        network,
        stream,
        context,
        incidents,
        episodes,
    })
}

/// Rounds to the 0.01 mph resolution used in readings files.
pub(crate) fn quantize(v: f64) -> f32 {
    ((v * 100.0).round() / 100.0) as f32
}

/// `(day, start minute of day)` for each major event.
fn event_days(cfg: &SimConfig) -> Vec<(u32, u32)> {
    let mut r = rng(cfg.seed, Purpose::Event, 1);
    let p = cfg.events.per_week / 7.0;
    (0..cfg.days)
        .filter_map(|day| {
            let start = r.gen_range(18 * 60..20 * 60);
            r.gen_bool(p).then_some((day, start))
        })
        .collect()
}

fn generate_context(cfg: &SimConfig, cal: &Calendar, holidays: &HashSet<NaiveDate>) -> Vec<ContextRecord> {
    let slots = (cfg.total_minutes() / SLOT_MINUTES) as usize;
    let mut wr = rng(cfg.seed, Purpose::Weather, 0);
    let mut tr = rng(cfg.seed, Purpose::Temperature, 0);
    let pick = WeightedIndex::new(cfg.weather.weights).expect("validated weights");
    let events = event_days(cfg);
    let mut weather = Weather::ALL[pick.sample(&mut wr)];
    let mut day_offset = 0.0;
    let mut out = Vec::with_capacity(slots);
    for s in 0..slots {
        let m = s as Minute * SLOT_MINUTES;
        if s > 0 && !wr.gen_bool(cfg.weather.stay_probability) {
            weather = Weather::ALL[pick.sample(&mut wr)];
        }
        if cal.minute_of_day(m) == 0 {
            day_offset = 4.0 * tr.sample::<f64, _>(StandardNormal);
        }
        let date = cal.date(m);
        let tod = f64::from(cal.minute_of_day(m));
        let diurnal = 10.0 * (2.0 * std::f64::consts::PI * (tod - 540.0) / 1440.0).sin();
        let wet = match weather {
            Weather::Dry => 0.0,
            Weather::Rain => -1.5,
            Weather::HeavyRain => -3.0,
        };
        let noise: f64 = 0.5 * tr.sample::<f64, _>(StandardNormal);
        let temperature = ((50.0 + diurnal + day_offset + wet + noise) * 10.0).round() / 10.0;
        let day = cal.day_index(m);
        let mod_ = cal.minute_of_day(m);
        let major_event = events
            .iter()
            .enumerate()
            .find(|(_, &(d, start))| d == day && mod_ + SLOT_MINUTES > start.saturating_sub(60) && mod_ < start + 120)
            .map(|(i, _)| cfg.events.names[i % cfg.events.names.len()].clone());
        let school = date.weekday().num_days_from_monday() < 5
            && cfg
                .calendar
                .school_terms
                .iter()
                .any(|t| t.start <= date && date <= t.end);
        out.push(ContextRecord {
            timestamp: Utc.from_utc_datetime(&cal.datetime(m)),
            weather,
            temperature,
            holiday: holidays.contains(&date),
            school_in_session: school,
            major_event,
        });
    }
    out
}

fn incident_text(network: &RoadNetwork, cal: &Calendar, s: &Scheduled, r: &mut ChaCha8Rng) -> String {
    let region = &network.regions()[s.region];
    let landmark = network.landmark_for_region(&region.name);
    let mut responders = std::collections::BTreeSet::new();
    responders.insert("WSP".to_string());
    for (code, p) in [("FIR", 0.4), ("AID", 0.2), ("TOW", 0.3)] {
        if r.gen_bool(p) {
            responders.insert(code.to_string());
        }
    }
    let lanes = ["RL", "LL", "CL"];
    let tod = cal.minute_of_day(s.minute);
    let ev = IncidentEvent {
        date: Some(cal.date(s.minute)),
        operator: Some(OPERATORS.choose(r).expect("nonempty").to_string()),
        road: landmark.map(|l| l.road.clone()),
        direction: landmark.map(|l| l.direction).unwrap_or_default(),
        relation: Some(if r.gen_bool(0.5) { "JS" } else { "JN" }.to_string()),
        landmark: landmark.map(|l| l.name.clone()),
        kind: s.kind,
        blocking: s.kind == IncidentKind::Blocking || (s.kind == IncidentKind::Accident && r.gen_bool(0.6)),
        lanes: vec![lanes.choose(r).expect("nonempty").to_string()],
        responders,
        reported: chrono::NaiveTime::from_hms_opt(tod / 60, tod % 60, 0),
        cleared: None,
        raw: String::new(),
    };
    incident::format(&ev)
}
