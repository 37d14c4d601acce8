//! Ready-made study configurations.

use chrono::{NaiveDate, Weekday};

use super::config::*;
use crate::incident::Direction;

pub const PRESETS: &[&str] = &["standard", "heavy-rain", "propagation", "stationary"];

const WEEKDAYS: [Weekday; 5] = [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri];

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

fn regime(region: &str, days: &[Weekday], start: &str, end: &str, p: f64) -> Regime {
    Regime {
        region: region.into(),
        days: days.to_vec(),
        start: start.into(),
        end: end.into(),
        probability: p,
        shoulder_minutes: 45,
    }
}

fn network() -> NetworkConfig {
    NetworkConfig {
        cells_per_region: 3,
        gap_cells: 2,
        roads: vec![
            RoadConfig {
                name: "I-405".into(),
                direction: Direction::SB,
                regions: vec!["R0".into(), "R1".into(), "R2".into(), "R3".into()],
                landmarks: vec!["NE-124TH".into(), "SR-520".into(), "NE-8TH".into(), "I-90".into()],
            },
            RoadConfig {
                name: "I-5".into(),
                direction: Direction::NB,
                regions: vec!["R4".into(), "R5".into(), "R6".into(), "R7".into()],
                landmarks: vec!["SENECA".into(), "MERCER".into(), "NE-45TH".into(), "NE-85TH".into()],
            },
        ],
    }
}

fn region_names() -> Vec<String> {
    (0..8).map(|i| format!("R{i}")).collect()
}

/// Eight regions with weekday commute windows, sparse accidents and
/// evening events.
pub fn standard(seed: u64, days: u32) -> SimConfig {
    let wd = &WEEKDAYS;
    SimConfig {
        seed,
        days,
        start_date: date(2024, 1, 1),
        speeds: SpeedConfig::default(),
        network: network(),
        regimes: vec![
            regime("R0", wd, "07:30", "09:00", 0.9),
            regime("R0", wd, "16:30", "18:30", 0.85),
            regime("R1", wd, "07:00", "08:30", 0.95),
            regime("R2", wd, "16:00", "18:00", 0.9),
            regime("R3", wd, "08:00", "09:30", 0.85),
            regime("R4", wd, "17:00", "19:00", 0.9),
            regime("R5", wd, "06:45", "08:15", 0.9),
            regime("R5", wd, "15:30", "17:00", 0.8),
            regime("R6", wd, "16:00", "17:30", 0.95),
            regime("R6", &[Weekday::Sat], "11:00", "13:00", 0.7),
            regime("R7", wd, "07:30", "08:45", 0.9),
        ],
        incidents: IncidentConfig {
            rates: region_names()
                .into_iter()
                .map(|region| IncidentRate {
                    region,
                    per_day: 0.1,
                    start: "06:00".into(),
                    end: "20:00".into(),
                })
                .collect(),
            ..IncidentConfig::default()
        },
        injected: Vec::new(),
        propagation: Vec::new(),
        weather: WeatherConfig::default(),
        calendar: CalendarConfig {
            holidays: vec![date(2024, 1, 15), date(2024, 2, 19)],
            school_terms: vec![SchoolTerm {
                start: date(2024, 1, 3),
                end: date(2024, 3, 22),
            }],
        },
        events: EventConfig {
            per_week: 1.0,
            region: Some("R7".into()),
            ..EventConfig::default()
        },
        background: BackgroundConfig::default(),
    }
}

/// The standard commute windows with sharp edges and a flat calendar (no
/// accidents, events, background jams, holidays or school terms), plus frequent heavy rain during which every region
/// jams at random.
pub fn heavy_rain(seed: u64, days: u32) -> SimConfig {
    let mut cfg = standard(seed, days);
    for r in &mut cfg.regimes {
        r.shoulder_minutes = 0;
    }
    cfg.incidents.rates.clear();
    cfg.events.per_week = 0.0;
    cfg.background.jams_per_cell_per_day = 0.0;
    cfg.calendar.holidays.clear();
    cfg.calendar.school_terms.clear();
    cfg.weather = WeatherConfig {
        stay_probability: 0.97,
        weights: [0.55, 0.2, 0.25],
        heavy_rain_chaos: Some(ChaosConfig {
            mean_gap_minutes: 60.0,
            mean_duration_minutes: 60.0,
        }),
    };
    cfg
}

/// Off-peak accidents at R6, spread thinly over the night, midday and
/// evening, jam R2 thirty minutes later half of the time, in steady dry
/// weather.
pub fn propagation(seed: u64, days: u32) -> SimConfig {
    let mut cfg = standard(seed, days);
    for r in cfg.regimes.iter_mut().filter(|r| r.region == "R2") {
        r.probability = 1.0;
    }
    let rate = |per_day, start: &str, end: &str| IncidentRate {
        region: "R6".into(),
        per_day,
        start: start.into(),
        end: end.into(),
    };
    cfg.incidents.rates = vec![
        rate(0.3, "00:30", "06:00"),
        rate(0.3, "09:30", "15:00"),
        rate(0.25, "19:00", "23:30"),
    ];
    cfg.propagation = vec![PropagationRule {
        source: "R6".into(),
        target: "R2".into(),
        lag_minutes: 30,
        effect: 0.5,
        duration_minutes: 40,
    }];
    cfg.calendar.holidays.clear();
    cfg.events.per_week = 0.0;
    cfg.weather.weights = [1.0, 0.0, 0.0];
    cfg
}

/// Slot-aligned windows with probabilities in {0, 0.5, 0.97}, no shoulders,
/// incidents or background noise.
pub fn stationary(seed: u64, days: u32) -> SimConfig {
    let mut cfg = standard(seed, days);
    let wd = &WEEKDAYS;
    let sat = &[Weekday::Sat];
    cfg.regimes = vec![
        regime("R0", wd, "07:30", "09:00", 0.97),
        regime("R1", wd, "07:00", "08:30", 0.5),
        regime("R2", wd, "16:00", "18:00", 0.97),
        regime("R3", wd, "08:00", "09:30", 0.5),
        regime("R4", wd, "17:00", "19:00", 0.97),
        regime("R5", wd, "06:45", "08:15", 0.97),
        regime("R6", wd, "16:00", "17:30", 0.5),
        regime("R6", sat, "11:00", "13:00", 0.97),
        regime("R7", wd, "07:30", "08:45", 0.97),
        regime("R7", wd, "12:00", "13:00", 0.0),
    ];
    for r in &mut cfg.regimes {
        r.shoulder_minutes = 0;
    }
    cfg.speeds.onset_lag_minutes = 0;
    cfg.incidents.rates.clear();
    cfg.events.per_week = 0.0;
    cfg.background.jams_per_cell_per_day = 0.0;
    cfg.calendar.holidays.clear();
    cfg
}

pub fn by_name(name: &str, seed: u64, days: u32) -> Option<SimConfig> {
    match name {
        "standard" => Some(standard(seed, days)),
        "heavy-rain" => Some(heavy_rain(seed, days)),
        "propagation" => Some(propagation(seed, days)),
        "stationary" => Some(stationary(seed, days)),
        _ => None,
    }
}
