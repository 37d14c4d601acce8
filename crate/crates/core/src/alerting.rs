//! Routes over bottlenecks, time-windowed alert policies and the stateful
//! evaluator that turns forecasts and surprise signals into alerts.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Utc, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::Forecast;
use crate::surprise::SurpriseTag;
use crate::time::{format_hhmm_colon, parse_hhmm_colon, Calendar, Minute, MINUTES_PER_DAY};

pub const DEFAULT_REFRACTORY_MINUTES: u32 = 30;
pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlertError {
    #[error("route {0:?} has no bottlenecks")]
    EmptyRoute(String),
    #[error("route {0:?} has no active windows")]
    NoWindows(String),
    #[error("route {route:?}: bad window {window}")]
    BadWindow { route: String, window: String },
    #[error("{what} {name:?} already exists")]
    Duplicate { what: &'static str, name: String },
    #[error("route {route:?} references unknown bottleneck {bottleneck}")]
    UnknownBottleneck { route: String, bottleneck: usize },
    #[error("policy {policy:?} references unknown route {route:?}")]
    UnknownRoute { policy: String, route: String },
    #[error("policy {0:?} has no triggers")]
    NoTriggers(String),
    #[error("policy {policy:?}: {reason}")]
    BadTrigger { policy: String, reason: String },
    #[error("frame has {got} bottlenecks, expected {expected}")]
    FrameSize { got: usize, expected: usize },
    #[error("clock went from minute {last} back to {now}")]
    Clock { last: Minute, now: Minute },
    #[error("bad policy file: {0}")]
    Format(String),
}

/// Days of the week plus a same-day `[start, end)` clock range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub days: Vec<Weekday>,
    pub start: String,
    pub end: String,
}

impl Window {
    pub fn new(days: &[Weekday], start: u32, end: u32) -> Window {
        Window {
            days: days.to_vec(),
            start: format_hhmm_colon(start),
            end: format_hhmm_colon(end),
        }
    }

    /// Start and end as minutes after midnight, if the window is usable.
    pub fn range(&self) -> Option<(u32, u32)> {
        let s = parse_hhmm_colon(&self.start)?;
        let e = parse_hhmm_colon(&self.end)?;
        (s < e && e <= MINUTES_PER_DAY && !self.days.is_empty()).then_some((s, e))
    }

    pub fn contains(&self, calendar: Calendar, m: Minute) -> bool {
        let Some((s, e)) = self.range() else {
            return false;
        };
        let day = calendar.date(m).weekday();
        let t = calendar.minute_of_day(m);
        self.days.contains(&day) && s <= t && t < e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub name: String,
    pub bottlenecks: Vec<usize>,
    pub windows: Vec<Window>,
}

impl Route {
    pub fn validate(&self, bottleneck_count: usize) -> Result<(), AlertError> {
        if self.bottlenecks.is_empty() {
            return Err(AlertError::EmptyRoute(self.name.clone()));
        }
        if self.windows.is_empty() {
            return Err(AlertError::NoWindows(self.name.clone()));
        }
        if let Some(w) = self.windows.iter().find(|w| w.range().is_none()) {
            return Err(AlertError::BadWindow {
                route: self.name.clone(),
                window: format!("{:?} {}-{}", w.days, w.start, w.end),
            });
        }
        if let Some(&b) = self.bottlenecks.iter().find(|&&b| b >= bottleneck_count) {
            return Err(AlertError::UnknownBottleneck {
                route: self.name.clone(),
                bottleneck: b,
            });
        }
        Ok(())
    }

    pub fn is_active(&self, calendar: Calendar, m: Minute) -> bool {
        self.windows.iter().any(|w| w.contains(calendar, m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    RouteJammedNow,
    RouteClearedAfterBlock,
    WillJamWithin {
        minutes: u32,
    },
    WillClearWithin {
        minutes: u32,
    },
    SurpriseNow,
    /// Fires when a bottleneck's future-surprise probability exceeds the
    /// threshold; without one, the bottleneck's operating threshold.
    FutureSurprise {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
}

impl Trigger {
    pub fn label(&self) -> String {
        match self {
            Trigger::RouteJammedNow => "route_jammed_now".into(),
            Trigger::RouteClearedAfterBlock => "route_cleared_after_block".into(),
            Trigger::WillJamWithin { minutes } => format!("will_jam_within({minutes})"),
            Trigger::WillClearWithin { minutes } => format!("will_clear_within({minutes})"),
            Trigger::SurpriseNow => "surprise_now".into(),
            Trigger::FutureSurprise { threshold: Some(t) } => format!("future_surprise({t})"),
            Trigger::FutureSurprise { threshold: None } => "future_surprise".into(),
        }
    }
}

fn default_refractory() -> u32 {
    DEFAULT_REFRACTORY_MINUTES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertPolicy {
    pub name: String,
    pub route: String,
    pub triggers: Vec<Trigger>,
    #[serde(default = "default_refractory")]
    pub refractory_minutes: u32,
    /// Stand-in for presence sensing: a muted policy stays silent.
    #[serde(default)]
    pub muted: bool,
}

impl AlertPolicy {
    pub fn new(name: &str, route: &str, triggers: Vec<Trigger>) -> AlertPolicy {
        AlertPolicy {
            name: name.into(),
            route: route.into(),
            triggers,
            refractory_minutes: DEFAULT_REFRACTORY_MINUTES,
            muted: false,
        }
    }

    pub fn validate(&self) -> Result<(), AlertError> {
        if self.triggers.is_empty() {
            return Err(AlertError::NoTriggers(self.name.clone()));
        }
        let bad = |reason: String| AlertError::BadTrigger {
            policy: self.name.clone(),
            reason,
        };
        for t in &self.triggers {
            match t {
                Trigger::WillJamWithin { minutes: 0 } | Trigger::WillClearWithin { minutes: 0 } => {
                    return Err(bad(format!("{} needs a positive horizon", t.label())));
                }
                Trigger::FutureSurprise { threshold: Some(p) } if !(0.0..1.0).contains(p) => {
                    return Err(bad(format!("threshold {p} outside [0, 1)")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutureSurpriseSignal {
    pub p: f64,
    pub operating_threshold: Option<f64>,
}

/// What is known about one bottleneck at the frame's minute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BottleneckView {
    pub jammed: bool,
    pub time_to_clear: Option<Forecast>,
    pub time_to_jam: Option<Forecast>,
    pub future_surprise: Option<FutureSurpriseSignal>,
}

/// Aligned inputs for one evaluation step.
#[derive(Debug, Clone, Copy)]
pub struct AlertFrame<'a> {
    pub minute: Minute,
    pub calendar: Calendar,
    pub bottlenecks: &'a [BottleneckView],
    /// Tags at this minute; others are ignored.
    pub surprises: &'a [SurpriseTag],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub timestamp: DateTime<Utc>,
    pub minute: Minute,
    pub policy: String,
    pub route: String,
    pub trigger: Trigger,
    pub bottleneck: Option<usize>,
    pub summary: String,
}

/// Routes and policies as stored in `policies.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyStore {
    pub schema_version: u32,
    pub routes: Vec<Route>,
    pub policies: Vec<AlertPolicy>,
}

impl PolicyStore {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy store serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AlertError> {
        let store: PolicyStore = serde_json::from_str(s).map_err(|e| AlertError::Format(e.to_string()))?;
        if store.schema_version != POLICY_SCHEMA_VERSION {
            return Err(AlertError::Format(format!("unsupported schema version {}", store.schema_version)));
        }
        Ok(store)
    }
}

fn soon(f: &Option<Forecast>, minutes: u32) -> Option<&Forecast> {
    f.as_ref()
        .filter(|f| f.p_present >= 0.5 && f.mean_minutes <= f64::from(minutes))
}

/// Owns the route and policy set plus the per-route jam state and
/// per-(policy, trigger) refractory clocks.
#[derive(Debug, Clone)]
pub struct AlertEngine {
    bottleneck_count: usize,
    routes: Vec<Route>,
    policies: Vec<AlertPolicy>,
    route_jammed: BTreeMap<String, bool>,
    last_fired: BTreeMap<(String, usize), Minute>,
    last_minute: Option<Minute>,
}

impl AlertEngine {
    pub fn new(bottleneck_count: usize) -> AlertEngine {
        AlertEngine {
            bottleneck_count,
            routes: Vec::new(),
            policies: Vec::new(),
            route_jammed: BTreeMap::new(),
            last_fired: BTreeMap::new(),
            last_minute: None,
        }
    }

    pub fn from_store(bottleneck_count: usize, store: &PolicyStore) -> Result<AlertEngine, AlertError> {
        let mut e = AlertEngine::new(bottleneck_count);
        for r in &store.routes {
            e.add_route(r.clone())?;
        }
        for p in &store.policies {
            e.add_policy(p.clone())?;
        }
        Ok(e)
    }

    pub fn store(&self) -> PolicyStore {
        PolicyStore {
            schema_version: POLICY_SCHEMA_VERSION,
            routes: self.routes.clone(),
            policies: self.policies.clone(),
        }
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn policies(&self) -> &[AlertPolicy] {
        &self.policies
    }

    pub fn add_route(&mut self, route: Route) -> Result<(), AlertError> {
        route.validate(self.bottleneck_count)?;
        if self.routes.iter().any(|r| r.name == route.name) {
            return Err(AlertError::Duplicate {
                what: "route",
                name: route.name,
            });
        }
        self.routes.push(route);
        Ok(())
    }

    pub fn add_policy(&mut self, policy: AlertPolicy) -> Result<(), AlertError> {
        policy.validate()?;
        if !self.routes.iter().any(|r| r.name == policy.route) {
            return Err(AlertError::UnknownRoute {
                policy: policy.name,
                route: policy.route,
            });
        }
        if self.policies.iter().any(|p| p.name == policy.name) {
            return Err(AlertError::Duplicate {
                what: "policy",
                name: policy.name,
            });
        }
        self.policies.push(policy);
        Ok(())
    }

    /// Advances to `frame.minute` and returns the alerts it raises, in
    /// policy then trigger order.
    pub fn evaluate(&mut self, frame: &AlertFrame) -> Result<Vec<Alert>, AlertError> {
        if frame.bottlenecks.len() != self.bottleneck_count {
            return Err(AlertError::FrameSize {
                got: frame.bottlenecks.len(),
                expected: self.bottleneck_count,
            });
        }
        if let Some(last) = self.last_minute {
            if frame.minute <= last {
                return Err(AlertError::Clock {
                    last,
                    now: frame.minute,
                });
            }
        }
        self.last_minute = Some(frame.minute);

        let mut cleared = BTreeMap::new();
        for route in &self.routes {
            let now = route.bottlenecks.iter().any(|&b| frame.bottlenecks[b].jammed);
            let was = self.route_jammed.insert(route.name.clone(), now).unwrap_or(false);
            cleared.insert(route.name.as_str(), was && !now);
        }

        let timestamp = DateTime::<Utc>::from_naive_utc_and_offset(frame.calendar.datetime(frame.minute), Utc);
        let mut alerts = Vec::new();
        for policy in &self.policies {
            let route = self
                .routes
                .iter()
                .find(|r| r.name == policy.route)
                .expect("policies reference known routes");
            if policy.muted || !route.is_active(frame.calendar, frame.minute) {
                continue;
            }
            for (ti, trigger) in policy.triggers.iter().enumerate() {
                let Some((bottleneck, summary)) = fire(trigger, route, frame, cleared[route.name.as_str()]) else {
                    continue;
                };
                let key = (policy.name.clone(), ti);
                if let Some(&at) = self.last_fired.get(&key) {
                    if frame.minute < at + policy.refractory_minutes {
                        continue;
                    }
                }
                self.last_fired.insert(key, frame.minute);
                alerts.push(Alert {
                    timestamp,
                    minute: frame.minute,
                    policy: policy.name.clone(),
                    route: route.name.clone(),
                    trigger: trigger.clone(),
                    bottleneck,
                    summary,
                });
            }
        }
        Ok(alerts)
    }
}

/// The bottleneck and summary behind a trigger that holds at this frame.
fn fire(trigger: &Trigger, route: &Route, frame: &AlertFrame, cleared: bool) -> Option<(Option<usize>, String)> {
    let views = || route.bottlenecks.iter().map(|&b| (b, &frame.bottlenecks[b]));
    match trigger {
        Trigger::RouteJammedNow => views()
            .find(|(_, v)| v.jammed)
            .map(|(b, _)| (Some(b), format!("b{b} is jammed"))),
        Trigger::RouteClearedAfterBlock => cleared.then(|| (None, format!("route {} has cleared", route.name))),
        Trigger::WillJamWithin { minutes } => views().filter(|(_, v)| !v.jammed).find_map(|(b, v)| {
            soon(&v.time_to_jam, *minutes).map(|f| {
                (
                    Some(b),
                    format!("b{b} expected to jam in {:.0} min (p {:.2})", f.mean_minutes, f.p_present),
                )
            })
        }),
        Trigger::WillClearWithin { minutes } => {
            let jammed: Vec<_> = views().filter(|(_, v)| v.jammed).collect();
            let slowest = jammed
                .iter()
                .map(|(b, v)| soon(&v.time_to_clear, *minutes).map(|f| (*b, f.mean_minutes)))
                .collect::<Option<Vec<_>>>()?
                .into_iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))?;
            Some((
                Some(slowest.0),
                format!("route expected to clear in {:.0} min, last at b{}", slowest.1, slowest.0),
            ))
        }
        Trigger::SurpriseNow => frame
            .surprises
            .iter()
            .find(|t| t.minute == frame.minute && route.bottlenecks.contains(&t.bottleneck))
            .map(|t| {
                let state = if t.jammed { "jammed" } else { "open" };
                (
                    Some(t.bottleneck),
                    format!("b{} is unexpectedly {state} (p {:.3})", t.bottleneck, t.likelihood),
                )
            }),
        Trigger::FutureSurprise { threshold } => views().find_map(|(b, v)| {
            let s = v.future_surprise?;
            let thr = threshold.or(s.operating_threshold)?;
            (s.p > thr).then(|| (Some(b), format!("b{b} surprise likely soon (p {:.2} > {thr:.2})", s.p)))
        }),
    }
}
