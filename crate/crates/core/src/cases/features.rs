//! Temporal abstractions over a bottleneck's cells.

use serde::{Deserialize, Serialize};
use std::cell::Cell;

use super::CaseError;
use crate::bottleneck::{is_congested, Band, Bottleneck};
use crate::sim::{CellId, RoadNetwork, SensorStream};
use crate::time::Minute;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Trailing window for velocity dynamics, in minutes.
    pub horizon_minutes: u32,
    /// All-open minutes that end a block.
    pub reset_minutes: u32,
    /// How far back to look for the start of the current block.
    pub block_lookback_minutes: u32,
    pub incident_lookback_minutes: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            horizon_minutes: 30,
            reset_minutes: 20,
            block_lookback_minutes: 180,
            incident_lookback_minutes: 30,
        }
    }
}

/// Read access to a stream that refuses to look past `upto` and remembers
/// every attempt to do so.
#[derive(Debug)]
pub struct StreamView<'a> {
    stream: &'a SensorStream,
    upto: Minute,
    high_water: Cell<Option<Minute>>,
    violations: Cell<u32>,
}

impl<'a> StreamView<'a> {
    pub fn new(stream: &'a SensorStream, upto: Minute) -> Self {
        StreamView {
            stream,
            upto: upto.min(stream.minutes().saturating_sub(1)),
            high_water: Cell::new(None),
            violations: Cell::new(0),
        }
    }

    pub fn upto(&self) -> Minute {
        self.upto
    }

    fn touch(&self, m: Minute) -> bool {
        if self.high_water.get().map_or(true, |h| m > h) {
            self.high_water.set(Some(m));
        }
        if m > self.upto {
            self.violations.set(self.violations.get() + 1);
            false
        } else {
            true
        }
    }

    /// Speed at `(m, c)`, or `None` for minutes beyond the view.
    pub fn speed(&self, m: Minute, c: CellId) -> Option<f32> {
        self.touch(m).then(|| self.stream.speed(m, c))
    }

    pub fn violations(&self) -> u32 {
        self.violations.get()
    }

    /// Latest minute requested, allowed or not.
    pub fn high_water(&self) -> Option<Minute> {
        self.high_water.get()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckFeatures {
    pub blocked_count: u32,
    pub max_adjacent_blocked: u32,
    pub minutes_since_block_start: Option<f64>,
    pub velocity_change_rate: f64,
    pub velocity_change_density: f64,
    pub currently_jammed: bool,
}

/// Largest connected group of congested cells within `cells`.
fn max_adjacent(blocked: &[bool], cells: &[CellId], network: &RoadNetwork) -> u32 {
    let mut seen = vec![false; cells.len()];
    let mut best = 0;
    for start in 0..cells.len() {
        if !blocked[start] || seen[start] {
            continue;
        }
        let mut size = 0;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            size += 1;
            for n in network.neighbors(cells[i]) {
                if let Some(j) = cells.iter().position(|&c| c == n) {
                    if blocked[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        best = best.max(size);
    }
    best
}

fn any_blocked(view: &StreamView, cells: &[CellId], m: Minute) -> Result<bool, CaseError> {
    let mut any = false;
    for &c in cells {
        any |= is_congested(view.speed(m, c).ok_or(CaseError::Leakage(m))?);
    }
    Ok(any)
}

/// Minutes since the first congested reading after the most recent
/// all-open period of `reset_minutes`, capped by the lookback.
fn block_age(view: &StreamView, cells: &[CellId], t: Minute, cfg: &FeatureConfig) -> Result<f64, CaseError> {
    let floor = t.saturating_sub(cfg.block_lookback_minutes);
    let mut open_run = 0;
    let mut start = t;
    let mut m = t;
    loop {
        if any_blocked(view, cells, m)? {
            open_run = 0;
            start = m;
        } else {
            open_run += 1;
            if open_run >= cfg.reset_minutes {
                break;
            }
        }
        if m == floor {
            break;
        }
        m -= 1;
    }
    Ok(f64::from(t - start))
}

/// Features of `bottleneck` from readings at or before `t`.
pub fn extract_features(
    view: &StreamView,
    network: &RoadNetwork,
    bottleneck: &Bottleneck,
    t: Minute,
    cfg: &FeatureConfig,
) -> Result<BottleneckFeatures, CaseError> {
    let h = cfg.horizon_minutes;
    if h < 2 || t + 1 < h {
        return Err(CaseError::ShortWindow { minute: t, horizon: h });
    }
    let cells = &bottleneck.cells;
    let first = t + 1 - h;
    let get = |m: Minute, c: CellId| view.speed(m, c).ok_or(CaseError::Leakage(m));
    let now: Vec<f32> = cells.iter().map(|&c| get(t, c)).collect::<Result<_, _>>()?;
    let blocked: Vec<bool> = now.iter().map(|&v| is_congested(v)).collect();
    let blocked_count = blocked.iter().filter(|&&b| b).count() as u32;
    let currently_jammed = !cells.is_empty() && 2 * blocked_count as usize >= cells.len();

    let mut rate = 0.0;
    let mut changed = 0usize;
    for (k, &c) in cells.iter().enumerate() {
        let v0 = get(first, c)?;
        rate += (f64::from(now[k]) - f64::from(v0)) / f64::from(h - 1);
        let b0 = Band::of(v0);
        let mut moved = false;
        for m in first + 1..=t {
            moved |= Band::of(get(m, c)?) != b0;
        }
        changed += usize::from(moved);
    }
    let n = cells.len().max(1) as f64;
    Ok(BottleneckFeatures {
        blocked_count,
        max_adjacent_blocked: max_adjacent(&blocked, cells, network),
        minutes_since_block_start: if currently_jammed {
            Some(block_age(view, cells, t, cfg)?)
        } else {
            None
        },
        velocity_change_rate: rate / n,
        velocity_change_density: changed as f64 / n,
        currently_jammed,
    })
}
