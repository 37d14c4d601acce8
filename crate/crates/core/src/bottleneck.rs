//! Per-cell congestion fractions and threshold-based bottleneck regions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{CellId, RoadNetwork, SensorStream};
use crate::time::Minute;

/// Speeds below this are congested (red or black).
pub const CONGESTED_BELOW_MPH: f32 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Green,
    Yellow,
    Red,
    Black,
}

impl Band {
    pub fn of(speed: f32) -> Band {
        if speed >= 45.0 {
            Band::Green
        } else if speed >= 30.0 {
            Band::Yellow
        } else if speed >= 15.0 {
            Band::Red
        } else {
            Band::Black
        }
    }
}

pub fn is_congested(speed: f32) -> bool {
    speed < CONGESTED_BELOW_MPH
}

/// A set of cells is jammed when at least half of them are congested.
pub fn cells_jammed(frame: &[f32], cells: &[CellId]) -> bool {
    let congested = cells.iter().filter(|&&c| is_congested(frame[c])).count();
    !cells.is_empty() && 2 * congested >= cells.len()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BottleneckError {
    #[error("stream has no readings")]
    EmptyStream,
    #[error("stream covers {stream} cells but the network has {network}")]
    CellMismatch { stream: usize, network: usize },
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("no minute selected for the profile")]
    NoMinutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionProfile {
    /// Congested share of observed minutes, per cell.
    pub fractions: Vec<f64>,
    pub observed_minutes: u32,
}

pub fn congestion_fraction(stream: &SensorStream, network: &RoadNetwork) -> Result<CongestionProfile, BottleneckError> {
    congestion_fraction_where(stream, network, |_| true)
}

/// Profile restricted to the minutes accepted by `include`.
pub fn congestion_fraction_where(
    stream: &SensorStream,
    network: &RoadNetwork,
    include: impl Fn(Minute) -> bool,
) -> Result<CongestionProfile, BottleneckError> {
    if stream.minutes() == 0 || stream.cells() == 0 {
        return Err(BottleneckError::EmptyStream);
    }
    if stream.cells() != network.len() {
        return Err(BottleneckError::CellMismatch {
            stream: stream.cells(),
            network: network.len(),
        });
    }
    let mut counts = vec![0u32; stream.cells()];
    let mut observed = 0u32;
    for m in (0..stream.minutes()).filter(|&m| include(m)) {
        observed += 1;
        for (c, &v) in stream.frame(m).iter().enumerate() {
            counts[c] += u32::from(is_congested(v));
        }
    }
    if observed == 0 {
        return Err(BottleneckError::NoMinutes);
    }
    Ok(CongestionProfile {
        fractions: counts.iter().map(|&k| f64::from(k) / f64::from(observed)).collect(),
        observed_minutes: observed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub id: usize,
    pub cells: Vec<CellId>,
    pub cell_ids: Vec<String>,
    pub peak_fraction: f64,
}

impl Bottleneck {
    pub fn is_jammed(&self, frame: &[f32]) -> bool {
        cells_jammed(frame, &self.cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckSet {
    pub threshold: f64,
    pub bottlenecks: Vec<Bottleneck>,
}

impl BottleneckSet {
    pub fn len(&self) -> usize {
        self.bottlenecks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bottlenecks.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Bottleneck> {
        self.bottlenecks.get(id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bottlenecks serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Bottlenecks whose cells include any of `cells`.
    pub fn touching(&self, cells: &[CellId]) -> Vec<usize> {
        self.bottlenecks
            .iter()
            .filter(|b| b.cells.iter().any(|c| cells.contains(c)))
            .map(|b| b.id)
            .collect()
    }
}

/// Maximal connected components of cells with fraction `>= threshold`,
/// ordered by descending peak fraction, then lowest cell.
pub fn identify(profile: &CongestionProfile, network: &RoadNetwork, threshold: f64) -> Result<BottleneckSet, BottleneckError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(BottleneckError::Threshold(threshold));
    }
    if profile.fractions.len() != network.len() {
        return Err(BottleneckError::CellMismatch {
            stream: profile.fractions.len(),
            network: network.len(),
        });
    }
    let marked: Vec<bool> = profile.fractions.iter().map(|&f| f >= threshold).collect();
    let mut seen = vec![false; network.len()];
    let mut comps: Vec<(f64, Vec<CellId>)> = Vec::new();
    for start in 0..network.len() {
        if !marked[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            comp.push(c);
            for n in network.neighbors(c) {
                if marked[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        comp.sort_unstable();
        let peak = comp.iter().map(|&c| profile.fractions[c]).fold(f64::MIN, f64::max);
        comps.push((peak, comp));
    }
    comps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1[0].cmp(&b.1[0])));
    Ok(BottleneckSet {
        threshold,
        bottlenecks: comps
            .into_iter()
            .enumerate()
            .map(|(id, (peak, cells))| Bottleneck {
                id,
                cell_ids: cells.iter().map(|&c| network.cell_id(c).to_string()).collect(),
                cells,
                peak_fraction: peak,
            })
            .collect(),
    })
}
