//! Parsing and formatting of terse traffic incident reports.
//!
//! A report is a short block of lines such as
//!
//! ```text
//! Operator ID: Nick
//! Heading: INCIDENT
//! Message: INCIDENT INFORMATION
//! Cleared 1637: I-405 SB
//! JS I-90 ACC BLK RL CCTV
//! 1623 - WSP, FIR ON SCENE
//! ```
//!
//! An optional `Date: YYYY-MM-DD` line anchors the local times to a day.

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty incident report")]
    Empty,
}

#[derive(Debug, Error)]
pub enum CodesError {
    #[error("invalid code dictionary: {0}")]
    Invalid(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum Direction {
    NB,
    SB,
    EB,
    WB,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

impl Direction {
    pub fn code(self) -> Option<&'static str> {
        match self {
            Direction::NB => Some("NB"),
            Direction::SB => Some("SB"),
            Direction::EB => Some("EB"),
            Direction::WB => Some("WB"),
            Direction::Unknown => None,
        }
    }

    pub fn from_code(s: &str) -> Direction {
        match s {
            "NB" => Direction::NB,
            "SB" => Direction::SB,
            "EB" => Direction::EB,
            "WB" => Direction::WB,
            _ => Direction::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    Accident,
    Blocking,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct IncidentEvent {
    pub date: Option<NaiveDate>,
    pub operator: Option<String>,
    pub road: Option<String>,
    pub direction: Direction,
    /// Location qualifier such as `JS` (just south of).
    pub relation: Option<String>,
    pub landmark: Option<String>,
    pub kind: IncidentKind,
    /// A `BLK` code was present, whatever the kind.
    pub blocking: bool,
    pub lanes: Vec<String>,
    pub responders: BTreeSet<String>,
    pub reported: Option<NaiveTime>,
    pub cleared: Option<NaiveTime>,
    pub raw: String,
}

impl IncidentEvent {
    pub fn is_accident(&self) -> bool {
        self.kind == IncidentKind::Accident
    }
}

/// The code vocabulary recognized by the parser.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Codes {
    pub kinds: BTreeMap<String, String>,
    pub lanes: BTreeMap<String, String>,
    pub relations: BTreeMap<String, String>,
    pub responders: BTreeMap<String, String>,
    pub equipment: BTreeMap<String, String>,
    pub directions: BTreeMap<String, String>,
}

const BUILTIN_CODES: &str = include_str!("codes.toml");

impl Codes {
    pub fn from_toml(s: &str) -> Result<Self, CodesError> {
        Ok(toml::from_str(s)?)
    }

    /// The dictionary shipped with the crate.
    pub fn builtin() -> &'static Codes {
        static CODES: OnceLock<Codes> = OnceLock::new();
        CODES.get_or_init(|| Codes::from_toml(BUILTIN_CODES).expect("bundled codes.toml is valid"))
    }

    /// Codes that end a landmark phrase.
    fn is_code(&self, tok: &str) -> bool {
        self.kinds.contains_key(tok)
            || self.lanes.contains_key(tok)
            || self.responders.contains_key(tok)
            || self.equipment.contains_key(tok)
    }
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .map(|t| t.trim_matches(|c: char| matches!(c, ';' | '.' | ':')))
        .filter(|t| !t.is_empty())
}

/// `HHMM` with both parts in range.
fn parse_hhmm(tok: &str) -> Option<NaiveTime> {
    if tok.len() != 4 || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let h: u32 = tok[..2].parse().ok()?;
    let m: u32 = tok[2..].parse().ok()?;
    NaiveTime::from_hms_opt(h, m, 0)
}

pub fn format_hhmm(t: NaiveTime) -> String {
    format!("{:02}{:02}", t.hour(), t.minute())
}

/// Splits `Key: value`, matching the key case-insensitively.
fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = line.split_once(':')?;
    k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
}

pub fn parse(text: &str) -> Result<IncidentEvent, ParseError> {
    parse_with(text, Codes::builtin())
}

/// Best-effort extraction; unknown tokens are ignored.
pub fn parse_with(text: &str, codes: &Codes) -> Result<IncidentEvent, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut ev = IncidentEvent {
        raw: text.to_string(),
        ..IncidentEvent::default()
    };
    let mut accident = false;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(v) = field(line, "Date") {
            if ev.date.is_none() {
                ev.date = NaiveDate::parse_from_str(v, "%Y-%m-%d").ok();
            }
            continue;
        }
        if let Some(v) = field(line, "Operator ID") {
            if ev.operator.is_none() && !v.is_empty() {
                ev.operator = Some(v.to_string());
            }
            continue;
        }
        if field(line, "Heading").is_some() || field(line, "Message").is_some() {
            continue;
        }

        let mut body = line;
        let mut first = line.split_whitespace();
        if first.next().is_some_and(|w| w.eq_ignore_ascii_case("cleared")) {
            if let Some(rest) = first.next() {
                if let Some(t) = parse_hhmm(rest.trim_end_matches(':')) {
                    if ev.cleared.is_none() {
                        ev.cleared = Some(t);
                    }
                    body = line.split_once(':').map_or("", |(_, r)| r.trim());
                }
            }
        }

        let toks: Vec<&str> = tokens(body).collect();
        if toks.is_empty() {
            continue;
        }
        if ev.road.is_none() && toks.len() >= 2 && codes.directions.contains_key(toks[1]) {
            ev.road = Some(toks[0].to_string());
            ev.direction = Direction::from_code(toks[1]);
            continue;
        }
        let mut rest = &toks[..];
        if let Some(t) = parse_hhmm(toks[0]) {
            if ev.reported.is_none() {
                ev.reported = Some(t);
            }
            rest = &toks[1..];
        } else if codes.relations.contains_key(toks[0]) && ev.relation.is_none() {
            ev.relation = Some(toks[0].to_string());
            let n = toks[1..].iter().take_while(|t| !codes.is_code(t)).count();
            if n > 0 {
                ev.landmark = Some(toks[1..=n].join(" "));
            }
            rest = &toks[1 + n..];
        }
        for &tok in rest {
            match tok {
                "ACC" => accident = true,
                "BLK" => ev.blocking = true,
                _ if codes.lanes.contains_key(tok) => {
                    if !ev.lanes.iter().any(|l| l == tok) {
                        ev.lanes.push(tok.to_string());
                    }
                }
                _ if codes.responders.contains_key(tok) => {
                    ev.responders.insert(tok.to_string());
                }
                _ => {}
            }
        }
    }
    ev.kind = if accident {
        IncidentKind::Accident
    } else if ev.blocking {
        IncidentKind::Blocking
    } else {
        IncidentKind::Other
    };
    Ok(ev)
}

/// Renders an event in report form. `raw` is not used.
pub fn format(ev: &IncidentEvent) -> String {
    let mut lines = Vec::new();
    if let Some(d) = ev.date {
        lines.push(format!("Date: {}", d.format("%Y-%m-%d")));
    }
    if let Some(op) = &ev.operator {
        lines.push(format!("Operator ID: {op}"));
    }
    lines.push("Heading: INCIDENT".to_string());
    lines.push("Message: INCIDENT INFORMATION".to_string());
    let road = match (&ev.road, ev.direction.code()) {
        (Some(r), Some(d)) => Some(format!("{r} {d}")),
        (Some(r), None) => Some(r.clone()),
        _ => None,
    };
    match (ev.cleared, road) {
        (Some(t), Some(r)) => lines.push(format!("Cleared {}: {r}", format_hhmm(t))),
        (Some(t), None) => lines.push(format!("Cleared {}:", format_hhmm(t))),
        (None, Some(r)) => lines.push(r),
        (None, None) => {}
    }
    let mut desc = Vec::new();
    if let Some(rel) = &ev.relation {
        desc.push(rel.clone());
        if let Some(l) = &ev.landmark {
            desc.push(l.clone());
        }
    }
    if ev.kind == IncidentKind::Accident {
        desc.push("ACC".to_string());
    }
    if ev.blocking {
        desc.push("BLK".to_string());
    }
    desc.extend(ev.lanes.iter().cloned());
    let responders: Vec<&str> = ev.responders.iter().map(String::as_str).collect();
    match ev.reported {
        Some(t) => {
            if !desc.is_empty() {
                lines.push(desc.join(" "));
            }
            if responders.is_empty() {
                lines.push(format!("{} - ON SCENE", format_hhmm(t)));
            } else {
                lines.push(format!("{} - {} ON SCENE", format_hhmm(t), responders.join(", ")));
            }
        }
        None => {
            desc.extend(responders.iter().map(|r| r.to_string()));
            if !desc.is_empty() {
                lines.push(desc.join(" "));
            }
        }
    }
    lines.join("\n")
}

/// Splits a feed into blank-line separated blocks.
pub fn split_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        blocks.push(cur.join("\n"));
    }
    blocks
}

pub fn parse_feed(text: &str) -> Vec<IncidentEvent> {
    split_blocks(text).iter().filter_map(|b| parse(b).ok()).collect()
}
