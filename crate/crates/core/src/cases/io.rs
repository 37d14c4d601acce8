//! `cases.csv`, `schema.json` and `incidents.jsonl`.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

use super::{Case, CaseConfig, CaseError, CaseLibrary, ResolvedIncident};
use crate::bn::{Value, Variable};
use crate::time::Minute;

pub const CASES_FILE: &str = "cases.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const RESOLVED_INCIDENTS_FILE: &str = "incidents.jsonl";

pub const CASE_SCHEMA_VERSION: u32 = 1;

/// Descriptor written next to `cases.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub schema_version: u32,
    /// Stream start and case timestamps are minutes after it.
    pub start: DateTime<Utc>,
    pub bottleneck_cells: Vec<usize>,
    pub config: CaseConfig,
    pub variables: Vec<Variable>,
}

impl SchemaFile {
    pub fn for_library(lib: &CaseLibrary, start: DateTime<Utc>) -> Self {
        SchemaFile {
            schema_version: CASE_SCHEMA_VERSION,
            start,
            bottleneck_cells: lib.bottleneck_cells.clone(),
            config: lib.config,
            variables: lib.schema().variables().to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CaseError> {
        let f: SchemaFile = serde_json::from_str(s).map_err(|e| CaseError::Format(e.to_string()))?;
        if f.schema_version != CASE_SCHEMA_VERSION {
            return Err(CaseError::Format(format!("unsupported schema version {}", f.schema_version)));
        }
        if super::case_schema(&f.bottleneck_cells).variables() != f.variables.as_slice() {
            return Err(CaseError::Format("variables do not match the case layout".into()));
        }
        Ok(f)
    }
}

fn csv_err(e: csv::Error) -> CaseError {
    CaseError::Format(e.to_string())
}

pub fn write_cases<W: Write>(w: W, lib: &CaseLibrary) -> Result<(), CaseError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string()];
    header.extend(lib.schema().variables().iter().map(|v| v.name.clone()));
    out.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for case in &lib.cases {
        row.clear();
        row.push(case.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string());
        row.extend(case.values().iter().map(|v| match v {
            Value::State(s) => s.to_string(),
            Value::Present(x) => format!("{x}"),
            Value::Absent => String::new(),
        }));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| CaseError::Format(e.to_string()))
}

pub fn read_cases<R: Read>(r: R, schema: &SchemaFile) -> Result<CaseLibrary, CaseError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let names: Vec<&str> = header.iter().skip(1).collect();
    let expected: Vec<&str> = schema.variables.iter().map(|v| v.name.as_str()).collect();
    if header.get(0) != Some("timestamp") || names != expected {
        return Err(CaseError::Format("cases.csv header does not match schema.json".into()));
    }
    let mut cases = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let ts: DateTime<Utc> = rec[0]
            .parse()
            .map_err(|_| CaseError::Format(format!("line {line}: bad timestamp")))?;
        let delta = (ts - schema.start).num_minutes();
        let minute = Minute::try_from(delta).map_err(|_| CaseError::Format(format!("line {line}: timestamp before start")))?;
        let values = schema
            .variables
            .iter()
            .zip(rec.iter().skip(1))
            .map(|(var, field)| {
                let bad = || CaseError::Format(format!("line {line}: bad value for {}", var.name));
                if var.is_continuous() {
                    if field.is_empty() {
                        Ok(Value::Absent)
                    } else {
                        field.parse::<f64>().map(Value::Present).map_err(|_| bad())
                    }
                } else {
                    let s: usize = field.parse().map_err(|_| bad())?;
                    if s >= var.arity().unwrap_or(0) {
                        return Err(bad());
                    }
                    Ok(Value::State(s))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        cases.push(Case::from_values(minute, ts, &values, schema.bottleneck_cells.len())?);
    }
    CaseLibrary::new(cases, schema.bottleneck_cells.clone(), schema.config)
}

pub fn write_incidents<W: Write>(mut w: W, incidents: &[ResolvedIncident]) -> std::io::Result<()> {
    for i in incidents {
        serde_json::to_writer(&mut w, i)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_incidents<R: BufRead>(r: R) -> Result<Vec<ResolvedIncident>, CaseError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CaseError::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CaseError::Format(format!("incidents line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
