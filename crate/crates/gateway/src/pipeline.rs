//! One function per CLI command. Each reads its inputs from the data
//! directory, writes its artifacts there and returns a JSON summary.

use std::io::Write;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::{json, Value as Json};

use jambayes_core::bn::{structure_search, BayesNet, InferenceConfig, Priors, SearchConfig};
use jambayes_core::bottleneck::{congestion_fraction, identify};
use jambayes_core::cases::io::{write_cases, write_incidents, SchemaFile, CASES_FILE, RESOLVED_INCIDENTS_FILE, SCHEMA_FILE};
use jambayes_core::cases::{build_cases, data_span, resolve_incidents, split_sequential, CaseConfig, CaseLibrary, Inputs};
use jambayes_core::forecast::evaluate as evaluate_forecasts;
use jambayes_core::future_surprise::{
    audit_leakage, build_surprise_cases, fnfp_curve, train_future_surprise, write_fnfp_csv, FnFpCurve, FutureSurpriseError,
    SurpriseCaseConfig, OPERATING_FN,
};
use jambayes_core::incident::parse_feed;
use jambayes_core::reliability::{label_reliability, train_reliability};
use jambayes_core::sim::io::{write_dir, Streams};
use jambayes_core::sim::{presets, simulate, SimConfig};
use jambayes_core::surprise::fit_marginal;
use jambayes_core::time::{Calendar, Minute};

use crate::cli::*;
use crate::files::*;
use crate::live::Live;

pub const DEFAULT_SEED: u64 = 1;

fn search(restarts: usize, seed: Option<u64>) -> SearchConfig {
    SearchConfig {
        restarts,
        seed: seed.unwrap_or(DEFAULT_SEED),
        ..SearchConfig::default()
    }
}

fn start_of(cal: Calendar) -> DateTime<Utc> {
    DateTime::<Utc>::from_naive_utc_and_offset(cal.datetime(0), Utc)
}

/// Minute index `m` of `fraction` of `n`, rounded down.
fn fraction_of(n: Minute, fraction: f64, what: &str) -> Result<Minute> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        bail!("{what} must be in (0, 1], got {fraction}");
    }
    Ok((f64::from(n) * fraction) as Minute)
}

pub fn simulate_cmd(dir: &DataDir, args: &SimulateArgs, seed: Option<u64>) -> Result<Json> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SimConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => presets::by_name(&args.preset, seed.unwrap_or(DEFAULT_SEED), args.days).with_context(|| {
            format!("unknown preset {:?}; expected one of {}", args.preset, presets::PRESETS.join(", "))
        })?,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = simulate(&cfg)?;
    write_dir(&dir.root, &out)?;
    dir.write(SIM_CONFIG_FILE, &cfg.to_toml())?;
    tracing::info!(minutes = out.stream.minutes(), cells = out.stream.cells(), "stream written");
    Ok(json!({
        "seed": cfg.seed,
        "days": cfg.days,
        "cells": out.stream.cells(),
        "minutes": out.stream.minutes(),
        "incidents": out.incidents.len(),
    }))
}

pub fn identify_cmd(dir: &DataDir, args: &IdentifyArgs) -> Result<Json> {
    let streams = dir.streams()?;
    let profile = congestion_fraction(&streams.stream, &streams.network)?;
    let set = identify(&profile, &streams.network, args.threshold)?;
    dir.write(PROFILE_FILE, &serde_json::to_string(&profile)?)?;
    dir.write(BOTTLENECKS_FILE, &set.to_json())?;
    Ok(json!({
        "threshold": set.threshold,
        "bottlenecks": set.bottlenecks.iter().map(|b| b.cells.len()).collect::<Vec<_>>(),
    }))
}

fn inputs<'a>(streams: &'a Streams, set: &'a jambayes_core::bottleneck::BottleneckSet, incidents: &'a [jambayes_core::cases::ResolvedIncident]) -> Inputs<'a> {
    Inputs {
        network: &streams.network,
        bottlenecks: set,
        stream: &streams.stream,
        context: &streams.context,
        incidents,
    }
}

pub fn build_cases_cmd(dir: &DataDir, args: &BuildCasesArgs) -> Result<Json> {
    let streams = dir.streams()?;
    let set = dir.bottlenecks()?;
    let cal = streams.stream.calendar();
    let events = parse_feed(&streams.incident_feed);
    let incidents = resolve_incidents(&events, &streams.network, &set, cal, streams.stream.minutes());
    let cfg = CaseConfig {
        sample_interval_minutes: args.sample_interval,
        censor_minutes: args.censor,
        ..CaseConfig::default()
    };
    let lib = build_cases(&inputs(&streams, &set, &incidents), &cfg)?;
    write_cases(dir.create(CASES_FILE)?, &lib)?;
    dir.write(SCHEMA_FILE, &SchemaFile::for_library(&lib, start_of(cal)).to_json())?;
    let mut w = dir.create(RESOLVED_INCIDENTS_FILE)?;
    write_incidents(&mut w, &incidents)?;
    w.flush()?;
    Ok(json!({
        "cases": lib.len(),
        "reports": events.len(),
        "incidents": incidents.len(),
        "span": data_span(&lib),
    }))
}

fn learn(lib: &CaseLibrary, search: &SearchConfig) -> Result<BayesNet> {
    let mut net = structure_search(&lib.to_dataset()?, &Priors::default(), search)?;
    net.meta.data_span = data_span(lib);
    Ok(net)
}

pub fn train_cmd(dir: &DataDir, args: &TrainArgs, seed: Option<u64>) -> Result<Json> {
    let lib = dir.cases()?;
    let (train, test) = split_sequential(&lib, args.train_fraction)?;
    let search = search(args.restarts, seed);
    let net = learn(&train, &search)?;
    dir.write(MODEL_FILE, &net.to_json()?)?;
    let mut summary = json!({
        "train_cases": train.len(),
        "test_cases": test.len(),
        "edges": net.edges().len(),
        "score": net.score(),
        "span": net.meta.data_span,
    });
    if args.reliability {
        let (inner, validation) = split_sequential(&train, 0.75)?;
        let base = learn(&inner, &search)?;
        let ic = InferenceConfig::default();
        let labels = label_reliability(&base, &validation, args.tolerance, &ic)?;
        let mut model = train_reliability(&validation, &labels, args.tolerance, &Priors::default(), &search)?;
        let heldout = label_reliability(&base, &test, args.tolerance, &ic)?;
        model.score_heldout(&test, &heldout, &ic)?;
        dir.write(RELIABILITY_FILE, &model.to_json())?;
        summary["reliability"] = json!(model
            .entries
            .iter()
            .map(|e| json!({
                "bottleneck": e.bottleneck,
                "kind": e.kind,
                "heldout": e.heldout,
                "features": e.classifier.used_features(),
            }))
            .collect::<Vec<_>>());
    }
    Ok(summary)
}

pub fn evaluate_cmd(dir: &DataDir, args: &EvaluateArgs) -> Result<Json> {
    let lib = dir.cases()?;
    let net = dir.model()?;
    let (_, test) = split_sequential(&lib, args.train_fraction)?;
    let table = evaluate_forecasts(&net, &test, args.tolerance, &InferenceConfig::default())?;
    table.write_csv(dir.create(ACCURACY_FILE)?)?;
    Ok(json!({
        "test_cases": test.len(),
        "tolerance_minutes": table.tolerance_minutes,
        "mean_clear": table.mean_clear(),
        "mean_jam": table.mean_jam(),
        "rows": table.rows.iter().map(|r| json!({
            "bottleneck": r.bottleneck,
            "clear_acc": r.clear_acc,
            "jam_acc": r.jam_acc,
            "clear_n": r.clear_n,
            "jam_n": r.jam_n,
        })).collect::<Vec<_>>(),
    }))
}

#[derive(Debug, Serialize)]
struct SurpriseSummary {
    threshold: f64,
    fit_minutes: [Minute; 2],
    tagged_minutes: [Minute; 2],
    tags: usize,
    tags_per_bottleneck: Vec<usize>,
}

pub fn surprise_eval_cmd(dir: &DataDir, args: &SurpriseEvalArgs) -> Result<Json> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        bail!("threshold must be in (0, 1), got {}", args.threshold);
    }
    let streams = dir.streams()?;
    let set = dir.bottlenecks()?;
    let n = streams.stream.minutes();
    let to = fraction_of(n, args.fit_fraction, "fit fraction")?;
    let mut marginal = fit_marginal(&streams.stream, &streams.context, &set, 0, to)?;
    marginal.threshold = args.threshold;
    let from = if to >= n { 0 } else { to };
    let tags = marginal.tag_range(&streams.stream, &streams.context, &set, from, n)?;
    dir.write(MARGINAL_FILE, &marginal.to_json())?;
    let mut w = dir.create(SURPRISES_FILE)?;
    let mut per = vec![0; set.len()];
    for t in &tags {
        per[t.bottleneck] += 1;
        writeln!(w, "{}", serde_json::to_string(t)?)?;
    }
    w.flush()?;
    let summary = SurpriseSummary {
        threshold: args.threshold,
        fit_minutes: [0, to],
        tagged_minutes: [from, n],
        tags: tags.len(),
        tags_per_bottleneck: per,
    };
    dir.write(SURPRISE_SUMMARY_FILE, &serde_json::to_string_pretty(&summary)?)?;
    Ok(serde_json::to_value(summary)?)
}

#[derive(Debug, Serialize)]
struct FutureSurpriseSummary {
    lead_minutes: u32,
    train_cases: usize,
    test_cases: usize,
    leakage: jambayes_core::future_surprise::LeakageAudit,
    leakage_violations: usize,
    curves: Vec<CurveSummary>,
    /// Bottlenecks whose held-out cases lack surprises or non-surprises.
    undefined: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    bottleneck: usize,
    positives: usize,
    negatives: usize,
    monotone: bool,
    operating_threshold: Option<f64>,
    operating_fn: Option<f64>,
    operating_fp: Option<f64>,
    features: Vec<String>,
}

pub fn future_surprise_eval_cmd(dir: &DataDir, args: &FutureSurpriseEvalArgs, seed: Option<u64>) -> Result<Json> {
    let streams = dir.streams()?;
    let set = dir.bottlenecks()?;
    let case = if dir.exists(SCHEMA_FILE) {
        dir.schema()?.config
    } else {
        CaseConfig::default()
    };
    let incidents = dir.incidents()?;
    let inputs = inputs(&streams, &set, &incidents);
    let to = fraction_of(streams.stream.minutes(), args.train_fraction, "train fraction")?;
    let marginal = fit_marginal(&streams.stream, &streams.context, &set, 0, to)?;
    let cfg = SurpriseCaseConfig {
        lead_minutes: args.lead,
        sample_interval_minutes: args.sample_interval,
        case,
    };
    let lib = build_surprise_cases(&inputs, &marginal, &cfg)?;
    let (train, test) = lib.split_sequential(args.train_fraction)?;
    let mut model = train_future_surprise(&train, &Priors::default(), &search(args.restarts, seed))?;
    let ic = InferenceConfig::default();
    let mut curves: Vec<FnFpCurve> = Vec::new();
    let mut summaries = Vec::new();
    let mut undefined = Vec::new();
    for b in 0..set.len() {
        match fnfp_curve(&model, b, &test, &ic) {
            Ok(curve) => {
                let op = curve.operating_point(OPERATING_FN);
                model.entries[b].operating_threshold = op.map(|p| p.threshold);
                summaries.push(CurveSummary {
                    bottleneck: b,
                    positives: curve.positives,
                    negatives: curve.negatives,
                    monotone: curve.is_monotone(),
                    operating_threshold: op.map(|p| p.threshold),
                    operating_fn: op.map(|p| p.fn_rate),
                    operating_fp: op.map(|p| p.fp_rate),
                    features: model.entries[b].classifier.used_features(),
                });
                curves.push(curve);
            }
            Err(FutureSurpriseError::NoSurprises(_) | FutureSurpriseError::NoNegatives(_)) => undefined.push(b),
            Err(e) => return Err(e.into()),
        }
    }
    let minutes: Vec<Minute> = lib.cases.iter().map(|c| c.minute).collect();
    let leakage = audit_leakage(&inputs, &case, &minutes)?;
    write_fnfp_csv(dir.create(FNFP_FILE)?, &curves)?;
    dir.write(FUTURE_SURPRISE_FILE, &model.to_json())?;
    dir.write(MARGINAL_FILE, &marginal.to_json())?;
    let summary = FutureSurpriseSummary {
        lead_minutes: args.lead,
        train_cases: train.len(),
        test_cases: test.len(),
        leakage_violations: leakage.violations,
        leakage,
        curves: summaries,
        undefined,
    };
    if summary.leakage_violations > 0 {
        tracing::error!(violations = summary.leakage_violations, "features read data past the case minute");
    }
    dir.write(FUTURE_SURPRISE_SUMMARY_FILE, &serde_json::to_string_pretty(&summary)?)?;
    Ok(serde_json::to_value(summary)?)
}

/// Parses a replay start given as a stream minute or RFC 3339 timestamp.
pub fn resolve_start(dir: &DataDir, start: Option<&str>) -> Result<Option<Minute>> {
    let Some(s) = start else { return Ok(None) };
    if let Ok(m) = s.parse::<Minute>() {
        return Ok(Some(m));
    }
    let cal = Calendar::new(dir.schema()?.start.date_naive());
    cal.parse_rfc3339(s)
        .map(Some)
        .with_context(|| format!("{s:?} is neither a minute nor a timestamp on the stream's grid"))
}

pub fn replay_cmd(dir: &DataDir, args: &ReplayArgs) -> Result<Json> {
    let start = resolve_start(dir, args.from.as_deref())?;
    let mut live = Live::load(dir.clone(), start)?;
    let from = live.frame.minute;
    let mut alerts = live.evaluate_current()?;
    alerts.extend(live.advance(args.minutes)?);
    for a in &alerts {
        tracing::info!(policy = %a.policy, minute = a.minute, summary = %a.summary, "alert");
    }
    Ok(json!({
        "from": from,
        "to": live.frame.minute,
        "exhausted": live.exhausted(),
        "alerts": alerts.len(),
    }))
}
