use jambayes_core::bn::{structure_search, InferenceConfig, Method, Priors, SearchConfig, Value};
use jambayes_core::bottleneck::{congestion_fraction, identify};
use jambayes_core::cases::{
    build_cases, observation_values, observation_variables, resolve_incidents, split_sequential, CaseConfig, CaseLibrary,
    Inputs,
};
use jambayes_core::classifier::fit_classifier;
use jambayes_core::forecast::{evaluate, is_success, tabulate, DisplayBucket, Forecast};
use jambayes_core::incident::parse_feed;
use jambayes_core::reliability::*;
use jambayes_core::sim::{presets, simulate, Weather};
use proptest::prelude::*;

fn heavy_rain_cases(seed: u64, days: u32) -> CaseLibrary {
    let out = simulate(&presets::heavy_rain(seed, days)).unwrap();
    let profile = congestion_fraction(&out.stream, &out.network).unwrap();
    let set = identify(&profile, &out.network, 0.015).unwrap();
    let incidents = resolve_incidents(
        &parse_feed(&out.incident_feed()),
        &out.network,
        &set,
        out.calendar(),
        out.stream.minutes(),
    );
    let inputs = Inputs {
        network: &out.network,
        bottlenecks: &set,
        stream: &out.stream,
        context: &out.context,
        incidents: &incidents,
    };
    build_cases(&inputs, &CaseConfig::default()).unwrap()
}

fn quick() -> SearchConfig {
    SearchConfig {
        restarts: 0,
        ..SearchConfig::default()
    }
}

fn forecast() -> Forecast {
    Forecast {
        target: "b0.time_to_clear".into(),
        p_present: 0.9,
        mean_minutes: 30.0,
        std_minutes: 5.0,
        display_bucket: DisplayBucket::Minutes { minutes: 30 },
        method: Method::Exact,
        reliability_flag: None,
        surprise_flag: None,
    }
}

fn model(threshold: f64) -> ReliabilityModel {
    ReliabilityModel {
        flag_threshold: threshold,
        tolerance_minutes: 15.0,
        entries: Vec::new(),
    }
}

#[test]
fn labels_follow_the_tolerance_rule() {
    let m = |x| DisplayBucket::Minutes { minutes: x };
    assert!(is_success(30.0, m(30), Some(40.0), 15.0));
    assert!(!is_success(30.0, m(30), Some(50.0), 15.0));
    assert!(is_success(72.0, DisplayBucket::AtLeastHour, Some(75.0), 15.0));
}

#[test]
fn labels_match_evaluation_and_stored_predictions() {
    let lib = heavy_rain_cases(5, 16);
    let (train, test) = split_sequential(&lib, 0.75).unwrap();
    let base = structure_search(&train.to_dataset().unwrap(), &Priors::default(), &quick()).unwrap();
    let ic = InferenceConfig::default();
    let labels = label_reliability(&base, &test, 15.0, &ic).unwrap();
    assert!(!labels.is_empty());
    for o in &labels {
        assert_eq!(o.success, o.forecast.succeeds(o.actual, 15.0));
        assert_eq!(o.actual, test.cases[o.case_index].bottlenecks[o.bottleneck].target(o.kind));
    }
    let table = evaluate(&base, &test, 15.0, &ic).unwrap();
    assert_eq!(tabulate(&labels, test.bottleneck_count(), 15.0), table);

    let empty = CaseLibrary::new(Vec::new(), lib.bottleneck_cells.clone(), lib.config).unwrap();
    assert_eq!(label_reliability(&base, &empty, 15.0, &ic), Err(ReliabilityError::EmptyCases));
}

#[test]
fn single_class_labels_give_a_constant_model() {
    let lib = heavy_rain_cases(2, 8);
    let feats = observation_variables(lib.schema());
    let rows: Vec<Vec<Value>> = lib.cases.iter().map(|c| observation_values(lib.schema(), c)).collect();
    let all = vec![true; rows.len()];
    let c = fit_classifier(&feats, &rows, &all, &Priors::default(), &quick()).unwrap();
    assert!(c.degenerate && c.net.is_none());
    let ic = InferenceConfig::default();
    let right = rows
        .iter()
        .filter(|r| c.probability(r, &ic).unwrap() >= 0.5)
        .count();
    assert_eq!(right, rows.len());
    let p = c.probability(&rows[0], &ic).unwrap();
    assert!((p - (rows.len() as f64 + 0.5) / (rows.len() as f64 + 1.0)).abs() < 1e-12);
}

#[test]
fn planted_weather_failures_are_learned() {
    let lib = heavy_rain_cases(3, 30);
    let feats = observation_variables(lib.schema());
    let (train, test) = split_sequential(&lib, 0.75).unwrap();
    let prep = |l: &CaseLibrary| -> (Vec<Vec<Value>>, Vec<bool>) {
        let rows = l.cases.iter().map(|c| observation_values(l.schema(), c)).collect();
        let ys = l.cases.iter().map(|c| c.context.weather != Weather::HeavyRain).collect();
        (rows, ys)
    };
    let (rows, ys) = prep(&train);
    assert!(ys.iter().any(|&y| !y) && ys.iter().any(|&y| y));
    let c = fit_classifier(&feats, &rows, &ys, &Priors::default(), &quick()).unwrap();
    assert!(c.used_features().contains(&"weather".to_string()), "{:?}", c.used_features());

    let ic = InferenceConfig::default();
    let (rows, ys) = prep(&test);
    let right = rows
        .iter()
        .zip(&ys)
        .filter(|(r, &y)| (c.probability(r, &ic).unwrap() >= 0.5) == y)
        .count();
    let acc = right as f64 / rows.len() as f64;
    assert!(acc >= 0.9, "held-out accuracy {acc}");
}

#[test]
fn annotation_examples() {
    let m = model(DEFAULT_FLAG_THRESHOLD);
    let mut f = forecast();
    m.annotate(&mut f, 0.9);
    assert_eq!(f.reliability_flag, Some(false));
    m.annotate(&mut f, 0.4);
    assert_eq!(f.reliability_flag, Some(true));
}

#[test]
fn model_json_round_trip() {
    let lib = heavy_rain_cases(4, 10);
    let (train, test) = split_sequential(&lib, 0.5).unwrap();
    let base = structure_search(&train.to_dataset().unwrap(), &Priors::default(), &quick()).unwrap();
    let ic = InferenceConfig::default();
    let labels = label_reliability(&base, &test, 15.0, &ic).unwrap();
    let mut m = train_reliability(&test, &labels, 15.0, &Priors::default(), &quick()).unwrap();
    assert_eq!(m.entries.len(), 2 * lib.bottleneck_count());
    m.score_heldout(&test, &labels, &ic).unwrap();
    for e in &m.entries {
        if let Some(h) = &e.heldout {
            assert!((0.0..=1.0).contains(&h.accuracy));
        }
    }
    assert_eq!(ReliabilityModel::from_json(&m.to_json()).unwrap(), m);
}

proptest! {
    #[test]
    fn raising_the_threshold_never_unflags(p in 0.0f64..1.0, lo in 0.0f64..1.0, bump in 0.0f64..1.0) {
        let mut a = forecast();
        let mut b = forecast();
        model(lo).annotate(&mut a, p);
        model(lo + bump).annotate(&mut b, p);
        prop_assert!(a.reliability_flag.unwrap() <= b.reliability_flag.unwrap());
    }
}
