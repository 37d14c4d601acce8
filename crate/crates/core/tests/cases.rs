use chrono::{NaiveDate, TimeZone, Utc};
use jambayes_core::bottleneck::{congestion_fraction, identify, Bottleneck, BottleneckSet};
use jambayes_core::cases::io::{read_cases, write_cases, SchemaFile};
use jambayes_core::cases::{
    build_cases, extract_features, observe, resolve_incidents, split_sequential, CaseConfig, CaseError, FeatureConfig,
    Inputs, StreamView,
};
use jambayes_core::incident::{parse, parse_feed, Direction};
use jambayes_core::sim::network::{Landmark, Region, Road};
use jambayes_core::sim::{presets, simulate, ContextRecord, RoadNetwork, SensorStream, Weather};
use jambayes_core::time::{Calendar, Minute, MINUTES_PER_DAY};
use proptest::prelude::*;

const FIG: &str = "Operator ID: Nick\nHeading: INCIDENT\nMessage: INCIDENT INFORMATION\nCleared 1637: I-405 SB\nJS I-90 ACC BLK RL CCTV\n1623 - WSP, FIR ON SCENE";

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 4).unwrap()
}

fn line(n: usize) -> RoadNetwork {
    let cells: Vec<String> = (0..n).map(|i| format!("I405SB-{i:02}")).collect();
    let adjacency = (0..n).map(|i| if i + 1 < n { vec![i + 1] } else { vec![] }).collect();
    RoadNetwork::new(
        cells,
        adjacency,
        vec![Road {
            name: "I-405".into(),
            direction: Direction::SB,
            cells: (0..n).collect(),
        }],
        vec![Region {
            name: "R0".into(),
            cells: (0..n).collect(),
        }],
        vec![Landmark {
            road: "I-405".into(),
            direction: Direction::SB,
            name: "I-90".into(),
            region: "R0".into(),
        }],
    )
    .unwrap()
}

fn stream(cells: usize, minutes: Minute, speed: impl Fn(Minute, usize) -> f32) -> SensorStream {
    let mut v = Vec::with_capacity(cells * minutes as usize);
    for m in 0..minutes {
        for c in 0..cells {
            v.push(speed(m, c));
        }
    }
    SensorStream::new(Calendar::new(start()), cells, minutes, v).unwrap()
}

fn context(minutes: Minute) -> Vec<ContextRecord> {
    let cal = Calendar::new(start());
    (0..minutes / 15)
        .map(|s| ContextRecord {
            timestamp: Utc.from_utc_datetime(&cal.datetime(s * 15)),
            weather: Weather::Dry,
            temperature: 50.0,
            holiday: false,
            school_in_session: true,
            major_event: None,
        })
        .collect()
}

fn whole(n: usize) -> BottleneckSet {
    BottleneckSet {
        threshold: 0.5,
        bottlenecks: vec![Bottleneck {
            id: 0,
            cells: (0..n).collect(),
            cell_ids: (0..n).map(|i| format!("I405SB-{i:02}")).collect(),
            peak_fraction: 1.0,
        }],
    }
}

#[test]
fn open_window_has_no_blockage() {
    let net = line(3);
    let s = stream(3, 60, |_, _| 60.0);
    let f = extract_features(&StreamView::new(&s, 59), &net, &whole(3).bottlenecks[0], 59, &FeatureConfig::default()).unwrap();
    assert_eq!(f.blocked_count, 0);
    assert_eq!(f.max_adjacent_blocked, 0);
    assert!(!f.currently_jammed);
    assert_eq!(f.minutes_since_block_start, None);
    assert_eq!(f.velocity_change_rate, 0.0);
    assert_eq!(f.velocity_change_density, 0.0);
}

#[test]
fn longest_adjacent_run() {
    let net = line(4);
    let s = stream(4, 40, |_, c| if c == 2 { 60.0 } else { 10.0 });
    let f = extract_features(&StreamView::new(&s, 39), &net, &whole(4).bottlenecks[0], 39, &FeatureConfig::default()).unwrap();
    assert_eq!(f.blocked_count, 3);
    assert_eq!(f.max_adjacent_blocked, 2);
    assert!(f.currently_jammed);
    assert_eq!(f.minutes_since_block_start, Some(39.0));
}

#[test]
fn finite_difference_rate() {
    let net = line(1);
    let speeds = [60.0, 55.0, 45.0, 30.0, 20.0];
    let s = stream(1, 5, |m, _| speeds[m as usize]);
    let cfg = FeatureConfig {
        horizon_minutes: 5,
        ..FeatureConfig::default()
    };
    let f = extract_features(&StreamView::new(&s, 4), &net, &whole(1).bottlenecks[0], 4, &cfg).unwrap();
    assert_eq!(f.velocity_change_rate, -10.0);
    // green, green, green, yellow, red
    assert_eq!(f.velocity_change_density, 1.0);
    assert!(matches!(
        extract_features(&StreamView::new(&s, 3), &net, &whole(1).bottlenecks[0], 3, &cfg),
        Err(CaseError::ShortWindow { .. })
    ));
}

#[test]
fn block_age_restarts_after_open_period() {
    let net = line(1);
    // Jam 10..40, open 40..70 (30 open minutes), jam again from 70.
    let s = stream(1, 100, |m, _| if (10..40).contains(&m) || m >= 70 { 10.0 } else { 60.0 });
    let b = &whole(1).bottlenecks[0];
    let f = extract_features(&StreamView::new(&s, 90), &net, b, 90, &FeatureConfig::default()).unwrap();
    assert_eq!(f.minutes_since_block_start, Some(20.0));
    // A 10-minute gap does not reset.
    let s = stream(1, 100, |m, _| if (10..40).contains(&m) || m >= 50 { 10.0 } else { 60.0 });
    let f = extract_features(&StreamView::new(&s, 90), &net, b, 90, &FeatureConfig::default()).unwrap();
    assert_eq!(f.minutes_since_block_start, Some(80.0));
}

fn day_inputs(minutes: Minute, speed: impl Fn(Minute, usize) -> f32) -> (RoadNetwork, BottleneckSet, SensorStream, Vec<ContextRecord>) {
    (line(3), whole(3), stream(3, minutes, speed), context(minutes))
}

#[test]
fn time_to_clear_from_forward_scan() {
    let (net, set, s, ctx) = day_inputs(MINUTES_PER_DAY, |m, _| if (480..520).contains(&m) { 10.0 } else { 60.0 });
    let inputs = Inputs {
        network: &net,
        bottlenecks: &set,
        stream: &s,
        context: &ctx,
        incidents: &[],
    };
    let cfg = CaseConfig {
        sample_interval_minutes: 5,
        ..CaseConfig::default()
    };
    let lib = build_cases(&inputs, &cfg).unwrap();
    let at = |m: Minute| lib.cases.iter().find(|c| c.minute == m).unwrap();
    let c = &at(490).bottlenecks[0];
    assert!(c.features.currently_jammed);
    assert_eq!(c.time_to_clear, Some(30.0));
    assert_eq!(c.time_to_jam, None);
    assert_eq!(at(450).bottlenecks[0].time_to_jam, Some(30.0));
    // Open with nothing ahead inside the horizon.
    let c = &at(600).bottlenecks[0];
    assert!(!c.features.currently_jammed);
    assert_eq!(c.time_to_jam, None);
    // Sampling grid and censor margin.
    assert_eq!(lib.cases.first().unwrap().minute, 30);
    assert!(lib.cases.iter().all(|c| c.minute % 5 == 0 && c.minute + 120 < MINUTES_PER_DAY));
}

#[test]
fn accident_flags_the_next_thirty_minutes() {
    let (net, set, s, ctx) = day_inputs(MINUTES_PER_DAY, |_, _| 60.0);
    let ev = parse(FIG).unwrap();
    let incidents = resolve_incidents(&[ev], &net, &set, Calendar::new(start()), MINUTES_PER_DAY);
    assert_eq!(incidents.len(), 1);
    assert_eq!(incidents[0].minute, 16 * 60 + 23);
    assert_eq!(incidents[0].bottlenecks, vec![0]);
    let inputs = Inputs {
        network: &net,
        bottlenecks: &set,
        stream: &s,
        context: &ctx,
        incidents: &incidents,
    };
    let cfg = CaseConfig {
        sample_interval_minutes: 1,
        ..CaseConfig::default()
    };
    let lib = build_cases(&inputs, &cfg).unwrap();
    for c in &lib.cases {
        let want = (16 * 60 + 23..=16 * 60 + 53).contains(&c.minute);
        assert_eq!(c.bottlenecks[0].incident, want, "minute {}", c.minute);
    }
}

#[test]
fn undated_reports_roll_over_days() {
    let net = line(3);
    let set = whole(3);
    let late = FIG.replace("1623", "2350");
    let early = FIG.replace("1623", "0010");
    let feed = format!("{late}\n\n{early}\n");
    let evs = parse_feed(&feed);
    let r = resolve_incidents(&evs, &net, &set, Calendar::new(start()), 3 * MINUTES_PER_DAY);
    assert_eq!(r.iter().map(|i| i.minute).collect::<Vec<_>>(), vec![23 * 60 + 50, MINUTES_PER_DAY + 10]);
    // Unknown landmark resolves to nothing.
    let lost = parse(&FIG.replace("I-90", "NOWHERE")).unwrap();
    let r = resolve_incidents(&[lost], &net, &set, Calendar::new(start()), MINUTES_PER_DAY);
    assert!(r[0].cells.is_empty() && r[0].bottlenecks.is_empty());
}

#[test]
fn misaligned_streams_are_rejected() {
    let (net, set, s, ctx) = day_inputs(MINUTES_PER_DAY, |_, _| 60.0);
    let inputs = Inputs {
        network: &net,
        bottlenecks: &set,
        stream: &s,
        context: &ctx[..10],
        incidents: &[],
    };
    assert!(matches!(build_cases(&inputs, &CaseConfig::default()), Err(CaseError::Misaligned(_))));
}

struct Study {
    out: jambayes_core::sim::SimOutput,
    set: BottleneckSet,
    incidents: Vec<jambayes_core::cases::ResolvedIncident>,
}

fn study(seed: u64, days: u32) -> Study {
    let out = simulate(&presets::standard(seed, days)).unwrap();
    let profile = congestion_fraction(&out.stream, &out.network).unwrap();
    let set = identify(&profile, &out.network, 0.015).unwrap();
    let incidents = resolve_incidents(
        &parse_feed(&out.incident_feed()),
        &out.network,
        &set,
        out.calendar(),
        out.stream.minutes(),
    );
    Study { out, set, incidents }
}

impl Study {
    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            network: &self.out.network,
            bottlenecks: &self.set,
            stream: &self.out.stream,
            context: &self.out.context,
            incidents: &self.incidents,
        }
    }
}

/// Independent forward scan over raw speeds.
fn brute_targets(s: &SensorStream, cells: &[usize], t: Minute) -> (bool, Option<f64>) {
    let jammed = |m: Minute| {
        let k = cells.iter().filter(|&&c| s.speed(m, c) < 30.0).count();
        k * 2 >= cells.len()
    };
    let now = jammed(t);
    let mut flip = None;
    for d in 1..=120u32 {
        if t + d >= s.minutes() {
            break;
        }
        if jammed(t + d) != now {
            flip = Some(f64::from(d));
            break;
        }
    }
    (now, flip)
}

#[test]
fn targets_match_brute_force_and_invariants_hold() {
    let st = study(4, 10);
    let lib = build_cases(&st.inputs(), &CaseConfig::default()).unwrap();
    assert_eq!(lib.bottleneck_count(), 8);
    assert!(lib.len() > 800);
    let mut jams = 0;
    for c in &lib.cases {
        for (bc, b) in c.bottlenecks.iter().zip(&st.set.bottlenecks) {
            let (now, flip) = brute_targets(&st.out.stream, &b.cells, c.minute);
            let f = &bc.features;
            assert_eq!(f.currently_jammed, now);
            if now {
                jams += 1;
                assert_eq!(bc.time_to_clear, flip);
                assert_eq!(bc.time_to_jam, None);
                assert!(f.minutes_since_block_start.is_some());
            } else {
                assert_eq!(bc.time_to_jam, flip);
                assert_eq!(bc.time_to_clear, None);
                assert!(f.minutes_since_block_start.is_none());
            }
            for v in [bc.time_to_clear, bc.time_to_jam].into_iter().flatten() {
                assert!(v > 0.0 && v <= 120.0);
            }
            assert!(f.max_adjacent_blocked <= f.blocked_count);
        }
    }
    assert!(jams > 50);
    for w in lib.cases.windows(2) {
        assert!(w[0].timestamp < w[1].timestamp);
    }
    assert!(lib.cases.iter().any(|c| c.bottlenecks.iter().any(|b| b.incident)));
    assert_eq!(lib, build_cases(&st.inputs(), &CaseConfig::default()).unwrap());
}

#[test]
fn observations_ignore_the_future() {
    let st = study(5, 3);
    let cfg = CaseConfig::default();
    let t = MINUTES_PER_DAY + 8 * 60;
    let before = observe(&st.inputs(), &StreamView::new(&st.out.stream, t), t, &cfg).unwrap();
    let mut garbled = st.out.stream.clone();
    for c in 0..garbled.cells() {
        garbled = garbled.with_speeds(c, t + 1, garbled.minutes(), 1.0);
    }
    let mut inputs = st.inputs();
    inputs.stream = &garbled;
    let view = StreamView::new(&garbled, t);
    let after = observe(&inputs, &view, t, &cfg).unwrap();
    assert_eq!(before, after);
    assert_eq!(view.violations(), 0);
    assert!(view.high_water().unwrap() <= t);
}

#[test]
fn csv_round_trip() {
    let st = study(6, 3);
    let lib = build_cases(&st.inputs(), &CaseConfig::default()).unwrap();
    let schema = SchemaFile::for_library(&lib, Utc.from_utc_datetime(&st.out.calendar().datetime(0)));
    let schema = SchemaFile::from_json(&schema.to_json()).unwrap();
    let mut buf = Vec::new();
    write_cases(&mut buf, &lib).unwrap();
    let back = read_cases(buf.as_slice(), &schema).unwrap();
    assert_eq!(back, lib);
    let ds = lib.to_dataset().unwrap();
    assert_eq!(ds.rows(), lib.len());
    assert_eq!(ds.schema().len(), 7 + 8 * 9);
}

#[test]
fn sequential_split() {
    let (net, set, s, ctx) = day_inputs(MINUTES_PER_DAY * 2, |_, _| 60.0);
    let inputs = Inputs {
        network: &net,
        bottlenecks: &set,
        stream: &s,
        context: &ctx,
        incidents: &[],
    };
    let mut lib = build_cases(&inputs, &CaseConfig::default()).unwrap();
    lib.cases.truncate(100);
    let (train, test) = split_sequential(&lib, 0.75).unwrap();
    assert_eq!((train.len(), test.len()), (75, 25));
    assert!(train.cases.last().unwrap().timestamp < test.cases[0].timestamp);
    let mut joined = train.cases.clone();
    joined.extend(test.cases.clone());
    assert_eq!(joined, lib.cases);
    assert!(matches!(split_sequential(&lib, 1.0), Err(CaseError::Fraction(_))));
    assert!(matches!(split_sequential(&lib, 0.999), Err(CaseError::Fraction(_))));
    lib.cases.truncate(1);
    assert!(matches!(split_sequential(&lib, 0.5), Err(CaseError::TooFewCases(1))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn split_partitions(n in 2usize..200, f in 0.01f64..0.99) {
        let (net, set, s, ctx) = day_inputs(MINUTES_PER_DAY * 3, |_, _| 60.0);
        let inputs = Inputs { network: &net, bottlenecks: &set, stream: &s, context: &ctx, incidents: &[] };
        let mut lib = build_cases(&inputs, &CaseConfig::default()).unwrap();
        lib.cases.truncate(n);
        let k = (n as f64 * f).ceil() as usize;
        match split_sequential(&lib, f) {
            Ok((a, b)) => {
                prop_assert_eq!(a.len(), k);
                prop_assert_eq!(a.len() + b.len(), n);
            }
            Err(_) => prop_assert!(k >= n),
        }
    }
}
