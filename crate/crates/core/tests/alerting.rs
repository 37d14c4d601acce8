use chrono::{NaiveDate, Weekday};
use jambayes_core::alerting::*;
use jambayes_core::bn::Method;
use jambayes_core::forecast::{DisplayBucket, Forecast};
use jambayes_core::surprise::{Direction, Level, SurpriseTag};
use jambayes_core::time::{Calendar, Minute};
use proptest::prelude::*;

const WEEKDAYS: [Weekday; 5] = [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri];
const ALL_DAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// 2024-01-01 is a Monday.
fn cal() -> Calendar {
    Calendar::new(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap())
}

fn forecast(target: &str, mean: f64, p: f64) -> Forecast {
    Forecast {
        target: target.into(),
        p_present: p,
        mean_minutes: mean,
        std_minutes: 5.0,
        display_bucket: DisplayBucket::from_moments(p, mean),
        method: Method::Exact,
        reliability_flag: None,
        surprise_flag: None,
    }
}

fn open_with_jam_in(mean: f64) -> BottleneckView {
    BottleneckView {
        time_to_jam: Some(forecast("b0.time_to_jam", mean, 0.9)),
        ..BottleneckView::default()
    }
}

fn jammed_clearing_in(mean: f64) -> BottleneckView {
    BottleneckView {
        jammed: true,
        time_to_clear: Some(forecast("b0.time_to_clear", mean, 0.9)),
        ..BottleneckView::default()
    }
}

fn engine(bottlenecks: Vec<usize>, windows: Vec<Window>, triggers: Vec<Trigger>, refractory: u32) -> AlertEngine {
    let mut e = AlertEngine::new(4);
    e.add_route(Route {
        name: "am".into(),
        bottlenecks,
        windows,
    })
    .unwrap();
    e.add_policy(AlertPolicy {
        refractory_minutes: refractory,
        ..AlertPolicy::new("commute", "am", triggers)
    })
    .unwrap();
    e
}

fn morning() -> Vec<Window> {
    vec![Window::new(&WEEKDAYS, 7 * 60, 10 * 60)]
}

fn step(e: &mut AlertEngine, m: Minute, views: &[BottleneckView]) -> Vec<Alert> {
    e.evaluate(&AlertFrame {
        minute: m,
        calendar: cal(),
        bottlenecks: views,
        surprises: &[],
    })
    .unwrap()
}

fn views_with(b: usize, v: BottleneckView) -> Vec<BottleneckView> {
    let mut all = vec![BottleneckView::default(); 4];
    all[b] = v;
    all
}

#[test]
fn jam_forecast_inside_the_window_alerts() {
    let mut e = engine(vec![2, 1], morning(), vec![Trigger::WillJamWithin { minutes: 30 }], 30);
    let at = 8 * 60;
    let alerts = step(&mut e, at, &views_with(1, open_with_jam_in(25.0)));
    assert_eq!(alerts.len(), 1);
    let a = &alerts[0];
    assert_eq!((a.minute, a.bottleneck, a.policy.as_str()), (at, Some(1), "commute"));
    assert_eq!(a.trigger, Trigger::WillJamWithin { minutes: 30 });
    assert_eq!(a.timestamp.to_rfc3339(), "2024-01-01T08:00:00+00:00");
}

#[test]
fn same_condition_outside_the_window_is_silent() {
    let mut e = engine(vec![2, 1], morning(), vec![Trigger::WillJamWithin { minutes: 30 }], 30);
    let v = views_with(1, open_with_jam_in(25.0));
    assert!(step(&mut e, 11 * 60, &v).is_empty());
    // Saturday morning.
    assert!(step(&mut e, 5 * 1440 + 8 * 60, &v).is_empty());
}

#[test]
fn refractory_period_suppresses_the_repeat() {
    let mut e = engine(vec![1], morning(), vec![Trigger::WillJamWithin { minutes: 30 }], 30);
    let v = views_with(1, open_with_jam_in(25.0));
    assert_eq!(step(&mut e, 480, &v).len(), 1);
    assert!(step(&mut e, 485, &v).is_empty());
    assert_eq!(step(&mut e, 510, &v).len(), 1);
}

#[test]
fn jam_forecast_needs_presence_an_open_bottleneck_and_the_horizon() {
    let mut e = engine(vec![1], morning(), vec![Trigger::WillJamWithin { minutes: 30 }], 0);
    assert!(step(&mut e, 480, &views_with(1, open_with_jam_in(31.0))).is_empty());
    let unlikely = BottleneckView {
        time_to_jam: Some(forecast("b1.time_to_jam", 10.0, 0.4)),
        ..BottleneckView::default()
    };
    assert!(step(&mut e, 481, &views_with(1, unlikely)).is_empty());
    let already = BottleneckView {
        jammed: true,
        ..open_with_jam_in(10.0)
    };
    assert!(step(&mut e, 482, &views_with(1, already)).is_empty());
    assert_eq!(step(&mut e, 483, &views_with(1, open_with_jam_in(30.0))).len(), 1);
}

#[test]
fn route_jams_when_any_bottleneck_jams() {
    let mut e = engine(vec![0, 3], morning(), vec![Trigger::RouteJammedNow], 0);
    assert!(step(&mut e, 480, &vec![BottleneckView::default(); 4]).is_empty());
    let a = step(&mut e, 481, &views_with(3, jammed_clearing_in(20.0)));
    assert_eq!(a[0].bottleneck, Some(3));
    assert!(step(&mut e, 482, &views_with(2, jammed_clearing_in(20.0))).is_empty());
}

#[test]
fn route_clears_when_every_jammed_bottleneck_clears_in_time() {
    let mut e = engine(vec![0, 3], morning(), vec![Trigger::WillClearWithin { minutes: 20 }], 0);
    let mut v = vec![BottleneckView::default(); 4];
    v[0] = jammed_clearing_in(10.0);
    v[3] = jammed_clearing_in(25.0);
    assert!(step(&mut e, 480, &v).is_empty());
    v[3] = jammed_clearing_in(18.0);
    let a = step(&mut e, 481, &v);
    assert_eq!(a[0].bottleneck, Some(3));
    assert!(step(&mut e, 482, &vec![BottleneckView::default(); 4]).is_empty());
}

#[test]
fn cleared_after_block_fires_on_the_transition() {
    let mut e = engine(vec![1], morning(), vec![Trigger::RouteClearedAfterBlock], 0);
    let jam = views_with(1, jammed_clearing_in(5.0));
    let open = vec![BottleneckView::default(); 4];
    assert!(step(&mut e, 480, &open).is_empty());
    assert!(step(&mut e, 481, &jam).is_empty());
    assert_eq!(step(&mut e, 482, &open).len(), 1);
    assert!(step(&mut e, 483, &open).is_empty());
}

#[test]
fn surprise_triggers_follow_their_inputs() {
    let mut e = engine(
        vec![1],
        morning(),
        vec![Trigger::SurpriseNow, Trigger::FutureSurprise { threshold: None }],
        0,
    );
    let tag = |b: usize, m: Minute| SurpriseTag {
        bottleneck: b,
        minute: m,
        timestamp: chrono::DateTime::from_naive_utc_and_offset(cal().datetime(m), chrono::Utc),
        jammed: true,
        likelihood: 0.03,
        direction: Direction::SurprisingJam,
        level: Level::Full,
    };
    let mut v = vec![BottleneckView::default(); 4];
    let run = |e: &mut AlertEngine, m: Minute, v: &[BottleneckView], tags: &[SurpriseTag]| {
        e.evaluate(&AlertFrame {
            minute: m,
            calendar: cal(),
            bottlenecks: v,
            surprises: tags,
        })
        .unwrap()
    };
    assert!(run(&mut e, 480, &v, &[tag(0, 480), tag(1, 479)]).is_empty());
    let a = run(&mut e, 481, &v, &[tag(1, 481)]);
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].trigger, Trigger::SurpriseNow);

    v[1].future_surprise = Some(FutureSurpriseSignal {
        p: 0.2,
        operating_threshold: Some(0.2),
    });
    assert!(run(&mut e, 482, &v, &[]).is_empty());
    v[1].future_surprise = Some(FutureSurpriseSignal {
        p: 0.21,
        operating_threshold: Some(0.2),
    });
    assert_eq!(run(&mut e, 483, &v, &[])[0].trigger, Trigger::FutureSurprise { threshold: None });
}

#[test]
fn muted_policies_stay_silent() {
    let mut e = AlertEngine::new(4);
    e.add_route(Route {
        name: "am".into(),
        bottlenecks: vec![1],
        windows: morning(),
    })
    .unwrap();
    e.add_policy(AlertPolicy {
        muted: true,
        ..AlertPolicy::new("p", "am", vec![Trigger::RouteJammedNow])
    })
    .unwrap();
    assert!(step(&mut e, 480, &views_with(1, jammed_clearing_in(5.0))).is_empty());
}

#[test]
fn bad_configuration_is_rejected() {
    let mut e = AlertEngine::new(4);
    let route = |name: &str, bottlenecks: Vec<usize>, windows: Vec<Window>| Route {
        name: name.into(),
        bottlenecks,
        windows,
    };
    assert_eq!(
        e.add_route(route("r", vec![1, 9], morning())).unwrap_err(),
        AlertError::UnknownBottleneck {
            route: "r".into(),
            bottleneck: 9
        }
    );
    assert!(matches!(e.add_route(route("r", vec![], morning())), Err(AlertError::EmptyRoute(_))));
    assert!(matches!(e.add_route(route("r", vec![1], vec![])), Err(AlertError::NoWindows(_))));
    let backwards = Window::new(&WEEKDAYS, 600, 420);
    assert!(matches!(e.add_route(route("r", vec![1], vec![backwards])), Err(AlertError::BadWindow { .. })));
    let no_days = Window::new(&[], 420, 600);
    assert!(matches!(e.add_route(route("r", vec![1], vec![no_days])), Err(AlertError::BadWindow { .. })));
    e.add_route(route("r", vec![1], morning())).unwrap();
    assert!(matches!(e.add_route(route("r", vec![2], morning())), Err(AlertError::Duplicate { .. })));

    let zero = AlertPolicy::new("p", "r", vec![Trigger::WillJamWithin { minutes: 0 }]);
    assert!(matches!(e.add_policy(zero), Err(AlertError::BadTrigger { .. })));
    assert!(matches!(e.add_policy(AlertPolicy::new("p", "r", vec![])), Err(AlertError::NoTriggers(_))));
    let ghost = AlertPolicy::new("p", "nowhere", vec![Trigger::SurpriseNow]);
    assert!(matches!(e.add_policy(ghost), Err(AlertError::UnknownRoute { .. })));
    e.add_policy(AlertPolicy::new("p", "r", vec![Trigger::SurpriseNow])).unwrap();

    let short = vec![BottleneckView::default(); 3];
    let frame = |m, v: &[BottleneckView]| -> Result<Vec<Alert>, AlertError> {
        e.clone().evaluate(&AlertFrame {
            minute: m,
            calendar: cal(),
            bottlenecks: v,
            surprises: &[],
        })
    };
    assert_eq!(frame(480, &short).unwrap_err(), AlertError::FrameSize { got: 3, expected: 4 });
    step(&mut e, 480, &vec![BottleneckView::default(); 4]);
    let err = e
        .evaluate(&AlertFrame {
            minute: 480,
            calendar: cal(),
            bottlenecks: &vec![BottleneckView::default(); 4],
            surprises: &[],
        })
        .unwrap_err();
    assert_eq!(err, AlertError::Clock { last: 480, now: 480 });
}

#[test]
fn policy_store_round_trips() {
    let e = engine(
        vec![2, 1],
        morning(),
        vec![
            Trigger::WillJamWithin { minutes: 30 },
            Trigger::FutureSurprise { threshold: Some(0.25) },
            Trigger::RouteClearedAfterBlock,
        ],
        30,
    );
    let json = e.store().to_json();
    assert!(json.contains("\"kind\": \"will_jam_within\""));
    let back = PolicyStore::from_json(&json).unwrap();
    assert_eq!(back, e.store());
    let rebuilt = AlertEngine::from_store(4, &back).unwrap();
    assert_eq!(rebuilt.policies(), e.policies());
    let minimal = r#"{"schema_version":1,"routes":[],"policies":[]}"#;
    assert!(PolicyStore::from_json(minimal).unwrap().routes.is_empty());
    assert!(PolicyStore::from_json(r#"{"schema_version":9,"routes":[],"policies":[]}"#).is_err());
    let p: AlertPolicy = serde_json::from_str(r#"{"name":"p","route":"r","triggers":[{"kind":"surprise_now"}]}"#).unwrap();
    assert_eq!((p.refractory_minutes, p.muted), (DEFAULT_REFRACTORY_MINUTES, false));
}

fn replay(e: &mut AlertEngine, frames: &[(bool, bool, f64)]) -> Vec<Alert> {
    let mut out = Vec::new();
    for (i, &(j0, j1, mean)) in frames.iter().enumerate() {
        let mut v = vec![BottleneckView::default(); 4];
        v[0] = if j0 { jammed_clearing_in(mean) } else { open_with_jam_in(mean) };
        v[1] = if j1 { jammed_clearing_in(mean) } else { open_with_jam_in(mean) };
        out.extend(step(e, i as Minute * 7, &v));
    }
    out
}

fn all_triggers() -> Vec<Trigger> {
    vec![
        Trigger::RouteJammedNow,
        Trigger::RouteClearedAfterBlock,
        Trigger::WillJamWithin { minutes: 30 },
        Trigger::WillClearWithin { minutes: 30 },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alerts_stay_inside_active_windows(
        frames in prop::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..90.0), 1..400),
        start in 0u32..1400,
        len in 1u32..600,
        day_mask in 1u8..128,
        refractory in 0u32..45,
    ) {
        let days: Vec<Weekday> = ALL_DAYS.iter().enumerate().filter(|(i, _)| day_mask >> i & 1 == 1).map(|(_, d)| *d).collect();
        let window = Window::new(&days, start, (start + len).min(1440));
        let mut e = engine(vec![0, 1], vec![window.clone()], all_triggers(), refractory);
        let alerts = replay(&mut e, &frames);
        for a in &alerts {
            prop_assert!(window.contains(cal(), a.minute), "{a:?}");
        }
        // Same inputs, same alerts.
        let mut again = engine(vec![0, 1], vec![window], all_triggers(), refractory);
        prop_assert_eq!(replay(&mut again, &frames), alerts);
    }

    #[test]
    fn cleared_after_block_fires_once_per_jam_episode(
        frames in prop::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..90.0), 1..400),
    ) {
        let always = vec![Window::new(&ALL_DAYS, 0, 1440)];
        let mut e = engine(vec![0, 1], always, vec![Trigger::RouteClearedAfterBlock], 0);
        let alerts = replay(&mut e, &frames);
        let jammed: Vec<bool> = frames.iter().map(|&(a, b, _)| a || b).collect();
        let episodes_ended = jammed.windows(2).filter(|w| w[0] && !w[1]).count();
        prop_assert_eq!(alerts.len(), episodes_ended);
        for a in &alerts {
            let i = (a.minute / 7) as usize;
            prop_assert!(i > 0 && jammed[i - 1] && !jammed[i]);
        }
    }
}
