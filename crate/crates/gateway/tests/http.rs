mod common;

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;

use jambayes_core::bottleneck::identify;
use jambayes_gateway::files::{DataDir, POLICIES_FILE};
use jambayes_gateway::live::Live;
use jambayes_gateway::server::router;

/// Six weeks of the stationary preset with every artifact built.
fn fixture() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = common::scratch("http-fixture");
        common::run(&dir, &["simulate", "--preset", "stationary", "--days", "42"]);
        common::run(&dir, &["identify"]);
        common::run(&dir, &["build-cases"]);
        common::run(&dir, &["train", "--restarts", "0", "--reliability"]);
        common::run(&dir, &["surprise-eval"]);
        common::run(&dir, &["future-surprise-eval"]);
        dir
    })
}

struct Server {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    live: Arc<RwLock<Live>>,
    app: Router,
}

/// 2024-02-02 is a Friday; R0 jams on weekdays from 07:30.
const FRIDAY_0630: u32 = 32 * 1440 + 390;

fn server(start: Option<u32>) -> Server {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    common::copy_dir(fixture(), &dir);
    let live = Arc::new(RwLock::new(Live::load(DataDir::new(&dir), start).unwrap()));
    Server {
        app: router(live.clone()),
        _tmp: tmp,
        dir,
        live,
    }
}

impl Server {
    async fn call(&self, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, value)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    async fn post(&self, uri: &str, body: &str) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }

    async fn bottleneck_of(&self, region: &str) -> usize {
        let live = self.live.read().await;
        let r = live.streams.network.region(region).unwrap();
        live.bottlenecks
            .bottlenecks
            .iter()
            .position(|b| b.cells.iter().any(|c| r.cells.contains(c)))
            .unwrap()
    }
}

fn weekday_route(name: &str, bottlenecks: &[usize]) -> String {
    json!({
        "name": name,
        "bottlenecks": bottlenecks,
        "windows": [{"days": ["Mon", "Tue", "Wed", "Thu", "Fri"], "start": "06:00", "end": "10:00"}],
    })
    .to_string()
}

#[tokio::test]
async fn snapshot_is_one_consistent_frame() {
    let s = server(None);
    let (status, snap) = s.get("/snapshot").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snap["schema_version"], 1);
    let live = s.live.read().await;
    assert_eq!(snap["minute"], live.frame.minute);
    assert_eq!(snap["timestamp"], json!(live.timestamp(live.frame.minute)));
    assert_eq!(snap["cells"].as_array().unwrap().len(), live.streams.stream.cells());
    let forecasts = snap["forecasts"].as_array().unwrap();
    assert_eq!(forecasts.len(), live.bottlenecks.len());
    for f in forecasts {
        assert!(f["forecast"]["reliability_flag"].is_boolean());
        assert!(f["forecast"]["surprise_flag"].is_boolean());
    }
    for t in snap["surprises"].as_array().unwrap() {
        assert_eq!(t["minute"], snap["minute"]);
    }
    assert_eq!(snap["future_surprises"].as_array().unwrap().len(), live.bottlenecks.len());
    assert_eq!(snap["model"]["bottlenecks"], live.bottlenecks.len());
    assert_eq!(snap["model"]["reliability"], true);
    let band = snap["cells"][0]["band"].as_str().unwrap();
    assert!(["green", "yellow", "red", "black"].contains(&band), "{band}");
}

#[tokio::test]
async fn bottleneck_explorer_delegates_to_identify() {
    let s = server(None);
    let (status, body) = s.get("/bottlenecks?threshold=1.0").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["bottlenecks"], json!([]));
    let live = s.live.read().await;
    for t in [0.0, 0.015, 0.5] {
        let (_, body) = s.get(&format!("/bottlenecks?threshold={t}")).await;
        let expected = identify(&live.profile, &live.streams.network, t).unwrap();
        assert_eq!(body["bottlenecks"], serde_json::to_value(&expected.bottlenecks).unwrap());
    }
    let (_, body) = s.get("/bottlenecks").await;
    assert_eq!(body["bottlenecks"].as_array().unwrap().len(), live.bottlenecks.len());
    assert_eq!(s.get("/bottlenecks?threshold=lots").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/bottlenecks?threshold=-1").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn forecast_payload_and_unknown_ids() {
    let s = server(None);
    let (status, body) = s.get("/forecast/0").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["schema_version"], 1);
    let f = &body["forecast"];
    for field in ["p_present", "mean_minutes", "std_minutes"] {
        assert!(f[field].is_number(), "{field}: {f}");
    }
    assert!(f["display_bucket"]["kind"].is_string());
    assert!(f["reliability_flag"].is_boolean());
    assert!(f["surprise_flag"].is_boolean());
    let expected = if body["jammed"] == true { "b0.time_to_clear" } else { "b0.time_to_jam" };
    assert_eq!(f["target"], expected);
    assert_eq!(s.get("/forecast/99").await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.get("/forecast/R0").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn surprise_views_carry_the_frame_minute() {
    let s = server(None);
    let (status, body) = s.get("/surprises").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["surprises"].is_array());
    let (status, body) = s.get("/future-surprises").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["lead_minutes"], 30);
    for p in body["future_surprises"].as_array().unwrap() {
        let p = p["p"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[tokio::test]
async fn routes_are_created_once() {
    let s = server(None);
    let (status, body) = s.post("/routes", &weekday_route("commute", &[0, 1])).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(s.post("/routes", &weekday_route("commute", &[2])).await.0, StatusCode::CONFLICT);
    assert_eq!(s.post("/routes", "{not json").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.post("/routes", r#"{"name":"x"}"#).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.post("/routes", &weekday_route("far", &[99])).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.post("/routes", &weekday_route("none", &[])).await.0, StatusCode::BAD_REQUEST);
    let (_, body) = s.get("/routes").await;
    let routes = body["routes"].as_array().unwrap();
    assert_eq!(routes.len(), 1);
    assert_eq!(routes[0]["name"], "commute");
}

#[tokio::test]
async fn policies_need_a_known_route_and_persist() {
    let s = server(None);
    let policy = r#"{"name":"p","route":"commute","triggers":[{"kind":"will_jam_within","minutes":30}]}"#;
    assert_eq!(s.post("/policies", policy).await.0, StatusCode::BAD_REQUEST);
    s.post("/routes", &weekday_route("commute", &[0])).await;
    let (status, body) = s.post("/policies", policy).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["policy"]["refractory_minutes"], 30);
    assert_eq!(s.post("/policies", policy).await.0, StatusCode::CONFLICT);
    let bad = r#"{"name":"q","route":"commute","triggers":[{"kind":"will_jam_within","minutes":0}]}"#;
    assert_eq!(s.post("/policies", bad).await.0, StatusCode::BAD_REQUEST);
    let unknown = r#"{"name":"q","route":"commute","triggers":[{"kind":"rains_frogs"}]}"#;
    assert_eq!(s.post("/policies", unknown).await.0, StatusCode::BAD_REQUEST);
    let (_, body) = s.get("/policies").await;
    assert_eq!(body["policies"].as_array().unwrap().len(), 1);

    let saved = std::fs::read_to_string(s.dir.join(POLICIES_FILE)).unwrap();
    let reloaded = Live::load(DataDir::new(&s.dir), None).unwrap();
    assert_eq!(reloaded.engine.policies().len(), 1, "{saved}");
    assert_eq!(reloaded.engine.routes().len(), 1);
}

#[tokio::test]
async fn will_jam_policy_alerts_during_a_planted_jam_replay() {
    let s = server(Some(FRIDAY_0630));
    let r0 = s.bottleneck_of("R0").await;
    s.post("/routes", &weekday_route("commute", &[r0])).await;
    let policy = r#"{"name":"heads-up","route":"commute","triggers":[{"kind":"will_jam_within","minutes":30}]}"#;
    assert_eq!(s.post("/policies", policy).await.0, StatusCode::CREATED);
    let (_, body) = s.get("/alerts").await;
    assert_eq!(body["alerts"], json!([]));

    let (status, step) = s.post("/replay/advance", r#"{"minutes":90}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(step["minute"], FRIDAY_0630 + 90);
    assert_eq!(step["exhausted"], false);

    let (_, body) = s.get("/alerts").await;
    let alerts = body["alerts"].as_array().unwrap();
    assert!(!alerts.is_empty(), "no alert before the 07:30 jam");
    let first = &alerts[0];
    assert_eq!(first["policy"], "heads-up");
    assert_eq!(first["trigger"]["kind"], "will_jam_within");
    assert_eq!(first["bottleneck"], r0);
    let onset = FRIDAY_0630 + 60;
    assert!(first["minute"].as_u64().unwrap() < u64::from(onset), "{first}");
    assert_eq!(step["alerts"].as_array().unwrap().len(), alerts.len());

    let ts = first["timestamp"].as_str().unwrap();
    let (_, since) = s.get(&format!("/alerts?since={ts}")).await;
    assert_eq!(since["alerts"].as_array().unwrap().len(), alerts.len());
    let (_, later) = s.get("/alerts?since=2030-01-01T00:00:00Z").await;
    assert_eq!(later["alerts"], json!([]));
    assert_eq!(s.get("/alerts?since=yesterday").await.0, StatusCode::BAD_REQUEST);

    let logged = std::fs::read_to_string(s.dir.join("alerts.jsonl")).unwrap();
    assert_eq!(logged.lines().count(), alerts.len());
}

#[tokio::test]
async fn replay_stops_at_the_end_of_the_stream() {
    let s = server(None);
    let last = s.live.read().await.last_minute();
    let (_, step) = s.post("/replay/advance", r#"{"minutes":100000}"#).await;
    assert_eq!(step["minute"], last);
    assert_eq!(step["exhausted"], true);
    assert_eq!(s.post("/replay/advance", r#"{"minutes":-3}"#).await.0, StatusCode::BAD_REQUEST);
    let (_, snap) = s.get("/snapshot").await;
    assert_eq!(snap["minute"], last);
}
