mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use common::*;
use gloss_control::{router, AppState, Config};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn app_with(dir: &TempDir, tap_capacity: usize) -> (Router, Arc<AppState>) {
    let state = AppState::open(Config { data_dir: dir.path().to_path_buf(), tap_capacity }).unwrap();
    (router(state.clone()), state)
}

fn app(dir: &TempDir) -> (Router, Arc<AppState>) {
    app_with(dir, 256)
}

fn write_knowledge(dir: &TempDir) {
    let facilities = [
        json!({"id": "f-cafe", "name": "Harbour Cafe", "category": "food", "lat": 56.3400, "lon": -2.7960, "info": "open 9-5"}),
        json!({"id": "f-deli", "name": "Market Deli", "category": "food", "lat": 56.3410, "lon": -2.7980}),
        json!({"id": "f-bank", "name": "Old Bank", "category": "bank", "lat": 56.3402, "lon": -2.7955}),
        json!({"id": "f-far", "name": "Far Inn", "category": "food", "lat": 56.4000, "lon": -2.9000}),
    ];
    let lines: String = facilities.iter().map(|f| format!("{f}\n")).collect();
    std::fs::write(dir.path().join("facilities.jsonl"), lines).unwrap();
    std::fs::write(
        dir.path().join("landmarks.jsonl"),
        format!("{}\n", json!({"id": "l-castle", "name": "Castle", "lat": 56.3415, "lon": -2.7925})),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("maps.jsonl"),
        format!(
            "{}\n",
            json!({"image_id": "town.png", "pixel_width": 1000, "pixel_height": 800,
                   "north_lat": 56.36, "south_lat": 56.32, "west_lon": -2.82, "east_lon": -2.77})
        ),
    )
    .unwrap();
    std::fs::create_dir_all(dir.path().join("maps")).unwrap();
    std::fs::write(dir.path().join("maps/town.png"), b"\x89PNG\r\n\x1a\nfake").unwrap();
}

fn record(state: &AppState, user: &str, lat: f64, lon: f64, secs: i64) {
    use gloss_core::transport::{LocationEvent, UserId};
    let t = chrono::DateTime::from_timestamp(1_030_881_600 + secs, 0).unwrap();
    let e = LocationEvent::new(
        UserId::new(user).unwrap(),
        gloss_core::LatLongCoordinate::new(lat, lon).unwrap(),
        t,
    )
    .unwrap();
    state.store().record(e);
}

#[tokio::test]
async fn catalog_lists_the_component_set() {
    let dir = TempDir::new().unwrap();
    let (app, _) = app(&dir);
    let first = get(&app, "/components").await;
    assert_eq!(first.status, StatusCode::OK);
    let body = first.json();
    let kinds: Vec<&str> = body.as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    for k in ["event_bus", "gps_source", "sms_device", "sms_xml_device", "xml_codec_adapter", "file_sink"] {
        assert!(kinds.contains(&k), "missing {k}");
    }
    for e in body.as_array().unwrap() {
        assert!(e["ports"]["plugs"].is_array() && e["ports"]["sockets"].is_array());
        assert!(e["params"].is_array());
    }
    let adapter = body.as_array().unwrap().iter().find(|e| e["kind"] == "xml_codec_adapter").unwrap();
    assert_eq!(adapter["ports_by_param"]["direction"]["record_to_text"]["plugs"], json!(["RECORD"]));
    assert_eq!(get(&app, "/components").await.bytes, first.bytes);
}

#[tokio::test(flavor = "multi_thread")]
async fn mobile_spec_lifecycle_and_tap() {
    let dir = TempDir::new().unwrap();
    let (app, _) = app(&dir);
    let created = post(&app, "/assemblies", &spec_json(&mobile_spec(&trace_text(3)))).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", created.text());
    let id = created.json()["id"].as_str().unwrap().to_string();

    let view = get(&app, &format!("/assemblies/{id}")).await.json();
    assert_eq!(view["state"], "CREATED");
    assert_eq!(view["components"].as_array().unwrap().len(), 6);
    assert_eq!(view["connections"].as_array().unwrap().len(), 5);
    assert_eq!(view["spec"]["components"][0]["id"], "gps_device");

    let stop_early = post_empty(&app, &format!("/assemblies/{id}/stop")).await;
    assert_eq!(stop_early.status, StatusCode::CONFLICT);
    assert_eq!(stop_early.error_code(), "InvalidStateTransition");

    let started = post_empty(&app, &format!("/assemblies/{id}/start")).await;
    assert_eq!(started.status, StatusCode::OK, "{}", started.text());
    assert_eq!(started.json()["state"], "RUNNING");
    let again = post_empty(&app, &format!("/assemblies/{id}/start")).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    assert_eq!(again.error_code(), "InvalidStateTransition");

    let uri = format!("/assemblies/{id}/events");
    assert!(eventually(Duration::from_secs(5), || async { get(&app, &uri).await.json()["events"].as_array().unwrap().len() >= 15 }).await);
    let events = get(&app, &uri).await.json();
    let list = events["events"].as_array().unwrap();
    assert_eq!(list.len(), 15);
    let gps: Vec<&Value> = list.iter().filter(|e| e["component"] == "gps_device").collect();
    assert_eq!(gps.len(), 3);
    assert!(list.iter().all(|e| e["preview"].as_str().unwrap().chars().count() <= 200));
    assert!(list[1]["preview"].as_str().unwrap().contains(USER), "{}", list[1]);

    let stopped = post_empty(&app, &format!("/assemblies/{id}/stop")).await;
    assert_eq!(stopped.json()["state"], "STOPPED");
}

#[tokio::test]
async fn spec_errors_carry_reasons() {
    let dir = TempDir::new().unwrap();
    let (app, _) = app(&dir);
    let fixes = trace_text(1);
    let mismatch = gloss_control::AssemblySpecDoc::default()
        .component("gps", "gps_source", &[("user", USER), ("fixes", &fixes)])
        .component("sms", "sms_device", &[("own_number", USER), ("recipient", SERVER)])
        .connect("gps", "sms");
    let cycle = gloss_control::AssemblySpecDoc::default()
        .component("a", "xml_codec_adapter", &[("direction", "record_to_text")])
        .component("b", "xml_codec_adapter", &[("direction", "text_to_record")])
        .connect("a", "b")
        .connect("b", "a");
    let unknown = gloss_control::AssemblySpecDoc::default().component("x", "teleporter", &[]);
    let missing = gloss_control::AssemblySpecDoc::default().component("s", "file_sink", &[]);
    for (spec, reason) in [
        (mismatch, "KindMismatch"),
        (cycle, "CycleWouldForm"),
        (unknown, "UnknownCatalogKind"),
        (missing, "MissingParam"),
    ] {
        let r = post(&app, "/assemblies", &spec_json(&spec)).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{reason}: {}", r.text());
        assert_eq!(r.error_code(), "SpecInvalid");
        assert_eq!(r.reason(), reason);
    }

    let r = post(&app, "/assemblies", "{\"components\": [").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.error_code(), "MalformedJson");
    let r = post(&app, "/assemblies", "{\"components\": 7}").await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    for uri in ["/assemblies/nope", "/assemblies/nope/events"] {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND);
        assert_eq!(r.error_code(), "UnknownAssembly");
    }
    let r = post_empty(&app, "/assemblies/nope/start").await;
    assert_eq!(r.error_code(), "UnknownAssembly");
    let r = get(&app, "/no/such/thing").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.error_code(), "NotFound");
    let r = request(&app, Method::PUT, "/components", None, None).await;
    assert_eq!(r.status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(r.error_code(), "MethodNotAllowed");
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_delivers_every_event_once_and_ends_on_stop() {
    let dir = TempDir::new().unwrap();
    let (app, _) = app_with(&dir, 4);
    let n = 7;
    let id = post(&app, "/assemblies", &spec_json(&mobile_spec(&trace_text(n)))).await.json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    let req = Request::get(format!("/assemblies/{id}/stream")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut body = resp.into_body();

    post_empty(&app, &format!("/assemblies/{id}/start")).await;
    let events_uri = format!("/assemblies/{id}/events");
    assert!(eventually(Duration::from_secs(5), || async { get(&app, &events_uri).await.json()["observed"] == 5 * n }).await);
    post_empty(&app, &format!("/assemblies/{id}/stop")).await;

    let collected = tokio::time::timeout(Duration::from_secs(5), async {
        let mut buf = Vec::new();
        while let Some(frame) = body.frame().await {
            if let Ok(data) = frame.unwrap().into_data() {
                buf.extend_from_slice(&data);
            }
        }
        buf
    })
    .await
    .expect("stream ends after stop");
    let lines: Vec<Value> =
        String::from_utf8(collected).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5 * n as usize);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["seq"], i as u64);
    }
    let mut per_component: BTreeMap<String, usize> = BTreeMap::new();
    for l in &lines {
        *per_component.entry(l["component"].as_str().unwrap().to_string()).or_default() += 1;
    }
    assert_eq!(per_component.len(), 5);
    assert!(per_component.values().all(|&c| c == n as usize), "{per_component:?}");

    let ring = get(&app, &events_uri).await.json();
    assert_eq!(ring["events"].as_array().unwrap().len(), 4);
    assert_eq!(ring["events"][3]["seq"], 5 * n - 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn specs_persist_and_restore_as_created() {
    let dir = TempDir::new().unwrap();
    let id = {
        let (app, _) = app(&dir);
        let id = post(&app, "/assemblies", &spec_json(&mobile_spec(&trace_text(2)))).await.json()["id"]
            .as_str()
            .unwrap()
            .to_string();
        post_empty(&app, &format!("/assemblies/{id}/start")).await;
        id
    };
    let (app, _) = app(&dir);
    let view = get(&app, &format!("/assemblies/{id}")).await;
    assert_eq!(view.status, StatusCode::OK);
    assert_eq!(view.json()["state"], "CREATED");
    let r = request(&app, Method::DELETE, &format!("/assemblies/{id}"), None, None).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let (app, _) = app_with(&dir, 256);
    assert_eq!(get(&app, &format!("/assemblies/{id}")).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn mobile_and_server_specs_move_fixes_into_the_inbox() {
    let dir = TempDir::new().unwrap();
    let (app, state) = app(&dir);
    let server = post(&app, "/assemblies", &spec_json(&server_spec("inbox"))).await;
    assert_eq!(server.status, StatusCode::CREATED, "{}", server.text());
    let server = server.json()["id"].as_str().unwrap().to_string();
    let mobile = post(&app, "/assemblies", &spec_json(&mobile_spec(&trace_text(3)))).await.json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    post_empty(&app, &format!("/assemblies/{server}/start")).await;
    post_empty(&app, &format!("/assemblies/{mobile}/start")).await;
    let inbox = state.store().inbox_dir();
    assert!(eventually(Duration::from_secs(5), || {
        let n = std::fs::read_dir(&inbox).map(|d| d.count()).unwrap_or(0);
        async move { n == 3 }
    })
    .await);
    post_empty(&app, &format!("/assemblies/{mobile}/stop")).await;
    post_empty(&app, &format!("/assemblies/{server}/stop")).await;
    state.store().poll_once().unwrap();
    let trail = get(&app, &format!("/users/{USER}/trail")).await.json();
    assert_eq!(trail["events"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn location_and_trail_queries() {
    let dir = TempDir::new().unwrap();
    write_knowledge(&dir);
    let (app, state) = app(&dir);

    let r = get(&app, "/users/+440000000000/location").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.error_code(), "NoKnownLocation");
    let r = get(&app, "/users/not-a-number/location").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    record(&state, USER, 56.3400, -2.7960, 0);
    record(&state, USER, 56.3410, -2.7950, 60);
    let loc = get(&app, &format!("/users/{USER}/location")).await.json();
    assert_eq!(loc["event"]["position"], json!({"lat": 56.341, "lon": -2.795}));
    assert_eq!(loc["map"]["image_id"], "town.png");
    let x = loc["map"]["x"].as_f64().unwrap();
    assert!((x - 1000.0 * (-2.795 + 2.82) / 0.05).abs() < 1e-6, "{x}");

    let trail = get(&app, &format!("/users/{USER}/trail")).await.json();
    assert_eq!(trail["events"].as_array().unwrap().len(), 2);
    assert_eq!(trail["points"].as_array().unwrap().len(), 2);
    assert_eq!(trail["map"]["image_id"], "town.png");

    let window = get(&app, &format!("/users/{USER}/trail?from=2002-09-01T12:00:30Z&to=2002-09-01T12:05:00Z")).await;
    assert_eq!(window.json()["events"].as_array().unwrap().len(), 1);
    let inverted = get(&app, &format!("/users/{USER}/trail?from=2002-09-01T13:00:00Z&to=2002-09-01T12:00:00Z")).await;
    assert_eq!(inverted.status, StatusCode::BAD_REQUEST);
    assert_eq!(inverted.error_code(), "InvalidRange");
    let garbled = get(&app, &format!("/users/{USER}/trail?from=yesterday")).await;
    assert_eq!(garbled.status, StatusCode::BAD_REQUEST);
    assert_eq!(garbled.error_code(), "InvalidParameter");

    let html = request(&app, Method::GET, &format!("/users/{USER}/location"), None, Some("text/html,*/*;q=0.8")).await;
    assert!(html.content_type.starts_with("text/html"));
    assert!(html.text().contains("/maps/town.png"));
    let json_pref =
        request(&app, Method::GET, &format!("/users/{USER}/location"), None, Some("application/json, text/html;q=0.5"))
            .await;
    assert!(json_pref.content_type.starts_with("application/json"));

    let img = get(&app, "/maps/town.png").await;
    assert_eq!(img.status, StatusCode::OK);
    assert_eq!(img.content_type, "image/png");
    assert!(img.bytes.starts_with(b"\x89PNG"));
    assert_eq!(get(&app, "/maps/other.png").await.error_code(), "UnknownMap");
    assert_eq!(get(&app, "/maps/..%2Fmaps.jsonl").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn smart_town_and_radar_queries() {
    let dir = TempDir::new().unwrap();
    write_knowledge(&dir);
    let (app, state) = app(&dir);

    let r = get(&app, "/smarttown?lat=56.3400&lon=-2.7960&radius=200&category=food").await;
    assert_eq!(r.status, StatusCode::OK);
    let entries = r.json()["entries"].as_array().unwrap().clone();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["facility"]["id"], "f-cafe");
    assert_eq!(entries[1]["facility"]["id"], "f-deli");
    assert!(entries[0]["distance_m"].as_f64().unwrap() <= entries[1]["distance_m"].as_f64().unwrap());
    assert_eq!(entries[0]["next"], "f-deli");

    let html = request(&app, Method::GET, "/smarttown?lat=56.34&lon=-2.796&radius=200", None, Some("text/html")).await;
    assert!(html.text().contains("href=\"#f-deli\""));
    let empty = request(&app, Method::GET, "/smarttown?lat=0&lon=0&radius=10", None, Some("text/html")).await;
    assert!(empty.text().contains("Nothing nearby"));

    for bad in [
        "/smarttown?lat=56&lon=-2",
        "/smarttown?lat=91&lon=0&radius=5",
        "/smarttown?lat=x&lon=0&radius=5",
        "/smarttown?lat=1&lon=0&radius=-5",
        "/smarttown?lat=1&lon=0&radius=NaN",
    ] {
        let r = get(&app, bad).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(r.error_code(), "InvalidParameter");
    }

    let r = get(&app, &format!("/users/{USER}/radar?radius=500")).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    record(&state, USER, 56.3400, -2.7960, 0);
    let radar = get(&app, &format!("/users/{USER}/radar?radius=500")).await.json();
    let ids: Vec<&str> = radar.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids[0], "f-cafe");
    assert!(ids.contains(&"l-castle"));
    assert!(!ids.contains(&"f-far"));
    assert_eq!(get(&app, &format!("/users/{USER}/radar")).await.status, StatusCode::BAD_REQUEST);
}

fn sim_body(seed: u64) -> String {
    let topology: Value =
        serde_json::from_str(include_str!("fixtures/two_node_topology.json")).unwrap();
    let workload: Value = serde_json::from_str(include_str!("fixtures/two_node_workload.json")).unwrap();
    json!({"topology": topology, "workload": workload, "policy": "flood", "ttl": 4, "seed": seed}).to_string()
}

#[tokio::test]
async fn simulations_over_http() {
    let dir = TempDir::new().unwrap();
    let (app, _) = app(&dir);
    let r = post(&app, "/simulations", &sim_body(7)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let body = r.json();
    assert_eq!(body["metrics"]["delivery_ratio"], 1.0);
    assert_eq!(body["metrics"]["latency_ms"], json!([10]));
    let id = body["id"].as_str().unwrap();
    let fetched = get(&app, &format!("/simulations/{id}/metrics")).await;
    assert_eq!(fetched.json(), body["metrics"]);
    let twice = post(&app, "/simulations", &sim_body(7)).await.json();
    assert_eq!(twice["metrics"], body["metrics"]);

    let invalid = json!({"topology": {"nodes": [{"id": "A", "role": "HUB"}], "links": [{"a": "A", "b": "Z", "kind": "IP", "latency": {"fixed": 1}, "loss": 0}]},
                         "workload": [], "policy": "flood", "seed": 1});
    let r = post(&app, "/simulations", &invalid.to_string()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.error_code(), "ValidationFailure");
    let r = post(&app, "/simulations", &json!({"topology": {}, "workload": [], "policy": "flood"}).to_string()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = post(&app, "/simulations", &json!({"topology": {"nodes": [], "links": []}, "workload": [], "policy": "warp"}).to_string()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&app, "/simulations/nope/metrics").await.error_code(), "UnknownSimulation");
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_simulation_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (app, _) = app(&dir);
    let n = 12;
    let nodes: Vec<Value> = (0..n).map(|i| json!({"id": format!("n{i}"), "role": "HUB"})).collect();
    let mut links = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            links.push(json!({"a": format!("n{i}"), "b": format!("n{j}"), "kind": "IP", "latency": {"fixed": 1}, "loss": 0}));
        }
    }
    let workload: Vec<Value> = (0..10_000)
        .map(|k| json!({"msg_id": format!("m{k}"), "origin": "n0", "destination": "n1", "type": "t", "size": 1, "inject_ms": k}))
        .collect();
    let body = json!({"topology": {"nodes": nodes, "links": links}, "workload": workload, "policy": "flood", "ttl": 8, "seed": 1});
    let r = post(&app, "/simulations", &body.to_string()).await;
    assert_eq!(r.status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(r.error_code(), "TooLarge");
}
