#![allow(dead_code)]

use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use gloss_control::AssemblySpecDoc;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const USER: &str = "+447700900123";
pub const SERVER: &str = "+447700900000";

pub struct Resp {
    pub status: StatusCode,
    pub content_type: String,
    pub bytes: Bytes,
}

impl Resp {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes)
            .unwrap_or_else(|e| panic!("status {} body not JSON ({e}): {}", self.status, self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.bytes).into_owned()
    }

    pub fn error_code(&self) -> String {
        self.json()["error"].as_str().unwrap_or_default().to_string()
    }

    pub fn reason(&self) -> String {
        self.json()["reason"].as_str().unwrap_or_default().to_string()
    }
}

pub async fn request(app: &Router, method: Method, uri: &str, body: Option<String>, accept: Option<&str>) -> Resp {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    if let Some(a) = accept {
        req = req.header("accept", a);
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type =
        resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or_default().to_string();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Resp { status, content_type, bytes }
}

pub async fn get(app: &Router, uri: &str) -> Resp {
    request(app, Method::GET, uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> Resp {
    request(app, Method::POST, uri, Some(body.to_string()), None).await
}

pub async fn post_empty(app: &Router, uri: &str) -> Resp {
    request(app, Method::POST, uri, None, None).await
}

/// JSON-lines trace of `n` fixes five seconds apart, walking north-east.
pub fn trace_text(n: usize) -> String {
    (0..n)
        .map(|i| {
            format!(
                "{{\"lat\":{:.5},\"lon\":{:.5},\"time\":\"2002-09-01T12:{:02}:{:02}.000Z\"}}\n",
                56.3398 + i as f64 * 0.00037,
                -2.7967 + i as f64 * 0.00021,
                (i * 5) / 60,
                (i * 5) % 60
            )
        })
        .collect()
}

/// Mobile assembly wired as in the transport module, with an inline trace.
pub fn mobile_spec(fixes: &str) -> AssemblySpecDoc {
    AssemblySpecDoc::default()
        .component("gps_device", "gps_source", &[("user", USER), ("fixes", fixes), ("interval_ms", "5000")])
        .component("xml_generator", "xml_codec_adapter", &[("direction", "record_to_text")])
        .component("gps_adapter", "xml_codec_adapter", &[("direction", "text_to_record")])
        .component("event_bus", "event_bus", &[])
        .component("sms_adapter", "xml_codec_adapter", &[("direction", "record_to_text")])
        .component("sms_device", "sms_device", &[("own_number", USER), ("recipient", SERVER)])
        .connect("gps_device", "xml_generator")
        .connect("xml_generator", "gps_adapter")
        .connect("gps_adapter", "event_bus")
        .connect("event_bus", "sms_adapter")
        .connect("sms_adapter", "sms_device")
}

pub fn server_spec(directory: &str) -> AssemblySpecDoc {
    AssemblySpecDoc::default()
        .component("sms_device", "sms_xml_device", &[("own_number", SERVER)])
        .component("saver", "file_sink", &[("directory", directory)])
        .connect("sms_device", "saver")
}

pub fn spec_json(spec: &AssemblySpecDoc) -> String {
    serde_json::to_string(spec).unwrap()
}

/// Polls `check` every 10 ms until it returns true or `timeout` passes.
pub async fn eventually<F, Fut>(timeout: Duration, mut check: F) -> bool
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = bool>,
{
    let deadline = Instant::now() + timeout;
    loop {
        if check().await {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}
