//! Minimal server-rendered pages for browsers.

use std::fmt::Write;

use axum::http::header::ACCEPT;
use axum::http::HeaderMap;
use gloss_core::services::{Located, RadarEntry, SmartTownResult, TrailView};
use gloss_core::transport::{format_timestamp, UserId};

/// True when the Accept header ranks text/html above application/json.
pub fn prefers_html(headers: &HeaderMap) -> bool {
    let Some(accept) = headers.get(ACCEPT).and_then(|v| v.to_str().ok()) else {
        return false;
    };
    let mut html = None;
    let mut json = None;
    for (i, item) in accept.split(',').enumerate() {
        let mut parts = item.split(';');
        let media = parts.next().unwrap_or("").trim().to_ascii_lowercase();
        let q = parts
            .filter_map(|p| p.trim().strip_prefix("q=").and_then(|v| v.parse::<f32>().ok()))
            .next()
            .unwrap_or(1.0);
        let rank = (q, -(i as i64));
        match media.as_str() {
            "text/html" => html = Some(rank),
            "application/json" => json = Some(rank),
            _ => {}
        }
    }
    match (html, json) {
        (Some(h), Some(j)) => h.0 > j.0 || (h.0 == j.0 && h.1 > j.1),
        (Some(h), None) => h.0 > 0.0,
        _ => false,
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title>\
         <style>body{{font-family:sans-serif}}table{{border-collapse:collapse}}td,th{{padding:2px 8px;border:1px solid #ccc}}\
         .map{{position:relative;display:inline-block}}.pin{{position:absolute;width:8px;height:8px;margin:-4px;border-radius:4px;background:red}}</style>\
         </head><body><h1>{t}</h1>\n{body}</body></html>\n",
        t = escape(title)
    )
}

fn map_with_pins(image_id: &str, pins: &[(f64, f64)]) -> String {
    let mut s = format!("<div class=\"map\"><img src=\"/maps/{}\" alt=\"map\">", escape(image_id));
    for (x, y) in pins {
        let _ = write!(s, "<span class=\"pin\" style=\"left:{x:.1}px;top:{y:.1}px\"></span>");
    }
    s.push_str("</div>\n");
    s
}

pub fn location(user: &UserId, located: &Located) -> String {
    let p = located.event.position();
    let mut body = format!(
        "<p>Last seen at {:.5}, {:.5} on {}.</p>\n",
        p.lat(),
        p.lon(),
        escape(&format_timestamp(&located.event.timestamp()))
    );
    if let Some(m) = &located.map {
        body.push_str(&map_with_pins(&m.image_id, &[(m.x, m.y)]));
    }
    page(&format!("Location of {user}"), &body)
}

pub fn trail(user: &UserId, view: &TrailView) -> String {
    let mut body = String::new();
    if let Some(m) = &view.map {
        let pins: Vec<(f64, f64)> = view.points.iter().map(|p| (p.x, p.y)).collect();
        body.push_str(&map_with_pins(&m.image_id, &pins));
    }
    body.push_str("<table><tr><th>#</th><th>time</th><th>lat</th><th>lon</th></tr>\n");
    for (i, e) in view.events.iter().enumerate() {
        let _ = writeln!(
            body,
            "<tr><td>{}</td><td>{}</td><td>{:.5}</td><td>{:.5}</td></tr>",
            i + 1,
            escape(&format_timestamp(&e.timestamp())),
            e.position().lat(),
            e.position().lon()
        );
    }
    body.push_str("</table>\n");
    page(&format!("Trail of {user}"), &body)
}

pub fn smart_town(result: &SmartTownResult) -> String {
    if result.entries.is_empty() {
        return page("Smart town", "<p>Nothing nearby.</p>\n");
    }
    let mut body = String::new();
    for e in &result.entries {
        let f = &e.facility;
        let _ = write!(
            body,
            "<div id=\"{id}\"><h2>{rank}. {name}</h2><p>{cat}, {d:.0} m away. {info}</p><p>",
            id = escape(&f.id),
            rank = e.rank,
            name = escape(&f.name),
            cat = escape(&f.category),
            d = e.distance_m,
            info = escape(&f.info),
        );
        if let Some(prev) = &e.prev {
            let _ = write!(body, "<a href=\"#{}\">previous</a> ", escape(prev));
        }
        if let Some(next) = &e.next {
            let _ = write!(body, "<a href=\"#{}\">next</a>", escape(next));
        }
        body.push_str("</p></div>\n");
    }
    page("Smart town", &body)
}

pub fn radar(user: &UserId, entries: &[RadarEntry]) -> String {
    let mut body = String::from("<table><tr><th>kind</th><th>name</th><th>distance (m)</th><th>bearing</th></tr>\n");
    for e in entries {
        let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let _ = writeln!(
            body,
            "<tr><td>{}</td><td>{}</td><td>{:.0}</td><td>{:.0}&deg;</td></tr>",
            escape(&kind),
            escape(&e.name),
            e.distance,
            e.bearing
        );
    }
    body.push_str("</table>\n");
    page(&format!("Radar for {user}"), &body)
}
