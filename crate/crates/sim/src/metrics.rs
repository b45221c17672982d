use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub injected: u64,
    pub transmissions: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_oversize: u64,
    pub dropped_dead_end: u64,
    pub duplicates_suppressed: u64,
    /// Delivered over injected, counting destination-addressed messages only.
    pub delivery_ratio: f64,
    pub latency_ms: Vec<u64>,
    pub hop_counts: Vec<u32>,
    /// Message id of each delivery, aligned with `latency_ms`.
    pub delivery_ids: Vec<String>,
    /// Transmissions that reached the far end (first receipt or duplicate).
    pub arrivals: u64,
    /// Events still queued when the horizon cut the run short.
    pub in_flight: u64,
    pub events_processed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Json,
    Csv,
}

pub const CSV_SUMMARY_FIELDS: [&str; 8] = [
    "injected",
    "delivered",
    "transmissions",
    "dropped_loss",
    "dropped_oversize",
    "dropped_dead_end",
    "duplicates_suppressed",
    "delivery_ratio",
];

pub fn emit_metrics(m: &SimMetrics, format: MetricsFormat) -> Result<String, SimError> {
    match format {
        MetricsFormat::Json => serde_json::to_string_pretty(m).map_err(|e| SimError::Io(e.to_string())),
        MetricsFormat::Csv => {
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
            let io = |e: csv::Error| SimError::Io(e.to_string());
            w.write_record(["msg_id", "latency_ms", "hops"]).map_err(io)?;
            for ((id, lat), hops) in m.delivery_ids.iter().zip(&m.latency_ms).zip(&m.hop_counts) {
                w.write_record([id.clone(), lat.to_string(), hops.to_string()]).map_err(io)?;
            }
            w.write_record([
                "summary".to_string(),
                m.injected.to_string(),
                m.delivered.to_string(),
                m.transmissions.to_string(),
                m.dropped_loss.to_string(),
                m.dropped_oversize.to_string(),
                m.dropped_dead_end.to_string(),
                m.duplicates_suppressed.to_string(),
                format!("{:.6}", m.delivery_ratio),
            ])
            .map_err(io)?;
            let bytes = w.into_inner().map_err(|e| SimError::Io(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
    }
}
