use serde::Serialize;

use crate::scheduler::{FlowId, Policy};
use crate::transport::{SenderStats, SourceKind};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HostMetrics {
    pub host_id: usize,
    /// Unique in-order bits handed to the application.
    pub delivered_bits: u64,
    pub throughput_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowMetrics {
    pub flow_id: FlowId,
    pub host_id: usize,
    pub path: &'static str,
    pub granted_bits: u64,
    pub served_slots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamMetrics {
    pub stream_id: usize,
    pub host_id: usize,
    pub delivered_blocks: u64,
    pub duplicate_blocks: u64,
    pub demux_drops: u64,
    pub mux_gap_blocks: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tcp: Option<SenderStats>,
}

/// Results of one run. Host 0 is the target UE.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario: SourceKind,
    pub inter_policy: Policy,
    pub intra_policy: Policy,
    pub seed: u64,
    pub duration_slots: u64,
    pub target_throughput_bps: f64,
    /// Sum of per-host throughputs.
    pub system_throughput_bps: f64,
    pub hosts: Vec<HostMetrics>,
    pub flows: Vec<FlowMetrics>,
    pub streams: Vec<StreamMetrics>,
    /// FNV-1a of each device's rate sequence.
    pub channel_checksums: Vec<String>,
    /// Delivered bits per host in each 1000-slot window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeseries: Option<Vec<Vec<f64>>>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
