//! Slotted event loop over the cell topology: server, wired backhaul, eNB
//! (demux, scheduler, channels), direct UE delivery and the relay's D2D hop.

mod link;
mod metrics;
mod world;

pub use link::Link;
pub use metrics::{FlowMetrics, HostMetrics, Metrics, StreamMetrics};
pub use world::{run, World, HOP_DIRECT, HOP_RELAY};
