//! Slot-level simulator of an LTE downlink cell in which one UE can also
//! receive through a D2D relay. A programmable demux at the base station
//! splits a flow across the direct and relayed paths; a mux at the host
//! restores order. A two-tier scheduler (clusters of flows, then flows)
//! shares the cell.

pub mod channel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod netfn;
pub mod scheduler;
pub mod seed;
pub mod sim;
pub mod transport;

/// One slot is one LTE subframe (1 ms).
pub const SLOTS_PER_SECOND: u64 = 1000;

pub use config::{parse_config, parse_config_str, ScenarioConfig};
pub use error::{Error, Result};
pub use scheduler::Policy;
pub use sim::{run, Metrics, World};
pub use transport::SourceKind;
