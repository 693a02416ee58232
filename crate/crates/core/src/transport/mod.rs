//! End-to-end transport models: a Reno-style TCP, LIA-coupled multipath
//! TCP and backlogged (full-buffer) sources.

mod lia;
mod tcp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lia::{lia_alpha, mptcp_increase, Coupling, MultipathState};
pub use tcp::{
    on_ack, on_loss, Ack, AckOutcome, SenderStats, TcpFlowState, TcpPhase, TcpReceiver, TcpSender,
    DUPTHRESH, INITIAL_CWND, MIN_RTO_SLOTS, MIN_SSTHRESH,
};

use crate::error::{Error, Result};

/// The end-to-end scenario driving the target host.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Full-buffer sources, one per LTE link of the host.
    Backlogged,
    /// One TCP connection over the direct LTE link.
    SingleFlow,
    /// One TCP connection split by the base-station demux over the direct
    /// and relayed links and recombined by the mux at the host.
    DemuxedTcp,
    /// Two independent TCP connections, one per path.
    TwoTcp,
    /// One multipath connection with LIA-coupled subflows, one per path.
    Mptcp,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::Backlogged,
        SourceKind::SingleFlow,
        SourceKind::DemuxedTcp,
        SourceKind::TwoTcp,
        SourceKind::Mptcp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Backlogged => "backlogged",
            SourceKind::SingleFlow => "single_flow",
            SourceKind::DemuxedTcp => "demuxed_tcp",
            SourceKind::TwoTcp => "two_tcp",
            SourceKind::Mptcp => "mptcp",
        }
    }

    /// Whether the scenario needs both the direct and the relayed path.
    pub fn needs_relay(self) -> bool {
        matches!(self, SourceKind::DemuxedTcp | SourceKind::TwoTcp | SourceKind::Mptcp)
    }

    pub fn is_multipath(self) -> bool {
        self.needs_relay()
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SourceKind::ALL.iter().map(|k| k.name()).collect();
                Error::config("scenario", crate::config::unknown_name_message(s, &names))
            })
    }
}
