//! Programmable flow demultiplexer and multiplexer.

mod demux;
mod mux;

pub use demux::{Admission, DemuxMode, DemuxState, HopId, DEFAULT_CAPACITY_BLOCKS};
pub use mux::{MuxRelease, MuxState};

/// One IP packet's worth of data: 1500 bytes.
pub const BLOCK_BITS: u32 = 12_000;

/// Identifies a sequence-number space (a TCP connection, an MP-TCP subflow
/// or a backlogged stream).
pub type StreamId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub stream: StreamId,
    /// Network-function sequence number, starting at 1. A demux re-tags the
    /// blocks it admits so the downstream mux sees a gap-free sequence.
    pub block_id: u64,
    /// Transport sequence number carried as payload.
    pub seq: u64,
    pub size: u32,
    pub enqueue_slot: u64,
}

impl Block {
    pub fn new(stream: StreamId, block_id: u64, size: u32, enqueue_slot: u64) -> Self {
        debug_assert!(size > 0);
        Self {
            stream,
            block_id,
            seq: block_id,
            size,
            enqueue_slot,
        }
    }
}
