use std::collections::VecDeque;

use super::Block;
use crate::error::{Error, Result};

pub type HopId = u32;

/// 250 MTU-sized blocks per next-hop buffer.
pub const DEFAULT_CAPACITY_BLOCKS: u32 = 250;

#[derive(Clone, Debug, PartialEq)]
pub enum DemuxMode {
    /// Every block goes to every next hop; the first hop to send it removes
    /// it everywhere.
    CopyAll,
    RoundRobinSplit,
    /// Each block goes to one hop, keeping long-run bit shares proportional
    /// to the weights.
    WeightedSplit(Vec<(HopId, f64)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Queued,
    Dropped,
}

#[derive(Clone, Debug)]
struct HopBuffer {
    hop: HopId,
    queue: VecDeque<Block>,
    bits: u64,
    /// Granted bits not yet spent on a whole block.
    credit: u64,
    /// Bits ever assigned to this hop (split modes).
    assigned_bits: f64,
    weight: f64,
}

#[derive(Clone, Debug)]
pub struct DemuxState {
    mode: DemuxMode,
    buffers: Vec<HopBuffer>,
    capacity_bits: u64,
    rr_cursor: usize,
    next_tag: u64,
    enqueued: u64,
    dropped: u64,
    pulled: u64,
}

impl DemuxState {
    pub fn new(mode: DemuxMode, hops: &[HopId], capacity_bits: u64) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::config("demux", "at least one next hop is required"));
        }
        if capacity_bits == 0 {
            return Err(Error::config("demux.capacity_blocks", "capacity must be positive"));
        }
        let mut buffers: Vec<HopBuffer> = hops
            .iter()
            .map(|&hop| HopBuffer {
                hop,
                queue: VecDeque::new(),
                bits: 0,
                credit: 0,
                assigned_bits: 0.0,
                weight: 1.0,
            })
            .collect();
        if let DemuxMode::WeightedSplit(weights) = &mode {
            for &(hop, w) in weights {
                let b = buffers.iter_mut().find(|b| b.hop == hop).ok_or_else(|| {
                    Error::config("demux.weights", format!("unknown next hop {hop}"))
                })?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::config("demux.weights", format!("weight {w} must be positive")));
                }
                b.weight = w;
            }
        }
        Ok(Self {
            mode,
            buffers,
            capacity_bits,
            rr_cursor: 0,
            next_tag: 1,
            enqueued: 0,
            dropped: 0,
            pulled: 0,
        })
    }

    pub fn mode(&self) -> &DemuxMode {
        &self.mode
    }

    pub fn hops(&self) -> impl Iterator<Item = HopId> + '_ {
        self.buffers.iter().map(|b| b.hop)
    }

    fn buffer_index(&self, hop: HopId) -> Result<usize> {
        self.buffers
            .iter()
            .position(|b| b.hop == hop)
            .ok_or_else(|| Error::Structural(format!("demux has no next hop {hop}")))
    }

    /// Blocks queued for `hop`, head first.
    pub fn buffer(&self, hop: HopId) -> Result<&VecDeque<Block>> {
        Ok(&self.buffers[self.buffer_index(hop)?].queue)
    }

    pub fn occupancy_bits(&self, hop: HopId) -> Result<u64> {
        Ok(self.buffers[self.buffer_index(hop)?].bits)
    }

    /// Bits the scheduler may still grant to `hop`: queued bits minus credit
    /// already banked toward the head block.
    pub fn backlog_bits(&self, hop: HopId) -> Result<u64> {
        let b = &self.buffers[self.buffer_index(hop)?];
        Ok(b.bits.saturating_sub(b.credit))
    }

    pub fn capacity_bits(&self) -> u64 {
        self.capacity_bits
    }

    /// Distinct blocks currently held (a copied block counts once).
    pub fn resident_blocks(&self) -> u64 {
        match self.mode {
            DemuxMode::CopyAll => self.buffers[0].queue.len() as u64,
            _ => self.buffers.iter().map(|b| b.queue.len() as u64).sum(),
        }
    }

    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pulled(&self) -> u64 {
        self.pulled
    }

    fn fits(&self, i: usize, block: &Block) -> bool {
        self.buffers[i].bits + u64::from(block.size) <= self.capacity_bits
    }

    fn push(&mut self, i: usize, block: Block) {
        let b = &mut self.buffers[i];
        b.bits += u64::from(block.size);
        b.queue.push_back(block);
    }

    pub fn enqueue(&mut self, block: Block) -> Admission {
        self.enqueued += 1;
        let admitted = match self.mode {
            DemuxMode::CopyAll => {
                if (0..self.buffers.len()).all(|i| self.fits(i, &block)) {
                    for i in 0..self.buffers.len() {
                        self.push(i, block);
                    }
                    true
                } else {
                    false
                }
            }
            DemuxMode::RoundRobinSplit => {
                let i = self.rr_cursor;
                self.rr_cursor = (i + 1) % self.buffers.len();
                self.admit_one(i, block)
            }
            DemuxMode::WeightedSplit(_) => {
                let size = f64::from(block.size);
                let mut best = 0;
                let mut best_key = f64::INFINITY;
                for (i, b) in self.buffers.iter().enumerate() {
                    let key = (b.assigned_bits + size) / b.weight;
                    if key < best_key {
                        best = i;
                        best_key = key;
                    }
                }
                self.buffers[best].assigned_bits += size;
                self.admit_one(best, block)
            }
        };
        if admitted {
            Admission::Queued
        } else {
            self.dropped += 1;
            Admission::Dropped
        }
    }

    /// Stamps the block with the demux's next sequence number and enqueues
    /// it. Numbers are consumed only by admitted blocks.
    pub fn enqueue_tagged(&mut self, mut block: Block) -> Admission {
        block.block_id = self.next_tag;
        let admission = self.enqueue(block);
        if admission == Admission::Queued {
            self.next_tag += 1;
        }
        admission
    }

    fn admit_one(&mut self, i: usize, block: Block) -> bool {
        if self.fits(i, &block) {
            self.push(i, block);
            true
        } else {
            false
        }
    }

    /// Removes whole blocks from the head of `hop`'s buffer while they fit in
    /// `budget` bits. In copy-all mode each returned block also leaves every
    /// other buffer.
    pub fn pull(&mut self, hop: HopId, budget: u64) -> Result<Vec<Block>> {
        let i = self.buffer_index(hop)?;
        Ok(self.pull_index(i, budget))
    }

    fn pull_index(&mut self, i: usize, budget: u64) -> Vec<Block> {
        let mut out = Vec::new();
        let mut left = budget;
        while let Some(head) = self.buffers[i].queue.front() {
            let size = u64::from(head.size);
            if size > left {
                break;
            }
            left -= size;
            let block = self.buffers[i].queue.pop_front().expect("head exists");
            self.buffers[i].bits -= size;
            out.push(block);
        }
        if matches!(self.mode, DemuxMode::CopyAll) {
            for (j, other) in self.buffers.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                for block in &out {
                    // Copy-all buffers hold identical sequences, so the block
                    // is at the head of every other buffer.
                    let head = other.queue.pop_front().expect("copy-all buffers stay aligned");
                    debug_assert_eq!(head.block_id, block.block_id);
                    other.bits -= u64::from(head.size);
                }
                if other.queue.is_empty() {
                    other.credit = 0;
                }
            }
        }
        self.pulled += out.len() as u64;
        out
    }

    /// Adds a scheduler grant to `hop`'s credit and pulls every whole block
    /// the credit now covers. Leftover credit carries to later slots; an
    /// emptied buffer forfeits it.
    pub fn serve(&mut self, hop: HopId, granted_bits: u64) -> Result<Vec<Block>> {
        let i = self.buffer_index(hop)?;
        self.buffers[i].credit += granted_bits;
        let out = self.pull_index(i, self.buffers[i].credit);
        let b = &mut self.buffers[i];
        b.credit -= out.iter().map(|blk| u64::from(blk.size)).sum::<u64>();
        if b.queue.is_empty() {
            b.credit = 0;
        }
        Ok(out)
    }
}
