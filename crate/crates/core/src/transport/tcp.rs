use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

/// Initial window, in blocks.
pub const INITIAL_CWND: f64 = 10.0;
pub const MIN_SSTHRESH: f64 = 2.0;
/// Deliveries of later transmissions needed to declare a block lost.
pub const DUPTHRESH: u8 = 3;
pub const MIN_RTO_SLOTS: u64 = 200;
pub const MAX_RTO_SLOTS: u64 = 60_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TcpPhase {
    SlowStart,
    CongestionAvoidance,
}

/// Reno-style window state. Windows are counted in blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct TcpFlowState {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: TcpPhase,
    /// Smoothed RTT in slots; 0 until the first sample.
    pub srtt: f64,
    pub rttvar: f64,
    pub inflight: u32,
    /// Next new sequence number to send.
    pub next_seq: u64,
    /// Highest sequence number covered by the cumulative ACK.
    pub highest_acked: u64,
}

impl Default for TcpFlowState {
    fn default() -> Self {
        Self {
            cwnd: INITIAL_CWND,
            ssthresh: f64::INFINITY,
            phase: TcpPhase::SlowStart,
            srtt: 0.0,
            rttvar: 0.0,
            inflight: 0,
            next_seq: 1,
            highest_acked: 0,
        }
    }
}

impl TcpFlowState {
    /// Whole blocks the window currently allows.
    pub fn window(&self) -> u32 {
        self.cwnd.floor().max(1.0) as u32
    }

    pub fn observe_rtt(&mut self, sample: f64) {
        if self.srtt == 0.0 {
            self.srtt = sample;
            self.rttvar = sample / 2.0;
        } else {
            self.rttvar = 0.75 * self.rttvar + 0.25 * (self.srtt - sample).abs();
            self.srtt = 0.875 * self.srtt + 0.125 * sample;
        }
    }

    pub fn rto(&self) -> u64 {
        if self.srtt == 0.0 {
            return 1000;
        }
        ((self.srtt + 4.0 * self.rttvar).ceil() as u64).clamp(MIN_RTO_SLOTS, MAX_RTO_SLOTS)
    }
}

pub fn on_ack(flow: &mut TcpFlowState, acked: u32) {
    let acked = f64::from(acked);
    match flow.phase {
        TcpPhase::SlowStart => {
            flow.cwnd += acked;
            if flow.cwnd >= flow.ssthresh {
                flow.phase = TcpPhase::CongestionAvoidance;
            }
        }
        TcpPhase::CongestionAvoidance => flow.cwnd += acked / flow.cwnd,
    }
}

pub fn on_loss(flow: &mut TcpFlowState) {
    flow.ssthresh = (flow.cwnd / 2.0).max(MIN_SSTHRESH);
    flow.cwnd = flow.ssthresh;
    flow.phase = TcpPhase::CongestionAvoidance;
}

fn on_timeout(flow: &mut TcpFlowState) {
    flow.ssthresh = (flow.cwnd / 2.0).max(MIN_SSTHRESH);
    flow.cwnd = 1.0;
    flow.phase = TcpPhase::SlowStart;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ack {
    /// Receiver's next expected sequence number.
    pub cumulative: u64,
    /// Sequence number of the block that triggered this ACK.
    pub seq: u64,
}

#[derive(Clone, Copy, Debug)]
struct InFlight {
    seq: u64,
    sent_at: u64,
    retransmission: bool,
    later_deliveries: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SenderStats {
    pub transmissions: u64,
    pub retransmissions: u64,
    pub loss_events: u64,
    pub timeouts: u64,
}

/// What an ACK did to the sender; the caller applies window growth (plain
/// or coupled) for `newly_acked`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AckOutcome {
    pub newly_acked: u32,
    pub congestion_event: bool,
}

/// Sender side of one sequence space: window discipline, per-block
/// delivery reports, loss detection after three later deliveries, and a
/// retransmission timeout.
#[derive(Clone, Debug)]
pub struct TcpSender {
    pub state: TcpFlowState,
    /// In-flight blocks keyed by transmission order.
    inflight: BTreeMap<u64, InFlight>,
    /// Sequence number -> transmission order of in-flight blocks.
    order_of: BTreeMap<u64, u64>,
    retransmit: BTreeSet<u64>,
    tx_counter: u64,
    recovery_point: u64,
    last_progress: u64,
    backoff: u32,
    stats: SenderStats,
}

impl Default for TcpSender {
    fn default() -> Self {
        Self::new()
    }
}

impl TcpSender {
    pub fn new() -> Self {
        Self {
            state: TcpFlowState::default(),
            inflight: BTreeMap::new(),
            order_of: BTreeMap::new(),
            retransmit: BTreeSet::new(),
            tx_counter: 0,
            recovery_point: 0,
            last_progress: 0,
            backoff: 0,
            stats: SenderStats::default(),
        }
    }

    pub fn stats(&self) -> SenderStats {
        self.stats
    }

    pub fn pending_retransmissions(&self) -> usize {
        self.retransmit.len()
    }

    pub fn can_send(&self) -> bool {
        self.state.inflight < self.state.window()
    }

    /// Next sequence number to put on the wire, if the window allows.
    /// Retransmissions go first.
    pub fn next_transmission(&mut self, now: u64) -> Option<u64> {
        if !self.can_send() {
            return None;
        }
        if self.inflight.is_empty() {
            self.last_progress = now;
        }
        let (seq, retransmission) = match self.retransmit.pop_first() {
            Some(seq) => (seq, true),
            None => {
                let seq = self.state.next_seq;
                self.state.next_seq += 1;
                (seq, false)
            }
        };
        let order = self.tx_counter;
        self.tx_counter += 1;
        self.inflight.insert(
            order,
            InFlight {
                seq,
                sent_at: now,
                retransmission,
                later_deliveries: 0,
            },
        );
        self.order_of.insert(seq, order);
        self.state.inflight += 1;
        self.stats.transmissions += 1;
        self.stats.retransmissions += u64::from(retransmission);
        Some(seq)
    }

    fn remove(&mut self, order: u64) -> Option<InFlight> {
        let entry = self.inflight.remove(&order)?;
        self.order_of.remove(&entry.seq);
        self.state.inflight -= 1;
        Some(entry)
    }

    fn delivered(&mut self, seq: u64, now: u64) -> bool {
        match self.order_of.get(&seq).copied() {
            Some(order) => {
                let entry = self.remove(order).expect("indexed entry exists");
                if !entry.retransmission {
                    self.state.observe_rtt((now - entry.sent_at) as f64);
                }
                true
            }
            None => self.retransmit.remove(&seq),
        }
    }

    fn mark_lost(&mut self, order: u64) -> bool {
        let entry = self.remove(order).expect("lost entry exists");
        self.retransmit.insert(entry.seq);
        if order >= self.recovery_point {
            self.recovery_point = self.tx_counter;
            self.stats.loss_events += 1;
            on_loss(&mut self.state);
            true
        } else {
            false
        }
    }

    /// Processes a delivery report. Window growth is left to the caller.
    pub fn on_ack(&mut self, ack: Ack, now: u64) -> AckOutcome {
        let mut outcome = AckOutcome::default();
        let trigger_order = self.order_of.get(&ack.seq).copied();
        if self.delivered(ack.seq, now) {
            outcome.newly_acked += 1;
        }
        if ack.cumulative > self.state.highest_acked + 1 {
            let covered: Vec<u64> = self.order_of.range(..ack.cumulative).map(|(&s, _)| s).collect();
            for seq in covered {
                if self.delivered(seq, now) {
                    outcome.newly_acked += 1;
                }
            }
            self.retransmit = self.retransmit.split_off(&ack.cumulative);
            self.state.highest_acked = ack.cumulative - 1;
        }
        if let Some(trigger) = trigger_order {
            let mut lost = Vec::new();
            for (&order, entry) in self.inflight.range_mut(..trigger) {
                entry.later_deliveries += 1;
                if entry.later_deliveries >= DUPTHRESH {
                    lost.push(order);
                }
            }
            for order in lost {
                outcome.congestion_event |= self.mark_lost(order);
            }
        }
        if outcome.newly_acked > 0 {
            self.last_progress = now;
            self.backoff = 0;
        }
        outcome
    }

    /// Fires the retransmission timer if nothing was acknowledged for one
    /// RTO. Every in-flight block is then queued for retransmission.
    pub fn check_timeout(&mut self, now: u64) -> bool {
        if self.inflight.is_empty() {
            return false;
        }
        let rto = (self.state.rto() << self.backoff.min(8)).min(MAX_RTO_SLOTS);
        if now.saturating_sub(self.last_progress) < rto {
            return false;
        }
        let orders: Vec<u64> = self.inflight.keys().copied().collect();
        for order in orders {
            let entry = self.remove(order).expect("entry exists");
            self.retransmit.insert(entry.seq);
        }
        on_timeout(&mut self.state);
        self.recovery_point = self.tx_counter;
        self.last_progress = now;
        self.backoff += 1;
        self.stats.timeouts += 1;
        true
    }
}

/// Cumulative-ACK receiver. Counts each sequence number once.
#[derive(Clone, Debug)]
pub struct TcpReceiver {
    next_expected: u64,
    out_of_order: BTreeSet<u64>,
    delivered_blocks: u64,
    duplicate_blocks: u64,
}

impl Default for TcpReceiver {
    fn default() -> Self {
        Self::new()
    }
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self {
            next_expected: 1,
            out_of_order: BTreeSet::new(),
            delivered_blocks: 0,
            duplicate_blocks: 0,
        }
    }

    /// Blocks handed to the application in order.
    pub fn delivered_blocks(&self) -> u64 {
        self.delivered_blocks
    }

    pub fn duplicate_blocks(&self) -> u64 {
        self.duplicate_blocks
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    pub fn buffered(&self) -> usize {
        self.out_of_order.len()
    }

    /// Accepts a block and returns the ACK it triggers.
    pub fn receive(&mut self, seq: u64) -> Ack {
        if seq < self.next_expected || !self.out_of_order.insert(seq) {
            self.duplicate_blocks += 1;
        } else {
            while self.out_of_order.remove(&self.next_expected) {
                self.next_expected += 1;
                self.delivered_blocks += 1;
            }
        }
        Ack {
            cumulative: self.next_expected,
            seq,
        }
    }
}
