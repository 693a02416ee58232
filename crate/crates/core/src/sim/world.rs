use std::collections::VecDeque;

use crate::channel::{load_trace, ChannelProcess, MarkovChannelParams, RateTable};
use crate::config::{ChannelSpec, DemuxModeSpec, ScenarioConfig};
use crate::error::{Error, Result};
use crate::netfn::{Admission, Block, DemuxMode, DemuxState, HopId, MuxState, StreamId};
use crate::scheduler::{ClusterSchedState, FlowId, SchedulerConfig, SchedulingDecision};
use crate::seed;
use crate::transport::{Ack, Coupling, MultipathState, SourceKind, TcpReceiver};
use crate::SLOTS_PER_SECOND;

use super::link::Link;
use super::metrics::{FlowMetrics, HostMetrics, Metrics, StreamMetrics};

pub const TARGET_DEVICE: usize = 0;
pub const RELAY_DEVICE: usize = 1;
pub const HOP_DIRECT: HopId = 0;
pub const HOP_RELAY: HopId = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// One LTE flow as the scheduler sees it: a stream's demux buffer for one
/// next hop, drained over one device's channel.
#[derive(Clone, Debug)]
struct LteFlow {
    stream: usize,
    hop: HopId,
    device: usize,
    granted_bits: u64,
    served_slots: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Backlogged,
    Tcp { conn: usize, subflow: usize },
}

/// One sequence space end to end: source, demux at the eNB, optional mux
/// and the receiver at the host.
#[derive(Clone, Debug)]
struct Stream {
    host: usize,
    source: Source,
    demux: DemuxState,
    mux: Option<MuxState>,
    receiver: TcpReceiver,
    next_seq: u64,
    emitted: u64,
    in_transit: u64,
    handed: u64,
}

#[derive(Clone, Debug)]
struct Connection {
    mp: MultipathState,
}

/// The full simulated network for one run.
#[derive(Clone, Debug)]
pub struct World {
    cfg: ScenarioConfig,
    table: RateTable,
    now: u64,
    channels: Vec<ChannelProcess>,
    rates: Vec<u32>,
    checksums: Vec<u64>,
    backhaul: Vec<Link>,
    d2d: Option<Link>,
    streams: Vec<Stream>,
    conns: Vec<Connection>,
    flows: Vec<LteFlow>,
    sched: SchedulerConfig,
    acks: VecDeque<(u64, usize, Ack)>,
    hosts: usize,
    last_decision: Option<SchedulingDecision>,
    window_start_blocks: Vec<u64>,
    timeseries: Vec<Vec<f64>>,
}

fn build_channel(spec: &ChannelSpec, key: &str, master: u64, device: usize, table: &RateTable) -> Result<ChannelProcess> {
    Ok(match spec {
        ChannelSpec::Markov { p, q } => {
            let params = MarkovChannelParams::new(*p, *q).map_err(|e| match e {
                Error::Config { key: k, message } => Error::config(format!("{key}.{k}"), message),
                other => other,
            })?;
            ChannelProcess::markov(params, seed::stream(master, "channel", device as u64))
        }
        ChannelSpec::Trace { path, shift_epochs } => {
            ChannelProcess::Trace(load_trace(path, *shift_epochs, table)?)
        }
        ChannelSpec::Fixed { cqi } => ChannelProcess::Fixed(table.rate(*cqi)?),
    })
}

impl World {
    /// Instantiates the topology, channels, transports and scheduler.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let table = RateTable::lte();
        let topo = &cfg.topology;

        let mut specs = vec![(&cfg.channels.target, "channel.target")];
        if topo.relay {
            specs.push((&cfg.channels.relay, "channel.relay"));
        }
        let extra_base = specs.len();
        specs.extend(cfg.channels.extra.iter().map(|c| (c, "channel.extra")));
        // Device indices are fixed (target 0, relay 1, extras from 2) so that
        // per-device channel streams do not depend on the topology.
        let device_of_extra = |i: usize| 2 + i;
        let mut channels = Vec::with_capacity(specs.len());
        for (i, (spec, key)) in specs.iter().enumerate() {
            let device = if i < extra_base { i } else { device_of_extra(i - extra_base) };
            channels.push(build_channel(spec, key, cfg.seed, device, &table)?);
        }
        let device_slot = |device: usize| -> usize {
            if device < 2 {
                device
            } else {
                extra_base + device - 2
            }
        };

        let cap_bits = u64::from(cfg.demux.capacity_blocks) * u64::from(cfg.block_bits);
        let mut streams: Vec<Stream> = Vec::new();
        let mut conns: Vec<Connection> = Vec::new();
        let mut flows: Vec<LteFlow> = Vec::new();
        // Scheduler flows grouped by host.
        let mut host_flows: Vec<Vec<FlowId>> = Vec::new();

        let single_hop = |hop: HopId| DemuxState::new(DemuxMode::CopyAll, &[hop], cap_bits);
        let new_stream = |host: usize, source: Source, demux: DemuxState, mux: Option<MuxState>| Stream {
            host,
            source,
            demux,
            mux,
            receiver: TcpReceiver::new(),
            next_seq: 1,
            emitted: 0,
            in_transit: 0,
            handed: 0,
        };

        let add_host = |host: usize,
                            kind: SourceKind,
                            device: usize,
                            relay: bool,
                            streams: &mut Vec<Stream>,
                            conns: &mut Vec<Connection>,
                            flows: &mut Vec<LteFlow>|
         -> Result<Vec<FlowId>> {
            let mut ids = Vec::new();
            let mut add_flow = |stream: usize, hop: HopId, flows: &mut Vec<LteFlow>| {
                let dev = if hop == HOP_RELAY { RELAY_DEVICE } else { device };
                ids.push(flows.len() as FlowId);
                flows.push(LteFlow {
                    stream,
                    hop,
                    device: device_slot(dev),
                    granted_bits: 0,
                    served_slots: 0,
                });
            };
            let hops: Vec<HopId> = if relay { vec![HOP_DIRECT, HOP_RELAY] } else { vec![HOP_DIRECT] };
            match kind {
                SourceKind::Backlogged => {
                    for &hop in &hops {
                        let s = streams.len();
                        streams.push(new_stream(host, Source::Backlogged, single_hop(hop)?, None));
                        add_flow(s, hop, flows);
                    }
                }
                SourceKind::SingleFlow | SourceKind::TwoTcp | SourceKind::Mptcp => {
                    let (paths, coupling, per_conn) = match kind {
                        SourceKind::SingleFlow => (vec![HOP_DIRECT], Coupling::None, false),
                        SourceKind::TwoTcp => (hops.clone(), Coupling::None, true),
                        _ => (hops.clone(), Coupling::Lia, false),
                    };
                    let groups: Vec<Vec<HopId>> = if per_conn {
                        paths.iter().map(|&h| vec![h]).collect()
                    } else {
                        vec![paths]
                    };
                    for group in groups {
                        let conn = conns.len();
                        for (k, &hop) in group.iter().enumerate() {
                            let s = streams.len();
                            streams.push(new_stream(
                                host,
                                Source::Tcp { conn, subflow: k },
                                single_hop(hop)?,
                                None,
                            ));
                            add_flow(s, hop, flows);
                        }
                        conns.push(Connection {
                            mp: MultipathState::new(group.len(), coupling)?,
                        });
                    }
                }
                SourceKind::DemuxedTcp => {
                    let mode = match cfg.demux.mode {
                        DemuxModeSpec::CopyAll => DemuxMode::CopyAll,
                        DemuxModeSpec::RoundRobin => DemuxMode::RoundRobinSplit,
                        DemuxModeSpec::Weighted { direct, relay } => {
                            DemuxMode::WeightedSplit(vec![(HOP_DIRECT, direct), (HOP_RELAY, relay)])
                        }
                    };
                    let conn = conns.len();
                    let s = streams.len();
                    streams.push(new_stream(
                        host,
                        Source::Tcp { conn, subflow: 0 },
                        DemuxState::new(mode, &hops, cap_bits)?,
                        Some(MuxState::new(cfg.mux.hold_slots)),
                    ));
                    for &hop in &hops {
                        add_flow(s, hop, flows);
                    }
                    conns.push(Connection {
                        mp: MultipathState::new(1, Coupling::None)?,
                    });
                }
            }
            Ok(ids)
        };

        let target_relay = topo.relay && cfg.scenario != SourceKind::SingleFlow;
        host_flows.push(add_host(
            0,
            cfg.scenario,
            TARGET_DEVICE,
            target_relay,
            &mut streams,
            &mut conns,
            &mut flows,
        )?);
        for i in 0..topo.extra_ues {
            host_flows.push(add_host(
                i + 1,
                topo.extra_ue_scenario,
                device_of_extra(i),
                false,
                &mut streams,
                &mut conns,
                &mut flows,
            )?);
        }

        let bootstrap = table.mean();
        let mut clusters = Vec::new();
        for (host, ids) in host_flows.iter().enumerate() {
            if host == 0 && !cfg.scheduler.bundle {
                for &f in ids {
                    clusters.push(vec![f]);
                }
            } else {
                clusters.push(ids.clone());
            }
        }
        let clusters = clusters
            .into_iter()
            .enumerate()
            .map(|(cid, members)| ClusterSchedState::new(cid as u32, members, cfg.scheduler.intra, bootstrap))
            .collect::<Result<Vec<_>>>()?;
        let sched = SchedulerConfig::new(cfg.scheduler.inter, clusters, cfg.scheduler.t_c)?;

        let backhaul = (0..topo.backhaul_links)
            .map(|_| Link::new(topo.wired_bits_per_slot, topo.wired_delay_slots))
            .collect();
        let d2d = topo
            .relay
            .then(|| Link::new(topo.d2d_bits_per_slot, topo.d2d_delay_slots));
        let n_channels = channels.len();
        let hosts = host_flows.len();
        Ok(Self {
            cfg: cfg.clone(),
            table,
            now: 0,
            channels,
            rates: vec![0; n_channels],
            checksums: vec![FNV_OFFSET; n_channels],
            backhaul,
            d2d,
            streams,
            conns,
            flows,
            sched,
            acks: VecDeque::new(),
            hosts,
            last_decision: None,
            window_start_blocks: vec![0; hosts],
            timeseries: Vec::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Slots simulated so far.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn hosts(&self) -> usize {
        self.hosts
    }

    pub fn scheduler(&self) -> &SchedulerConfig {
        &self.sched
    }

    /// Channel rates published in the last slot, by device (target, relay
    /// when present, then extra UEs).
    pub fn rates(&self) -> &[u32] {
        &self.rates
    }

    pub fn last_decision(&self) -> Option<SchedulingDecision> {
        self.last_decision
    }

    /// Host that LTE flow `flow` delivers to.
    pub fn flow_host(&self, flow: FlowId) -> usize {
        self.streams[self.flows[flow as usize].stream].host
    }

    pub fn backhaul(&self) -> &[Link] {
        &self.backhaul
    }

    pub fn d2d(&self) -> Option<&Link> {
        self.d2d.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.now >= self.cfg.duration_slots
    }

    fn emit(&mut self, s: usize, seq: u64) {
        let size = self.cfg.block_bits;
        let stream = &mut self.streams[s];
        stream.emitted += 1;
        stream.in_transit += 1;
        let block = Block::new(s as StreamId, seq, size, self.now);
        self.backhaul[0].push(block);
    }

    fn deliver_to_host(&mut self, block: Block) {
        let now = self.now;
        let s = block.stream as usize;
        let released = match &mut self.streams[s].mux {
            Some(mux) => mux.ingest(block, now),
            None => vec![block],
        };
        for b in released {
            self.hand_to_receiver(s, b);
        }
    }

    fn hand_to_receiver(&mut self, s: usize, block: Block) {
        let stream = &mut self.streams[s];
        stream.handed += 1;
        let ack = stream.receiver.receive(block.seq);
        if matches!(stream.source, Source::Tcp { .. }) {
            self.acks
                .push_back((self.now + self.cfg.topology.ack_delay_slots, s, ack));
        }
    }

    /// Advances the world by one slot.
    pub fn step(&mut self) -> Result<()> {
        let now = self.now;

        // Channels.
        for (i, ch) in self.channels.iter_mut().enumerate() {
            let r = ch.advance(now, &self.table);
            self.rates[i] = r;
            let mut h = self.checksums[i];
            for byte in r.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(FNV_PRIME);
            }
            self.checksums[i] = h;
        }

        // Sources.
        let cap_blocks = u64::from(self.cfg.demux.capacity_blocks);
        for s in 0..self.streams.len() {
            match self.streams[s].source {
                Source::Backlogged => {
                    let st = &self.streams[s];
                    let want = cap_blocks.saturating_sub(st.demux.resident_blocks() + st.in_transit);
                    for _ in 0..want {
                        let seq = self.streams[s].next_seq;
                        self.streams[s].next_seq += 1;
                        self.emit(s, seq);
                    }
                }
                Source::Tcp { conn, subflow } => {
                    while let Some(seq) = self.conns[conn].mp.subflows[subflow].next_transmission(now) {
                        self.emit(s, seq);
                    }
                }
            }
        }

        // Wired backhaul.
        for i in 0..self.backhaul.len() {
            self.backhaul[i].transmit(now);
            let arrived: Vec<Block> = self.backhaul[i].arrivals(now).collect();
            if i + 1 < self.backhaul.len() {
                for b in arrived {
                    self.backhaul[i + 1].push(b);
                }
            } else {
                for b in arrived {
                    let stream = &mut self.streams[b.stream as usize];
                    stream.in_transit -= 1;
                    if stream.demux.enqueue_tagged(b) == Admission::Dropped {
                        log::trace!("slot {now}: demux drop on stream {}", b.stream);
                    }
                }
            }
        }

        // Scheduler.
        for (id, f) in self.flows.iter().enumerate() {
            let backlog = self.streams[f.stream].demux.backlog_bits(f.hop)?;
            self.sched.set_flow(id as FlowId, self.rates[f.device], backlog)?;
        }
        let decision = self.sched.schedule_slot();
        self.sched.update_ewma(decision.as_ref());
        self.last_decision = decision;

        // LTE delivery.
        if let Some(d) = decision {
            let f = &mut self.flows[d.flow_id as usize];
            f.granted_bits += d.granted_bits;
            f.served_slots += 1;
            let (s, hop) = (f.stream, f.hop);
            let blocks = self.streams[s].demux.serve(hop, d.granted_bits)?;
            for b in blocks {
                if hop == HOP_RELAY {
                    self.d2d.as_mut().expect("relay hop implies a D2D link").push(b);
                } else {
                    self.deliver_to_host(b);
                }
            }
        }

        // D2D forwarding.
        if let Some(mut d2d) = self.d2d.take() {
            let arrived: Vec<Block> = d2d.arrivals(now).collect();
            d2d.transmit(now);
            self.d2d = Some(d2d);
            for b in arrived {
                self.deliver_to_host(b);
            }
        }

        // Mux hold timers.
        for s in 0..self.streams.len() {
            if let Some(mux) = &mut self.streams[s].mux {
                let release = mux.tick(now);
                for b in release.blocks {
                    self.hand_to_receiver(s, b);
                }
            }
        }

        // ACKs and timers.
        while let Some(&(due, s, ack)) = self.acks.front() {
            if due > now {
                break;
            }
            self.acks.pop_front();
            if let Source::Tcp { conn, subflow } = self.streams[s].source {
                let mp = &mut self.conns[conn].mp;
                let outcome = mp.subflows[subflow].on_ack(ack, now);
                mp.grow(subflow, outcome.newly_acked);
            }
        }
        for c in &mut self.conns {
            for sender in &mut c.mp.subflows {
                sender.check_timeout(now);
            }
        }

        // Metrics.
        self.now += 1;
        if self.cfg.timeseries && self.now.is_multiple_of(SLOTS_PER_SECOND) {
            let delivered = self.delivered_blocks();
            let bits = u64::from(self.cfg.block_bits);
            let row = delivered
                .iter()
                .zip(&self.window_start_blocks)
                .map(|(d, s)| ((d - s) * bits) as f64)
                .collect();
            self.timeseries.push(row);
            self.window_start_blocks = delivered;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    /// In-order blocks delivered to each host.
    pub fn delivered_blocks(&self) -> Vec<u64> {
        let mut out = vec![0; self.hosts];
        for s in &self.streams {
            out[s.host] += s.receiver.delivered_blocks();
        }
        out
    }

    /// Checks block conservation for every stream: each emitted block is on
    /// the wire, at the eNB, dropped, on the D2D link, held by the mux or
    /// handed to the receiver.
    pub fn audit(&self) -> Result<()> {
        let mut on_wire = vec![0u64; self.streams.len()];
        for b in self.backhaul.iter().flat_map(|l| l.blocks()) {
            on_wire[b.stream as usize] += 1;
        }
        let mut on_d2d = vec![0u64; self.streams.len()];
        for b in self.d2d.iter().flat_map(|l| l.blocks()) {
            on_d2d[b.stream as usize] += 1;
        }
        for (i, s) in self.streams.iter().enumerate() {
            let d = &s.demux;
            let fail = |what: String| Err(Error::Structural(format!("stream {i}: {what}")));
            if on_wire[i] != s.in_transit {
                return fail(format!("{} blocks on the wire, {} in transit", on_wire[i], s.in_transit));
            }
            if s.emitted != s.in_transit + d.enqueued() {
                return fail(format!(
                    "emitted {} != in transit {} + offered {}",
                    s.emitted,
                    s.in_transit,
                    d.enqueued()
                ));
            }
            if d.enqueued() != d.resident_blocks() + d.dropped() + d.pulled() {
                return fail("demux lost track of blocks".into());
            }
            let (held, dups) = s
                .mux
                .as_ref()
                .map_or((0, 0), |m| (m.held_len() as u64, m.duplicates()));
            if d.pulled() != on_d2d[i] + held + dups + s.handed {
                return fail(format!(
                    "pulled {} != d2d {} + held {} + duplicates {} + handed {}",
                    d.pulled(),
                    on_d2d[i],
                    held,
                    dups,
                    s.handed
                ));
            }
        }
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        let duration = self.now;
        let bits = u64::from(self.cfg.block_bits);
        let per_second = |v: u64| {
            if duration == 0 {
                0.0
            } else {
                v as f64 * SLOTS_PER_SECOND as f64 / duration as f64
            }
        };
        let hosts: Vec<HostMetrics> = self
            .delivered_blocks()
            .into_iter()
            .enumerate()
            .map(|(host, blocks)| HostMetrics {
                host_id: host,
                delivered_bits: blocks * bits,
                throughput_bps: per_second(blocks * bits),
            })
            .collect();
        let system_throughput_bps = hosts.iter().map(|h| h.throughput_bps).sum();
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(id, f)| FlowMetrics {
                flow_id: id as FlowId,
                host_id: self.streams[f.stream].host,
                path: if f.hop == HOP_RELAY { "relay" } else { "direct" },
                granted_bits: f.granted_bits,
                served_slots: f.served_slots,
            })
            .collect();
        let streams = self
            .streams
            .iter()
            .enumerate()
            .map(|(id, s)| {
                let tcp = match s.source {
                    Source::Tcp { conn, subflow } => Some(self.conns[conn].mp.subflows[subflow].stats()),
                    Source::Backlogged => None,
                };
                StreamMetrics {
                    stream_id: id,
                    host_id: s.host,
                    delivered_blocks: s.receiver.delivered_blocks(),
                    duplicate_blocks: s.receiver.duplicate_blocks(),
                    demux_drops: s.demux.dropped(),
                    mux_gap_blocks: s.mux.as_ref().map_or(0, |m| m.gap_blocks()),
                    tcp,
                }
            })
            .collect();
        Metrics {
            scenario: self.cfg.scenario,
            inter_policy: self.cfg.scheduler.inter,
            intra_policy: self.cfg.scheduler.intra,
            seed: self.cfg.seed,
            duration_slots: duration,
            target_throughput_bps: hosts[0].throughput_bps,
            system_throughput_bps,
            hosts,
            flows,
            streams,
            channel_checksums: self.checksums.iter().map(|h| format!("{h:016x}")).collect(),
            timeseries: self.cfg.timeseries.then(|| self.timeseries.clone()),
        }
    }
}

/// Builds a world from `cfg` and runs it for the configured duration.
pub fn run(cfg: &ScenarioConfig) -> Result<Metrics> {
    let mut world = World::new(cfg)?;
    world.run_to_end()?;
    Ok(world.metrics())
}
