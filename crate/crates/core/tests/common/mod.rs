#![allow(dead_code)]

use lte_d2d_sim::scheduler::{ClusterSchedState, Policy, SchedulerConfig};
use proptest::prelude::*;
use std::cmp::Ordering;

/// A scheduler instance with integer rates and EWMAs so the oracle can
/// compare PFS metrics exactly by cross-multiplication.
#[derive(Clone, Debug)]
pub struct Instance {
    pub inter: Policy,
    pub clusters: Vec<OracleCluster>,
}

#[derive(Clone, Debug)]
pub struct OracleCluster {
    pub intra: Policy,
    pub ewma: u64,
    /// (rate, ewma, backlog)
    pub flows: Vec<(u32, u64, u64)>,
}

/// rate / ewma as an exact fraction.
fn frac_cmp(a: (u64, u64), b: (u64, u64)) -> Ordering {
    (u128::from(a.0) * u128::from(b.1)).cmp(&(u128::from(b.0) * u128::from(a.1)))
}

fn key(policy: Policy, rate: u32, ewma: u64) -> (u64, u64) {
    match policy {
        Policy::Pfs => (u64::from(rate), ewma),
        _ => (u64::from(rate), 1),
    }
}

/// Exhaustive search: the first (cluster, flow) pair in id order whose flow
/// is unbeaten inside its cluster and whose cluster is unbeaten among all
/// clusters with something to send. Returns (cluster, flow, granted).
pub fn brute_force(inst: &Instance) -> Option<(u32, u32, u64)> {
    brute_force_with_ties(inst).0
}

/// Also reports whether the decision needed the lowest-id tie rule.
pub fn brute_force_with_ties(inst: &Instance) -> (Option<(u32, u32, u64)>, bool) {
    let mut tied = false;
    let mut nominees = Vec::new();
    let mut fid = 0u32;
    for (ci, c) in inst.clusters.iter().enumerate() {
        let mut nominee = None;
        for (k, &(r, e, b)) in c.flows.iter().enumerate() {
            let id = fid + k as u32;
            if b == 0 {
                continue;
            }
            let beaten = c.flows.iter().any(|&(r2, e2, b2)| {
                b2 > 0 && frac_cmp(key(c.intra, r2, e2), key(c.intra, r, e)) == Ordering::Greater
            });
            if !beaten {
                tied |= c.flows[k + 1..].iter().any(|&(r2, e2, b2)| {
                    b2 > 0 && frac_cmp(key(c.intra, r2, e2), key(c.intra, r, e)) == Ordering::Equal
                });
                nominee = Some((id, r, b));
                break;
            }
        }
        fid += c.flows.len() as u32;
        if let Some(n) = nominee {
            nominees.push((ci as u32, n));
        }
    }
    let cluster_key = |ci: u32, r: u32| key(inst.inter, r, inst.clusters[ci as usize].ewma);
    let decision = nominees.iter().find_map(|&(ci, (id, r, b))| {
        let beaten = nominees
            .iter()
            .any(|&(cj, (_, r2, _))| frac_cmp(cluster_key(cj, r2), cluster_key(ci, r)) == Ordering::Greater);
        if !beaten {
            tied |= nominees
                .iter()
                .any(|&(cj, (_, r2, _))| cj > ci && frac_cmp(cluster_key(cj, r2), cluster_key(ci, r)) == Ordering::Equal);
        }
        (!beaten).then_some((ci, id, u64::from(r).min(b)))
    });
    (decision, tied)
}

pub fn build(inst: &Instance) -> SchedulerConfig {
    let mut clusters = Vec::new();
    let mut settings = Vec::new();
    let mut next = 0u32;
    for (ci, c) in inst.clusters.iter().enumerate() {
        let ids: Vec<u32> = (next..next + c.flows.len() as u32).collect();
        let mut cl = ClusterSchedState::new(ci as u32, ids, c.intra, 1.0).unwrap();
        cl.ewma = c.ewma as f64;
        for (m, &(r, e, b)) in cl.members_mut().iter_mut().zip(&c.flows) {
            m.ewma = e as f64;
            settings.push((m.flow_id, r, b));
        }
        next += c.flows.len() as u32;
        clusters.push(cl);
    }
    let mut cfg = SchedulerConfig::new(inst.inter, clusters, 1000).unwrap();
    for (id, r, b) in settings {
        cfg.set_flow(id, r, b).unwrap();
    }
    cfg
}

/// At most 4 clusters of at most 3 flows. Small value ranges so ties are
/// common.
pub fn instance() -> impl Strategy<Value = Instance> {
    let pol = || prop_oneof![Just(Policy::Pfs), Just(Policy::MaxCi)];
    let flow = (
        prop::sample::select(vec![0u32, 2056, 19_937, 25_844, 75_000]),
        1u64..6,
        prop_oneof![Just(0u64), Just(1000u64), Just(u64::MAX)],
    )
        .prop_map(|(r, e, b)| (r, e * 10_000, b));
    let cluster = (pol(), 1u64..6, prop::collection::vec(flow, 1..4)).prop_map(|(intra, e, flows)| OracleCluster {
        intra,
        ewma: e * 10_000,
        flows,
    });
    (pol(), prop::collection::vec(cluster, 1..5)).prop_map(|(inter, clusters)| Instance { inter, clusters })
}

use lte_d2d_sim::netfn::{Admission, Block, DemuxMode, DemuxState, MuxState, BLOCK_BITS};
use lte_d2d_sim::seed;
use rand::Rng;
use std::collections::{BTreeSet, HashSet};

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub ops: u64,
    pub violations: Vec<String>,
    pub released: u64,
    pub gaps: u64,
}

/// Random enqueue/serve/advance operations against a demux feeding two
/// paths of random per-block delay into a mux. Every operation is followed
/// by a check of the duplicate, conservation, ordering, capacity and
/// hold-bound invariants.
pub fn fuzz_netfn(mode: DemuxMode, hold: u64, capacity_blocks: u64, seed_value: u64, ops: u64) -> FuzzReport {
    let mut rng = seed::stream(seed_value, "fuzz", 0);
    let capacity = capacity_blocks * u64::from(BLOCK_BITS);
    let mut demux = DemuxState::new(mode, &[0, 1], capacity).unwrap();
    let mut mux = MuxState::new(hold);
    let mut in_flight: Vec<(u64, Block)> = Vec::new();
    let mut now = 0u64;
    let mut admitted = 0u64;
    let mut pulled_ids = HashSet::new();
    let mut released_ids = BTreeSet::new();
    let mut last_released = 0u64;
    let mut gap_total = 0u64;
    let mut report = FuzzReport::default();
    for _ in 0..ops {
        report.ops += 1;
        match rng.random_range(0..10) {
            0..=3 => {
                let size = if rng.random_bool(0.8) { BLOCK_BITS } else { rng.random_range(1..=BLOCK_BITS) };
                if demux.enqueue_tagged(Block::new(0, 0, size, now)) == Admission::Queued {
                    admitted += 1;
                }
            }
            4..=6 => {
                let hop = rng.random_range(0..2);
                let grant = rng.random_range(0..=40_000);
                for b in demux.serve(hop, grant).unwrap() {
                    if !pulled_ids.insert(b.block_id) {
                        fail(&mut report, format!("slot {now}: block {} left the demux twice", b.block_id));
                    }
                    let delay = if hop == 0 { rng.random_range(0..3) } else { rng.random_range(0..25) };
                    in_flight.push((now + delay, b));
                }
            }
            _ => {
                now += 1;
                let (due, rest): (Vec<_>, Vec<_>) = in_flight.into_iter().partition(|(at, _)| *at <= now);
                in_flight = rest;
                for (_, b) in due {
                    let out = mux.ingest(b, now);
                    record(out, now, &mut report, &mut last_released, &mut released_ids);
                }
                let rel = mux.tick(now);
                for g in &rel.gaps {
                    gap_total += g.end - g.start;
                    if g.start <= last_released && last_released != 0 {
                        fail(&mut report, format!("slot {now}: gap {g:?} overlaps released ids"));
                    }
                }
                record(rel.blocks, now, &mut report, &mut last_released, &mut released_ids);
                if let Some((id, at)) = mux.held().find(|&(_, at)| now - at > hold) {
                    fail(&mut report, format!("slot {now}: block {id} held since {at}"));
                }
            }
        }
        for hop in [0, 1] {
            if demux.occupancy_bits(hop).unwrap() > capacity {
                fail(&mut report, format!("slot {now}: hop {hop} over capacity"));
            }
        }
        if demux.enqueued() != admitted + demux.dropped() {
            fail(&mut report, format!("slot {now}: admission counters disagree"));
        }
        let pulled = pulled_ids.len() as u64;
        if admitted != demux.resident_blocks() + pulled {
            fail(&mut report, format!("slot {now}: {admitted} admitted but {} resident + {pulled} pulled", demux.resident_blocks()));
        }
        let accounted = released_ids.len() as u64 + mux.held_len() as u64 + in_flight.len() as u64 + mux.duplicates();
        if accounted != pulled {
            fail(&mut report, format!("slot {now}: {pulled} pulled but {accounted} accounted downstream"));
        }
    }
    report.released = released_ids.len() as u64;
    report.gaps = gap_total;
    report
}

fn fail(r: &mut FuzzReport, msg: String) {
    if r.violations.len() < 20 {
        r.violations.push(msg);
    }
}

fn record(blocks: Vec<Block>, now: u64, r: &mut FuzzReport, last: &mut u64, released: &mut BTreeSet<u64>) {
    for b in blocks {
        if b.block_id <= *last {
            fail(r, format!("slot {now}: block {} released after {}", b.block_id, last));
        }
        if !released.insert(b.block_id) {
            fail(r, format!("slot {now}: block {} released twice", b.block_id));
        }
        *last = b.block_id;
    }
}
