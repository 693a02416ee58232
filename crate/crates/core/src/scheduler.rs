//! Two-tier downlink scheduler.
//!
//! Flows (one per LTE next-hop buffer) are grouped into clusters. Each slot
//! every cluster nominates one member with its intra-cluster policy; the
//! nominee's rate becomes the cluster's rate, and the inter-cluster policy
//! picks the winning cluster. Exactly one flow is served per slot.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FlowId = u32;
pub type ClusterId = u32;

/// Default EWMA time constant: 1000 slots (1 s).
pub const DEFAULT_TIME_CONSTANT: u32 = 1000;

/// Lower bound on every EWMA throughput so the PFS metric stays finite.
pub const EWMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Pfs,
    MaxCi,
    RoundRobin,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Pfs, Policy::MaxCi, Policy::RoundRobin];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Pfs => "pfs",
            Policy::MaxCi => "max_ci",
            Policy::RoundRobin => "round_robin",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Policy::ALL.iter().map(|p| p.name()).collect();
                Error::config("policy", crate::config::unknown_name_message(s, &names))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSchedState {
    pub flow_id: FlowId,
    /// Instantaneous rate R(f) for the current slot, bits.
    pub rate: u32,
    /// EWMA of served bits per slot.
    pub ewma: f64,
    /// Bits the flow could still send this slot.
    pub backlog: u64,
}

impl FlowSchedState {
    fn pfs_metric(&self) -> f64 {
        f64::from(self.rate) / self.ewma
    }
}

#[derive(Clone, Debug)]
pub struct ClusterSchedState {
    pub cluster_id: ClusterId,
    members: Vec<FlowSchedState>,
    pub ewma: f64,
    pub intra_policy: Policy,
    rr_cursor: usize,
}

impl ClusterSchedState {
    pub fn new(
        cluster_id: ClusterId,
        mut members: Vec<FlowId>,
        intra_policy: Policy,
        ewma_bootstrap: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Structural(format!("cluster {cluster_id} has no member flows")));
        }
        if !(ewma_bootstrap > 0.0) {
            return Err(Error::Structural("EWMA bootstrap must be positive".into()));
        }
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Structural(format!("cluster {cluster_id} lists a flow twice")));
        }
        Ok(Self {
            cluster_id,
            members: members
                .into_iter()
                .map(|flow_id| FlowSchedState {
                    flow_id,
                    rate: 0,
                    ewma: ewma_bootstrap,
                    backlog: 0,
                })
                .collect(),
            ewma: ewma_bootstrap,
            intra_policy,
            rr_cursor: 0,
        })
    }

    /// Members in ascending flow id order.
    pub fn members(&self) -> &[FlowSchedState] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [FlowSchedState] {
        &mut self.members
    }

    fn nominee_index(&self) -> Option<usize> {
        match self.intra_policy {
            Policy::Pfs => argmax_by(self.members.iter().enumerate(), |m| m.backlog > 0, |m| {
                m.pfs_metric()
            }),
            Policy::MaxCi => argmax_by(self.members.iter().enumerate(), |m| m.backlog > 0, |m| {
                f64::from(m.rate)
            }),
            Policy::RoundRobin => {
                let n = self.members.len();
                let cyclic = || (0..n).map(|k| (self.rr_cursor + k) % n);
                let m = &self.members;
                cyclic()
                    .find(|&i| m[i].backlog > 0 && m[i].rate > 0)
                    .or_else(|| cyclic().find(|&i| m[i].backlog > 0))
            }
        }
    }

    /// The member this cluster nominates for the slot, or `None` when no
    /// member has anything to send.
    pub fn select_intra(&self) -> Option<FlowId> {
        self.nominee_index().map(|i| self.members[i].flow_id)
    }
}

/// Index of the maximum `key` among items passing `keep`; the first (lowest
/// id) wins ties.
fn argmax_by<'a, T: 'a>(
    items: impl Iterator<Item = (usize, &'a T)>,
    keep: impl Fn(&T) -> bool,
    key: impl Fn(&T) -> f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, item) in items {
        if !keep(item) {
            continue;
        }
        let k = key(item);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SchedulingDecision {
    pub cluster_id: ClusterId,
    pub flow_id: FlowId,
    pub granted_bits: u64,
}

#[derive(Clone, Debug)]
pub struct SchedulerConfig {
    pub inter_policy: Policy,
    clusters: Vec<ClusterSchedState>,
    t_c: u32,
    rr_cursor: usize,
    index: HashMap<FlowId, (usize, usize)>,
}

impl SchedulerConfig {
    pub fn new(inter_policy: Policy, mut clusters: Vec<ClusterSchedState>, t_c: u32) -> Result<Self> {
        if t_c == 0 {
            return Err(Error::config("scheduler.t_c", "time constant must be at least 1 slot"));
        }
        if clusters.is_empty() {
            return Err(Error::Structural("scheduler has no clusters".into()));
        }
        clusters.sort_by_key(|c| c.cluster_id);
        if clusters.windows(2).any(|w| w[0].cluster_id == w[1].cluster_id) {
            return Err(Error::Structural("cluster ids must be unique".into()));
        }
        let mut index = HashMap::new();
        for (ci, c) in clusters.iter().enumerate() {
            for (mi, m) in c.members.iter().enumerate() {
                if index.insert(m.flow_id, (ci, mi)).is_some() {
                    return Err(Error::Structural(format!(
                        "flow {} belongs to more than one cluster",
                        m.flow_id
                    )));
                }
            }
        }
        Ok(Self {
            inter_policy,
            clusters,
            t_c,
            rr_cursor: 0,
            index,
        })
    }

    pub fn t_c(&self) -> u32 {
        self.t_c
    }

    /// Clusters in ascending id order.
    pub fn clusters(&self) -> &[ClusterSchedState] {
        &self.clusters
    }

    pub fn cluster_mut(&mut self, id: ClusterId) -> Option<&mut ClusterSchedState> {
        self.clusters.iter_mut().find(|c| c.cluster_id == id)
    }

    pub fn flow(&self, id: FlowId) -> Option<&FlowSchedState> {
        self.index.get(&id).map(|&(c, m)| &self.clusters[c].members[m])
    }

    fn flow_mut(&mut self, id: FlowId) -> Result<&mut FlowSchedState> {
        let &(c, m) = self
            .index
            .get(&id)
            .ok_or_else(|| Error::Structural(format!("unknown flow {id}")))?;
        Ok(&mut self.clusters[c].members[m])
    }

    /// Publishes the slot's channel rate and sendable backlog for a flow.
    pub fn set_flow(&mut self, id: FlowId, rate: u32, backlog: u64) -> Result<()> {
        let f = self.flow_mut(id)?;
        f.rate = rate;
        f.backlog = backlog;
        Ok(())
    }

    /// Picks a cluster among those present in `cluster_rates` (absent
    /// clusters have nothing to send). Ties go to the lowest cluster id.
    pub fn select_inter(&self, cluster_rates: &BTreeMap<ClusterId, u32>) -> Option<ClusterId> {
        let candidates = || {
            self.clusters
                .iter()
                .enumerate()
                .filter_map(|(i, c)| cluster_rates.get(&c.cluster_id).map(|&r| (i, c, r)))
        };
        let pick = match self.inter_policy {
            Policy::Pfs => best_candidate(candidates(), |c, r| f64::from(r) / c.ewma),
            Policy::MaxCi => best_candidate(candidates(), |_, r| f64::from(r)),
            Policy::RoundRobin => {
                let n = self.clusters.len();
                let order = || (0..n).map(|k| (self.rr_cursor + k) % n);
                let rate_of = |i: usize| cluster_rates.get(&self.clusters[i].cluster_id);
                order()
                    .find(|&i| rate_of(i).is_some_and(|&r| r > 0))
                    .or_else(|| order().find(|&i| rate_of(i).is_some()))
            }
        };
        pick.map(|i| self.clusters[i].cluster_id)
    }

    /// Runs both tiers for the current slot. Returns `None` for an idle slot.
    /// Round-robin cursors advance only past the flow/cluster actually served.
    pub fn schedule_slot(&mut self) -> Option<SchedulingDecision> {
        let mut nominees: Vec<Option<usize>> = Vec::with_capacity(self.clusters.len());
        let mut cluster_rates = BTreeMap::new();
        for c in &self.clusters {
            let nominee = c.nominee_index();
            if let Some(i) = nominee {
                cluster_rates.insert(c.cluster_id, c.members[i].rate);
            }
            nominees.push(nominee);
        }
        let cluster_id = self.select_inter(&cluster_rates)?;
        let ci = self
            .clusters
            .iter()
            .position(|c| c.cluster_id == cluster_id)
            .expect("selected cluster exists");
        let mi = nominees[ci].expect("selected cluster has a nominee");
        let n_clusters = self.clusters.len();
        let cluster = &mut self.clusters[ci];
        let flow = &cluster.members[mi];
        let decision = SchedulingDecision {
            cluster_id,
            flow_id: flow.flow_id,
            granted_bits: u64::from(flow.rate).min(flow.backlog),
        };
        cluster.rr_cursor = (mi + 1) % cluster.members.len();
        self.rr_cursor = (ci + 1) % n_clusters;
        Some(decision)
    }

    /// EWMA update for every flow and cluster; unserved ones decay.
    pub fn update_ewma(&mut self, decision: Option<&SchedulingDecision>) {
        let w = 1.0 / f64::from(self.t_c);
        for c in &mut self.clusters {
            let served_cluster = decision
                .filter(|d| d.cluster_id == c.cluster_id)
                .map_or(0.0, |d| d.granted_bits as f64);
            c.ewma = ewma_step(c.ewma, served_cluster, w);
            for m in &mut c.members {
                let served = decision
                    .filter(|d| d.flow_id == m.flow_id)
                    .map_or(0.0, |d| d.granted_bits as f64);
                m.ewma = ewma_step(m.ewma, served, w);
            }
        }
    }
}

fn best_candidate<'a>(
    candidates: impl Iterator<Item = (usize, &'a ClusterSchedState, u32)>,
    key: impl Fn(&ClusterSchedState, u32) -> f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c, r) in candidates {
        let k = key(c, r);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i)
}

pub fn ewma_step(previous: f64, served: f64, weight: f64) -> f64 {
    ((1.0 - weight) * previous + weight * served).max(EWMA_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cluster(id: ClusterId, flows: &[FlowId], intra: Policy) -> ClusterSchedState {
        ClusterSchedState::new(id, flows.to_vec(), intra, 1000.0).unwrap()
    }

    fn set(c: &mut ClusterSchedState, rates: &[(FlowId, u32, f64)]) {
        for &(id, rate, ewma) in rates {
            let m = c.members_mut().iter_mut().find(|m| m.flow_id == id).unwrap();
            m.rate = rate;
            m.ewma = ewma;
            m.backlog = u64::MAX;
        }
    }

    #[test]
    fn intra_max_ci_picks_highest_rate() {
        let mut c = cluster(1, &[1, 2], Policy::MaxCi);
        set(&mut c, &[(1, 20_000, 1.0), (2, 50_000, 1.0)]);
        assert_eq!(c.select_intra(), Some(2));
    }

    #[test]
    fn intra_pfs_normalizes_by_ewma() {
        let mut c = cluster(1, &[1, 2], Policy::Pfs);
        set(&mut c, &[(1, 10_000, 5000.0), (2, 8000, 2000.0)]);
        assert_eq!(c.select_intra(), Some(2));
    }

    #[test]
    fn intra_ties_go_to_lowest_id() {
        let mut c = cluster(1, &[2, 1], Policy::Pfs);
        set(&mut c, &[(1, 9000, 3000.0), (2, 9000, 3000.0)]);
        assert_eq!(c.select_intra(), Some(1));
    }

    #[test]
    fn empty_cluster_is_structural_error() {
        assert!(matches!(
            ClusterSchedState::new(1, vec![], Policy::Pfs, 1.0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn unbacklogged_members_are_skipped() {
        let mut c = cluster(1, &[1, 2], Policy::MaxCi);
        set(&mut c, &[(1, 20_000, 1.0), (2, 50_000, 1.0)]);
        c.members_mut()[1].backlog = 0;
        assert_eq!(c.select_intra(), Some(1));
        c.members_mut()[0].backlog = 0;
        assert_eq!(c.select_intra(), None);
    }

    #[test]
    fn round_robin_cycles_and_prefers_nonzero_rates() {
        let c = cluster(1, &[1, 2, 3], Policy::RoundRobin);
        let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![c], 1000).unwrap();
        for id in 1..=3 {
            cfg.set_flow(id, 10_000, 1 << 20).unwrap();
        }
        let served: Vec<_> = (0..6)
            .map(|_| cfg.schedule_slot().unwrap().flow_id)
            .collect();
        assert_eq!(served, [1, 2, 3, 1, 2, 3]);
        cfg.set_flow(1, 0, 1 << 20).unwrap();
        assert_eq!(cfg.schedule_slot().unwrap().flow_id, 2);
        assert_eq!(cfg.schedule_slot().unwrap().flow_id, 3);
        assert_eq!(cfg.schedule_slot().unwrap().flow_id, 2);
    }

    #[test]
    fn idle_slot_keeps_round_robin_cursor() {
        let c = cluster(1, &[1, 2], Policy::RoundRobin);
        let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![c], 1000).unwrap();
        cfg.set_flow(1, 10_000, 100).unwrap();
        cfg.set_flow(2, 10_000, 100).unwrap();
        assert_eq!(cfg.schedule_slot().unwrap().flow_id, 1);
        cfg.set_flow(1, 10_000, 0).unwrap();
        cfg.set_flow(2, 10_000, 0).unwrap();
        assert_eq!(cfg.schedule_slot(), None);
        cfg.set_flow(1, 10_000, 100).unwrap();
        cfg.set_flow(2, 10_000, 100).unwrap();
        assert_eq!(cfg.schedule_slot().unwrap().flow_id, 2);
    }

    #[test]
    fn inter_pfs_and_max_ci() {
        let mut a = cluster(1, &[1], Policy::Pfs);
        let mut b = cluster(2, &[2], Policy::Pfs);
        a.ewma = 10_000.0;
        b.ewma = 5000.0;
        let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![a, b], 1000).unwrap();
        let rates = BTreeMap::from([(1, 30_000), (2, 30_000)]);
        assert_eq!(cfg.select_inter(&rates), Some(2));
        cfg.inter_policy = Policy::MaxCi;
        assert_eq!(cfg.select_inter(&BTreeMap::from([(1, 75_000), (2, 20_000)])), Some(1));
        assert_eq!(cfg.select_inter(&BTreeMap::new()), None);
    }

    #[test]
    fn single_cluster_served_whenever_backlogged() {
        let c = cluster(7, &[3], Policy::Pfs);
        let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![c], 1000).unwrap();
        cfg.set_flow(3, 40_000, u64::MAX).unwrap();
        assert_eq!(
            cfg.schedule_slot(),
            Some(SchedulingDecision {
                cluster_id: 7,
                flow_id: 3,
                granted_bits: 40_000
            })
        );
        cfg.set_flow(3, 40_000, 1000).unwrap();
        assert_eq!(cfg.schedule_slot().unwrap().granted_bits, 1000);
    }

    #[test]
    fn composed_pfs_over_max_ci() {
        // Cluster 1: flows 1,2 ; cluster 2: flows 3,4. Intra MaxCI picks
        // flow 2 (30k) and flow 4 (30k); inter PFS compares 30k/10k vs 30k/5k.
        let mut c1 = cluster(1, &[1, 2], Policy::MaxCi);
        let mut c2 = cluster(2, &[3, 4], Policy::MaxCi);
        c1.ewma = 10_000.0;
        c2.ewma = 5000.0;
        let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![c1, c2], 1000).unwrap();
        for (id, r) in [(1, 20_000), (2, 30_000), (3, 10_000), (4, 30_000)] {
            cfg.set_flow(id, r, u64::MAX).unwrap();
        }
        let d = cfg.schedule_slot().unwrap();
        assert_eq!((d.cluster_id, d.flow_id, d.granted_bits), (2, 4, 30_000));
    }

    #[test]
    fn ewma_arithmetic() {
        assert!((ewma_step(1000.0, 2000.0, 1e-3) - 1001.0).abs() < 1e-9);
        assert!((ewma_step(1000.0, 0.0, 1e-3) - 999.0).abs() < 1e-9);
        let mut t = 1000.0;
        for _ in 0..50_000 {
            t = ewma_step(t, 4321.0, 1e-3);
        }
        assert!((t - 4321.0).abs() < 1e-6);
        assert_eq!(ewma_step(5.0, 0.0, 1.0), EWMA_FLOOR);
    }

    #[test]
    fn update_ewma_decays_unserved() {
        let a = cluster(1, &[1], Policy::Pfs);
        let b = cluster(2, &[2], Policy::Pfs);
        let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![a, b], 1000).unwrap();
        let d = SchedulingDecision {
            cluster_id: 1,
            flow_id: 1,
            granted_bits: 2000,
        };
        cfg.update_ewma(Some(&d));
        assert!((cfg.clusters()[0].ewma - 1001.0).abs() < 1e-9);
        assert!((cfg.clusters()[1].ewma - 999.0).abs() < 1e-9);
        assert!((cfg.flow(1).unwrap().ewma - 1001.0).abs() < 1e-9);
        cfg.update_ewma(None);
        assert!(cfg.clusters()[1].ewma < 999.0);
    }

    #[test]
    fn config_rejects_bad_structure() {
        assert!(SchedulerConfig::new(Policy::Pfs, vec![cluster(1, &[1], Policy::Pfs)], 0).is_err());
        let dup = vec![cluster(1, &[1], Policy::Pfs), cluster(1, &[2], Policy::Pfs)];
        assert!(SchedulerConfig::new(Policy::Pfs, dup, 10).is_err());
        let shared = vec![cluster(1, &[1], Policy::Pfs), cluster(2, &[1], Policy::Pfs)];
        assert!(SchedulerConfig::new(Policy::Pfs, shared, 10).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        let err = "maxci".parse::<Policy>().unwrap_err().to_string();
        assert!(err.contains("max_ci"), "{err}");
    }

    fn instance() -> impl Strategy<Value = (Policy, Vec<(Policy, Vec<(u32, f64)>, f64)>)> {
        let pol = prop_oneof![Just(Policy::Pfs), Just(Policy::MaxCi)];
        let flow = (1u32..40, 1u32..50).prop_map(|(r, t)| (r * 1000, f64::from(t) * 500.0));
        let cl = (pol.clone(), prop::collection::vec(flow, 1..4), 1u32..50)
            .prop_map(|(p, f, t)| (p, f, f64::from(t) * 500.0));
        (pol, prop::collection::vec(cl, 1..5))
    }

    fn build(inter: Policy, spec: &[(Policy, Vec<(u32, f64)>, f64)], scale: u32) -> SchedulerConfig {
        let mut next = 0;
        let mut clusters = Vec::new();
        let mut settings = Vec::new();
        for (ci, (intra, flows, cewma)) in spec.iter().enumerate() {
            let ids: Vec<_> = (0..flows.len() as u32).map(|k| next + k).collect();
            let mut c = ClusterSchedState::new(ci as u32, ids.clone(), *intra, 1.0).unwrap();
            c.ewma = *cewma;
            for (m, &(r, t)) in c.members_mut().iter_mut().zip(flows) {
                m.ewma = t;
                settings.push((m.flow_id, r * scale));
            }
            next += flows.len() as u32;
            clusters.push(c);
        }
        let mut cfg = SchedulerConfig::new(inter, clusters, 1000).unwrap();
        for (id, r) in settings {
            cfg.set_flow(id, r, u64::MAX).unwrap();
        }
        cfg
    }

    proptest! {
        #[test]
        fn decisions_invariant_under_rate_scaling((inter, spec) in instance(), shift in 0u32..4) {
            let base = build(inter, &spec, 1).schedule_slot().unwrap();
            let scaled = build(inter, &spec, 1 << shift).schedule_slot().unwrap();
            prop_assert_eq!(base.cluster_id, scaled.cluster_id);
            prop_assert_eq!(base.flow_id, scaled.flow_id);
        }

        #[test]
        fn served_flow_belongs_to_served_cluster((inter, spec) in instance()) {
            let mut cfg = build(inter, &spec, 1);
            let d = cfg.schedule_slot().unwrap();
            let c = cfg.clusters().iter().find(|c| c.cluster_id == d.cluster_id).unwrap();
            prop_assert!(c.members().iter().any(|m| m.flow_id == d.flow_id));
        }

        #[test]
        fn ewma_stays_positive(t_c in 1u32..2000, served in prop::collection::vec(0u64..80_000, 1..300)) {
            let c = ClusterSchedState::new(0, vec![0], Policy::Pfs, 30_000.0).unwrap();
            let mut cfg = SchedulerConfig::new(Policy::Pfs, vec![c], t_c).unwrap();
            for s in served {
                let d = SchedulingDecision { cluster_id: 0, flow_id: 0, granted_bits: s };
                cfg.update_ewma(if s % 3 == 0 { None } else { Some(&d) });
                prop_assert!(cfg.clusters()[0].ewma > 0.0);
                prop_assert!(cfg.flow(0).unwrap().ewma > 0.0);
            }
        }
    }
}
