use lte_d2d_sim::channel::RateTable;
use lte_d2d_sim::config::ChannelSpec;
use lte_d2d_sim::sim::{HOP_RELAY, World};
use lte_d2d_sim::{run, Error, Policy, ScenarioConfig, SourceKind};

fn peak_config(slots: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        scenario: SourceKind::Backlogged,
        duration_slots: slots,
        ..ScenarioConfig::default()
    };
    cfg.topology.relay = false;
    cfg.channels.target = ChannelSpec::Fixed { cqi: 15 };
    cfg
}

fn scenario(kind: SourceKind, slots: u64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        scenario: kind,
        duration_slots: slots,
        seed,
        ..ScenarioConfig::default()
    }
    .with_markov_channels((0.3, 0.6), (0.7, 0.2), &[])
}

#[test]
fn defaults_describe_the_reference_topology() {
    let cfg = ScenarioConfig::default();
    assert_eq!(cfg.topology.wired_bits_per_slot, 1_000_000);
    assert_eq!(cfg.topology.d2d_bits_per_slot, 300_000);
    assert_eq!(RateTable::lte().entries()[14], 75_000);
    assert_eq!(cfg.block_bits, 12_000);
    assert_eq!(cfg.duration_slots, 300_000);
}

#[test]
fn single_link_reaches_peak_rate() {
    let m = run(&peak_config(20_000)).unwrap();
    assert!((m.target_throughput_bps / 75e6 - 1.0).abs() < 0.005, "{}", m.target_throughput_bps);
}

#[test]
fn zero_length_run_reports_zeros() {
    let m = run(&scenario(SourceKind::DemuxedTcp, 0, 1)).unwrap();
    assert_eq!(m.duration_slots, 0);
    assert_eq!(m.target_throughput_bps, 0.0);
    assert!(m.hosts.iter().all(|h| h.delivered_bits == 0));
    assert!(m.flows.iter().all(|f| f.granted_bits == 0));
}

#[test]
fn extra_ues_add_hosts() {
    let cfg = scenario(SourceKind::DemuxedTcp, 2000, 3).with_extra_ues(3);
    let world = World::new(&cfg).unwrap();
    assert_eq!(world.hosts(), 4);
    let m = run(&cfg).unwrap();
    assert_eq!(m.hosts.len(), 4);
    assert!(m.hosts.iter().all(|h| h.delivered_bits > 0));
}

#[test]
fn multipath_without_relay_is_rejected() {
    for kind in [SourceKind::DemuxedTcp, SourceKind::TwoTcp, SourceKind::Mptcp] {
        let mut cfg = scenario(kind, 100, 0);
        cfg.topology.relay = false;
        match World::new(&cfg) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "topology.relay"),
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }
}

#[test]
fn every_slot_serves_at_most_one_flow_within_its_rate() {
    let mut cfg = scenario(SourceKind::DemuxedTcp, 5000, 8).with_extra_ues(2);
    cfg.scheduler.inter = Policy::MaxCi;
    let mut world = World::new(&cfg).unwrap();
    let mut granted = 0u64;
    while !world.is_finished() {
        world.step().unwrap();
        if let Some(d) = world.last_decision() {
            let f = world.scheduler().flow(d.flow_id).unwrap();
            assert!(d.granted_bits <= u64::from(f.rate));
            granted += d.granted_bits;
        }
    }
    let m = world.metrics();
    assert_eq!(m.flows.iter().map(|f| f.granted_bits).sum::<u64>(), granted);
    let served: u64 = m.flows.iter().map(|f| f.served_slots).sum();
    assert!(served <= 5000);
}

#[test]
fn links_respect_their_capacity() {
    let mut cfg = scenario(SourceKind::DemuxedTcp, 20_000, 4);
    cfg.channels.relay = ChannelSpec::Fixed { cqi: 15 };
    cfg.scheduler.inter = Policy::MaxCi;
    let mut world = World::new(&cfg).unwrap();
    world.run_to_end().unwrap();
    for link in world.backhaul() {
        assert!(link.peak_slot_bits() <= 1_000_000);
    }
    let d2d = world.d2d().unwrap();
    assert!(d2d.peak_slot_bits() <= 300_000);
    assert!(d2d.carried_bits() > 0);
    let relay_bits: u64 = world
        .metrics()
        .flows
        .iter()
        .filter(|f| f.path == "relay")
        .map(|f| f.granted_bits)
        .sum();
    assert!(relay_bits > 0);
    assert_eq!(HOP_RELAY, 1);
}

#[test]
fn d2d_link_caps_a_backlogged_queue() {
    use lte_d2d_sim::netfn::Block;
    use lte_d2d_sim::sim::Link;
    let mut link = Link::new(300_000, 1);
    for id in 1..=1000 {
        link.push(Block::new(0, id, 12_000, 0));
    }
    let mut delivered = 0u64;
    for now in 0..20 {
        link.transmit(now);
        delivered += link.arrivals(now).map(|b| u64::from(b.size)).sum::<u64>();
    }
    assert!(link.peak_slot_bits() <= 300_000);
    assert_eq!(delivered, 19 * 300_000);
}

#[test]
fn conservation_holds_every_slot() {
    for kind in SourceKind::ALL {
        let mut cfg = scenario(kind, 4000, 21).with_extra_ues(1);
        cfg.demux.capacity_blocks = 20;
        let mut world = World::new(&cfg).unwrap();
        while !world.is_finished() {
            world.step().unwrap();
            world.audit().unwrap_or_else(|e| panic!("{kind} at slot {}: {e}", world.now()));
        }
    }
}

#[test]
fn runs_are_deterministic_and_channels_paired() {
    let a = run(&scenario(SourceKind::Mptcp, 8000, 77)).unwrap();
    let b = run(&scenario(SourceKind::Mptcp, 8000, 77)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let single = run(&scenario(SourceKind::SingleFlow, 8000, 77)).unwrap();
    assert_eq!(single.channel_checksums[..2], a.channel_checksums[..2]);
    let other = run(&scenario(SourceKind::Mptcp, 8000, 78)).unwrap();
    assert_ne!(other.channel_checksums, a.channel_checksums);
}

#[test]
fn multipath_beats_single_path_on_a_good_relay() {
    let mut single = scenario(SourceKind::SingleFlow, 30_000, 5);
    single.channels.relay = ChannelSpec::Fixed { cqi: 15 };
    let mut demuxed = single.clone();
    demuxed.scenario = SourceKind::DemuxedTcp;
    let s = run(&single).unwrap().target_throughput_bps;
    let d = run(&demuxed).unwrap().target_throughput_bps;
    assert!(d > 1.3 * s, "demuxed {d} vs single {s}");
}
