//! Scenario configuration: a TOML document of sections and `key = value`
//! pairs. Every key is optional except where noted; validation errors name
//! the dotted key at fault.
//!
//! ```toml
//! scenario = "demuxed_tcp"      # backlogged | single_flow | demuxed_tcp | two_tcp | mptcp
//! duration_slots = 300000
//! seed = 42
//!
//! [topology]
//! extra_ues = 0
//! relay = true
//!
//! [channel]                     # default for every LTE device
//! model = "markov"              # markov | trace | fixed
//! p = 0.5
//! q = 0.5
//!
//! [channel.relay]               # per-device overrides: target, relay, extra, extra_<n>
//! p = 0.2
//!
//! [scheduler]
//! inter = "pfs"
//! intra = "max_ci"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::netfn::{BLOCK_BITS, DEFAULT_CAPACITY_BLOCKS};
use crate::scheduler::{Policy, DEFAULT_TIME_CONSTANT};
use crate::transport::SourceKind;
use crate::SLOTS_PER_SECOND;

/// Five simulated minutes.
pub const DEFAULT_DURATION_SLOTS: u64 = 300_000;
/// Epoch offset between the target's trace and the relay's copy of it.
pub const DEFAULT_RELAY_SHIFT_EPOCHS: usize = 2;
pub const DEFAULT_HOLD_SLOTS: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ChannelSpec {
    Markov { p: f64, q: f64 },
    Trace { path: PathBuf, shift_epochs: usize },
    Fixed { cqi: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelPlan {
    pub target: ChannelSpec,
    pub relay: ChannelSpec,
    /// One entry per extra UE.
    pub extra: Vec<ChannelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopologyConfig {
    pub extra_ues: usize,
    pub relay: bool,
    pub wired_bits_per_slot: u64,
    pub wired_delay_slots: u64,
    /// Wired links between the server and the base station.
    pub backhaul_links: usize,
    pub d2d_bits_per_slot: u64,
    pub d2d_delay_slots: u64,
    pub ack_delay_slots: u64,
    /// Traffic toward each extra UE.
    pub extra_ue_scenario: SourceKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchedulerSpec {
    pub inter: Policy,
    pub intra: Policy,
    pub t_c: u32,
    /// Bundle the target host's flows into one cluster. When off every flow
    /// is its own cluster and only the inter-cluster policy matters.
    pub bundle: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DemuxModeSpec {
    CopyAll,
    RoundRobin,
    /// Weights for the direct and the relayed hop.
    Weighted { direct: f64, relay: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemuxSpec {
    pub mode: DemuxModeSpec,
    pub capacity_blocks: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuxSpec {
    pub hold_slots: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchGenerator {
    RandomMarkov,
    TraceSet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchSpec {
    pub count: usize,
    pub generator: BatchGenerator,
    pub trace_dir: Option<PathBuf>,
    pub scenarios: Vec<SourceKind>,
    /// `(inter, intra)` pairs.
    pub policies: Vec<(Policy, Policy)>,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            count: 100,
            generator: BatchGenerator::RandomMarkov,
            trace_dir: None,
            scenarios: vec![
                SourceKind::SingleFlow,
                SourceKind::DemuxedTcp,
                SourceKind::TwoTcp,
                SourceKind::Mptcp,
            ],
            policies: vec![(Policy::Pfs, Policy::Pfs), (Policy::Pfs, Policy::MaxCi)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: SourceKind,
    pub duration_slots: u64,
    pub seed: u64,
    pub block_bits: u32,
    /// Sample per-host throughput every 1000 slots.
    pub timeseries: bool,
    pub topology: TopologyConfig,
    pub channels: ChannelPlan,
    pub scheduler: SchedulerSpec,
    pub demux: DemuxSpec,
    pub mux: MuxSpec,
    pub batch: BatchSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let markov = ChannelSpec::Markov { p: 0.5, q: 0.5 };
        Self {
            scenario: SourceKind::SingleFlow,
            duration_slots: DEFAULT_DURATION_SLOTS,
            seed: 0,
            block_bits: BLOCK_BITS,
            timeseries: false,
            topology: TopologyConfig {
                extra_ues: 0,
                relay: true,
                wired_bits_per_slot: mbps_to_bits_per_slot(1000.0),
                wired_delay_slots: 1,
                backhaul_links: 2,
                d2d_bits_per_slot: mbps_to_bits_per_slot(300.0),
                d2d_delay_slots: 1,
                ack_delay_slots: 1,
                extra_ue_scenario: SourceKind::SingleFlow,
            },
            channels: ChannelPlan {
                target: markov.clone(),
                relay: markov,
                extra: Vec::new(),
            },
            scheduler: SchedulerSpec {
                inter: Policy::Pfs,
                intra: Policy::Pfs,
                t_c: DEFAULT_TIME_CONSTANT,
                bundle: true,
            },
            demux: DemuxSpec {
                mode: DemuxModeSpec::CopyAll,
                capacity_blocks: DEFAULT_CAPACITY_BLOCKS,
            },
            mux: MuxSpec {
                hold_slots: DEFAULT_HOLD_SLOTS,
            },
            batch: BatchSpec::default(),
        }
    }
}

pub fn mbps_to_bits_per_slot(mbps: f64) -> u64 {
    (mbps * 1e6 / SLOTS_PER_SECOND as f64).round() as u64
}

impl ScenarioConfig {
    /// Checks cross-field invariants. Parsing already enforces per-field
    /// ranges; programmatic configs go through here too.
    pub fn validate(&self) -> Result<()> {
        if self.scenario.needs_relay() && !self.topology.relay {
            return Err(Error::config(
                "topology.relay",
                format!("scenario `{}` needs the relay path", self.scenario),
            ));
        }
        if self.topology.extra_ue_scenario.needs_relay() {
            return Err(Error::config(
                "topology.extra_ue_scenario",
                "extra UEs have no relay; use `single_flow` or `backlogged`",
            ));
        }
        if self.channels.extra.len() != self.topology.extra_ues {
            return Err(Error::config(
                "channel",
                format!(
                    "{} extra-UE channels for {} extra UEs",
                    self.channels.extra.len(),
                    self.topology.extra_ues
                ),
            ));
        }
        let positive = [
            ("block_bits", u64::from(self.block_bits)),
            ("topology.wired_mbps", self.topology.wired_bits_per_slot),
            ("topology.d2d_mbps", self.topology.d2d_bits_per_slot),
            ("topology.backhaul_links", self.topology.backhaul_links as u64),
            ("scheduler.t_c", u64::from(self.scheduler.t_c)),
            ("demux.capacity_blocks", u64::from(self.demux.capacity_blocks)),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        let devices = std::iter::once(("channel.target", &self.channels.target))
            .chain(std::iter::once(("channel.relay", &self.channels.relay)))
            .chain(self.channels.extra.iter().map(|c| ("channel.extra", c)));
        for (key, spec) in devices {
            match spec {
                ChannelSpec::Markov { p, q } => {
                    for (name, v) in [("p", p), ("q", q)] {
                        if !(0.0..=1.0).contains(v) {
                            return Err(Error::config(
                                format!("{key}.{name}"),
                                format!("{v} is not a probability in [0, 1]"),
                            ));
                        }
                    }
                }
                ChannelSpec::Fixed { cqi } if !(1..=15).contains(cqi) => {
                    return Err(Error::config(format!("{key}.cqi"), format!("{cqi} is not in 1..=15")));
                }
                ChannelSpec::Trace { path, .. } if !path.is_file() => {
                    return Err(Error::config(
                        format!("{key}.path"),
                        format!("trace file {} does not exist", path.display()),
                    ));
                }
                _ => {}
            }
        }
        if let DemuxModeSpec::Weighted { direct, relay } = self.demux.mode {
            if !(direct > 0.0 && relay > 0.0 && direct.is_finite() && relay.is_finite()) {
                return Err(Error::config("demux.weights", "weights must be positive"));
            }
        }
        if self.batch.count == 0 {
            return Err(Error::config("batch.count", "must be at least 1"));
        }
        if self.batch.scenarios.is_empty() {
            return Err(Error::config("batch.scenarios", "list is empty"));
        }
        if self.batch.policies.is_empty() {
            return Err(Error::config("batch.policies", "list is empty"));
        }
        Ok(())
    }

    /// Replaces every device's channel with a Markov channel (used by the
    /// random batch generator).
    pub fn with_markov_channels(mut self, target: (f64, f64), relay: (f64, f64), extra: &[(f64, f64)]) -> Self {
        let m = |(p, q): (f64, f64)| ChannelSpec::Markov { p, q };
        self.channels = ChannelPlan {
            target: m(target),
            relay: m(relay),
            extra: extra.iter().copied().map(m).collect(),
        };
        self
    }

    pub fn with_extra_ues(mut self, n: usize) -> Self {
        let fill = self
            .channels
            .extra
            .last()
            .cloned()
            .unwrap_or_else(|| self.channels.target.clone());
        self.topology.extra_ues = n;
        self.channels.extra.resize(n, fill);
        self
    }
}

/// "unknown value `x`; expected one of a, b (did you mean `b`?)"
pub fn unknown_name_message(given: &str, names: &[&str]) -> String {
    let norm = |s: &str| s.to_ascii_lowercase().replace(['_', '-', ' '], "");
    let closest = names
        .iter()
        .map(|n| {
            let d = if norm(n) == norm(given) {
                0
            } else {
                strsim::levenshtein(&norm(n), &norm(given))
            };
            (d, *n)
        })
        .min();
    let mut msg = format!("unknown value `{given}`; expected one of {}", names.join(", "));
    if let Some((d, n)) = closest {
        if d <= 2 {
            msg.push_str(&format!(" (did you mean `{n}`?)"));
        }
    }
    msg
}

/// A view over one TOML table that tracks which keys were consumed.
struct Section<'a> {
    path: String,
    table: &'a Table,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table) -> Self {
        Self {
            path: path.to_string(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&mut self, k: &'a str) -> Option<&'a Value> {
        let v = self.table.get(k)?;
        self.used.insert(k);
        Some(v)
    }

    fn f64(&mut self, k: &'a str) -> Result<Option<f64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(other) => Err(Error::config(self.key(k), format!("expected a number, got {other}"))),
        }
    }

    fn u64(&mut self, k: &'a str) -> Result<Option<u64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(other) => Err(Error::config(
                self.key(k),
                format!("expected a non-negative integer, got {other}"),
            )),
        }
    }

    fn positive_u64(&mut self, k: &'a str) -> Result<Option<u64>> {
        let v = self.u64(k)?;
        if v == Some(0) {
            return Err(Error::config(self.key(k), "must be positive"));
        }
        Ok(v)
    }

    fn bool(&mut self, k: &'a str) -> Result<Option<bool>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(Error::config(self.key(k), format!("expected true or false, got {other}"))),
        }
    }

    fn str(&mut self, k: &'a str) -> Result<Option<&'a str>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(Error::config(self.key(k), format!("expected a string, got {other}"))),
        }
    }

    fn parse<T: std::str::FromStr<Err = Error>>(&mut self, k: &'a str) -> Result<Option<T>> {
        let key = self.key(k);
        self.str(k)?
            .map(|s| s.parse::<T>().map_err(|e| rekey(e, &key)))
            .transpose()
    }

    fn array(&mut self, k: &'a str) -> Result<Option<&'a Vec<Value>>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(other) => Err(Error::config(self.key(k), format!("expected an array, got {other}"))),
        }
    }

    fn subtable(&mut self, k: &'a str) -> Result<Option<&'a Table>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(other) => Err(Error::config(self.key(k), format!("expected a table, got {other}"))),
        }
    }

    /// Rejects keys that no getter asked for.
    fn finish(self) -> Result<()> {
        match self.table.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(Error::config(self.key(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn rekey(e: Error, key: &str) -> Error {
    match e {
        Error::Config { message, .. } => Error::config(key, message),
        other => other,
    }
}

const CHANNEL_KEYS: [&str; 6] = ["model", "p", "q", "path", "shift_epochs", "cqi"];

fn parse_channel(path: &str, table: &Table, base_dir: &Path) -> Result<ChannelSpec> {
    let mut s = Section::new(path, table);
    let model = s.str("model")?.unwrap_or("markov");
    let spec = match model {
        "markov" => {
            let p = s.f64("p")?.unwrap_or(0.5);
            let q = s.f64("q")?.unwrap_or(0.5);
            for (name, v) in [("p", p), ("q", q)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(
                        s.key(name),
                        format!("{v} is not a probability in [0, 1]"),
                    ));
                }
            }
            ChannelSpec::Markov { p, q }
        }
        "trace" => {
            let rel = s
                .str("path")?
                .ok_or_else(|| Error::config(s.key("path"), "trace channels need a path"))?;
            let path = base_dir.join(rel);
            if !path.is_file() {
                return Err(Error::config(
                    s.key("path"),
                    format!("trace file {} does not exist", path.display()),
                ));
            }
            let shift_epochs = s.u64("shift_epochs")?.unwrap_or(0) as usize;
            ChannelSpec::Trace { path, shift_epochs }
        }
        "fixed" => {
            let cqi = s.u64("cqi")?.unwrap_or(15);
            if !(1..=15).contains(&cqi) {
                return Err(Error::config(s.key("cqi"), format!("{cqi} is not in 1..=15")));
            }
            ChannelSpec::Fixed { cqi: cqi as u8 }
        }
        other => {
            return Err(Error::config(
                s.key("model"),
                unknown_name_message(other, &["markov", "trace", "fixed"]),
            ))
        }
    };
    // Keys for other models are tolerated so overrides can switch models.
    for k in CHANNEL_KEYS {
        s.raw(k);
    }
    s.finish()?;
    Ok(spec)
}

/// Layers `over` onto `base`, keeping only channel keys of `base`.
fn overlay(base: &Table, over: Option<&Table>) -> Table {
    let mut out: Table = base
        .iter()
        .filter(|(k, _)| CHANNEL_KEYS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if let Some(over) = over {
        if over.contains_key("model") && over.get("model") != base.get("model") {
            out.retain(|k, _| !matches!(k, "p" | "q" | "path" | "shift_epochs" | "cqi"));
        }
        for (k, v) in over {
            out.insert(k.clone(), v.clone());
        }
    }
    out
}

fn parse_channels(root: Option<&Table>, extra_ues: usize, base_dir: &Path) -> Result<ChannelPlan> {
    let empty = Table::new();
    let root = root.unwrap_or(&empty);
    let mut overrides = Vec::new();
    for (k, v) in root {
        if CHANNEL_KEYS.contains(&k.as_str()) {
            continue;
        }
        let known = k == "target"
            || k == "relay"
            || k == "extra"
            || k
                .strip_prefix("extra_")
                .and_then(|n| n.parse::<usize>().ok())
                .is_some_and(|n| (1..=extra_ues).contains(&n));
        if !known {
            return Err(Error::config(format!("channel.{k}"), "unknown key"));
        }
        match v {
            Value::Table(t) => overrides.push((k.as_str(), t)),
            _ => return Err(Error::config(format!("channel.{k}"), "expected a table")),
        }
    }
    let get = |name: &str| overrides.iter().find(|(k, _)| *k == name).map(|(_, t)| *t);

    let target_tbl = overlay(root, get("target"));
    let target = parse_channel("channel.target", &target_tbl, base_dir)?;
    let relay = match (get("relay"), &target) {
        (None, ChannelSpec::Trace { path, shift_epochs }) => ChannelSpec::Trace {
            path: path.clone(),
            shift_epochs: shift_epochs + DEFAULT_RELAY_SHIFT_EPOCHS,
        },
        (over, _) => parse_channel("channel.relay", &overlay(root, over), base_dir)?,
    };
    let extra_base = overlay(root, get("extra"));
    let mut extra = Vec::with_capacity(extra_ues);
    for n in 1..=extra_ues {
        let name = format!("extra_{n}");
        let tbl = overlay(&extra_base, get(&name));
        extra.push(parse_channel(&format!("channel.{name}"), &tbl, base_dir)?);
    }
    Ok(ChannelPlan {
        target,
        relay,
        extra,
    })
}

fn parse_policy_pair(key: &str, v: &Value) -> Result<(Policy, Policy)> {
    let pair = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::config(key, "expected [inter, intra]"))?;
    let name = |v: &Value| -> Result<Policy> {
        v.as_str()
            .ok_or_else(|| Error::config(key, "policy names are strings"))?
            .parse::<Policy>()
            .map_err(|e| rekey(e, key))
    };
    Ok((name(&pair[0])?, name(&pair[1])?))
}

/// Parses configuration text. Relative trace paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let doc: Table = toml::from_str(text).map_err(|e| Error::config("<syntax>", e.to_string()))?;
    let mut cfg = ScenarioConfig::default();
    let mut root = Section::new("", &doc);

    cfg.scenario = root
        .parse::<SourceKind>("scenario")?
        .ok_or_else(|| Error::config("scenario", "missing required key"))?;
    if let Some(d) = root.u64("duration_slots")? {
        cfg.duration_slots = d;
    }
    if let Some(s) = root.u64("seed")? {
        cfg.seed = s;
    }
    if let Some(b) = root.positive_u64("block_bits")? {
        cfg.block_bits = u32::try_from(b).map_err(|_| Error::config("block_bits", "too large"))?;
    }
    if let Some(t) = root.bool("timeseries")? {
        cfg.timeseries = t;
    }

    let empty = Table::new();
    let topo_tbl = root.subtable("topology")?.unwrap_or(&empty);
    let mut topo = Section::new("topology", topo_tbl);
    let t = &mut cfg.topology;
    if let Some(n) = topo.u64("extra_ues")? {
        t.extra_ues = n as usize;
    }
    if let Some(r) = topo.bool("relay")? {
        t.relay = r;
    }
    for (key, slot) in [("wired_mbps", &mut t.wired_bits_per_slot), ("d2d_mbps", &mut t.d2d_bits_per_slot)] {
        if let Some(mbps) = topo.f64(key)? {
            if !(mbps > 0.0 && mbps.is_finite()) {
                return Err(Error::config(topo.key(key), "must be positive"));
            }
            *slot = mbps_to_bits_per_slot(mbps).max(1);
        }
    }
    if let Some(d) = topo.u64("wired_delay_slots")? {
        t.wired_delay_slots = d;
    }
    if let Some(d) = topo.u64("d2d_delay_slots")? {
        t.d2d_delay_slots = d;
    }
    if let Some(d) = topo.u64("ack_delay_slots")? {
        t.ack_delay_slots = d;
    }
    if let Some(n) = topo.positive_u64("backhaul_links")? {
        t.backhaul_links = n as usize;
    }
    t.extra_ue_scenario = match topo.parse::<SourceKind>("extra_ue_scenario")? {
        Some(k) => k,
        None if cfg.scenario == SourceKind::Backlogged => SourceKind::Backlogged,
        None => SourceKind::SingleFlow,
    };
    topo.finish()?;

    let channel_tbl = root.subtable("channel")?;
    cfg.channels = parse_channels(channel_tbl, cfg.topology.extra_ues, base_dir)?;

    if let Some(tbl) = root.subtable("scheduler")? {
        let mut s = Section::new("scheduler", tbl);
        if let Some(p) = s.parse::<Policy>("inter")? {
            cfg.scheduler.inter = p;
        }
        if let Some(p) = s.parse::<Policy>("intra")? {
            cfg.scheduler.intra = p;
        }
        if let Some(tc) = s.positive_u64("t_c")? {
            cfg.scheduler.t_c = u32::try_from(tc).map_err(|_| Error::config("scheduler.t_c", "too large"))?;
        }
        if let Some(b) = s.bool("bundle")? {
            cfg.scheduler.bundle = b;
        }
        s.finish()?;
    }

    if let Some(tbl) = root.subtable("demux")? {
        let mut s = Section::new("demux", tbl);
        let weights = s.array("weights")?;
        cfg.demux.mode = match s.str("mode")?.unwrap_or("copy_all") {
            "copy_all" => DemuxModeSpec::CopyAll,
            "round_robin" => DemuxModeSpec::RoundRobin,
            "weighted" => {
                let w = weights.ok_or_else(|| Error::config("demux.weights", "weighted mode needs weights"))?;
                let nums: Vec<f64> = w
                    .iter()
                    .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .collect::<Option<_>>()
                    .filter(|n: &Vec<f64>| n.len() == 2)
                    .ok_or_else(|| Error::config("demux.weights", "expected [direct, relay] numbers"))?;
                if nums.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(Error::config("demux.weights", "weights must be positive"));
                }
                DemuxModeSpec::Weighted {
                    direct: nums[0],
                    relay: nums[1],
                }
            }
            other => {
                return Err(Error::config(
                    "demux.mode",
                    unknown_name_message(other, &["copy_all", "round_robin", "weighted"]),
                ))
            }
        };
        if let Some(c) = s.positive_u64("capacity_blocks")? {
            cfg.demux.capacity_blocks =
                u32::try_from(c).map_err(|_| Error::config("demux.capacity_blocks", "too large"))?;
        }
        s.finish()?;
    }

    if let Some(tbl) = root.subtable("mux")? {
        let mut s = Section::new("mux", tbl);
        if let Some(h) = s.u64("hold_slots")? {
            cfg.mux.hold_slots = h;
        }
        s.finish()?;
    }

    if let Some(tbl) = root.subtable("batch")? {
        let mut s = Section::new("batch", tbl);
        let b = &mut cfg.batch;
        if let Some(n) = s.positive_u64("count")? {
            b.count = n as usize;
        }
        if let Some(g) = s.str("generator")? {
            b.generator = match g {
                "random_markov" => BatchGenerator::RandomMarkov,
                "trace_set" => BatchGenerator::TraceSet,
                other => {
                    return Err(Error::config(
                        "batch.generator",
                        unknown_name_message(other, &["random_markov", "trace_set"]),
                    ))
                }
            };
        }
        if let Some(dir) = s.str("trace_dir")? {
            let dir = base_dir.join(dir);
            if !dir.is_dir() {
                return Err(Error::config(
                    "batch.trace_dir",
                    format!("{} is not a directory", dir.display()),
                ));
            }
            b.trace_dir = Some(dir);
        }
        if let Some(list) = s.array("scenarios")? {
            b.scenarios = list
                .iter()
                .map(|v| {
                    v.as_str()
                        .ok_or_else(|| Error::config("batch.scenarios", "expected strings"))?
                        .parse::<SourceKind>()
                        .map_err(|e| rekey(e, "batch.scenarios"))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(list) = s.array("policies")? {
            b.policies = list
                .iter()
                .map(|v| parse_policy_pair("batch.policies", v))
                .collect::<Result<_>>()?;
        }
        if b.generator == BatchGenerator::TraceSet && b.trace_dir.is_none() {
            return Err(Error::config("batch.trace_dir", "trace_set batches need a trace directory"));
        }
        s.finish()?;
    }

    root.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
