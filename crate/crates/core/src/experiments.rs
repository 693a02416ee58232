//! Batch generation, paired matrix runs and CDF summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{format_trace, generate_trace, TraceGenParams};
use crate::config::{BatchGenerator, ChannelSpec, ScenarioConfig, DEFAULT_RELAY_SHIFT_EPOCHS};
use crate::error::{Error, Result};
use crate::scheduler::Policy;
use crate::seed;
use crate::sim::{run, Metrics};
use crate::transport::SourceKind;

/// Percentiles reported in summaries.
pub const SUMMARY_PERCENTILES: [u32; 5] = [10, 20, 30, 40, 50];

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioBatch {
    pub count: usize,
    pub generator: BatchGenerator,
    pub duration_slots: u64,
    pub base_seed: u64,
    /// Needed for [`BatchGenerator::TraceSet`].
    pub trace_dir: Option<PathBuf>,
}

impl ScenarioBatch {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            count: cfg.batch.count,
            generator: cfg.batch.generator,
            duration_slots: cfg.duration_slots,
            base_seed: cfg.seed,
            trace_dir: cfg.batch.trace_dir.clone(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("batch.count", "must be at least 1"));
        }
        if self.duration_slots == 0 {
            return Err(Error::config("duration_slots", "must be at least 1"));
        }
        Ok(())
    }
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

/// Expands `template` into `batch.count` configs whose every LTE device has
/// an independent Markov channel with p, q drawn uniformly from (0, 1).
pub fn gen_markov_batch(batch: &ScenarioBatch, template: &ScenarioConfig) -> Result<Vec<ScenarioConfig>> {
    batch.check()?;
    let extra = template.topology.extra_ues;
    Ok((0..batch.count as u64)
        .map(|i| {
            let mut rng = seed::stream(batch.base_seed, "scenario", i);
            let mut pq = || (open_unit(&mut rng), open_unit(&mut rng));
            let target = pq();
            let relay = pq();
            let extras: Vec<_> = (0..extra).map(|_| pq()).collect();
            let mut cfg = template.clone().with_markov_channels(target, relay, &extras);
            cfg.duration_slots = batch.duration_slots;
            cfg.seed = seed::derive_u64(batch.base_seed, "run", i);
            cfg
        })
        .collect())
}

/// Trace files (`*.csv`) in `dir`, sorted by name.
pub fn list_traces(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// One config per scenario from the trace files in `batch.trace_dir`.
/// Scenario i gives the target trace i and the relay the same trace
/// shifted; extra UEs take the following files.
pub fn gen_trace_batch(batch: &ScenarioBatch, template: &ScenarioConfig) -> Result<Vec<ScenarioConfig>> {
    batch.check()?;
    let dir = batch
        .trace_dir
        .as_deref()
        .ok_or_else(|| Error::config("batch.trace_dir", "trace batches need a trace directory"))?;
    let files = list_traces(dir)?;
    if files.is_empty() {
        return Err(Error::config(
            "batch.trace_dir",
            format!("no .csv traces in {}", dir.display()),
        ));
    }
    let extra = template.topology.extra_ues;
    Ok((0..batch.count)
        .map(|i| {
            let trace = |k: usize, shift_epochs: usize| ChannelSpec::Trace {
                path: files[k % files.len()].clone(),
                shift_epochs,
            };
            let mut cfg = template.clone();
            cfg.channels.target = trace(i, 0);
            cfg.channels.relay = trace(i, DEFAULT_RELAY_SHIFT_EPOCHS);
            cfg.channels.extra = (0..extra).map(|j| trace(i + 1 + j, 0)).collect();
            cfg.duration_slots = batch.duration_slots;
            cfg.seed = seed::derive_u64(batch.base_seed, "run", i as u64);
            cfg
        })
        .collect())
}

pub fn gen_batch(batch: &ScenarioBatch, template: &ScenarioConfig) -> Result<Vec<ScenarioConfig>> {
    match batch.generator {
        BatchGenerator::RandomMarkov => gen_markov_batch(batch, template),
        BatchGenerator::TraceSet => gen_trace_batch(batch, template),
    }
}

/// Writes `count` synthetic traces `trace_000.csv`, ... into `dir`.
pub fn write_trace_set(dir: &Path, count: usize, master: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = TraceGenParams::default();
    (0..count)
        .map(|i| {
            let mut rng = seed::stream(master, "trace", i as u64);
            let samples = generate_trace(&params, &mut rng);
            let path = dir.join(format!("trace_{i:03}.csv"));
            fs::write(&path, format_trace(&samples)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// One run of the matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub config_id: usize,
    pub scenario: SourceKind,
    pub inter: Policy,
    pub intra: Policy,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.scenario, self.inter, self.intra)
    }
}

/// The (scenario, inter, intra) combinations that need distinct runs. A
/// single flow has no intra-cluster choice, so it runs once per inter
/// policy under the first listed intra policy.
pub fn matrix_columns(scenarios: &[SourceKind], policies: &[(Policy, Policy)]) -> Result<Vec<(SourceKind, Policy, Policy)>> {
    if scenarios.is_empty() {
        return Err(Error::config("batch.scenarios", "list is empty"));
    }
    if policies.is_empty() {
        return Err(Error::config("batch.policies", "list is empty"));
    }
    let mut out: Vec<(SourceKind, Policy, Policy)> = Vec::new();
    for &s in scenarios {
        for &(inter, intra) in policies {
            if s == SourceKind::SingleFlow && out.iter().any(|&(k, i, _)| k == s && i == inter) {
                continue;
            }
            if !out.contains(&(s, inter, intra)) {
                out.push((s, inter, intra));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub metrics: Metrics,
}

/// Runs every (config, column) cell. All cells of one config share its
/// seed, so channel realizations are paired across columns.
pub fn run_matrix(
    configs: &[ScenarioConfig],
    scenarios: &[SourceKind],
    policies: &[(Policy, Policy)],
) -> Result<Vec<RunRecord>> {
    let columns = matrix_columns(scenarios, policies)?;
    let cells: Vec<Cell> = (0..configs.len())
        .flat_map(|config_id| {
            columns.iter().map(move |&(scenario, inter, intra)| Cell {
                config_id,
                scenario,
                inter,
                intra,
            })
        })
        .collect();
    cells
        .par_iter()
        .map(|&cell| {
            let mut cfg = configs[cell.config_id].clone();
            cfg.scenario = cell.scenario;
            cfg.scheduler.inter = cell.inter;
            cfg.scheduler.intra = cell.intra;
            let metrics = run(&cfg).map_err(|e| Error::Run {
                cell: format!("config {} {}", cell.config_id, cell.label()),
                source: Box::new(e),
            })?;
            log::debug!("finished config {} {}", cell.config_id, cell.label());
            Ok(RunRecord { cell, metrics })
        })
        .collect()
}

/// Empirical CDF: ascending values with probability i/n at the i-th.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Domain {
            what: "cdf input",
            detail: "no values".into(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// Smallest value whose CDF reaches `p` (in [0, 1]).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            what: "percentile",
            detail: format!("{p} is not in [0, 1]"),
        });
    }
    let c = cdf(values)?;
    // Guard against i/n rounding just below p.
    let eps = 1e-12;
    Ok(c.iter()
        .find(|&&(_, prob)| prob + eps >= p)
        .map_or(c[c.len() - 1].0, |&(v, _)| v))
}

/// Ratio a/b; infinite when b is zero (NaN when both are).
pub fn relative_gain(a: f64, b: f64) -> f64 {
    a / b
}

/// Keeps the finite gains; the others are counted and reported.
pub fn finite_gains(gains: &[f64]) -> (Vec<f64>, usize) {
    let finite: Vec<f64> = gains.iter().copied().filter(|g| g.is_finite()).collect();
    let excluded = gains.len() - finite.len();
    if excluded > 0 {
        log::warn!("{excluded} gains with a zero baseline excluded from aggregates");
    }
    (finite, excluded)
}

#[derive(Clone, Debug, Serialize)]
pub struct ColumnSummary {
    pub scenario: SourceKind,
    pub inter_policy: Policy,
    pub intra_policy: Policy,
    pub runs: usize,
    /// Target-host throughput percentiles, bits/s, keyed by percentile.
    pub target_percentiles: BTreeMap<u32, f64>,
    pub system_percentiles: BTreeMap<u32, f64>,
    /// Ratio of this column's percentiles to the baseline's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_gains: Option<BTreeMap<u32, f64>>,
    /// Median of the paired per-scenario gains over the baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_paired_gain: Option<f64>,
    pub excluded_gains: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatrixSummary {
    pub configs: usize,
    pub runs: usize,
    /// Label of the baseline column (the single flow under the first
    /// inter policy), when present.
    pub baseline: Option<String>,
    /// Every config's channel checksums agree across all of its cells.
    pub paired: bool,
    pub columns: Vec<ColumnSummary>,
}

fn percentiles(values: &[f64]) -> Result<BTreeMap<u32, f64>> {
    SUMMARY_PERCENTILES
        .iter()
        .map(|&p| Ok((p, percentile(values, f64::from(p) / 100.0)?)))
        .collect()
}

/// Per-column target-host throughput, ordered by config id.
pub fn column_values(records: &[RunRecord]) -> BTreeMap<(SourceKind, Policy, Policy), Vec<(usize, &Metrics)>> {
    let mut by_column: BTreeMap<_, Vec<(usize, &Metrics)>> = BTreeMap::new();
    for r in records {
        by_column
            .entry((r.cell.scenario, r.cell.inter, r.cell.intra))
            .or_default()
            .push((r.cell.config_id, &r.metrics));
    }
    for v in by_column.values_mut() {
        v.sort_by_key(|&(id, _)| id);
    }
    by_column
}

pub fn summarize(records: &[RunRecord]) -> Result<MatrixSummary> {
    if records.is_empty() {
        return Err(Error::Output("no runs to summarize".into()));
    }
    let columns = column_values(records);
    let mut order: Vec<(SourceKind, Policy, Policy)> = Vec::new();
    for r in records {
        let k = (r.cell.scenario, r.cell.inter, r.cell.intra);
        if !order.contains(&k) {
            order.push(k);
        }
    }
    let baseline_key = order.iter().copied().find(|k| k.0 == SourceKind::SingleFlow);
    let baseline: Option<&Vec<(usize, &Metrics)>> = baseline_key.map(|k| &columns[&k]);
    let baseline_pct = baseline
        .map(|b| percentiles(&b.iter().map(|(_, m)| m.target_throughput_bps).collect::<Vec<_>>()))
        .transpose()?;

    let mut checksums: BTreeMap<usize, &Vec<String>> = BTreeMap::new();
    let mut paired = true;
    for r in records {
        let c = checksums.entry(r.cell.config_id).or_insert(&r.metrics.channel_checksums);
        paired &= *c == &r.metrics.channel_checksums;
    }

    let mut out = Vec::new();
    for key in order {
        let runs = &columns[&key];
        let target: Vec<f64> = runs.iter().map(|(_, m)| m.target_throughput_bps).collect();
        let system: Vec<f64> = runs.iter().map(|(_, m)| m.system_throughput_bps).collect();
        let target_percentiles = percentiles(&target)?;
        let (percentile_gains, median_paired_gain, excluded_gains) = match (baseline, &baseline_pct) {
            (Some(base), Some(base_pct)) if Some(key) != baseline_key => {
                let pg = target_percentiles
                    .iter()
                    .map(|(&p, &v)| (p, relative_gain(v, base_pct[&p])))
                    .collect();
                let base_by_id: BTreeMap<usize, f64> =
                    base.iter().map(|(id, m)| (*id, m.target_throughput_bps)).collect();
                let gains: Vec<f64> = runs
                    .iter()
                    .filter_map(|(id, m)| base_by_id.get(id).map(|&b| relative_gain(m.target_throughput_bps, b)))
                    .collect();
                let (finite, excluded) = finite_gains(&gains);
                let median = if finite.is_empty() {
                    None
                } else {
                    Some(percentile(&finite, 0.5)?)
                };
                (Some(pg), median, excluded)
            }
            _ => (None, None, 0),
        };
        out.push(ColumnSummary {
            scenario: key.0,
            inter_policy: key.1,
            intra_policy: key.2,
            runs: runs.len(),
            target_percentiles,
            system_percentiles: percentiles(&system)?,
            percentile_gains,
            median_paired_gain,
            excluded_gains,
        });
    }
    Ok(MatrixSummary {
        configs: checksums.len(),
        runs: records.len(),
        baseline: baseline_key.map(|(s, i, a)| format!("{s}/{i}/{a}")),
        paired,
        columns: out,
    })
}

#[derive(Serialize)]
struct CsvRow {
    config_id: usize,
    scenario: SourceKind,
    inter_policy: Policy,
    intra_policy: Policy,
    ue_id: usize,
    throughput_bps: f64,
}

/// One row per (run, host), in cell order.
pub fn write_csv<W: std::io::Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in records {
        for h in &r.metrics.hosts {
            w.serialize(CsvRow {
                config_id: r.cell.config_id,
                scenario: r.cell.scenario,
                inter_policy: r.cell.inter,
                intra_policy: r.cell.intra,
                ue_id: h.host_id,
                throughput_bps: h.throughput_bps,
            })
            .map_err(|e| Error::Output(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))?;
    Ok(())
}

/// Writes `throughput.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, records: &[RunRecord]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("throughput.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(records, std::io::BufWriter::new(file))?;
    let json_path = dir.join("summary.json");
    let summary = summarize(records)?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Output(e.to_string()))?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}
