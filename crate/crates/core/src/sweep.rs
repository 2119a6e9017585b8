//! Parameter sweeps over seeds and protocols, emitted as CSV.
//!
//! Columns: `scenario, protocol, ai, K, num_ris, seed, throughput_bps,
//! ee_bits_per_joule, collisions, jain_index, mean_delay_s, frames`.
//! Rows are ordered by swept value, then protocol, then seed; each
//! (value, protocol) block ends with a summary row whose seed cell is
//! `summary` and whose metric cells read `mean±std` (sample std).

use rayon::prelude::*;

use crate::engine::run;
use crate::error::Result;
use crate::metrics::RunMetrics;
use crate::scenario::{Protocol, Scenario, ScenarioConfig};

pub const CSV_HEADER: &str =
    "scenario,protocol,ai,K,num_ris,seed,throughput_bps,ee_bits_per_joule,collisions,jain_index,mean_delay_s,frames";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub scenario: Scenario,
    pub protocol: Protocol,
    pub ai: bool,
    pub users: usize,
    pub num_ris: usize,
    pub seed: u64,
    pub throughput_bps: f64,
    pub ee_bits_per_joule: f64,
    pub collisions: u64,
    pub jain_index: f64,
    pub mean_delay_s: f64,
    pub frames: u64,
}

impl RunRow {
    pub fn new(cfg: &ScenarioConfig, m: &RunMetrics) -> Self {
        Self {
            scenario: cfg.run.scenario,
            protocol: cfg.run.protocol,
            ai: cfg.run.ai,
            users: cfg.topology.users,
            num_ris: cfg.topology.num_ris,
            seed: cfg.run.seed,
            throughput_bps: m.throughput_bps(),
            ee_bits_per_joule: m.energy_efficiency(),
            collisions: m.collisions,
            jain_index: m.jain_index(),
            mean_delay_s: m.mean_delay(),
            frames: m.frames_completed,
        }
    }

    fn metrics(&self) -> [f64; 6] {
        [
            self.throughput_bps,
            self.ee_bits_per_joule,
            self.collisions as f64,
            self.jain_index,
            self.mean_delay_s,
            self.frames as f64,
        ]
    }

    fn prefix(&self) -> String {
        format!(
            "{:?},{},{},{},{}",
            self.scenario,
            self.protocol.name(),
            self.ai,
            self.users,
            self.num_ris
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.prefix(),
            self.seed,
            self.throughput_bps,
            self.ee_bits_per_joule,
            self.collisions,
            self.jain_index,
            self.mean_delay_s,
            self.frames
        )
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub first: RunRow,
    /// `(mean, std)` per metric column.
    pub stats: [(f64, f64); 6],
}

impl SummaryRow {
    fn new(rows: &[RunRow]) -> Self {
        let mut stats = [(0.0, 0.0); 6];
        for (i, s) in stats.iter_mut().enumerate() {
            let v: Vec<f64> = rows.iter().map(|r| r.metrics()[i]).collect();
            *s = mean_std(&v);
        }
        Self {
            first: rows[0].clone(),
            stats,
        }
    }

    pub fn mean_throughput(&self) -> f64 {
        self.stats[0].0
    }

    pub fn mean_ee(&self) -> f64 {
        self.stats[1].0
    }

    pub fn to_csv(&self) -> String {
        let cells: Vec<String> = self.stats.iter().map(|(m, s)| format!("{m}±{s}")).collect();
        format!("{},summary,{}", self.first.prefix(), cells.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Run(RunRow),
    Summary(SummaryRow),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<Row>,
}

impl SweepTable {
    pub fn runs(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter_map(|r| match r {
            Row::Run(r) => Some(r),
            Row::Summary(_) => None,
        })
    }

    pub fn summaries(&self) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter_map(|r| match r {
            Row::Summary(s) => Some(s),
            Row::Run(_) => None,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            match r {
                Row::Run(r) => out.push_str(&r.to_csv()),
                Row::Summary(s) => out.push_str(&s.to_csv()),
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every (value, protocol, seed) point, in parallel, and collects the
/// rows in deterministic order.
pub fn run_sweep(
    config: &ScenarioConfig,
    variable: &str,
    values: &[f64],
    seeds: &[u64],
    protocols: &[Protocol],
) -> Result<SweepTable> {
    let mut points = Vec::new();
    for &v in values {
        let at = config.with_value(variable, v)?;
        for &p in protocols {
            for &seed in seeds {
                let mut cfg = at.clone();
                cfg.run.protocol = p;
                cfg.run.seed = seed;
                points.push(cfg);
            }
        }
    }
    let results: Vec<RunRow> = points
        .par_iter()
        .map(|cfg| run(cfg, false).map(|out| RunRow::new(cfg, &out.metrics)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(results.len() + results.len() / seeds.len().max(1));
    for block in results.chunks(seeds.len().max(1)) {
        rows.extend(block.iter().cloned().map(Row::Run));
        if !block.is_empty() {
            rows.push(Row::Summary(SummaryRow::new(block)));
        }
    }
    Ok(SweepTable { rows })
}
