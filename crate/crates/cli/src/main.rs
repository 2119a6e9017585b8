use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rismac::sweep::{run_sweep, RunRow, CSV_HEADER};
use rismac::tracefile::TraceFile;
use rismac::{parse_scenario, Protocol, ScenarioConfig};

/// Simulate MAC protocols for RIS-aided uplink networks.
#[derive(Debug, Parser)]
#[command(name = "rismac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and print one CSV row.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seed overriding the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full event trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep one numeric key over values, seeds and protocols.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key to sweep: K, M, num_ris, seed or section.key.
        #[arg(long)]
        variable: String,
        /// Comma-separated values, or start:stop:step (inclusive).
        #[arg(long)]
        values: String,
        /// Comma-separated seeds, or first-last (inclusive).
        #[arg(long, default_value = "1")]
        seeds: String,
    },
    /// Re-derive metrics from a persisted trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol(s), comma-separated; defaults to the scenario's.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long, overrides_with = "no_ai")]
    ai: bool,
    #[arg(long = "no-ai", overrides_with = "ai")]
    no_ai: bool,
    /// CSV output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => parse_scenario(p).with_context(|| format!("reading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        if self.ai {
            cfg.run.ai = true;
        }
        if self.no_ai {
            cfg.run.ai = false;
        }
        Ok(cfg)
    }

    fn protocols(&self, cfg: &ScenarioConfig) -> Result<Vec<Protocol>> {
        match &self.protocol {
            None => Ok(vec![cfg.run.protocol]),
            Some(list) => list
                .split(',')
                .map(|p| p.trim().parse::<Protocol>().map_err(Into::into))
                .collect(),
        }
    }
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let [start, stop, step] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (start, stop, step) = (start?, stop?, step?);
        if !(step > 0.0) {
            bail!("step must be positive in `{text}`");
        }
        let n = ((stop - start) / step + 1e-9).floor();
        if n < 0.0 {
            bail!("empty range `{text}`");
        }
        return Ok((0..=n as usize).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value `{v}`")))
        .collect()
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range `{text}`");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, seed, trace } => {
            let mut cfg = common.scenario()?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let protocols = common.protocols(&cfg)?;
            let [protocol] = protocols[..] else {
                bail!("`run` takes a single protocol");
            };
            cfg.run.protocol = protocol;
            let out = rismac::run(&cfg, trace.is_some())?;
            if let (Some(path), Some(records)) = (trace, out.trace) {
                let json = TraceFile::new(&cfg, records)?.to_json()?;
                fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            }
            let row = RunRow::new(&cfg, &out.metrics);
            emit(common.out.as_deref(), &format!("{CSV_HEADER}\n{}\n", row.to_csv()))
        }
        Command::Sweep {
            common,
            variable,
            values,
            seeds,
        } => {
            let cfg = common.scenario()?;
            let protocols = common.protocols(&cfg)?;
            let table = run_sweep(
                &cfg,
                &variable,
                &parse_values(&values)?,
                &parse_seeds(&seeds)?,
                &protocols,
            )?;
            emit(common.out.as_deref(), &table.to_csv())
        }
        Command::Replay { trace, out } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let (cfg, metrics) = TraceFile::from_json(&text)?.replay()?;
            let row = RunRow::new(&cfg, &metrics);
            emit(out.as_deref(), &format!("{CSV_HEADER}\n{}\n", row.to_csv()))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1,2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(parse_values("10:100:10").unwrap().len(), 10);
        assert!(parse_values("5:1:1").is_err());
        assert_eq!(parse_seeds("1-5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("7,9").unwrap(), vec![7, 9]);
    }
}
