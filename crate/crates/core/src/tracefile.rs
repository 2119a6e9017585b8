//! Persisted run traces: the scenario as TOML text plus every trace record,
//! stored as JSON.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{RunMetrics, TraceRecord};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub config: String,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn new(cfg: &ScenarioConfig, records: Vec<TraceRecord>) -> Result<Self> {
        Ok(Self {
            config: cfg.to_toml()?,
            records,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        ScenarioConfig::from_toml(&self.config)
    }

    /// Metrics re-derived from the records alone.
    pub fn replay(&self) -> Result<(ScenarioConfig, RunMetrics)> {
        let cfg = self.scenario()?;
        let m = RunMetrics::replay(cfg.topology.users, &self.records);
        Ok((cfg, m))
    }
}
