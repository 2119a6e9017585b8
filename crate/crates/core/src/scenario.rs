//! Scenario files: TOML with one table per concern. Every key is optional and
//! falls back to the default shown by `ScenarioConfig::default().to_toml()`.
//!
//! ```toml
//! [run]
//! protocol = "distributed"
//! [topology]
//! K = 20
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, Geometry};
use crate::error::{Error, Result};
use crate::learning::{ComputeCostModel, EpsilonSchedule};
use crate::mac::distributed::DcfParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// One RIS, many Txs, one Rx.
    S1,
    /// One RIS, many Txs, many Rxs.
    S2,
    /// Many RISs, many Txs, one Rx.
    S3,
    /// Many RISs, many Txs, many Rxs.
    S4,
}

impl Scenario {
    pub fn multi_ris(self) -> bool {
        matches!(self, Scenario::S3 | Scenario::S4)
    }

    pub fn multi_rx(self) -> bool {
        matches!(self, Scenario::S2 | Scenario::S4)
    }

    fn with_multi_ris(self, multi: bool) -> Self {
        match (self.multi_rx(), multi) {
            (false, false) => Scenario::S1,
            (true, false) => Scenario::S2,
            (false, true) => Scenario::S3,
            (true, true) => Scenario::S4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Centralized,
    Distributed,
    Hybrid1,
    Hybrid2,
    Hybrid3,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Centralized,
        Protocol::Distributed,
        Protocol::Hybrid1,
        Protocol::Hybrid2,
        Protocol::Hybrid3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Centralized => "centralized",
            Protocol::Distributed => "distributed",
            Protocol::Hybrid1 => "hybrid1",
            Protocol::Hybrid2 => "hybrid2",
            Protocol::Hybrid3 => "hybrid3",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub scenario: Scenario,
    pub protocol: Protocol,
    pub ai: bool,
    /// Simulated seconds per run.
    pub horizon: f64,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scenario: Scenario::S3,
            protocol: Protocol::Centralized,
            ai: true,
            horizon: 1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    /// Transmitters.
    #[serde(rename = "K")]
    pub users: usize,
    /// Receivers.
    #[serde(rename = "M")]
    pub receivers: usize,
    pub num_ris: usize,
    pub elements: usize,
    pub num_subchannels: usize,
    pub d_tx_ris: f64,
    pub d_ris_rx: f64,
    pub d_tx_rx: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        let g = Geometry::default();
        Self {
            users: 10,
            receivers: 1,
            num_ris: 2,
            elements: 128,
            num_subchannels: 2,
            d_tx_ris: g.d_tx_ris,
            d_ris_rx: g.d_ris_rx,
            d_tx_rx: g.d_tx_rx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    /// Total bandwidth, split equally over the sub-channels.
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    /// Noise power per sub-channel.
    pub noise_dbm: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            tx_power_dbm: 10.0,
            noise_dbm: -94.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisSection {
    pub bits: u8,
    pub group_size: usize,
}

impl Default for RisSection {
    fn default() -> Self {
        Self {
            bits: 2,
            group_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacSection {
    pub pilot_slot: f64,
    pub data_slot: f64,
    /// Data slots per centralized frame; 0 sizes the frame so every user gets
    /// one slot (`ceil(K / num_subchannels)`).
    pub data_slots: usize,
    /// Share of the post-compute hybrid frame given to scheduled slots.
    pub scheduled_fraction: f64,
    /// Length of the contention-based request period of hybrid cases 2 and 3.
    pub request_period: f64,
    pub difs: f64,
    pub sifs: f64,
    pub backoff_slot: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub request_len: f64,
    pub feedback_len: f64,
    pub denial_doubles_cw: bool,
}

impl Default for MacSection {
    fn default() -> Self {
        let d = DcfParams::default();
        Self {
            pilot_slot: 0.1e-3,
            data_slot: 1e-3,
            data_slots: 0,
            scheduled_fraction: 0.7,
            request_period: 5e-3,
            difs: d.difs,
            sifs: d.sifs,
            backoff_slot: d.backoff_slot,
            cw_min: d.cw_min,
            cw_max: d.cw_max,
            request_len: d.request_len,
            feedback_len: d.feedback_len,
            denial_doubles_cw: d.denial_doubles_cw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    /// Idle-listening draw of a sensing station, watts.
    pub p_idle: f64,
    /// RIS-controller feedback draw, watts.
    pub p_feedback: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self {
            p_idle: 0.1,
            p_feedback: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSection {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Selections over which epsilon decays linearly.
    pub epsilon_steps: u64,
    /// Initial Q-values are drawn uniformly from `[0, initial_spread)`.
    pub initial_spread: f64,
}

impl Default for LearningSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.5,
            epsilon_start: 0.1,
            epsilon_end: 0.01,
            epsilon_steps: 200,
            initial_spread: 1e-3,
        }
    }
}

impl LearningSection {
    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            steps: self.epsilon_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub run: RunSection,
    pub topology: TopologySection,
    pub radio: RadioSection,
    pub channel: ChannelParams,
    pub ris: RisSection,
    pub mac: MacSection,
    pub cost: ComputeCostModel,
    pub energy: EnergySection,
    pub learning: LearningSection,
}

/// Keys accepted by [`ScenarioConfig::with_value`], besides any numeric
/// `section.key`.
pub const SWEEP_ALIASES: [&str; 4] = ["K", "M", "num_ris", "seed"];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        let reference = Self::default().to_table()?;
        check_keys(&table, &reference, "")?;
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if t.users == 0 {
            return fail("topology.K must be at least 1");
        }
        if t.receivers == 0 || t.num_ris == 0 || t.elements == 0 || t.num_subchannels == 0 {
            return fail("topology counts must be at least 1");
        }
        let s = self.run.scenario;
        if !s.multi_rx() && t.receivers != 1 {
            return fail("scenarios S1 and S3 have a single receiver (M = 1)");
        }
        if s.multi_rx() && t.receivers < 2 {
            return fail("scenarios S2 and S4 need M >= 2");
        }
        if !s.multi_ris() && t.num_ris != 1 {
            return fail("scenarios S1 and S2 have a single RIS (num_ris = 1)");
        }
        if s.multi_ris() && t.num_ris < 2 {
            return fail("scenarios S3 and S4 need num_ris >= 2");
        }
        if t.num_subchannels < t.num_ris {
            return fail("each RIS occupies its own sub-channel: num_subchannels >= num_ris");
        }
        for (name, d) in [
            ("d_tx_ris", t.d_tx_ris),
            ("d_ris_rx", t.d_ris_rx),
            ("d_tx_rx", t.d_tx_rx),
        ] {
            if !(d >= 1.0 && d.is_finite()) {
                return Err(Error::Config(format!(
                    "topology.{name} must be at least the 1 m reference distance"
                )));
            }
        }
        if !(self.run.horizon > 0.0 && self.run.horizon.is_finite()) {
            return fail("run.horizon must be positive");
        }
        if !(self.radio.bandwidth_hz > 0.0 && self.radio.bandwidth_hz.is_finite()) {
            return fail("radio.bandwidth_hz must be positive");
        }
        if !self.radio.tx_power_dbm.is_finite() || !self.radio.noise_dbm.is_finite() {
            return fail("radio powers must be finite");
        }
        if !(1..=8).contains(&self.ris.bits) {
            return fail("ris.bits must be in 1..=8");
        }
        if self.ris.group_size == 0 || !t.elements.is_multiple_of(self.ris.group_size) {
            return fail("ris.group_size must divide topology.elements");
        }
        let m = &self.mac;
        for (name, v) in [("pilot_slot", m.pilot_slot), ("request_period", m.request_period)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("mac.{name} must be positive")));
            }
        }
        if !(m.scheduled_fraction > 0.0 && m.scheduled_fraction < 1.0) {
            return fail("mac.scheduled_fraction must be in (0, 1)");
        }
        self.dcf().validate()?;
        self.cost.validate()?;
        let e = &self.energy;
        if !(e.p_idle >= 0.0 && e.p_idle.is_finite() && e.p_feedback >= 0.0 && e.p_feedback.is_finite()) {
            return fail("energy powers must be non-negative");
        }
        let l = &self.learning;
        if !(l.learning_rate > 0.0 && l.learning_rate <= 1.0) {
            return fail("learning.learning_rate must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&l.discount) {
            return fail("learning.discount must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&l.epsilon_start) || !(0.0..=1.0).contains(&l.epsilon_end) {
            return fail("learning epsilons must be in [0, 1]");
        }
        if !(l.initial_spread >= 0.0 && l.initial_spread.is_finite()) {
            return fail("learning.initial_spread must be non-negative");
        }
        let c = &self.channel;
        if !c.pl0_db.is_finite() || !(c.alpha_los > 0.0) || !(c.alpha_nlos > 0.0) || c.rician_k_db.is_nan() {
            return fail("invalid channel parameters");
        }
        if !(c.coherence > 0.0) {
            return fail("channel.coherence must be positive");
        }
        Ok(())
    }

    pub fn dcf(&self) -> DcfParams {
        let m = &self.mac;
        DcfParams {
            difs: m.difs,
            sifs: m.sifs,
            backoff_slot: m.backoff_slot,
            cw_min: m.cw_min,
            cw_max: m.cw_max,
            request_len: m.request_len,
            feedback_len: m.feedback_len,
            data_len: m.data_slot,
            denial_doubles_cw: m.denial_doubles_cw,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            d_tx_ris: self.topology.d_tx_ris,
            d_ris_rx: self.topology.d_ris_rx,
            d_tx_rx: self.topology.d_tx_rx,
        }
    }

    pub fn groups(&self) -> usize {
        self.topology.elements / self.ris.group_size
    }

    /// Data slots per centralized frame, resolving the automatic size.
    pub fn data_slots(&self) -> usize {
        match self.mac.data_slots {
            0 => self.topology.users.div_ceil(self.topology.num_subchannels),
            j => j,
        }
    }

    /// Copy with one numeric key replaced. `key` is `section.key` or one of
    /// [`SWEEP_ALIASES`]. Setting `num_ris` also sets one sub-channel per RIS
    /// and switches between the single- and multi-RIS scenario of the same
    /// receiver layout.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self> {
        let path = match key {
            "K" | "M" | "num_ris" => format!("topology.{key}"),
            "seed" => "run.seed".to_string(),
            other => other.to_string(),
        };
        let mut cfg = self.clone();
        if path == "topology.num_ris" {
            let n = as_count(key, value)?;
            cfg.topology.num_ris = n;
            cfg.topology.num_subchannels = n;
            cfg.run.scenario = cfg.run.scenario.with_multi_ris(n >= 2);
            cfg.validate()?;
            return Ok(cfg);
        }
        let (section, field) = path
            .split_once('.')
            .ok_or_else(|| Error::NotSweepable(key.to_string()))?;
        let mut table = cfg.to_table()?;
        let slot = table
            .get_mut(section)
            .and_then(|s| s.as_table_mut())
            .and_then(|s| s.get_mut(field))
            .ok_or_else(|| Error::NotSweepable(key.to_string()))?;
        *slot = match slot {
            toml::Value::Integer(_) => toml::Value::Integer(as_count(key, value)? as i64),
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(Error::NotSweepable(key.to_string())),
        };
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn as_count(key: &str, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value < 2f64.powi(53) {
        Ok(value as usize)
    } else {
        Err(Error::Config(format!(
            "{key} needs a non-negative integer, got {value}"
        )))
    }
}

fn check_keys(table: &toml::Table, reference: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in table {
        let name = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match reference.get(k) {
            None => return Err(Error::UnknownKey(name)),
            Some(toml::Value::Table(r)) => {
                let t = v
                    .as_table()
                    .ok_or_else(|| Error::Parse(format!("`{name}` must be a table")))?;
                check_keys(t, r, &name)?;
            }
            Some(_) => {}
        }
    }
    Ok(())
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml(&text)
}
