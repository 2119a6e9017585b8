//! Configuration-computation cost model and the tabular Q-learning agent used
//! by contending users.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComputeMode {
    /// Iterative search over users, RISs and phase groups.
    NoneIterative,
    /// Inference of an offline-trained model at the BS.
    AiCentral,
    /// On-device RL step, billed once per access attempt.
    AiDistributed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComputeCostModel {
    /// Seconds per (user x RIS x group) for the iterative search.
    pub beta: f64,
    /// Fixed inference setup, seconds.
    pub t0: f64,
    /// Central inference seconds per user.
    pub gamma: f64,
    /// Seconds per distributed RL attempt.
    pub t_local: f64,
    /// Watts drawn by the BS while computing.
    pub p_compute_bs: f64,
    /// Watts drawn by a user device while computing.
    pub p_compute_user: f64,
    /// Scale the per-user AI terms (`gamma`, `t_local`) by the RIS count, as
    /// the iterative search already is.
    pub ris_scaling: bool,
}

impl Default for ComputeCostModel {
    fn default() -> Self {
        Self {
            beta: 500e-6,
            t0: 3e-3,
            gamma: 60e-6,
            t_local: 100e-6,
            p_compute_bs: 12.0,
            p_compute_user: 0.1,
            ris_scaling: true,
        }
    }
}

impl ComputeCostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("beta", self.beta),
            ("t0", self.t0),
            ("gamma", self.gamma),
            ("t_local", self.t_local),
            ("p_compute_bs", self.p_compute_bs),
            ("p_compute_user", self.p_compute_user),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("cost.{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

pub fn compute_time(model: &ComputeCostModel, mode: ComputeMode, users: usize, n_ris: usize, groups: usize) -> f64 {
    let per_ris = if model.ris_scaling { n_ris as f64 } else { 1.0 };
    match mode {
        ComputeMode::NoneIterative => model.beta * users as f64 * n_ris as f64 * groups as f64,
        ComputeMode::AiCentral => model.t0 + model.gamma * users as f64 * per_ris,
        ComputeMode::AiDistributed => model.t_local * per_ris,
    }
}

/// `-1` on collision, otherwise the sign of the rate change.
pub fn reward(prev_rate: f64, new_rate: f64, collided: bool) -> f64 {
    if collided {
        return -1.0;
    }
    if new_rate > prev_rate {
        1.0
    } else if new_rate < prev_rate {
        -1.0
    } else {
        0.0
    }
}

pub const RATE_BUCKETS: usize = 4;

/// Logarithmic bucket of a spectral efficiency in bit/s/Hz: `[0,1)`, `[1,2)`,
/// `[2,4)`, `[4,inf)`.
pub fn rate_bucket(rate_bps: f64, bandwidth_hz: f64) -> usize {
    let se = rate_bps / bandwidth_hz;
    if se < 1.0 {
        0
    } else if se < 2.0 {
        1
    } else if se < 4.0 {
        2
    } else {
        3
    }
}

/// Linear decay from `start` to `end` over `steps` selections, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if self.steps == 0 || step >= self.steps {
            return self.end;
        }
        let f = step as f64 / self.steps as f64;
        self.start + (self.end - self.start) * f
    }
}

/// Dense action-value table indexed by `state * actions + action`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
    pub learning_rate: f64,
    pub discount: f64,
}

impl QTable {
    pub fn new(states: usize, actions: usize, learning_rate: f64, discount: f64) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::Config("Q-table needs at least one state and action".into()));
        }
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::Config("learning rate must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Config("discount must lie in [0, 1)".into()));
        }
        Ok(Self {
            states,
            actions,
            values: vec![0.0; states * actions],
            learning_rate,
            discount,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    /// Fills every value uniformly from `[0, scale)`. A small scale breaks
    /// ties between otherwise identical agents without biasing learning.
    pub fn randomize(&mut self, scale: f64, rng: &mut RngStream) {
        for v in &mut self.values {
            *v = rng.random::<f64>() * scale;
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    /// Greedy action; ties resolve to the lowest action id.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `state,action,value` rows with a header.
    pub fn dump(&self) -> String {
        let mut out = String::from("state,action,value\n");
        for s in 0..self.states {
            for a in 0..self.actions {
                let _ = writeln!(out, "{s},{a},{}", self.get(s, a));
            }
        }
        out
    }

    /// Loads values written by [`QTable::dump`] into a table of matching shape.
    pub fn load(&mut self, text: &str) -> Result<()> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "state,action,value" => {}
            _ => return Err(Error::Parse("missing `state,action,value` header".into())),
        }
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("line {}: `{line}`", i + 2));
            if fields.len() != 3 {
                return Err(bad());
            }
            let s: usize = fields[0].parse().map_err(|_| bad())?;
            let a: usize = fields[1].parse().map_err(|_| bad())?;
            let v: f64 = fields[2].parse().map_err(|_| bad())?;
            if s >= self.states || a >= self.actions || !v.is_finite() {
                return Err(bad());
            }
            self.set(s, a, v);
        }
        Ok(())
    }
}

/// Epsilon-greedy selection: argmax with probability `1 - epsilon`, otherwise uniform.
pub fn select_action(q: &QTable, state: usize, epsilon: f64, rng: &mut RngStream) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..q.actions());
    }
    q.argmax(state)
}

/// One-step Q-learning update of `(s, a)`; every other cell is untouched.
pub fn update_q(q: &mut QTable, s: usize, a: usize, reward: f64, next: usize) {
    debug_assert!(reward.is_finite());
    let old = q.get(s, a);
    let target = reward + q.discount * q.max_value(next);
    q.set(s, a, old + q.learning_rate * (target - old));
}
