//! Throughput, energy, fairness and delay accounting.
//!
//! Engines never touch [`RunMetrics`] directly: every airtime, computation or
//! outcome is emitted as a [`TraceRecord`] through a [`Ledger`], which folds
//! it into the metrics and optionally keeps it. Replaying a persisted trace
//! through [`RunMetrics::apply`] in order reproduces the live metrics exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kernel::Actor;

/// Frame period a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Pilot,
    Compute,
    Scheduled,
    Competing,
    Request,
    Reserved,
    /// Free-running contention of the pure distributed protocol.
    Contention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyClass {
    Transmit,
    Compute,
    Sensing,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    Pilot {
        user: usize,
        start: f64,
        end: f64,
        energy_j: f64,
    },
    Compute {
        start: f64,
        end: f64,
        energy_j: f64,
    },
    Request {
        user: usize,
        subchannel: usize,
        ris: Option<usize>,
        target: Actor,
        start: f64,
        end: f64,
        energy_j: f64,
    },
    Feedback {
        user: usize,
        subchannel: usize,
        ris: Option<usize>,
        granted: bool,
        start: f64,
        end: f64,
        energy_j: f64,
    },
    Data {
        user: usize,
        subchannel: usize,
        ris: Option<usize>,
        start: f64,
        end: f64,
        rate_bps: f64,
        bits: f64,
        energy_j: f64,
    },
    /// Idle listening before an access attempt.
    Sensing {
        user: usize,
        subchannel: usize,
        start: f64,
        end: f64,
        energy_j: f64,
    },
    Collision {
        subchannel: usize,
        users: Vec<usize>,
    },
    /// A request that lost to an earlier one on the same sub-channel.
    Deferral {
        subchannel: usize,
        user: usize,
    },
    AccessDelay {
        user: usize,
        delay: f64,
    },
    FrameEnd {
        frame: u64,
    },
    Elapsed {
        clock: f64,
    },
}

impl TraceEvent {
    pub fn energy(&self) -> Option<(EnergyClass, f64)> {
        match *self {
            TraceEvent::Pilot { energy_j, .. }
            | TraceEvent::Request { energy_j, .. }
            | TraceEvent::Data { energy_j, .. } => Some((EnergyClass::Transmit, energy_j)),
            TraceEvent::Compute { energy_j, .. } => Some((EnergyClass::Compute, energy_j)),
            TraceEvent::Sensing { energy_j, .. } => Some((EnergyClass::Sensing, energy_j)),
            TraceEvent::Feedback { energy_j, .. } => Some((EnergyClass::Feedback, energy_j)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Simulated time at which the record was credited.
    pub at: f64,
    pub period: Period,
    pub actor: Actor,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub bits_delivered: f64,
    pub bits_per_user: Vec<f64>,
    pub energy_j: f64,
    pub energy_by_class: BTreeMap<EnergyClass, f64>,
    pub energy_by_period: BTreeMap<Period, f64>,
    /// Requests lost to simultaneous starts, counted per station.
    pub collisions: u64,
    pub deferrals: u64,
    pub requests: u64,
    pub frames_completed: u64,
    pub elapsed: f64,
    pub access_delays: Vec<f64>,
}

impl RunMetrics {
    pub fn new(users: usize) -> Self {
        Self {
            bits_delivered: 0.0,
            bits_per_user: vec![0.0; users],
            energy_j: 0.0,
            energy_by_class: BTreeMap::new(),
            energy_by_period: BTreeMap::new(),
            collisions: 0,
            deferrals: 0,
            requests: 0,
            frames_completed: 0,
            elapsed: 0.0,
            access_delays: Vec::new(),
        }
    }

    pub fn apply(&mut self, rec: &TraceRecord) {
        if let Some((class, e)) = rec.event.energy() {
            self.energy_j += e;
            *self.energy_by_class.entry(class).or_insert(0.0) += e;
            *self.energy_by_period.entry(rec.period).or_insert(0.0) += e;
        }
        match &rec.event {
            TraceEvent::Data { user, bits, .. } => {
                self.bits_delivered += bits;
                if let Some(b) = self.bits_per_user.get_mut(*user) {
                    *b += bits;
                }
            }
            TraceEvent::Request { .. } => self.requests += 1,
            TraceEvent::Collision { users, .. } => self.collisions += users.len() as u64,
            TraceEvent::Deferral { .. } => self.deferrals += 1,
            TraceEvent::AccessDelay { delay, .. } => self.access_delays.push(*delay),
            TraceEvent::FrameEnd { .. } => self.frames_completed += 1,
            TraceEvent::Elapsed { clock } => self.elapsed = *clock,
            _ => {}
        }
    }

    pub fn replay<'a>(users: usize, records: impl IntoIterator<Item = &'a TraceRecord>) -> Self {
        let mut m = Self::new(users);
        for r in records {
            m.apply(r);
        }
        m
    }

    /// Delivered bits per elapsed second; 0 for an empty run.
    pub fn throughput_bps(&self) -> f64 {
        if self.elapsed > 0.0 {
            self.bits_delivered / self.elapsed
        } else {
            0.0
        }
    }

    /// Delivered bits per joule; 0 when nothing was spent.
    pub fn energy_efficiency(&self) -> f64 {
        if self.energy_j > 0.0 {
            self.bits_delivered / self.energy_j
        } else {
            0.0
        }
    }

    /// Jain index over per-user bits; 1 when every user got the same (including nothing).
    pub fn jain_index(&self) -> f64 {
        jain_index(&self.bits_per_user)
    }

    pub fn mean_delay(&self) -> f64 {
        if self.access_delays.is_empty() {
            0.0
        } else {
            self.access_delays.iter().sum::<f64>() / self.access_delays.len() as f64
        }
    }

    /// Collided requests over all requests.
    pub fn collision_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.collisions as f64 / self.requests as f64
        }
    }

    pub fn energy_of(&self, class: EnergyClass) -> f64 {
        self.energy_by_class.get(&class).copied().unwrap_or(0.0)
    }

    pub fn energy_in(&self, period: Period) -> f64 {
        self.energy_by_period.get(&period).copied().unwrap_or(0.0)
    }
}

pub fn jain_index(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if x.is_empty() || sq == 0.0 {
        return 1.0;
    }
    (sum * sum) / (x.len() as f64 * sq)
}

/// Live accumulator; keeps the trace only when asked to.
#[derive(Debug, Clone)]
pub struct Ledger {
    metrics: RunMetrics,
    trace: Option<Vec<TraceRecord>>,
}

impl Ledger {
    pub fn new(users: usize, keep_trace: bool) -> Self {
        Self {
            metrics: RunMetrics::new(users),
            trace: keep_trace.then(Vec::new),
        }
    }

    pub fn record(&mut self, at: f64, period: Period, actor: Actor, event: TraceEvent) {
        let rec = TraceRecord {
            at,
            period,
            actor,
            event,
        };
        self.metrics.apply(&rec);
        if let Some(t) = self.trace.as_mut() {
            t.push(rec);
        }
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn finish(mut self, clock: f64) -> (RunMetrics, Option<Vec<TraceRecord>>) {
        self.record(clock, Period::Contention, Actor::Bs, TraceEvent::Elapsed { clock });
        (self.metrics, self.trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn throughput_examples() {
        let mut m = RunMetrics::new(1);
        assert_eq!(m.throughput_bps(), 0.0);
        m.elapsed = 1.0;
        assert_eq!(m.throughput_bps(), 0.0);
        m.bits_delivered = 1e7;
        assert_eq!(m.throughput_bps(), 1e7);
    }

    #[test]
    fn ee_examples() {
        assert_eq!(RunMetrics::new(1).energy_efficiency(), 0.0);
        // 10 dBm = 10 mW for 1 s carrying 1e6 bits -> 1e6 / 0.01
        let mut l = Ledger::new(1, false);
        l.record(
            1.0,
            Period::Scheduled,
            Actor::Tx(0),
            TraceEvent::Data {
                user: 0,
                subchannel: 0,
                ris: Some(0),
                start: 0.0,
                end: 1.0,
                rate_bps: 1e6,
                bits: 1e6,
                energy_j: 0.01,
            },
        );
        assert_relative_eq!(l.metrics().energy_efficiency(), 1e8, max_relative = 1e-12);
    }

    #[test]
    fn jain_bounds() {
        assert_eq!(jain_index(&[3.0, 3.0, 3.0]), 1.0);
        assert_eq!(jain_index(&[0.0, 0.0]), 1.0);
        assert_relative_eq!(jain_index(&[1.0, 0.0, 0.0, 0.0]), 0.25);
    }

    #[test]
    fn replay_matches_live() {
        let mut l = Ledger::new(2, true);
        l.record(
            0.1,
            Period::Pilot,
            Actor::Tx(1),
            TraceEvent::Pilot {
                user: 1,
                start: 0.0,
                end: 0.1,
                energy_j: 1e-3,
            },
        );
        l.record(
            0.2,
            Period::Compute,
            Actor::Bs,
            TraceEvent::Compute {
                start: 0.1,
                end: 0.2,
                energy_j: 0.5,
            },
        );
        l.record(
            0.2,
            Period::Contention,
            Actor::Medium(0),
            TraceEvent::Collision {
                subchannel: 0,
                users: vec![0, 1],
            },
        );
        let (m, trace) = l.finish(0.2);
        let trace = trace.unwrap();
        assert_eq!(RunMetrics::replay(2, &trace), m);
        assert_eq!(m.collisions, 2);
        assert_eq!(m.elapsed, 0.2);
    }

    proptest! {
        #[test]
        fn jain_in_unit_interval(x in proptest::collection::vec(0.0f64..1e9, 1..40)) {
            let j = jain_index(&x);
            prop_assert!(j > 0.0 && j <= 1.0 + 1e-12);
        }
    }
}
