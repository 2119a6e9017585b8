#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rismac::kernel::{Actor, RngStreams};
use rismac::learning::{select_action, update_q, EpsilonSchedule, QTable};
use rismac::metrics::{Period, TraceEvent, TraceRecord};
use rismac::scenario::LearningSection;

/// Overlaps shorter than this are float rounding, not two transmissions.
const OVERLAP_EPS: f64 = 1e-12;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Violations {
    pub exclusivity: Vec<String>,
    pub handshake: Vec<String>,
    pub controller: Vec<String>,
}

impl Violations {
    pub fn total(&self) -> usize {
        self.exclusivity.len() + self.handshake.len() + self.controller.len()
    }
}

fn contention_data(period: Period) -> bool {
    matches!(period, Period::Contention | Period::Competing)
}

/// Checks medium exclusivity, handshake ordering and RIS-controller silence
/// on one trace.
pub fn check_trace(records: &[TraceRecord], sifs: f64) -> Violations {
    let mut v = Violations::default();

    let mut data: HashMap<usize, Vec<(f64, f64, usize)>> = HashMap::new();
    for r in records {
        if let TraceEvent::Data {
            user,
            subchannel,
            start,
            end,
            ..
        } = r.event
        {
            data.entry(subchannel).or_default().push((start, end, user));
        }
    }
    for (sub, mut list) in data {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in list.windows(2) {
            if w[1].0 < w[0].1 - OVERLAP_EPS {
                v.exclusivity.push(format!(
                    "sub {sub}: user {} [{}, {}] overlaps user {} [{}, {}]",
                    w[0].2, w[0].0, w[0].1, w[1].2, w[1].0, w[1].1
                ));
            }
        }
    }

    // (user, sub) -> (ris, start, end)
    let mut requests: HashMap<(usize, usize), Vec<(Option<usize>, f64, f64)>> = HashMap::new();
    // (user, sub) -> (ris, start, end, granted, sender)
    let mut feedback: HashMap<(usize, usize), Vec<(Option<usize>, f64, f64, bool, Actor)>> = HashMap::new();
    for r in records {
        match r.event {
            TraceEvent::Request {
                user,
                subchannel,
                ris,
                start,
                end,
                ..
            } => requests.entry((user, subchannel)).or_default().push((ris, start, end)),
            TraceEvent::Feedback {
                user,
                subchannel,
                ris,
                granted,
                start,
                end,
                ..
            } => feedback
                .entry((user, subchannel))
                .or_default()
                .push((ris, start, end, granted, r.actor)),
            _ => {}
        }
        if matches!(r.actor, Actor::RisController(_)) && !matches!(r.event, TraceEvent::Feedback { .. }) {
            v.controller
                .push(format!("controller record at {}: {:?}", r.at, r.event));
        }
    }

    for (key, fbs) in &feedback {
        for &(ris, start, _, _, sender) in fbs {
            let preceded = requests
                .get(key)
                .is_some_and(|rs| rs.iter().any(|&(rr, _, end)| rr == ris && end + sifs == start));
            if !preceded {
                v.handshake
                    .push(format!("feedback to {key:?} at {start} has no request SIFS before it"));
            }
            if let Some(r) = ris {
                if sender != Actor::RisController(r) && sender != Actor::Bs {
                    v.handshake.push(format!("feedback for RIS {r} sent by {sender:?}"));
                }
            }
        }
    }

    for r in records {
        let TraceEvent::Data {
            user,
            subchannel,
            ris,
            start,
            ..
        } = r.event
        else {
            continue;
        };
        if !contention_data(r.period) {
            continue;
        }
        let fb = feedback.get(&(user, subchannel)).and_then(|fbs| {
            fbs.iter()
                .find(|&&(fr, _, end, granted, _)| granted && fr == ris && end + sifs == start)
        });
        if fb.is_none() {
            v.handshake.push(format!(
                "data of user {user} on sub {subchannel} at {start} lacks a granted feedback SIFS before it"
            ));
        }
    }
    v
}

/// Starts of data transmissions per user, split into scheduled and
/// competing, per frame (frames delimited by `FrameEnd` records).
pub fn users_in_both_periods(records: &[TraceRecord]) -> usize {
    let mut ends: Vec<f64> = records
        .iter()
        .filter(|r| matches!(r.event, TraceEvent::FrameEnd { .. }))
        .map(|r| r.at)
        .collect();
    ends.push(f64::INFINITY);
    let frame_of = |t: f64| ends.iter().position(|&e| t < e).unwrap_or(ends.len());
    let mut seen: HashMap<(usize, usize), (bool, bool)> = HashMap::new();
    for r in records {
        if let TraceEvent::Data { user, start, .. } = r.event {
            let e = seen.entry((frame_of(start), user)).or_default();
            match r.period {
                Period::Scheduled => e.0 = true,
                Period::Competing => e.1 = true,
                _ => {}
            }
        }
    }
    seen.values().filter(|(a, b)| *a && *b).count()
}

/// Two-armed stationary Bernoulli bandit played by the tabular agent with
/// the shipped learning rate and discount. Arm 1 pays 1 with probability
/// 0.75, arm 0 with probability 0.25, else 0. Returns how often arm 1 was
/// chosen over the last 1000 of 10 000 steps.
pub fn bandit_best_arm_share(seed: u64) -> f64 {
    const STEPS: u64 = 10_000;
    const TAIL: u64 = 1_000;
    let streams = RngStreams::new(seed);
    let mut agent = streams.stream("rl");
    let mut env = streams.stream("env");
    let defaults = LearningSection::default();
    let mut q = QTable::new(1, 2, defaults.learning_rate, defaults.discount).expect("valid table");
    let eps = EpsilonSchedule {
        start: 0.1,
        end: 0.01,
        steps: STEPS,
    };
    let p_win = [0.25, 0.75];
    let mut best = 0u64;
    for step in 0..STEPS {
        let a = select_action(&q, 0, eps.at(step), &mut agent);
        let reward = if env.random::<f64>() < p_win[a] { 1.0 } else { 0.0 };
        update_q(&mut q, 0, a, reward, 0);
        if step >= STEPS - TAIL && a == 1 {
            best += 1;
        }
    }
    best as f64 / TAIL as f64
}
