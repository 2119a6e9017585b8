mod common;

use std::collections::BTreeSet;

use approx::assert_relative_eq;
use num_complex::Complex64;
use rismac::channel::{ChannelRealization, FixedChannels};
use rismac::engine::run_subframe;
use rismac::kernel::Actor;
use rismac::mac::hybrid::{run_hybrid_frame, scheduled_slots, HybridCase};
use rismac::metrics::{EnergyClass, Period, TraceEvent, TraceRecord};
use rismac::{run, Protocol, ScenarioConfig};

/// Static channels with user gains increasing in the user index.
fn ramp_channels(cfg: &ScenarioConfig) -> FixedChannels {
    let n = cfg.topology.elements;
    let links = (0..cfg.topology.users)
        .map(|u| {
            let a = 1e-3 * (1.0 + 0.1 * u as f64);
            let r = ChannelRealization {
                h_direct: Complex64::new(1e-7, 0.0),
                h_tx_ris: vec![Complex64::new(a, 0.0); n],
                h_ris_rx: vec![Complex64::new(2e-4, 0.0); n],
            };
            vec![r; cfg.topology.num_ris]
        })
        .collect();
    FixedChannels { links }
}

fn bits_in(trace: &[TraceRecord], period: Period) -> f64 {
    trace
        .iter()
        .filter(|r| r.period == period)
        .map(|r| match r.event {
            TraceEvent::Data { bits, .. } => bits,
            _ => 0.0,
        })
        .sum()
}

fn users_with(trace: &[TraceRecord], period: Period, data_only: bool) -> BTreeSet<usize> {
    trace
        .iter()
        .filter(|r| r.period == period)
        .filter_map(|r| match r.event {
            TraceEvent::Data { user, .. } => Some(user),
            TraceEvent::Sensing { user, .. } if !data_only => Some(user),
            _ => None,
        })
        .collect()
}

fn case1_config(users: usize, slots: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.topology.users = users;
    cfg.mac.data_slots = slots;
    cfg
}

#[test]
fn case1_with_everyone_scheduled_has_silent_competing_period() {
    let cfg = case1_config(4, 10);
    let out = run_hybrid_frame(HybridCase::Case1, &cfg, ramp_channels(&cfg), true).unwrap();
    let trace = out.trace.unwrap();
    assert_eq!(bits_in(&trace, Period::Competing), 0.0);
    assert_eq!(users_with(&trace, Period::Scheduled, true).len(), 4);
    assert!(users_with(&trace, Period::Competing, false).is_empty());
}

#[test]
fn case1_overflow_users_contend() {
    for (users, slots) in [(20, 10), (30, 4), (9, 3)] {
        let cfg = case1_config(users, slots);
        let capacity = scheduled_slots(cfg.mac.scheduled_fraction, slots) * cfg.topology.num_subchannels;
        let out = run_hybrid_frame(HybridCase::Case1, &cfg, ramp_channels(&cfg), true).unwrap();
        let trace = out.trace.unwrap();
        let scheduled = users_with(&trace, Period::Scheduled, true);
        let contending = users_with(&trace, Period::Competing, false);
        assert_eq!(scheduled.len(), capacity);
        assert_eq!(contending.len(), users - capacity, "K={users} J={slots}");
        assert!(scheduled.is_disjoint(&contending));
    }
}

#[test]
fn case1_competing_period_only_adds_bits() {
    let cfg = case1_config(24, 10);
    let mut central = cfg.clone();
    central.mac.data_slots = scheduled_slots(cfg.mac.scheduled_fraction, 10);
    let hybrid = run_hybrid_frame(HybridCase::Case1, &cfg, ramp_channels(&cfg), true).unwrap();
    let base = run_subframe(&central, ramp_channels(&central), false).unwrap();
    let trace = hybrid.trace.unwrap();
    assert_relative_eq!(
        bits_in(&trace, Period::Scheduled),
        base.metrics.bits_delivered,
        max_relative = 1e-12
    );
    let extra = bits_in(&trace, Period::Competing);
    assert!(extra > 0.0, "no competing success with 10 contenders");
    assert!(hybrid.metrics.bits_delivered > base.metrics.bits_delivered);
}

#[test]
fn case1_users_use_one_period_per_frame() {
    for seed in 1..=5 {
        let mut cfg = ScenarioConfig::default();
        cfg.run.protocol = Protocol::Hybrid1;
        cfg.run.seed = seed;
        cfg.run.horizon = 0.3;
        cfg.topology.users = 40;
        let trace = run(&cfg, true).unwrap().trace.unwrap();
        assert_eq!(common::users_in_both_periods(&trace), 0, "seed {seed}");
    }
}

#[test]
fn case2_requests_go_to_the_base_station() {
    let mut cfg = ScenarioConfig::default();
    cfg.run.protocol = Protocol::Hybrid2;
    cfg.topology.users = 30;
    cfg.run.horizon = 0.1;
    let trace = run(&cfg, true).unwrap().trace.unwrap();
    let mut requests = 0;
    for r in &trace {
        match r.event {
            TraceEvent::Request { target, .. } => {
                requests += 1;
                assert_eq!(target, Actor::Bs);
            }
            TraceEvent::Feedback { .. } => assert_eq!(r.actor, Actor::Bs),
            TraceEvent::Data { .. } => assert_eq!(r.period, Period::Scheduled),
            _ => {}
        }
    }
    assert!(requests > 0);
}

#[test]
fn case3_reservations_never_collide() {
    for seed in 1..=20 {
        let mut cfg = ScenarioConfig::default();
        cfg.run.protocol = Protocol::Hybrid3;
        cfg.run.seed = seed;
        cfg.run.horizon = 0.1;
        cfg.topology.users = 30;
        let trace = run(&cfg, true).unwrap().trace.unwrap();
        let v = common::check_trace(&trace, cfg.mac.sifs);
        assert!(v.exclusivity.is_empty(), "seed {seed}: {v:?}");
        for r in &trace {
            if r.period == Period::Reserved {
                assert!(!matches!(r.event, TraceEvent::Collision { .. }), "seed {seed}");
            }
            if let TraceEvent::Request { target, ris, .. } = r.event {
                assert_eq!(target, Actor::RisController(ris.unwrap()));
            }
        }
        let granted = trace
            .iter()
            .filter(|r| matches!(r.event, TraceEvent::Feedback { granted: true, .. }))
            .count();
        let reserved = trace
            .iter()
            .filter(|r| r.period == Period::Reserved && matches!(r.event, TraceEvent::Data { .. }))
            .count();
        assert_eq!(granted, reserved, "seed {seed}");
    }
}

#[test]
fn energy_adds_up_over_periods() {
    for protocol in [Protocol::Hybrid1, Protocol::Hybrid2, Protocol::Hybrid3] {
        let mut cfg = ScenarioConfig::default();
        cfg.run.protocol = protocol;
        cfg.run.horizon = 0.2;
        cfg.topology.users = 40;
        let out = run(&cfg, true).unwrap();
        let trace = out.trace.unwrap();
        let m = &out.metrics;
        let periods = [
            Period::Pilot,
            Period::Compute,
            Period::Scheduled,
            Period::Competing,
            Period::Request,
            Period::Reserved,
            Period::Contention,
        ];
        let mut by_period = 0.0;
        for p in periods {
            let direct: f64 = trace
                .iter()
                .filter(|r| r.period == p)
                .filter_map(|r| r.event.energy().map(|e| e.1))
                .sum();
            assert_relative_eq!(m.energy_in(p), direct, max_relative = 1e-12);
            by_period += direct;
        }
        assert_relative_eq!(m.energy_j, by_period, max_relative = 1e-12);
        assert!(m.energy_of(EnergyClass::Compute) > 0.0);
    }
}
