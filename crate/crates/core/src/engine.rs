//! Event-driven execution of one scenario run.
//!
//! Framed protocols (centralized and the hybrid cases) step period by period;
//! a frame only starts if its nominal length fits before the horizon, so
//! every credited frame is complete and the elapsed time ends on a frame
//! boundary. The distributed protocol contends freely until the horizon.

use crate::channel::{ChannelModel, ChannelSource};
use crate::error::Result;
use crate::kernel::{run_to_completion, Actor, EventQueue, Handler, RngStream, RngStreams};
use crate::mac::centralized::{build_schedule, plan, Schedule, UserRate};
use crate::mac::distributed::{
    BlockClock, ContentionCtx, ContentionDomain, DcfEvent, ExchangeKind, Grant, LearningParams, Scheduled,
};
use crate::mac::hybrid::{case1_plan, case2_plan, case3_plan, central_compute, local_compute, HybridCase};
use crate::mac::{FramePlan, LinkBudget, PeriodKind, PowerBook};
use crate::metrics::{Ledger, Period, RunMetrics, TraceEvent, TraceRecord};
use crate::scenario::{Protocol, ScenarioConfig};

const FIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    FrameStart,
    Period(usize),
    PeriodEnd(usize),
    FrameEnd,
    Dcf(DcfEvent),
    Stop,
}

struct Engine<C> {
    cfg: ScenarioConfig,
    channels: C,
    ledger: Ledger,
    backoff_rng: RngStream,
    rl_rng: RngStream,
    pick_rng: RngStream,
    link: LinkBudget,
    power: PowerBook,
    domain: Option<ContentionDomain>,
    horizon: f64,
    frame: u64,
    frame_start: f64,
    plan: FramePlan,
    schedule: Schedule,
    unscheduled: Vec<usize>,
    grants: Vec<Grant>,
}

fn period_of(kind: PeriodKind) -> Period {
    match kind {
        PeriodKind::Pilot => Period::Pilot,
        PeriodKind::Compute => Period::Compute,
        PeriodKind::Scheduled => Period::Scheduled,
        PeriodKind::Competing => Period::Competing,
        PeriodKind::Request => Period::Request,
        PeriodKind::Reserved => Period::Reserved,
    }
}

impl<C: ChannelSource> Engine<C> {
    fn new(cfg: &ScenarioConfig, channels: C, keep_trace: bool) -> Result<Self> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.run.seed);
        let t = &cfg.topology;
        let link = LinkBudget {
            num_ris: t.num_ris,
            subchannels: t.num_subchannels,
            sub_bandwidth: cfg.radio.bandwidth_hz / t.num_subchannels as f64,
            tx_power_dbm: cfg.radio.tx_power_dbm,
            noise_dbm: cfg.radio.noise_dbm,
            bits: cfg.ris.bits,
            group_size: cfg.ris.group_size,
        };
        let power = PowerBook {
            tx: link.tx_power_w(),
            idle_listen: cfg.energy.p_idle,
            feedback: cfg.energy.p_feedback,
            compute_bs: cfg.cost.p_compute_bs,
            compute_user: cfg.cost.p_compute_user,
        };
        let learning = LearningParams {
            learning_rate: cfg.learning.learning_rate,
            discount: cfg.learning.discount,
            epsilon: cfg.learning.epsilon(),
        };
        let contention = |kind, period, compute, reserved| {
            ContentionDomain::new(
                t.users,
                &link,
                cfg.dcf(),
                kind,
                period,
                cfg.run.ai,
                compute,
                learning.clone(),
                reserved,
            )
            .map(Some)
        };
        let mut domain = match cfg.run.protocol {
            Protocol::Centralized => None,
            Protocol::Distributed => contention(ExchangeKind::Data, Period::Contention, local_compute(cfg), 0)?,
            Protocol::Hybrid1 => contention(ExchangeKind::Data, Period::Competing, local_compute(cfg), 0)?,
            Protocol::Hybrid2 => contention(ExchangeKind::BsRequest, Period::Request, 0.0, 0)?,
            Protocol::Hybrid3 => contention(
                ExchangeKind::Reservation,
                Period::Request,
                local_compute(cfg),
                cfg.data_slots(),
            )?,
        };
        let mut rl_rng = streams.stream("rl");
        if let Some(d) = domain.as_mut() {
            d.seed_tables(cfg.learning.initial_spread, &mut rl_rng);
        }
        Ok(Self {
            cfg: cfg.clone(),
            channels,
            ledger: Ledger::new(t.users, keep_trace),
            backoff_rng: streams.stream("backoff"),
            rl_rng,
            pick_rng: streams.stream("scheduler"),
            link,
            power,
            domain,
            horizon: cfg.run.horizon,
            frame: 0,
            frame_start: 0.0,
            plan: FramePlan {
                periods: Vec::new(),
                pilot_slots: 0,
                data_slots: 0,
                subchannels: t.num_subchannels,
            },
            schedule: Schedule::empty(0, t.num_subchannels),
            unscheduled: Vec::new(),
            grants: Vec::new(),
        })
    }

    fn users(&self) -> usize {
        self.cfg.topology.users
    }

    fn nominal_plan(&self) -> FramePlan {
        let cfg = &self.cfg;
        let k = cfg.topology.users;
        match cfg.run.protocol {
            Protocol::Centralized => plan(
                k,
                cfg.mac.pilot_slot,
                central_compute(cfg, k),
                cfg.data_slots(),
                cfg.mac.data_slot,
                cfg.topology.num_subchannels,
            ),
            Protocol::Hybrid1 => case1_plan(cfg, central_compute(cfg, k)),
            Protocol::Hybrid2 => case2_plan(cfg, k),
            Protocol::Hybrid3 => case3_plan(cfg, cfg.data_slots()),
            Protocol::Distributed => unreachable!("distributed runs are not framed"),
        }
    }

    fn period_start(&self, idx: usize) -> f64 {
        self.frame_start + self.plan.periods[..idx].iter().map(|p| p.1).sum::<f64>()
    }

    fn ctx_parts(&mut self) -> (ContentionCtx<'_>, &mut ContentionDomain) {
        let block = match self.cfg.run.protocol {
            Protocol::Distributed => BlockClock::Coherence(self.cfg.channel.coherence),
            _ => BlockClock::Fixed(self.frame),
        };
        let ctx = ContentionCtx {
            ledger: &mut self.ledger,
            backoff_rng: &mut self.backoff_rng,
            rl_rng: &mut self.rl_rng,
            pick_rng: &mut self.pick_rng,
            channels: &mut self.channels,
            link: &self.link,
            power: self.power,
            block,
        };
        (ctx, self.domain.as_mut().expect("contention protocol has a domain"))
    }

    fn push(queue: &mut EventQueue<Ev>, events: Vec<Scheduled>) -> Result<()> {
        for (t, actor, ev) in events {
            queue.schedule(t, actor, Ev::Dcf(ev))?;
        }
        Ok(())
    }

    fn next_period(&self, idx: usize, now: f64, queue: &mut EventQueue<Ev>) -> Result<()> {
        if idx + 1 < self.plan.periods.len() {
            queue.schedule(now, Actor::Bs, Ev::Period(idx + 1))?;
        } else {
            queue.schedule(now, Actor::Bs, Ev::FrameEnd)?;
        }
        Ok(())
    }

    fn start_frame(&mut self, now: f64, queue: &mut EventQueue<Ev>) -> Result<()> {
        let plan = self.nominal_plan();
        if now + plan.duration() > self.horizon + FIT_EPS {
            return Ok(());
        }
        self.plan = plan;
        self.frame_start = now;
        self.schedule = Schedule::empty(0, self.link.subchannels);
        self.unscheduled.clear();
        self.grants.clear();
        queue.schedule(now, Actor::Bs, Ev::Period(0))?;
        Ok(())
    }

    fn pilots(&mut self, now: f64) {
        let slot = self.cfg.mac.pilot_slot;
        for user in 0..self.users() {
            let start = now + user as f64 * slot;
            self.ledger.record(
                now,
                Period::Pilot,
                Actor::Tx(user),
                TraceEvent::Pilot {
                    user,
                    start,
                    end: start + slot,
                    energy_j: self.power.tx * slot,
                },
            );
        }
    }

    fn central_schedule(&mut self, users: &[usize], slots: usize) -> Result<()> {
        let mut requests = Vec::with_capacity(users.len());
        for &user in users {
            let rate = self.link.aligned_rate(&mut self.channels, self.frame, user)?;
            requests.push(UserRate { user, rate });
        }
        self.schedule = build_schedule(&requests, slots, self.link.subchannels);
        let served = self.schedule.users();
        self.unscheduled = (0..self.users()).filter(|u| !served.contains(u)).collect();
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn data(
        &mut self,
        at: f64,
        period: Period,
        user: usize,
        sub: usize,
        start: f64,
        rotation: usize,
        first: bool,
    ) -> Result<()> {
        let slot = self.cfg.mac.data_slot;
        let rate = self.link.rate(&mut self.channels, self.frame, user, sub, rotation)?;
        self.ledger.record(
            at,
            period,
            Actor::Tx(user),
            TraceEvent::Data {
                user,
                subchannel: sub,
                ris: self.link.ris_of(sub),
                start,
                end: start + slot,
                rate_bps: rate,
                bits: rate * slot,
                energy_j: self.power.tx * slot,
            },
        );
        if first {
            let delay = start - self.frame_start;
            self.ledger
                .record(at, period, Actor::Tx(user), TraceEvent::AccessDelay { user, delay });
        }
        Ok(())
    }

    fn period(&mut self, idx: usize, now: f64, queue: &mut EventQueue<Ev>) -> Result<()> {
        let (kind, dur) = self.plan.periods[idx];
        let period = period_of(kind);
        match kind {
            PeriodKind::Pilot => self.pilots(now),
            PeriodKind::Compute => {
                if dur > 0.0 {
                    self.ledger.record(
                        now,
                        Period::Compute,
                        Actor::Bs,
                        TraceEvent::Compute {
                            start: now,
                            end: now + dur,
                            energy_j: self.power.compute_bs * dur,
                        },
                    );
                }
                let users: Vec<usize> = match self.cfg.run.protocol {
                    Protocol::Hybrid2 => self.grants.iter().map(|g| g.user).collect(),
                    _ => (0..self.users()).collect(),
                };
                let slots = self.plan.data_slots;
                self.central_schedule(&users, slots)?;
            }
            PeriodKind::Scheduled => {
                let slot = self.cfg.mac.data_slot;
                let mut seen = vec![false; self.users()];
                for j in 0..self.schedule.slots {
                    for s in 0..self.schedule.subchannels {
                        if let Some(u) = self.schedule.get(s, j) {
                            let first = !seen[u];
                            seen[u] = true;
                            self.data(now, period, u, s, now + j as f64 * slot, 0, first)?;
                        }
                    }
                }
            }
            PeriodKind::Reserved => {
                let slot = self.cfg.mac.data_slot;
                let grants = std::mem::take(&mut self.grants);
                for g in &grants {
                    self.data(
                        now,
                        period,
                        g.user,
                        g.subchannel,
                        now + g.slot as f64 * slot,
                        g.rotation,
                        true,
                    )?;
                }
                self.grants = grants;
            }
            PeriodKind::Competing | PeriodKind::Request => {
                let users: Vec<usize> = match kind {
                    PeriodKind::Competing => self.unscheduled.clone(),
                    _ => (0..self.users()).collect(),
                };
                let since = self.frame_start;
                let (mut ctx, domain) = self.ctx_parts();
                let events = domain.open(&mut ctx, now, now + dur, &users, since)?;
                Self::push(queue, events)?;
                queue.schedule(now + dur, Actor::Bs, Ev::PeriodEnd(idx))?;
                return Ok(());
            }
        }
        queue.schedule(now + dur, Actor::Bs, Ev::PeriodEnd(idx))?;
        Ok(())
    }
}

impl<C: ChannelSource> Handler for Engine<C> {
    type Kind = Ev;

    fn handle(&mut self, event: crate::kernel::Event<Ev>, queue: &mut EventQueue<Ev>) -> Result<()> {
        let now = event.time;
        match event.kind {
            Ev::FrameStart => self.start_frame(now, queue),
            Ev::Period(idx) => self.period(idx, now, queue),
            Ev::PeriodEnd(idx) => {
                let kind = self.plan.periods[idx].0;
                if matches!(kind, PeriodKind::Competing | PeriodKind::Request) {
                    let (mut ctx, domain) = self.ctx_parts();
                    domain.close(&mut ctx, now)?;
                    self.grants = domain.take_grants();
                    if self.cfg.run.protocol == Protocol::Hybrid2 {
                        let actual = case2_plan(&self.cfg, self.grants.len());
                        self.plan.periods[1].1 = actual.periods[1].1;
                        self.plan.periods[2].1 = actual.periods[2].1;
                        self.plan.data_slots = actual.data_slots;
                    }
                    if self.cfg.run.protocol == Protocol::Hybrid3 {
                        let used = self.grants.iter().map(|g| g.slot + 1).max().unwrap_or(0);
                        let actual = case3_plan(&self.cfg, used);
                        self.plan.periods[1].1 = actual.periods[1].1;
                        self.plan.data_slots = used;
                    }
                }
                debug_assert!((self.period_start(idx + 1) - now).abs() < 1e-6);
                self.next_period(idx, now, queue)
            }
            Ev::FrameEnd => {
                self.ledger.record(
                    now,
                    Period::Scheduled,
                    Actor::Bs,
                    TraceEvent::FrameEnd { frame: self.frame },
                );
                self.frame += 1;
                queue.schedule(now, Actor::Bs, Ev::FrameStart)?;
                Ok(())
            }
            Ev::Dcf(ev) => {
                let (mut ctx, domain) = self.ctx_parts();
                let events = domain.handle(&mut ctx, now, ev)?;
                Self::push(queue, events)
            }
            Ev::Stop => {
                let (mut ctx, domain) = self.ctx_parts();
                domain.close(&mut ctx, now)
            }
        }
    }
}

/// Runs `cfg` on the channel field drawn from its seed.
pub fn run(cfg: &ScenarioConfig, keep_trace: bool) -> Result<RunOutput> {
    let t = &cfg.topology;
    let channels = ChannelModel::new(
        cfg.channel.clone(),
        cfg.geometry(),
        t.elements,
        t.users,
        t.num_ris,
        t.receivers,
        RngStreams::new(cfg.run.seed),
    );
    run_with_channels(cfg, channels, keep_trace)
}

/// Runs `cfg` on caller-supplied channels.
pub fn run_with_channels<C: ChannelSource>(cfg: &ScenarioConfig, channels: C, keep_trace: bool) -> Result<RunOutput> {
    let mut engine = Engine::new(cfg, channels, keep_trace)?;
    let mut queue = EventQueue::new();
    let horizon = engine.horizon;
    if cfg.run.protocol == Protocol::Distributed {
        let users: Vec<usize> = (0..cfg.topology.users).collect();
        let (mut ctx, domain) = engine.ctx_parts();
        let events = domain.open(&mut ctx, 0.0, horizon, &users, 0.0)?;
        Engine::<C>::push(&mut queue, events)?;
        queue.schedule(horizon, Actor::Bs, Ev::Stop)?;
    } else {
        queue.schedule(0.0, Actor::Bs, Ev::FrameStart)?;
    }
    let clock = run_to_completion(&mut engine, &mut queue, horizon)?;
    let (metrics, trace) = engine.ledger.finish(clock);
    Ok(RunOutput { metrics, trace })
}

/// One centralized sub-frame on the given channels.
pub fn run_subframe<C: ChannelSource>(cfg: &ScenarioConfig, channels: C, keep_trace: bool) -> Result<RunOutput> {
    let mut one = cfg.clone();
    one.run.protocol = Protocol::Centralized;
    let k = one.topology.users;
    let plan = plan(
        k,
        one.mac.pilot_slot,
        central_compute(&one, k),
        one.data_slots(),
        one.mac.data_slot,
        one.topology.num_subchannels,
    );
    one.run.horizon = plan.duration();
    run_with_channels(&one, channels, keep_trace)
}

/// One frame of a hybrid case on the given channels.
pub fn run_hybrid_frame<C: ChannelSource>(
    case: HybridCase,
    cfg: &ScenarioConfig,
    channels: C,
    keep_trace: bool,
) -> Result<RunOutput> {
    let mut one = cfg.clone();
    one.run.protocol = match case {
        HybridCase::Case1 => Protocol::Hybrid1,
        HybridCase::Case2 => Protocol::Hybrid2,
        HybridCase::Case3 => Protocol::Hybrid3,
    };
    one.run.horizon = crate::mac::hybrid::compose_frame(case, &one)?.duration();
    run_with_channels(&one, channels, keep_trace)
}
