//! Distributed MAC: per-sub-channel DCF contention followed by a request /
//! feedback handshake with the RIS-controller and a data transmission.
//!
//! A station picks a sub-channel, senses it for DIFS and counts backoff slots
//! while the medium is idle. Once its backoff expires it computes the RIS
//! configuration (RL step or iterative search) and then sends its request.
//! The medium stays idle during that computation, so a station whose
//! computation is overtaken by another request abandons the attempt and
//! draws a new backoff. Every station whose request would start within one
//! backoff slot of the earliest one transmits too, since it cannot have
//! sensed it yet. The controller grants the unique earliest request; equal
//! earliest starts are a classic collision. Failed stations double their
//! contention window up to `cw_max`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LinkBudget, PowerBook};
use crate::channel::ChannelSource;
use crate::error::{Error, Result};
use crate::kernel::{Actor, RngStream};
use crate::learning::{rate_bucket, reward, select_action, update_q, EpsilonSchedule, QTable, RATE_BUCKETS};
use crate::metrics::{Ledger, Period, TraceEvent};

const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub difs: f64,
    pub sifs: f64,
    pub backoff_slot: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub request_len: f64,
    pub feedback_len: f64,
    pub data_len: f64,
    /// Whether a denied RIS request doubles the contention window.
    pub denial_doubles_cw: bool,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            difs: 50e-6,
            sifs: 10e-6,
            backoff_slot: 20e-6,
            cw_min: 16,
            cw_max: 1024,
            request_len: 0.2e-3,
            feedback_len: 0.1e-3,
            data_len: 1e-3,
            denial_doubles_cw: true,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("difs", self.difs),
            ("sifs", self.sifs),
            ("backoff_slot", self.backoff_slot),
            ("request_len", self.request_len),
            ("feedback_len", self.feedback_len),
            ("data_slot", self.data_len),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("mac.{name} must be positive")));
            }
        }
        if self.sifs >= self.difs {
            return Err(Error::Config("mac.sifs must be shorter than mac.difs".into()));
        }
        if self.cw_min < 1 || self.cw_min > self.cw_max {
            return Err(Error::Config("need 1 <= cw_min <= cw_max".into()));
        }
        Ok(())
    }

    pub fn double_cw(&self, cw: u32) -> u32 {
        cw.saturating_mul(2).min(self.cw_max)
    }
}

/// Uniform backoff in `[0, cw - 1]`.
pub fn draw_backoff(cw: u32, rng: &mut RngStream) -> u32 {
    assert!(cw >= 1, "contention window must be positive");
    rng.random_range(0..cw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationPhase {
    Idle,
    Sensing,
    Backoff,
    Requesting,
    AwaitingFeedback,
    Transmitting,
}

/// Timeline of one uncontended access, starting when sensing begins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessOutcome {
    pub success: bool,
    pub request_start: f64,
    pub feedback_start: f64,
    pub data_start: f64,
    pub end: f64,
}

impl AccessOutcome {
    pub fn airtime(&self, started: f64) -> f64 {
        self.end - started
    }
}

/// Access of a lone station that starts sensing at `start` on an idle
/// sub-channel with `backoff` slots to count, granted or denied by the
/// RIS-controller.
pub fn attempt_access(params: &DcfParams, start: f64, backoff: u32, ris_available: bool) -> AccessOutcome {
    let request_start = start + params.difs + backoff as f64 * params.backoff_slot;
    let feedback_start = request_start + params.request_len + params.sifs;
    let feedback_end = feedback_start + params.feedback_len;
    let data_start = feedback_end + params.sifs;
    AccessOutcome {
        success: ris_available,
        request_start,
        feedback_start,
        data_start,
        end: if ris_available {
            data_start + params.data_len
        } else {
            feedback_end
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Resolution {
    pub winner: Option<usize>,
    pub collided: Vec<usize>,
    pub deferred: Vec<usize>,
}

/// Resolves one sub-channel's group of request starts. A unique earliest
/// start wins and the rest defer; tied earliest starts all collide, and the
/// later members of the group fail with them.
pub fn resolve_collisions(attempts: &[(usize, f64)]) -> Resolution {
    let Some(first) = attempts.iter().map(|a| a.1).min_by(f64::total_cmp) else {
        return Resolution::default();
    };
    let tied: Vec<usize> = attempts
        .iter()
        .filter(|a| a.1 - first <= TIME_EPS)
        .map(|a| a.0)
        .collect();
    let rest: Vec<usize> = attempts
        .iter()
        .filter(|a| a.1 - first > TIME_EPS)
        .map(|a| a.0)
        .collect();
    if tied.len() == 1 {
        Resolution {
            winner: Some(tied[0]),
            collided: Vec::new(),
            deferred: rest,
        }
    } else {
        Resolution {
            winner: None,
            collided: tied,
            deferred: rest,
        }
    }
}

/// What a granted exchange carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExchangeKind {
    /// Request to the RIS-controller, feedback, then data.
    Data,
    /// Request to the BS, acknowledged for a later scheduled period.
    BsRequest,
    /// Request to the RIS-controller for a slot in a later reserved period.
    Reservation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockClock {
    /// Framed protocols: one fading block per frame.
    Fixed(u64),
    /// Free-running contention: a new block every `coherence` seconds.
    Coherence(f64),
}

impl BlockClock {
    pub fn at(&self, t: f64) -> u64 {
        match *self {
            BlockClock::Fixed(b) => b,
            BlockClock::Coherence(c) => (t / c).floor() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcfEvent {
    Expiry { subchannel: usize, epoch: u64 },
    BusyEnd { subchannel: usize },
}

pub type Scheduled = (f64, Actor, DcfEvent);

/// Mutable run context lent to the contention domain by the engine.
pub struct ContentionCtx<'a> {
    pub ledger: &'a mut Ledger,
    pub backoff_rng: &'a mut RngStream,
    pub rl_rng: &'a mut RngStream,
    pub pick_rng: &'a mut RngStream,
    pub channels: &'a mut dyn ChannelSource,
    pub link: &'a LinkBudget,
    pub power: PowerBook,
    pub block: BlockClock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningParams {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: EpsilonSchedule,
}

#[derive(Debug, Clone)]
pub struct StationState {
    pub user: usize,
    pub cw: u32,
    pub backoff_remaining: u32,
    pub phase: StationPhase,
    pub chosen: Option<(usize, Option<usize>)>,
    ready_at: f64,
    has_backoff: bool,
    packet_since: f64,
    action: usize,
    rl_state: usize,
    last_rate: f64,
    selections: u64,
    active: bool,
    q: Option<QTable>,
}

impl StationState {
    pub fn q_table(&self) -> Option<&QTable> {
        self.q.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AttemptResult {
    Delivered { rate: f64, data_start: f64 },
    Granted,
    Denied,
    Collided,
    Deferred,
}

#[derive(Debug, Clone)]
struct Pending {
    records: Vec<(Period, Actor, TraceEvent)>,
    outcomes: Vec<(usize, AttemptResult)>,
}

#[derive(Debug, Clone, Default)]
struct SubState {
    contenders: Vec<usize>,
    busy_until: f64,
    epoch: u64,
    dormant: bool,
    pending: Option<Pending>,
}

/// A station granted by a BS or reservation request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub user: usize,
    pub subchannel: usize,
    pub rotation: usize,
    pub slot: usize,
}

/// DCF contention of a set of stations over all sub-channels, usable either
/// free-running or inside a bounded period of a hybrid frame.
#[derive(Debug, Clone)]
pub struct ContentionDomain {
    params: DcfParams,
    kind: ExchangeKind,
    period: Period,
    ai: bool,
    attempt_compute: f64,
    codebook: usize,
    subs: Vec<SubState>,
    stations: Vec<StationState>,
    learning: LearningParams,
    window_end: f64,
    open: bool,
    reserved_slots: usize,
    reserved_used: Vec<usize>,
    ris_busy_until: Vec<f64>,
    grants: Vec<Grant>,
}

impl ContentionDomain {
    /// `attempt_compute` is the per-attempt configuration time (zero when the
    /// BS computes instead). `reserved_slots` bounds grants per sub-channel
    /// for [`ExchangeKind::Reservation`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        users: usize,
        link: &LinkBudget,
        params: DcfParams,
        kind: ExchangeKind,
        period: Period,
        ai: bool,
        attempt_compute: f64,
        learning: LearningParams,
        reserved_slots: usize,
    ) -> Result<Self> {
        params.validate()?;
        let codebook = 1usize << link.bits;
        let actions = link.subchannels * codebook;
        let states = RATE_BUCKETS * (link.subchannels + 1);
        let stations = (0..users)
            .map(|user| {
                Ok(StationState {
                    user,
                    cw: params.cw_min,
                    backoff_remaining: 0,
                    phase: StationPhase::Idle,
                    chosen: None,
                    ready_at: 0.0,
                    has_backoff: false,
                    packet_since: 0.0,
                    action: 0,
                    rl_state: link.subchannels,
                    last_rate: 0.0,
                    selections: 0,
                    active: false,
                    q: if ai {
                        Some(QTable::new(states, actions, learning.learning_rate, learning.discount)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            kind,
            period,
            ai,
            attempt_compute,
            codebook,
            subs: vec![SubState::default(); link.subchannels],
            stations,
            learning,
            window_end: f64::INFINITY,
            open: false,
            reserved_slots,
            reserved_used: vec![0; link.subchannels],
            ris_busy_until: vec![f64::NEG_INFINITY; link.num_ris],
            grants: Vec::new(),
        })
    }

    /// Randomizes the initial Q-values of every learning station.
    pub fn seed_tables(&mut self, scale: f64, rng: &mut RngStream) {
        for st in &mut self.stations {
            if let Some(q) = st.q.as_mut() {
                q.randomize(scale, rng);
            }
        }
    }

    pub fn stations(&self) -> &[StationState] {
        &self.stations
    }

    pub fn params(&self) -> &DcfParams {
        &self.params
    }

    pub fn take_grants(&mut self) -> Vec<Grant> {
        std::mem::take(&mut self.grants)
    }

    fn exchange_len(&self) -> f64 {
        let p = &self.params;
        let handshake = p.request_len + p.sifs + p.feedback_len;
        match self.kind {
            ExchangeKind::Data => handshake + p.sifs + p.data_len,
            ExchangeKind::BsRequest | ExchangeKind::Reservation => handshake,
        }
    }

    fn expiry(&self, user: usize) -> f64 {
        let st = &self.stations[user];
        st.ready_at + self.params.difs + st.backoff_remaining as f64 * self.params.backoff_slot
    }

    /// Backoff expiry plus the configuration computation that follows it.
    fn request_time(&self, user: usize) -> f64 {
        self.expiry(user) + self.attempt_compute
    }

    fn rl_state(&self, bucket: usize, sub: usize) -> usize {
        bucket * (self.subs.len() + 1) + sub
    }

    /// Starts a contention period over `[start, end)` for `users`, whose
    /// pending packets date from `packet_since`.
    pub fn open(
        &mut self,
        ctx: &mut ContentionCtx<'_>,
        start: f64,
        end: f64,
        users: &[usize],
        packet_since: f64,
    ) -> Result<Vec<Scheduled>> {
        self.open = true;
        self.window_end = end;
        self.reserved_used.iter_mut().for_each(|u| *u = 0);
        for sub in &mut self.subs {
            sub.dormant = false;
            sub.busy_until = start;
        }
        for &u in users {
            let st = &mut self.stations[u];
            st.active = true;
            st.packet_since = packet_since;
            self.select_and_join(ctx, u, start)?;
        }
        Ok((0..self.subs.len()).filter_map(|s| self.next_expiry(s)).collect())
    }

    /// Ends the current period: flushes a pending exchange, bills idle
    /// listening up to `now` and removes every contender.
    pub fn close(&mut self, ctx: &mut ContentionCtx<'_>, now: f64) -> Result<()> {
        self.open = false;
        for s in 0..self.subs.len() {
            if self.subs[s].pending.is_some() {
                self.finish_exchange(ctx, s, now)?;
            }
            let contenders = std::mem::take(&mut self.subs[s].contenders);
            for u in contenders {
                let ready = self.stations[u].ready_at;
                let e = self.expiry(u).min(now);
                if e > ready {
                    self.bill_sensing(ctx, u, s, ready, e, now);
                }
                let c = e.max(ready);
                self.bill_compute(ctx, u, c, (c + self.attempt_compute).min(now), now);
                self.stations[u].ready_at = now;
            }
            self.subs[s].epoch += 1;
        }
        for st in &mut self.stations {
            st.active = false;
            st.phase = StationPhase::Idle;
        }
        Ok(())
    }

    pub fn handle(&mut self, ctx: &mut ContentionCtx<'_>, now: f64, ev: DcfEvent) -> Result<Vec<Scheduled>> {
        match ev {
            DcfEvent::Expiry { subchannel, epoch } => {
                if epoch != self.subs[subchannel].epoch || !self.open {
                    return Ok(Vec::new());
                }
                self.contend(ctx, now, subchannel)
            }
            DcfEvent::BusyEnd { subchannel } => {
                if self.subs[subchannel].pending.is_none() {
                    return Ok(Vec::new());
                }
                let touched = self.finish_exchange(ctx, subchannel, now)?;
                let mut out = Vec::new();
                for s in touched {
                    out.extend(self.next_expiry(s));
                }
                Ok(out)
            }
        }
    }

    fn next_expiry(&mut self, s: usize) -> Option<Scheduled> {
        let sub = &self.subs[s];
        if !self.open || sub.dormant || sub.pending.is_some() || sub.contenders.is_empty() {
            return None;
        }
        let e = sub
            .contenders
            .iter()
            .map(|&u| self.request_time(u))
            .fold(f64::INFINITY, f64::min);
        let sub = &mut self.subs[s];
        sub.epoch += 1;
        Some((
            e,
            Actor::Medium(s),
            DcfEvent::Expiry {
                subchannel: s,
                epoch: sub.epoch,
            },
        ))
    }

    fn bill_compute(&self, ctx: &mut ContentionCtx<'_>, user: usize, start: f64, end: f64, at: f64) {
        if end > start {
            ctx.ledger.record(
                at,
                self.period,
                Actor::Tx(user),
                TraceEvent::Compute {
                    start,
                    end,
                    energy_j: ctx.power.compute_user * (end - start),
                },
            );
        }
    }

    fn bill_sensing(&self, ctx: &mut ContentionCtx<'_>, user: usize, sub: usize, start: f64, end: f64, at: f64) {
        ctx.ledger.record(
            at,
            self.period,
            Actor::Tx(user),
            TraceEvent::Sensing {
                user,
                subchannel: sub,
                start,
                end,
                energy_j: ctx.power.idle_listen * (end - start),
            },
        );
    }

    /// Chooses the next (sub-channel, rotation) action, computes the RIS
    /// configuration and joins that sub-channel's contention. Returns the
    /// sub-channel joined.
    fn select_and_join(&mut self, ctx: &mut ContentionCtx<'_>, user: usize, now: f64) -> Result<usize> {
        let subs = self.subs.len();
        let action = if self.ai {
            let st = &self.stations[user];
            let eps = self.learning.epsilon.at(st.selections);
            let q = st.q.as_ref().expect("AI station has a table");
            select_action(q, st.rl_state, eps, ctx.rl_rng)
        } else {
            ctx.pick_rng.random_range(0..subs) * self.codebook
        };
        let sub = action / self.codebook;
        let busy_until = self.subs[sub].busy_until;
        let params_cw = self.params.cw_min;
        let st = &mut self.stations[user];
        st.selections += 1;
        st.action = action;
        if !st.has_backoff {
            st.cw = st.cw.max(params_cw);
            st.backoff_remaining = draw_backoff(st.cw, ctx.backoff_rng);
            st.has_backoff = true;
        }
        st.chosen = Some((sub, ctx.link.ris_of(sub)));
        st.phase = StationPhase::Sensing;
        st.ready_at = now.max(busy_until);
        self.subs[sub].contenders.push(user);
        Ok(sub)
    }

    fn contend(&mut self, ctx: &mut ContentionCtx<'_>, now: f64, s: usize) -> Result<Vec<Scheduled>> {
        let p = self.params.clone();
        let start = now;
        if start + self.exchange_len() > self.window_end + TIME_EPS {
            // Nothing fits before the period ends.
            self.subs[s].dormant = true;
            return Ok(Vec::new());
        }
        let contenders = std::mem::take(&mut self.subs[s].contenders);
        let mut group: Vec<(usize, f64)> = Vec::new();
        let mut preempted = Vec::new();
        let mut frozen = Vec::new();
        for &u in &contenders {
            let r = self.request_time(u);
            if r - start < p.backoff_slot * (1.0 - 1e-9) {
                group.push((u, r));
            } else if self.expiry(u) < start {
                preempted.push(u);
            } else {
                frozen.push(u);
            }
        }
        for &(u, r) in &group {
            let ready = self.stations[u].ready_at;
            let e = self.expiry(u);
            if e > ready {
                self.bill_sensing(ctx, u, s, ready, e, now);
            }
            self.bill_compute(ctx, u, e, r, now);
            let st = &mut self.stations[u];
            st.backoff_remaining = 0;
            st.phase = StationPhase::Requesting;
        }
        // Still computing when the medium turned busy: the attempt is
        // abandoned without a request and restarts with a fresh backoff.
        for &u in &preempted {
            let ready = self.stations[u].ready_at;
            let e = self.expiry(u);
            if e > ready {
                self.bill_sensing(ctx, u, s, ready, e, now);
            }
            self.bill_compute(ctx, u, e, start, now);
            let st = &mut self.stations[u];
            st.backoff_remaining = draw_backoff(st.cw, ctx.backoff_rng);
            st.phase = StationPhase::Backoff;
        }
        for &u in &frozen {
            let ready = self.stations[u].ready_at;
            if start > ready {
                self.bill_sensing(ctx, u, s, ready, start, now);
                let counted = ((start - ready - p.difs) / p.backoff_slot + 1e-9).floor();
                let st = &mut self.stations[u];
                if counted > 0.0 {
                    st.backoff_remaining = st.backoff_remaining.saturating_sub(counted as u32);
                }
                st.phase = StationPhase::Backoff;
            }
        }
        frozen.extend(preempted);
        let resolution = resolve_collisions(&group);
        let ris = ctx.link.ris_of(s);
        let target = match (self.kind, ris) {
            (ExchangeKind::BsRequest, _) | (_, None) => Actor::Bs,
            (_, Some(r)) => Actor::RisController(r),
        };
        let mut records = Vec::new();
        let mut outcomes = Vec::new();
        let period = self.period;
        let tx_power = ctx.power.tx;
        let request = |u: usize, t: f64| {
            (
                period,
                Actor::Tx(u),
                TraceEvent::Request {
                    user: u,
                    subchannel: s,
                    ris,
                    target,
                    start: t,
                    end: t + p.request_len,
                    energy_j: tx_power * p.request_len,
                },
            )
        };
        let busy_end;
        if let Some(w) = resolution.winner {
            let req_end = start + p.request_len;
            let fb_start = req_end + p.sifs;
            let fb_end = fb_start + p.feedback_len;
            let granted = match self.kind {
                ExchangeKind::Data => ris.is_none_or(|r| self.ris_busy_until[r] <= fb_start + TIME_EPS),
                ExchangeKind::BsRequest => true,
                ExchangeKind::Reservation => self.reserved_used[s] < self.reserved_slots,
            };
            records.push(request(w, start));
            records.push((
                self.period,
                target,
                TraceEvent::Feedback {
                    user: w,
                    subchannel: s,
                    ris,
                    granted,
                    start: fb_start,
                    end: fb_end,
                    energy_j: ctx.power.feedback * p.feedback_len,
                },
            ));
            if !granted {
                busy_end = fb_end;
                outcomes.push((w, AttemptResult::Denied));
            } else if self.kind == ExchangeKind::Data {
                let data_start = fb_end + p.sifs;
                let data_end = data_start + p.data_len;
                let rotation = self.stations[w].action % self.codebook;
                let block = ctx.block.at(data_start);
                let rate = ctx.link.rate(ctx.channels, block, w, s, rotation)?;
                if let Some(r) = ris {
                    self.ris_busy_until[r] = data_end;
                }
                records.push((
                    self.period,
                    Actor::Tx(w),
                    TraceEvent::Data {
                        user: w,
                        subchannel: s,
                        ris,
                        start: data_start,
                        end: data_end,
                        rate_bps: rate,
                        bits: rate * p.data_len,
                        energy_j: ctx.power.tx * p.data_len,
                    },
                ));
                self.stations[w].phase = StationPhase::Transmitting;
                busy_end = data_end;
                outcomes.push((w, AttemptResult::Delivered { rate, data_start }));
            } else {
                if self.kind == ExchangeKind::Reservation {
                    self.reserved_used[s] += 1;
                }
                busy_end = fb_end;
                outcomes.push((w, AttemptResult::Granted));
            }
        } else {
            for &u in &resolution.collided {
                records.push(request(u, start));
            }
            records.push((
                self.period,
                Actor::Medium(s),
                TraceEvent::Collision {
                    subchannel: s,
                    users: resolution.collided.clone(),
                },
            ));
            busy_end = start + p.request_len + p.sifs + p.feedback_len;
            outcomes.extend(resolution.collided.iter().map(|&u| (u, AttemptResult::Collided)));
        }
        for &u in &resolution.deferred {
            let e = group.iter().find(|g| g.0 == u).map(|g| g.1).unwrap_or(start);
            records.push(request(u, e));
            records.push((
                self.period,
                Actor::Medium(s),
                TraceEvent::Deferral { subchannel: s, user: u },
            ));
            outcomes.push((u, AttemptResult::Deferred));
        }
        let sub = &mut self.subs[s];
        sub.contenders = frozen;
        sub.busy_until = busy_end;
        sub.pending = Some(Pending { records, outcomes });
        for &u in &sub.contenders {
            let st = &mut self.stations[u];
            st.ready_at = st.ready_at.max(busy_end);
        }
        Ok(vec![(busy_end, Actor::Medium(s), DcfEvent::BusyEnd { subchannel: s })])
    }

    /// Credits a finished exchange and moves its stations on. Returns the
    /// sub-channels whose contender sets changed.
    fn finish_exchange(&mut self, ctx: &mut ContentionCtx<'_>, s: usize, now: f64) -> Result<Vec<usize>> {
        let Some(pending) = self.subs[s].pending.take() else {
            return Ok(Vec::new());
        };
        for (period, actor, ev) in pending.records {
            ctx.ledger.record(now, period, actor, ev);
        }
        let mut touched = vec![s];
        let bw = ctx.link.sub_bandwidth;
        for (u, result) in pending.outcomes {
            let (r, next_bucket, success) = match result {
                AttemptResult::Delivered { rate, data_start } => {
                    let delay = data_start - self.stations[u].packet_since;
                    ctx.ledger.record(
                        now,
                        self.period,
                        Actor::Tx(u),
                        TraceEvent::AccessDelay { user: u, delay },
                    );
                    let r = reward(self.stations[u].last_rate, rate, false);
                    self.stations[u].last_rate = rate;
                    (r, rate_bucket(rate, bw), true)
                }
                AttemptResult::Granted => (1.0, rate_bucket(self.stations[u].last_rate, bw), true),
                AttemptResult::Denied => (-1.0, 0, !self.params.denial_doubles_cw),
                AttemptResult::Collided | AttemptResult::Deferred => (-1.0, 0, false),
            };
            let next_state = self.rl_state(next_bucket, s);
            let st = &mut self.stations[u];
            if let Some(q) = st.q.as_mut() {
                update_q(q, st.rl_state, st.action, r, next_state);
            }
            st.rl_state = next_state;
            st.has_backoff = false;
            st.cw = if success {
                self.params.cw_min
            } else {
                self.params.double_cw(st.cw)
            };
            st.phase = StationPhase::Idle;
            if result == AttemptResult::Granted {
                st.active = false;
                let rotation = st.action % self.codebook;
                let slot = self.reserved_used[s].saturating_sub(1);
                self.grants.push(Grant {
                    user: u,
                    subchannel: s,
                    rotation,
                    slot,
                });
                continue;
            }
            if let AttemptResult::Delivered { .. } = result {
                st.packet_since = now;
            }
            if self.open && st.active {
                touched.push(self.select_and_join(ctx, u, now)?);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        Ok(touched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStreams;

    #[test]
    fn singleton_window_always_zero() {
        let mut rng = RngStreams::new(1).stream("backoff");
        for _ in 0..100 {
            assert_eq!(draw_backoff(1, &mut rng), 0);
        }
    }

    #[test]
    fn backoff_is_uniform_chi_square() {
        let mut rng = RngStreams::new(2).stream("backoff");
        let n = 100_000;
        let mut counts = [0f64; 16];
        for _ in 0..n {
            counts[draw_backoff(16, &mut rng) as usize] += 1.0;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 99% quantile of chi-square with 15 degrees of freedom.
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }

    #[test]
    fn backoff_sequence_reproducible() {
        let a: Vec<u32> = {
            let mut r = RngStreams::new(3).stream("backoff");
            (0..20).map(|_| draw_backoff(64, &mut r)).collect()
        };
        let b: Vec<u32> = {
            let mut r = RngStreams::new(3).stream("backoff");
            (0..20).map(|_| draw_backoff(64, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn lone_access_timeline() {
        let p = DcfParams::default();
        let o = attempt_access(&p, 0.0, 3, true);
        let expected = p.difs + 3.0 * p.backoff_slot + p.request_len + p.sifs + p.feedback_len + p.sifs + p.data_len;
        assert!(o.success);
        assert!((o.airtime(0.0) - expected).abs() < 1e-15);
        let denied = attempt_access(&p, 0.0, 3, false);
        assert!(!denied.success);
        assert!(denied.end < o.end);
    }

    #[test]
    fn cw_escalation_caps() {
        let p = DcfParams::default();
        let mut cw = p.cw_min;
        let mut seen = vec![cw];
        for _ in 0..8 {
            cw = p.double_cw(cw);
            seen.push(cw);
        }
        assert_eq!(seen, vec![16, 32, 64, 128, 256, 512, 1024, 1024, 1024]);
    }

    #[test]
    fn resolution_rules() {
        assert_eq!(resolve_collisions(&[(4, 1.0)]).winner, Some(4));
        let tie = resolve_collisions(&[(1, 2.0), (2, 2.0)]);
        assert_eq!(tie.winner, None);
        assert_eq!(tie.collided, vec![1, 2]);
        let apart = resolve_collisions(&[(7, 1e-3 + 1e-6), (3, 1e-3)]);
        assert_eq!(apart.winner, Some(3));
        assert_eq!(apart.deferred, vec![7]);
        assert_eq!(resolve_collisions(&[]), Resolution::default());
    }

    #[test]
    fn params_validated() {
        let mut p = DcfParams::default();
        assert!(p.validate().is_ok());
        p.sifs = p.difs;
        assert!(p.validate().is_err());
        let p = DcfParams {
            cw_min: 64,
            cw_max: 32,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
