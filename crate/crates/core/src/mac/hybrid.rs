//! Hybrid MAC frames mixing scheduled and contention-based periods.
//!
//! * Case 1: `[pilot, compute, scheduled, competing]`. Users left out of the
//!   schedule contend in the competing period with the distributed handshake.
//! * Case 2: `[request, compute, scheduled]`. Users contend to send a request
//!   to the BS, which then schedules the granted users.
//! * Case 3: `[request, reserved]`. Users compute their RIS configuration
//!   locally and contend to reserve one slot of the reserved period from a
//!   RIS-controller. Reservations last one frame.

use serde::{Deserialize, Serialize};

use super::{FramePlan, PeriodKind};
use crate::error::{Error, Result};
use crate::learning::{compute_time, ComputeMode};
use crate::scenario::ScenarioConfig;

pub use crate::engine::run_hybrid_frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HybridCase {
    Case1,
    Case2,
    Case3,
}

impl HybridCase {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(HybridCase::Case1),
            2 => Ok(HybridCase::Case2),
            3 => Ok(HybridCase::Case3),
            other => Err(Error::Config(format!("unknown hybrid case {other}"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            HybridCase::Case1 => 1,
            HybridCase::Case2 => 2,
            HybridCase::Case3 => 3,
        }
    }
}

/// Whole data slots given to the scheduled period out of `data_slots`.
pub fn scheduled_slots(fraction: f64, data_slots: usize) -> usize {
    ((fraction * data_slots as f64) + 1e-9).floor() as usize
}

pub fn central_mode(ai: bool) -> ComputeMode {
    if ai {
        ComputeMode::AiCentral
    } else {
        ComputeMode::NoneIterative
    }
}

/// Central computation time for `users` users under `cfg`.
pub fn central_compute(cfg: &ScenarioConfig, users: usize) -> f64 {
    compute_time(
        &cfg.cost,
        central_mode(cfg.run.ai),
        users,
        cfg.topology.num_ris,
        cfg.groups(),
    )
}

/// Per-attempt computation time of a contending user. The learning agent
/// weighs every RIS; the iterative search only tunes the RIS it picked.
pub fn local_compute(cfg: &ScenarioConfig) -> f64 {
    if cfg.run.ai {
        compute_time(
            &cfg.cost,
            ComputeMode::AiDistributed,
            1,
            cfg.topology.num_ris,
            cfg.groups(),
        )
    } else {
        compute_time(&cfg.cost, ComputeMode::NoneIterative, 1, 1, cfg.groups())
    }
}

pub fn case1_plan(cfg: &ScenarioConfig, compute: f64) -> FramePlan {
    let k = cfg.topology.users;
    let j = cfg.data_slots();
    let slot = cfg.mac.data_slot;
    let sched = scheduled_slots(cfg.mac.scheduled_fraction, j);
    FramePlan {
        periods: vec![
            (PeriodKind::Pilot, k as f64 * cfg.mac.pilot_slot),
            (PeriodKind::Compute, compute),
            (PeriodKind::Scheduled, sched as f64 * slot),
            (PeriodKind::Competing, (j - sched) as f64 * slot),
        ],
        pilot_slots: k,
        data_slots: sched,
        subchannels: cfg.topology.num_subchannels,
    }
}

/// Case 2 frame once `granted` requests are known.
pub fn case2_plan(cfg: &ScenarioConfig, granted: usize) -> FramePlan {
    let subs = cfg.topology.num_subchannels;
    let slots = granted.div_ceil(subs);
    let compute = if granted == 0 {
        0.0
    } else {
        central_compute(cfg, granted)
    };
    FramePlan {
        periods: vec![
            (PeriodKind::Request, cfg.mac.request_period),
            (PeriodKind::Compute, compute),
            (PeriodKind::Scheduled, slots as f64 * cfg.mac.data_slot),
        ],
        pilot_slots: 0,
        data_slots: slots,
        subchannels: subs,
    }
}

/// Case 3 frame whose reserved period holds `slots` slots. At most
/// `data_slots()` can be reserved per sub-channel; the period shrinks to the
/// slots actually reserved once the request period ends.
pub fn case3_plan(cfg: &ScenarioConfig, slots: usize) -> FramePlan {
    FramePlan {
        periods: vec![
            (PeriodKind::Request, cfg.mac.request_period),
            (PeriodKind::Reserved, slots as f64 * cfg.mac.data_slot),
        ],
        pilot_slots: 0,
        data_slots: slots,
        subchannels: cfg.topology.num_subchannels,
    }
}

/// Nominal frame of a case. Cases 2 and 3 are sized for the most grants the
/// request period can yield, which bounds the actual frame.
pub fn compose_frame(case: HybridCase, cfg: &ScenarioConfig) -> Result<FramePlan> {
    cfg.validate()?;
    Ok(match case {
        HybridCase::Case1 => case1_plan(cfg, central_compute(cfg, cfg.topology.users)),
        HybridCase::Case2 => case2_plan(cfg, cfg.topology.users),
        HybridCase::Case3 => case3_plan(cfg, cfg.data_slots()),
    })
}
