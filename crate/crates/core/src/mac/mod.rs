//! MAC protocol building blocks shared by the centralized, distributed and
//! hybrid engines.

pub mod centralized;
pub mod distributed;
pub mod hybrid;

use serde::{Deserialize, Serialize};

use crate::channel::{composite_gain, rate_bps, snr_db, ChannelSource};
use crate::error::Result;
use crate::ris::{align_phases, configure};

/// Kind of a timed period inside a MAC frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodKind {
    Pilot,
    Compute,
    Scheduled,
    Competing,
    Request,
    Reserved,
}

/// Ordered, timed periods making up one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub periods: Vec<(PeriodKind, f64)>,
    pub pilot_slots: usize,
    pub data_slots: usize,
    pub subchannels: usize,
}

impl FramePlan {
    pub fn duration(&self) -> f64 {
        self.periods.iter().map(|(_, d)| d).sum()
    }

    pub fn kinds(&self) -> Vec<PeriodKind> {
        self.periods.iter().map(|(k, _)| *k).collect()
    }
}

/// Radio parameters needed to turn a channel realization into a rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub num_ris: usize,
    pub subchannels: usize,
    /// Bandwidth of one sub-channel.
    pub sub_bandwidth: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub bits: u8,
    pub group_size: usize,
}

impl LinkBudget {
    /// RIS serving a sub-channel; sub-channels beyond the RIS count are unaided.
    pub fn ris_of(&self, subchannel: usize) -> Option<usize> {
        (subchannel < self.num_ris).then_some(subchannel)
    }

    pub fn tx_power_w(&self) -> f64 {
        10f64.powf(self.tx_power_dbm / 10.0) / 1000.0
    }

    /// Rate of `user` on `subchannel` with the quantized group alignment of
    /// its RIS, shifted by `rotation` quantization steps.
    pub fn rate(
        &self,
        channels: &mut dyn ChannelSource,
        block: u64,
        user: usize,
        subchannel: usize,
        rotation: usize,
    ) -> Result<f64> {
        let gain = match self.ris_of(subchannel) {
            Some(ris) => {
                let r = channels.realization(block, user, ris)?;
                if rotation == 0 {
                    configure(r, self.bits, self.group_size)?.1
                } else {
                    let (cfg, _) = configure(r, self.bits, self.group_size)?;
                    composite_gain(r, &cfg.rotated(rotation))?.norm()
                }
            }
            None => channels.direct(block, user)?.norm(),
        };
        Ok(self.rate_from_gain(gain))
    }

    pub fn rate_from_gain(&self, gain: f64) -> f64 {
        let g = num_complex::Complex64::new(gain, 0.0);
        rate_bps(snr_db(g, self.tx_power_dbm, self.noise_dbm), self.sub_bandwidth)
    }

    /// Best continuous-alignment rate over all RISs; the scheduler's sort key.
    pub fn aligned_rate(&self, channels: &mut dyn ChannelSource, block: u64, user: usize) -> Result<f64> {
        let mut best = self.rate_from_gain(channels.direct(block, user)?.norm());
        for ris in 0..self.num_ris {
            let r = channels.realization(block, user, ris)?;
            let g = composite_gain(r, &align_phases(r))?.norm();
            best = best.max(self.rate_from_gain(g));
        }
        Ok(best)
    }
}

/// Power draws used for energy accounting, in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBook {
    pub tx: f64,
    pub idle_listen: f64,
    pub feedback: f64,
    pub compute_bs: f64,
    pub compute_user: f64,
}
