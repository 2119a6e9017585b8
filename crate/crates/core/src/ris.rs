//! RIS phase configuration: constructive alignment, phase quantization,
//! element grouping and an exhaustive-search reference.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{composite_gain, ChannelRealization};
use crate::error::{Error, Result};

/// One phase per group of `group_size` adjacent elements.
///
/// `bits == None` marks a continuous configuration; otherwise every phase is
/// a member of `{2 pi k / 2^bits}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    pub group_size: usize,
    pub bits: Option<u8>,
    pub phases: Vec<f64>,
}

fn wrap(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl RisConfig {
    pub fn continuous(phases: Vec<f64>, group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::Config("group_size must be positive".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("RIS phases must be finite".into()));
        }
        Ok(Self {
            group_size,
            bits: None,
            phases: phases.into_iter().map(wrap).collect(),
        })
    }

    pub fn groups(&self) -> usize {
        self.phases.len()
    }

    pub fn element_count(&self) -> usize {
        self.phases.len() * self.group_size
    }

    pub fn phase_of_element(&self, n: usize) -> f64 {
        self.phases[n / self.group_size]
    }

    /// Adds `steps` quantization steps to every phase, staying in the discrete set.
    pub fn rotated(&self, steps: usize) -> Self {
        let Some(b) = self.bits else {
            return self.clone();
        };
        let levels = 1usize << b;
        let step = TAU / levels as f64;
        let phases = self
            .phases
            .iter()
            .map(|p| {
                let k = (p / step).round() as usize;
                ((k + steps) % levels) as f64 * step
            })
            .collect();
        Self { phases, ..self.clone() }
    }

    pub fn is_discrete_valid(&self) -> bool {
        match self.bits {
            None => true,
            Some(b) => {
                let step = TAU / (1u64 << b) as f64;
                self.phases.iter().all(|p| {
                    let k = p / step;
                    k.fract() == 0.0 && k >= 0.0 && (k as u64) < (1u64 << b)
                })
            }
        }
    }
}

fn reference_phase(r: &ChannelRealization) -> f64 {
    if r.h_direct == Complex64::new(0.0, 0.0) {
        0.0
    } else {
        r.h_direct.arg()
    }
}

/// Per-element continuous alignment of every reflected path with the direct path.
pub fn align_phases(r: &ChannelRealization) -> RisConfig {
    let reference = reference_phase(r);
    let phases = r.products().map(|p| wrap(reference - p.arg())).collect();
    RisConfig {
        group_size: 1,
        bits: None,
        phases,
    }
}

fn group_sums(r: &ChannelRealization, group_size: usize) -> Result<Vec<Complex64>> {
    let n = r.elements();
    if group_size == 0 || !n.is_multiple_of(group_size) {
        return Err(Error::Config(format!(
            "group_size {group_size} does not divide {n} elements"
        )));
    }
    let products: Vec<Complex64> = r.products().collect();
    Ok(products.chunks(group_size).map(|c| c.iter().sum()).collect())
}

/// Continuous alignment where each group's summed cascade is steered onto the
/// direct path. Equals [`align_phases`] for `group_size == 1`.
pub fn align_groups(r: &ChannelRealization, group_size: usize) -> Result<RisConfig> {
    let reference = reference_phase(r);
    let phases = group_sums(r, group_size)?
        .into_iter()
        .map(|s| wrap(reference - s.arg()))
        .collect();
    Ok(RisConfig {
        group_size,
        bits: None,
        phases,
    })
}

/// Nearest member of `{2 pi k / 2^bits}` under wrapped distance; ties go to the
/// smaller member.
pub fn quantize_phase(theta: f64, bits: u8) -> f64 {
    let levels = 1u64 << bits;
    let step = TAU / levels as f64;
    let x = wrap(theta) / step;
    let lo = x.floor();
    let (d_lo, d_hi) = (x - lo, lo + 1.0 - x);
    let lo_idx = (lo as u64) % levels;
    let hi_idx = (lo as u64 + 1) % levels;
    let k = if d_lo < d_hi {
        lo_idx
    } else if d_hi < d_lo {
        hi_idx
    } else {
        lo_idx.min(hi_idx)
    };
    k as f64 * step
}

pub fn quantize(cfg: &RisConfig, bits: u8) -> RisConfig {
    assert!(bits >= 1, "quantization needs at least one bit");
    RisConfig {
        group_size: cfg.group_size,
        bits: Some(bits),
        phases: cfg.phases.iter().map(|&p| quantize_phase(p, bits)).collect(),
    }
}

/// Exhaustive search over all `2^(bits * groups)` discrete configurations.
///
/// Returns the maximizer of `|composite_gain|`; among exact ties, the
/// lexicographically smallest phase vector.
pub fn brute_force_best(r: &ChannelRealization, bits: u8, group_size: usize) -> Result<RisConfig> {
    let sums = group_sums(r, group_size)?;
    let groups = sums.len();
    if bits == 0 || groups * bits as usize > 16 {
        return Err(Error::SearchSpaceTooLarge { groups, bits });
    }
    let levels = 1usize << bits;
    let step = TAU / levels as f64;
    let rot: Vec<Complex64> = (0..levels)
        .map(|k| Complex64::from_polar(1.0, k as f64 * step))
        .collect();
    let total = 1usize << (groups * bits as usize);
    let mut best_gain = f64::NEG_INFINITY;
    let mut best = 0usize;
    let mask = levels - 1;
    // Candidate index `c` encodes group 0 in its most significant digit, so
    // increasing `c` walks phase vectors in lexicographic order.
    for c in 0..total {
        let mut g = r.h_direct;
        for (i, s) in sums.iter().enumerate() {
            let shift = (groups - 1 - i) * bits as usize;
            g += s * rot[(c >> shift) & mask];
        }
        let gain = g.norm();
        if gain > best_gain {
            best_gain = gain;
            best = c;
        }
    }
    let phases = (0..groups)
        .map(|i| {
            let shift = (groups - 1 - i) * bits as usize;
            ((best >> shift) & mask) as f64 * step
        })
        .collect();
    Ok(RisConfig {
        group_size,
        bits: Some(bits),
        phases,
    })
}

/// `|composite_gain|` of the quantized group alignment, the configuration the
/// MAC engines apply for a user on one RIS.
pub fn configure(r: &ChannelRealization, bits: u8, group_size: usize) -> Result<(RisConfig, f64)> {
    let cfg = quantize(&align_groups(r, group_size)?, bits);
    let gain = composite_gain(r, &cfg)?.norm();
    Ok((cfg, gain))
}
