//! Physical layer: log-distance path loss, Rician/Rayleigh block fading,
//! cascaded Tx-RIS-Rx gains, SNR and Shannon rate.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{RngStream, RngStreams};
use crate::ris::RisConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Path loss at the 1 m reference distance, in dB (negative).
    pub pl0_db: f64,
    /// Exponent for the Tx-RIS and RIS-Rx legs.
    pub alpha_los: f64,
    /// Exponent for the direct Tx-Rx leg.
    pub alpha_nlos: f64,
    /// Rician factor of the LoS legs; `inf` gives a pure LoS link.
    pub rician_k_db: f64,
    /// Seconds per independent fading draw (distributed mode; framed
    /// protocols redraw once per frame).
    pub coherence: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            pl0_db: -30.0,
            alpha_los: 2.2,
            alpha_nlos: 3.6,
            rician_k_db: 10.0,
            coherence: 0.02,
        }
    }
}

/// Gains of one Tx towards one receiver through one RIS, for one coherence block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h_direct: Complex64,
    pub h_tx_ris: Vec<Complex64>,
    pub h_ris_rx: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn elements(&self) -> usize {
        self.h_tx_ris.len()
    }

    /// Per-element cascaded products `h_ris_rx[n] * h_tx_ris[n]`.
    pub fn products(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.h_ris_rx.iter().zip(&self.h_tx_ris).map(|(r, t)| r * t)
    }

    /// `|h_direct| + sum_n |h_ris_rx[n] h_tx_ris[n]|`, the triangle bound on any configuration.
    pub fn gain_upper_bound(&self) -> f64 {
        self.h_direct.norm() + self.products().map(|p| p.norm()).sum::<f64>()
    }
}

pub fn path_loss_db(d: f64, alpha: f64, pl0_db: f64) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(Error::BelowReferenceDistance(d));
    }
    Ok(pl0_db - 10.0 * alpha * d.log10())
}

fn circular_normal(rng: &mut RngStream) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-power small-scale fading. The LoS component has phase zero, so an
/// infinite Rician factor yields exactly `1 + 0j`.
pub fn sample_fading(los: bool, rician_k_db: f64, rng: &mut RngStream) -> Complex64 {
    if !los {
        return circular_normal(rng);
    }
    if rician_k_db == f64::INFINITY {
        return Complex64::new(1.0, 0.0);
    }
    let k = 10f64.powf(rician_k_db / 10.0);
    let los_amp = (k / (k + 1.0)).sqrt();
    let nlos_amp = (1.0 / (k + 1.0)).sqrt();
    Complex64::new(los_amp, 0.0) + circular_normal(rng) * nlos_amp
}

pub fn sample_link(d: f64, alpha: f64, los: bool, params: &ChannelParams, rng: &mut RngStream) -> Result<Complex64> {
    let pl = path_loss_db(d, alpha, params.pl0_db)?;
    let amplitude = 10f64.powf(pl / 20.0);
    Ok(sample_fading(los, params.rician_k_db, rng) * amplitude)
}

/// `h_direct + sum_n h_ris_rx[n] e^{j theta_n} h_tx_ris[n]` with `theta_n`
/// taken from the element's group in `cfg`.
pub fn composite_gain(r: &ChannelRealization, cfg: &RisConfig) -> Result<Complex64> {
    let n = r.h_tx_ris.len();
    if r.h_ris_rx.len() != n {
        return Err(Error::LengthMismatch {
            what: "h_ris_rx",
            got: r.h_ris_rx.len(),
            expected: n,
        });
    }
    if cfg.element_count() != n {
        return Err(Error::LengthMismatch {
            what: "RIS configuration elements",
            got: cfg.element_count(),
            expected: n,
        });
    }
    let mut sum = r.h_direct;
    for (i, p) in r.products().enumerate() {
        sum += p * Complex64::from_polar(1.0, cfg.phase_of_element(i));
    }
    Ok(sum)
}

/// Received SNR in dB; a zero gain yields `-inf`.
pub fn snr_db(g: Complex64, tx_power_dbm: f64, noise_dbm: f64) -> f64 {
    let mag = g.norm();
    if mag == 0.0 {
        return f64::NEG_INFINITY;
    }
    tx_power_dbm + 20.0 * mag.log10() - noise_dbm
}

pub fn rate_bps(snr_db: f64, bandwidth_hz: f64) -> f64 {
    if snr_db == f64::NEG_INFINITY {
        return 0.0;
    }
    bandwidth_hz * (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub d_tx_ris: f64,
    pub d_ris_rx: f64,
    pub d_tx_rx: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            d_tx_ris: 50.0,
            d_ris_rx: 30.0,
            d_tx_rx: 70.0,
        }
    }
}

/// Supplies per-block channel realizations to the MAC engines.
pub trait ChannelSource {
    fn realization(&mut self, block: u64, user: usize, ris: usize) -> Result<&ChannelRealization>;

    /// Direct-only gain, used on sub-channels that have no RIS.
    fn direct(&mut self, block: u64, user: usize) -> Result<Complex64>;
}

/// Block-fading channel field for all users, RISs and receivers.
///
/// Block `b` is drawn from the `channel/b` sub-stream, so its contents depend
/// only on the master seed and the block index, never on which protocol asks.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    params: ChannelParams,
    geometry: Geometry,
    elements: usize,
    users: usize,
    num_ris: usize,
    receivers: usize,
    streams: RngStreams,
    block: Option<u64>,
    links: Vec<ChannelRealization>,
}

impl ChannelModel {
    pub fn new(
        params: ChannelParams,
        geometry: Geometry,
        elements: usize,
        users: usize,
        num_ris: usize,
        receivers: usize,
        streams: RngStreams,
    ) -> Self {
        Self {
            params,
            geometry,
            elements,
            users,
            num_ris,
            receivers: receivers.max(1),
            streams,
            block: None,
            links: Vec::new(),
        }
    }

    /// Receiver a user sends to.
    pub fn receiver_of(&self, user: usize) -> usize {
        user % self.receivers
    }

    fn draw(&mut self, block: u64) -> Result<()> {
        let mut rng = self.streams.substream("channel", block);
        let p = &self.params;
        let g = self.geometry;
        // RIS-Rx legs are shared by every user of the same receiver.
        let mut ris_rx = Vec::with_capacity(self.receivers * self.num_ris);
        for _ in 0..self.receivers * self.num_ris {
            let v = (0..self.elements)
                .map(|_| sample_link(g.d_ris_rx, p.alpha_los, true, p, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            ris_rx.push(v);
        }
        let direct = (0..self.users)
            .map(|_| sample_link(g.d_tx_rx, p.alpha_nlos, false, p, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        self.links.clear();
        for (user, h_direct) in direct.iter().enumerate() {
            let rx = user % self.receivers;
            for ris in 0..self.num_ris {
                let h_tx_ris = (0..self.elements)
                    .map(|_| sample_link(g.d_tx_ris, p.alpha_los, true, p, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                self.links.push(ChannelRealization {
                    h_direct: *h_direct,
                    h_tx_ris,
                    h_ris_rx: ris_rx[rx * self.num_ris + ris].clone(),
                });
            }
        }
        self.block = Some(block);
        Ok(())
    }

    fn ensure(&mut self, block: u64) -> Result<()> {
        if self.block != Some(block) {
            self.draw(block)?;
        }
        Ok(())
    }
}

impl ChannelSource for ChannelModel {
    fn realization(&mut self, block: u64, user: usize, ris: usize) -> Result<&ChannelRealization> {
        self.ensure(block)?;
        let idx = user * self.num_ris + ris;
        self.links.get(idx).ok_or(Error::LengthMismatch {
            what: "channel links",
            got: idx,
            expected: self.links.len(),
        })
    }

    fn direct(&mut self, block: u64, user: usize) -> Result<Complex64> {
        Ok(self.realization(block, user, 0)?.h_direct)
    }
}

/// Time-invariant channels, one realization per (user, RIS).
#[derive(Debug, Clone)]
pub struct FixedChannels {
    pub links: Vec<Vec<ChannelRealization>>,
}

impl ChannelSource for FixedChannels {
    fn realization(&mut self, _block: u64, user: usize, ris: usize) -> Result<&ChannelRealization> {
        self.links
            .get(user)
            .and_then(|l| l.get(ris))
            .ok_or(Error::LengthMismatch {
                what: "fixed channel links",
                got: user,
                expected: self.links.len(),
            })
    }

    fn direct(&mut self, block: u64, user: usize) -> Result<Complex64> {
        Ok(self.realization(block, user, 0)?.h_direct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss_db(1.0, 2.2, -30.0).unwrap(), -30.0);
        // -30 - 22 log10(50) and -30 - 22 log10(30), evaluated by hand.
        assert_relative_eq!(path_loss_db(50.0, 2.2, -30.0).unwrap(), -67.377, epsilon = 5e-4);
        assert_relative_eq!(path_loss_db(30.0, 2.2, -30.0).unwrap(), -62.4967, epsilon = 5e-4);
        assert!(matches!(
            path_loss_db(0.5, 2.2, -30.0),
            Err(Error::BelowReferenceDistance(_))
        ));
    }

    #[test]
    fn infinite_rician_is_deterministic() {
        let params = ChannelParams {
            rician_k_db: f64::INFINITY,
            ..Default::default()
        };
        let mut rng = RngStreams::new(1).stream("channel");
        let g = sample_link(50.0, 2.2, true, &params, &mut rng).unwrap();
        let expected = 10f64.powf(path_loss_db(50.0, 2.2, -30.0).unwrap() / 20.0);
        assert_eq!(g, Complex64::new(expected, 0.0));
    }

    #[test]
    fn rayleigh_mean_power_matches_path_loss() {
        let params = ChannelParams::default();
        let mut rng = RngStreams::new(9).stream("channel");
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_link(50.0, 3.6, false, &params, &mut rng).unwrap().norm_sqr())
            .sum::<f64>()
            / n as f64;
        let linear = 10f64.powf(path_loss_db(50.0, 3.6, -30.0).unwrap() / 10.0);
        assert!((mean / linear - 1.0).abs() < 0.02, "ratio {}", mean / linear);
    }

    #[test]
    fn fading_has_unit_power() {
        for (los, k) in [(true, 0.0), (true, 10.0), (false, 0.0)] {
            let mut rng = RngStreams::new(3).stream("channel");
            let n = 100_000;
            let p = (0..n).map(|_| sample_fading(los, k, &mut rng).norm_sqr()).sum::<f64>() / n as f64;
            assert!((p - 1.0).abs() < 0.02, "los={los} k={k} power={p}");
        }
    }

    #[test]
    fn equal_seed_equal_draw() {
        let params = ChannelParams::default();
        let a = sample_link(50.0, 2.2, true, &params, &mut RngStreams::new(5).stream("channel")).unwrap();
        let b = sample_link(50.0, 2.2, true, &params, &mut RngStreams::new(5).stream("channel")).unwrap();
        assert_eq!(a, b);
    }

    fn unit_products(n: usize) -> ChannelRealization {
        ChannelRealization {
            h_direct: Complex64::new(0.0, 0.0),
            h_tx_ris: vec![Complex64::new(1.0, 0.0); n],
            h_ris_rx: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    #[test]
    fn coherent_sum() {
        let r = unit_products(128);
        let g = composite_gain(&r, &RisConfig::continuous(vec![0.0; 128], 1).unwrap()).unwrap();
        assert_relative_eq!(g.re, 128.0);
        assert_relative_eq!(g.im, 0.0);
    }

    #[test]
    fn single_element_alignment() {
        let r = ChannelRealization {
            h_direct: Complex64::new(1.0, 0.0),
            h_tx_ris: vec![Complex64::from_polar(1.0, -PI / 3.0)],
            h_ris_rx: vec![Complex64::new(1.0, 0.0)],
        };
        let g = composite_gain(&r, &RisConfig::continuous(vec![PI / 3.0], 1).unwrap()).unwrap();
        assert_relative_eq!(g.re, 2.0, epsilon = 1e-12);
        assert_relative_eq!(g.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_is_error() {
        let r = unit_products(4);
        let cfg = RisConfig::continuous(vec![0.0; 8], 1).unwrap();
        assert!(matches!(composite_gain(&r, &cfg), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn matches_term_by_term_sum() {
        use rand::Rng;
        let mut rng = RngStreams::new(77).stream("test");
        let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = ChannelRealization {
            h_direct: c(),
            h_tx_ris: (0..8).map(|_| c()).collect(),
            h_ris_rx: (0..8).map(|_| c()).collect(),
        };
        let phases: Vec<f64> = (0..8).map(|i| 0.37 * i as f64).collect();
        // Independent expansion with explicit cos/sin arithmetic.
        let (mut re, mut im) = (r.h_direct.re, r.h_direct.im);
        #[allow(clippy::needless_range_loop)]
        for n in 0..8 {
            let (a, b) = (r.h_ris_rx[n].re, r.h_ris_rx[n].im);
            let (cth, sth) = (phases[n].cos(), phases[n].sin());
            let (e, f) = (a * cth - b * sth, a * sth + b * cth);
            let (x, y) = (r.h_tx_ris[n].re, r.h_tx_ris[n].im);
            re += e * x - f * y;
            im += e * y + f * x;
        }
        let g = composite_gain(&r, &RisConfig::continuous(phases, 1).unwrap()).unwrap();
        assert_relative_eq!(g.re, re, epsilon = 1e-12);
        assert_relative_eq!(g.im, im, epsilon = 1e-12);
    }

    #[test]
    fn snr_examples() {
        assert_relative_eq!(snr_db(Complex64::new(1.0, 0.0), 10.0, -94.0), 104.0);
        // |g|^2 = -100 dB
        let g = Complex64::new(1e-5, 0.0);
        assert_relative_eq!(snr_db(g, 10.0, -94.0), 4.0, epsilon = 1e-9);
        let zero = snr_db(Complex64::new(0.0, 0.0), 10.0, -94.0);
        assert_eq!(zero, f64::NEG_INFINITY);
        assert_eq!(rate_bps(zero, 5e6), 0.0);
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(rate_bps(10.0 * 3f64.log10(), 5e6), 10e6, epsilon = 1e-6);
        assert_relative_eq!(rate_bps(0.0, 5e6), 5e6);
    }

    #[test]
    fn channel_model_blocks_are_reproducible() {
        let mk = || {
            ChannelModel::new(
                ChannelParams::default(),
                Geometry::default(),
                16,
                3,
                2,
                1,
                RngStreams::new(11),
            )
        };
        let mut a = mk();
        let mut b = mk();
        let ra = a.realization(4, 2, 1).unwrap().clone();
        // Visiting another block first must not change block 4.
        b.realization(0, 0, 0).unwrap();
        assert_eq!(&ra, b.realization(4, 2, 1).unwrap());
        assert_eq!(ra.elements(), 16);
        // Users of one receiver share the RIS-Rx leg.
        let r0 = a.realization(4, 0, 1).unwrap().h_ris_rx.clone();
        assert_eq!(r0, ra.h_ris_rx);
    }

    proptest! {
        #[test]
        fn rate_monotone(a in -50.0f64..80.0, b in -50.0f64..80.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rate_bps(lo, 1e6) <= rate_bps(hi, 1e6));
        }

        #[test]
        fn triangle_bound(
            seed in 0u64..10_000,
            n in 1usize..12,
            phases in proptest::collection::vec(0.0f64..6.3, 12),
        ) {
            use rand::Rng;
            let mut rng = RngStreams::new(seed).stream("t");
            let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let r = ChannelRealization {
                h_direct: c(),
                h_tx_ris: (0..n).map(|_| c()).collect(),
                h_ris_rx: (0..n).map(|_| c()).collect(),
            };
            let cfg = RisConfig::continuous(phases[..n].to_vec(), 1).unwrap();
            let g = composite_gain(&r, &cfg).unwrap().norm();
            prop_assert!(g <= r.gain_upper_bound() * (1.0 + 1e-9));
        }
    }
}
