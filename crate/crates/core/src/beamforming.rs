//! Phase-shifter and time-delay beamformers, sweep plans and received power.
//!
//! Each antenna carries a phase shifter `e^{−j2πφ_n}` cascaded with a delay
//! line whose response at baseband offset `f̃` is `e^{−j2πf̃t_n}`. The phase
//! shifters focus the lowest carrier `f0` on the sweep start; the delays then
//! place the focus of the highest carrier `f_M` on the sweep end, and the
//! subcarriers in between squint along a trajectory joining the two.

use log::warn;
use num_complex::Complex64;

use crate::array_model::{
    antenna_distances, phasor, ArrayConfig, ChannelVector, PathLoss, PolarPoint, SPEED_OF_LIGHT,
};
use crate::{Error, Result};

/// Warn when a delay profile spreads wider than this, seconds.
pub const DEFAULT_DELAY_SPREAD_BOUND: f64 = 100e-9;

/// Per-antenna phase shifts `φ_n` in cycles, kept unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile(Vec<f64>);

impl PhaseProfile {
    pub fn new(phases: Vec<f64>) -> Self {
        Self(phases)
    }

    pub fn phases(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Adds the same number of cycles to every shifter.
    pub fn offset(&self, cycles: f64) -> Self {
        Self(self.0.iter().map(|p| p + cycles).collect())
    }
}

/// Per-antenna delays `t_n` in seconds. Values may be negative; only the
/// spread matters for received power.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile(Vec<f64>);

impl DelayProfile {
    pub fn new(delays: Vec<f64>) -> Self {
        Self(delays)
    }

    pub fn delays(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(min t_n, max t_n)`.
    pub fn range(&self) -> (f64, f64) {
        self.0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
    }

    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.range();
        hi - lo
    }

    /// Logs a warning if the spread exceeds `bound`; returns whether it fits.
    pub fn check_spread(&self, bound: f64) -> bool {
        let spread = self.spread();
        if spread >= bound {
            warn!(
                "delay spread {:.3} ns exceeds hardware bound {:.3} ns",
                spread * 1e9,
                bound * 1e9
            );
            return false;
        }
        true
    }

    pub fn offset(&self, seconds: f64) -> Self {
        Self(self.0.iter().map(|t| t + seconds).collect())
    }
}

/// `φ_n = f0·r_{0,n}/c`: focuses the lowest carrier on `start`.
pub fn ps_profile_for_start(start: PolarPoint, config: &ArrayConfig) -> PhaseProfile {
    let f0 = config.lowest_freq();
    PhaseProfile(
        antenna_distances(start, config)
            .into_iter()
            .map(|r| f0 * r / SPEED_OF_LIGHT)
            .collect(),
    )
}

/// `t_n = f_M·r_{c,n}/(W·c) − φ_n/W`: focuses the highest carrier on `end`.
pub fn td_profile_for_end(
    end: PolarPoint,
    phase_profile: &PhaseProfile,
    config: &ArrayConfig,
) -> DelayProfile {
    let w = config.bandwidth();
    let fm = config.highest_freq();
    DelayProfile(
        antenna_distances(end, config)
            .into_iter()
            .zip(phase_profile.phases())
            .map(|(r, phi)| fm * r / (w * SPEED_OF_LIGHT) - phi / w)
            .collect(),
    )
}

/// Complex beamforming weights, one per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<Complex64>);

impl Weights {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl From<Vec<Complex64>> for Weights {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

/// `w_n = e^{−j2πφ_n}/√N`.
pub fn ps_beamformer(phase_profile: &PhaseProfile) -> Weights {
    let scale = 1.0 / (phase_profile.len() as f64).sqrt();
    Weights(phase_profile.phases().iter().map(|&p| phasor(p) * scale).collect())
}

/// `w_n = e^{−j2πφ_n}·e^{−j2πf̃t_n}/√N`.
pub fn td_beamformer(
    phase_profile: &PhaseProfile,
    delay_profile: &DelayProfile,
    baseband_freq: f64,
) -> Weights {
    let scale = 1.0 / (phase_profile.len() as f64).sqrt();
    Weights(
        phase_profile
            .phases()
            .iter()
            .zip(delay_profile.delays())
            .map(|(&p, &t)| phasor(p + baseband_freq * t) * scale)
            .collect(),
    )
}

/// `|hᴴ·w|`.
pub fn received_power(h: &ChannelVector, w: &Weights) -> Result<f64> {
    if h.len() != w.len() {
        return Err(Error::LengthMismatch {
            channel: h.len(),
            weights: w.len(),
        });
    }
    Ok(h.entries()
        .iter()
        .zip(w.entries())
        .map(|(h, w)| h.conj() * w)
        .sum::<Complex64>()
        .norm())
}

/// A configured squint trajectory from `start` (focus of `f0`) to `end`
/// (focus of `f_M`).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    start: PolarPoint,
    end: PolarPoint,
    phase_profile: PhaseProfile,
    delay_profile: DelayProfile,
    config: ArrayConfig,
}

impl SweepPlan {
    /// Derives both profiles from the endpoints.
    pub fn new(start: PolarPoint, end: PolarPoint, config: ArrayConfig) -> Self {
        let phase_profile = ps_profile_for_start(start, &config);
        let delay_profile = td_profile_for_end(end, &phase_profile, &config);
        delay_profile.check_spread(DEFAULT_DELAY_SPREAD_BOUND);
        Self {
            start,
            end,
            phase_profile,
            delay_profile,
            config,
        }
    }

    /// A plan with externally supplied profiles. The endpoints are recorded
    /// as given and are only meaningful if the profiles realize them.
    pub fn from_profiles(
        start: PolarPoint,
        end: PolarPoint,
        phase_profile: PhaseProfile,
        delay_profile: DelayProfile,
        config: ArrayConfig,
    ) -> Result<Self> {
        let n = config.num_antennas();
        if phase_profile.len() != n || delay_profile.len() != n {
            return Err(Error::invalid(
                "profile",
                format!(
                    "expected {n} entries, got {} phases and {} delays",
                    phase_profile.len(),
                    delay_profile.len()
                ),
            ));
        }
        Ok(Self {
            start,
            end,
            phase_profile,
            delay_profile,
            config,
        })
    }

    pub fn start(&self) -> PolarPoint {
        self.start
    }

    pub fn end(&self) -> PolarPoint {
        self.end
    }

    pub fn phase_profile(&self) -> &PhaseProfile {
        &self.phase_profile
    }

    pub fn delay_profile(&self) -> &DelayProfile {
        &self.delay_profile
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    /// Weights seen by subcarrier `m`.
    pub fn weights(&self, m: usize) -> Weights {
        td_beamformer(
            &self.phase_profile,
            &self.delay_profile,
            self.config.baseband_freq(m),
        )
    }

    /// `g̃(p, m)` for every `m = 0..=M`, using `path_loss` for the channel.
    ///
    /// Equivalent to `received_power(channel_vector(p, f_m), weights(m))`
    /// per subcarrier; the per-antenna phase is linear in `m`, so it is
    /// advanced by complex rotation and re-anchored periodically.
    pub fn amplitudes(&self, p: PolarPoint, path_loss: PathLoss) -> Vec<f64> {
        sweep_amplitudes(self, p, path_loss)
    }
}

const REANCHOR_EVERY: usize = 64;

fn sweep_amplitudes(plan: &SweepPlan, p: PolarPoint, path_loss: PathLoss) -> Vec<f64> {
    let cfg = &plan.config;
    let dists = antenna_distances(p, cfg);
    let step = cfg.bandwidth() / cfg.num_subcarriers() as f64;
    let f0 = cfg.lowest_freq();
    let scale = 1.0 / (cfg.num_antennas() as f64).sqrt();

    // conj(h_n)·w_n has phase +2π(f_m r_n/c − φ_n − f̃_m t_n) = 2π(base_n + m·slope_n).
    let terms: Vec<(f64, f64, f64)> = dists
        .iter()
        .zip(plan.phase_profile.phases())
        .zip(plan.delay_profile.delays())
        .map(|((&r, &phi), &t)| {
            let base = f0 * r / SPEED_OF_LIGHT - phi;
            let slope = step * (r / SPEED_OF_LIGHT - t);
            (base, slope, r)
        })
        .collect();

    let mut out = Vec::with_capacity(cfg.num_subcarriers() + 1);
    let mut current: Vec<Complex64> = Vec::with_capacity(terms.len());
    let mut rotation: Vec<Complex64> = terms.iter().map(|&(_, s, _)| phasor(-s)).collect();
    let flat_amp: Option<Vec<f64>> = match path_loss {
        PathLoss::FreeSpace => None,
        _ => Some(terms.iter().map(|&(_, _, r)| path_loss.amplitude(f0, f0, r)).collect()),
    };

    for m in 0..=cfg.num_subcarriers() {
        if m % REANCHOR_EVERY == 0 {
            current.clear();
            current.extend(terms.iter().map(|&(b, s, _)| phasor(-(b + m as f64 * s))));
            if m == 0 {
                rotation = terms.iter().map(|&(_, s, _)| phasor(-s)).collect();
            }
        }
        let sum: Complex64 = match &flat_amp {
            Some(amp) => current.iter().zip(amp).map(|(z, a)| z * a).sum(),
            None => {
                let fm = cfg.subcarrier_freq(m);
                current
                    .iter()
                    .zip(&terms)
                    .map(|(z, &(_, _, r))| z * path_loss.amplitude(fm, f0, r))
                    .sum()
            }
        };
        out.push(sum.norm() * scale);
        for (z, rot) in current.iter_mut().zip(&rotation) {
            *z *= rot;
        }
    }
    out
}
