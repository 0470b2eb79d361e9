//! Closed-form squint trajectories, their inverses, and a brute-force
//! gain-maximization oracle.
//!
//! Under the Fresnel expansion, aligning the linear-in-`n` phase terms fixes
//! the squint angle and aligning the quadratic terms fixes the squint range.
//! For a phase-shifter-only beamformer focused on `(r0, θ0)` at `f0`:
//!
//! ```text
//! sin θ_m = (f0/f_m)·sin θ0
//! r_m     = r0·(f_m/f0)·cos²θ_m/cos²θ0
//! ```
//!
//! With delay lines steering `f_M` onto `(rc, θc)`, `sin θ_m` and `1/r_m`
//! become frequency-weighted blends of the two endpoints (see
//! [`td_squint_angle`] and [`td_squint_distance`]).
//!
//! The oracle ([`brute_force_focus`]) scans the received gain over a polar
//! grid with exact distances. It evaluates the phase-coherent gain (unit
//! channel amplitude): with `1/r` spreading included, every scan peaks at
//! the nearest admissible range and says nothing about the focus.

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use crate::array_model::{antenna_index_grid, phasor, ArrayConfig, PolarPoint, SPEED_OF_LIGHT};
use crate::beamforming::{ps_beamformer, PhaseProfile, SweepPlan, Weights};
use crate::{Error, Result};

/// Focus of subcarrier `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquintPoint {
    pub m: usize,
    /// Meters.
    pub range: f64,
    /// Radians.
    pub angle: f64,
}

impl SquintPoint {
    pub fn angle_deg(&self) -> f64 {
        self.angle.to_degrees()
    }
}

/// Rectangular grid in `(r, θ)`; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub r_step: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_step: f64,
}

/// Refinement window half-width in coarse steps, and the refinement factor.
const REFINE_HALF_STEPS: f64 = 2.5;
const REFINE_FACTOR: f64 = 10.0;

impl PolarGrid {
    pub fn new(
        r_min: f64,
        r_max: f64,
        r_step: f64,
        theta_min: f64,
        theta_max: f64,
        theta_step: f64,
    ) -> Result<Self> {
        if !(r_min > 0.0 && r_min <= r_max) {
            return Err(Error::invalid("grid", format!("need 0 < r_min <= r_max, got {r_min}..{r_max}")));
        }
        if !(theta_min <= theta_max) {
            return Err(Error::invalid("grid", "need theta_min <= theta_max"));
        }
        if !(r_step > 0.0 && theta_step > 0.0) {
            return Err(Error::invalid("grid", "steps must be positive"));
        }
        Ok(Self {
            r_min,
            r_max,
            r_step,
            theta_min,
            theta_max,
            theta_step,
        })
    }

    /// Same grid with angles given in degrees.
    pub fn from_degrees(
        r_min: f64,
        r_max: f64,
        r_step: f64,
        theta_min_deg: f64,
        theta_max_deg: f64,
        theta_step_deg: f64,
    ) -> Result<Self> {
        Self::new(
            r_min,
            r_max,
            r_step,
            theta_min_deg.to_radians(),
            theta_max_deg.to_radians(),
            theta_step_deg.to_radians(),
        )
    }

    /// 3.17 m to 81.92 m in 0.4 m steps, −90° to 90° in 0.5° steps.
    pub fn field_scan_default() -> Self {
        Self::from_degrees(3.17, 81.92, 0.4, -90.0, 90.0, 0.5).expect("valid default grid")
    }

    fn axis(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(move |i| lo + i as f64 * step)
    }

    /// Range axis values, ascending.
    pub fn ranges(&self) -> Vec<f64> {
        Self::axis(self.r_min, self.r_max, self.r_step).collect()
    }

    /// Angle axis values, ascending. Points at or beyond ±90° are dropped.
    pub fn angles(&self) -> Vec<f64> {
        Self::axis(self.theta_min, self.theta_max, self.theta_step)
            .filter(|t| t.abs() < FRAC_PI_2 - 1e-12)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ranges().len() * self.angles().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// PS-only squint angle: `arcsin((f0/f_m)·sin θ0)`.
pub fn squint_angle_ps(theta0: f64, f0: f64, fm: f64) -> f64 {
    ((f0 / fm) * theta0.sin()).asin()
}

/// PS-only squint range: `r0·(f_m/f0)·cos²θ_m/cos²θ0`.
pub fn squint_distance_ps(r0: f64, theta0: f64, f0: f64, fm: f64) -> Result<f64> {
    let c0 = theta0.cos();
    if c0.abs() < 1e-12 {
        return Err(Error::Domain {
            op: "squint_distance_ps",
            reason: "cos θ0 vanishes".into(),
        });
    }
    let s = (f0 / fm) * theta0.sin();
    Ok(r0 * (fm / f0) * (1.0 - s * s) / (c0 * c0))
}

fn check_baseband(op: &'static str, fb: f64, w: f64) -> Result<()> {
    if !(fb >= -1e-9 * w && fb <= w * (1.0 + 1e-12)) {
        return Err(Error::Domain {
            op,
            reason: format!("baseband frequency {fb} outside [0, {w}]"),
        });
    }
    Ok(())
}

/// `sin θ_m` on a TD-assisted plan at baseband offset `fb`.
fn td_sin_angle(plan: &SweepPlan, fb: f64) -> f64 {
    let cfg = plan.config();
    let (w, f0) = (cfg.bandwidth(), cfg.lowest_freq());
    let fm = f0 + fb;
    ((w - fb) * f0 * plan.start().angle().sin() + (w + f0) * fb * plan.end().angle().sin())
        / (w * fm)
}

/// Squint angle at baseband offset `fb ∈ [0, W]`:
///
/// `sin θ_m = [(W − f̃)·f0·sin θ0 + (W + f0)·f̃·sin θc] / (W·(f0 + f̃))`.
pub fn td_squint_angle(plan: &SweepPlan, fb: f64) -> Result<f64> {
    check_baseband("td_squint_angle", fb, plan.config().bandwidth())?;
    let s = td_sin_angle(plan, fb);
    if s.abs() > 1.0 {
        if s.abs() - 1.0 <= 1e-12 {
            warn!("clamping arcsin argument {s} to ±1");
            return Ok(s.signum() * FRAC_PI_2);
        }
        return Err(Error::Domain {
            op: "td_squint_angle",
            reason: format!("arcsin argument {s} outside [-1, 1]"),
        });
    }
    Ok(s.asin())
}

/// Squint range at baseband offset `fb ∈ [0, W]`:
///
/// `1/r_m = (1/r0)·((W−f̃)f0/(W·f_m))·cos²θ0/cos²θ_m + (1/rc)·((W+f0)f̃/(W·f_m))·cos²θc/cos²θ_m`.
pub fn td_squint_distance(plan: &SweepPlan, fb: f64) -> Result<f64> {
    let cfg = plan.config();
    check_baseband("td_squint_distance", fb, cfg.bandwidth())?;
    let (w, f0) = (cfg.bandwidth(), cfg.lowest_freq());
    let fm = f0 + fb;
    let s = td_sin_angle(plan, fb).clamp(-1.0, 1.0);
    let cos2_m = 1.0 - s * s;
    if cos2_m <= 0.0 {
        return Err(Error::Domain {
            op: "td_squint_distance",
            reason: "squint angle reaches ±90°".into(),
        });
    }
    let (start, end) = (plan.start(), plan.end());
    let c0 = start.angle().cos().powi(2);
    let cc = end.angle().cos().powi(2);
    let inv = (1.0 / start.range()) * ((w - fb) * f0 / (w * fm)) * c0 / cos2_m
        + (1.0 / end.range()) * ((w + f0) * fb / (w * fm)) * cc / cos2_m;
    Ok(1.0 / inv)
}

/// Closed-form squint point for subcarrier `m` of a TD-assisted plan.
pub fn td_squint_point(plan: &SweepPlan, m: usize) -> Result<SquintPoint> {
    let fb = plan.config().baseband_freq(m);
    Ok(SquintPoint {
        m,
        range: td_squint_distance(plan, fb)?,
        angle: td_squint_angle(plan, fb)?,
    })
}

/// The full `M + 1` point trajectory of a TD-assisted plan.
pub fn td_trajectory(plan: &SweepPlan) -> Result<Vec<SquintPoint>> {
    (0..=plan.config().num_subcarriers())
        .map(|m| td_squint_point(plan, m))
        .collect()
}

/// The `M + 1` point trajectory of a PS-only beamformer focused on `focus`.
pub fn ps_trajectory(focus: PolarPoint, config: &ArrayConfig) -> Result<Vec<SquintPoint>> {
    let f0 = config.lowest_freq();
    (0..=config.num_subcarriers())
        .map(|m| {
            let fm = config.subcarrier_freq(m);
            Ok(SquintPoint {
                m,
                range: squint_distance_ps(focus.range(), focus.angle(), f0, fm)?,
                angle: squint_angle_ps(focus.angle(), f0, fm),
            })
        })
        .collect()
}

/// Nearest subcarrier index for a continuous `f̃·M/W`, ties to the lower
/// index, clamped to `0..=M`.
pub fn round_subcarrier(x: f64, m_max: usize) -> usize {
    let r = (x - 0.5).ceil();
    r.clamp(0.0, m_max as f64) as usize
}

fn check_span(target: f64, a: f64, b: f64) -> Result<()> {
    let (lo, hi) = (a.min(b), a.max(b));
    let tol = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
    if target < lo - tol || target > hi + tol {
        return Err(Error::OutOfTrajectory { target, lo, hi });
    }
    Ok(())
}

/// Subcarrier whose closed-form squint angle is nearest `theta`.
///
/// The angle law is linear-fractional in `f̃`, so the inverse is
/// `f̃ = W·f0·(sin θ0 − sin θ) / (W·sin θ + f0·sin θ0 − (W+f0)·sin θc)`.
pub fn subcarrier_for_angle(theta: f64, plan: &SweepPlan) -> Result<usize> {
    let cfg = plan.config();
    let (w, f0, m_max) = (cfg.bandwidth(), cfg.lowest_freq(), cfg.num_subcarriers());
    let (t0, tc) = (plan.start().angle(), plan.end().angle());
    check_span(theta, t0, tc)?;
    let (s0, sc, s) = (t0.sin(), tc.sin(), theta.sin());
    if s0 == sc {
        return Ok(0);
    }
    let fb = w * f0 * (s0 - s) / (w * s + f0 * s0 - (w + f0) * sc);
    Ok(round_subcarrier(fb * m_max as f64 / w, m_max))
}

/// Subcarrier whose closed-form squint range is nearest `range` on a radial
/// plan (equal start and end angles).
///
/// The cosine factors cancel, leaving
/// `f̃ = W·f0·(1/r0 − 1/r) / (W/r + f0/r0 − (W+f0)/rc)`.
pub fn subcarrier_for_distance(range: f64, plan: &SweepPlan) -> Result<usize> {
    let cfg = plan.config();
    let (w, f0, m_max) = (cfg.bandwidth(), cfg.lowest_freq(), cfg.num_subcarriers());
    if (plan.start().angle() - plan.end().angle()).abs() > 1e-12 {
        return Err(Error::Domain {
            op: "subcarrier_for_distance",
            reason: "plan is not radial".into(),
        });
    }
    let (r0, rc) = (plan.start().range(), plan.end().range());
    check_span(range, r0, rc)?;
    if r0 == rc {
        return Ok(0);
    }
    let fb = w * f0 * (1.0 / r0 - 1.0 / range) / (w / range + f0 / r0 - (w + f0) / rc);
    Ok(round_subcarrier(fb * m_max as f64 / w, m_max))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    power: f64,
    range: f64,
    angle: f64,
}

impl Candidate {
    /// Higher power first; ties go to the smaller range, then smaller angle.
    fn cmp_rank(&self, other: &Self) -> Ordering {
        other
            .power
            .total_cmp(&self.power)
            .then(self.range.total_cmp(&other.range))
            .then(self.angle.total_cmp(&other.angle))
    }

    fn best(a: Self, b: Self) -> Self {
        if b.cmp_rank(&a) == Ordering::Less {
            b
        } else {
            a
        }
    }
}

/// Phase-coherent gain `|Σ_n e^{+j2πf·r_n/c}·w_n|` seen at `(r, θ)`.
pub(crate) fn coherent_gain(offsets: &[f64], spacing: f64, freq: f64, weights: &[Complex64], r: f64, th: f64) -> f64 {
    let (x, y) = (r * th.cos(), r * th.sin());
    offsets
        .iter()
        .zip(weights)
        .map(|(&n, w)| {
            let rn = x.hypot(y - n * spacing);
            phasor(-freq * rn / SPEED_OF_LIGHT) * w
        })
        .sum::<Complex64>()
        .norm()
}

fn scan(
    ranges: &[f64],
    angles: &[f64],
    eval: &(impl Fn(f64, f64) -> f64 + Sync),
) -> Option<Candidate> {
    ranges
        .par_iter()
        .filter_map(|&r| {
            angles
                .iter()
                .map(|&a| Candidate {
                    power: eval(r, a),
                    range: r,
                    angle: a,
                })
                .reduce(Candidate::best)
        })
        .reduce_with(Candidate::best)
}

/// Coarse scan of `grid`, then a 10× finer re-scan of the ±2.5-step window
/// around the coarse winner, clipped to the grid bounds.
fn grid_argmax(grid: &PolarGrid, eval: impl Fn(f64, f64) -> f64 + Sync) -> Result<Candidate> {
    let ranges = grid.ranges();
    let angles = grid.angles();
    let coarse = scan(&ranges, &angles, &eval).ok_or(Error::EmptyGrid)?;

    let fine = |centre: f64, step: f64, lo: f64, hi: f64| -> Vec<f64> {
        let fstep = step / REFINE_FACTOR;
        let half = (REFINE_HALF_STEPS * REFINE_FACTOR).round() as i64;
        (-half..=half)
            .map(|k| centre + k as f64 * fstep)
            .filter(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12)
            .collect()
    };
    let fr = fine(coarse.range, grid.r_step, grid.r_min, grid.r_max);
    let fa: Vec<f64> = fine(coarse.angle, grid.theta_step, grid.theta_min, grid.theta_max)
        .into_iter()
        .filter(|t| t.abs() < FRAC_PI_2 - 1e-12)
        .collect();
    let refined = scan(&fr, &fa, &eval).unwrap_or(coarse);
    Ok(Candidate::best(coarse, refined))
}

fn focus_of(weights: &Weights, freq: f64, config: &ArrayConfig, grid: &PolarGrid) -> Result<(f64, f64)> {
    let offsets = antenna_index_grid(config);
    let spacing = config.spacing();
    let w = weights.entries();
    let best = grid_argmax(grid, |r, a| coherent_gain(&offsets, spacing, freq, w, r, a))?;
    Ok((best.range, best.angle))
}

/// Grid point maximizing the phase-coherent gain of subcarrier `m` on `plan`.
pub fn brute_force_focus(plan: &SweepPlan, m: usize, grid: &PolarGrid) -> Result<SquintPoint> {
    let cfg = plan.config();
    let (range, angle) = focus_of(&plan.weights(m), cfg.subcarrier_freq(m), cfg, grid)?;
    Ok(SquintPoint { m, range, angle })
}

/// Like [`brute_force_focus`] but without the fine re-scan: the best point
/// of `grid` itself.
pub fn brute_force_focus_coarse(plan: &SweepPlan, m: usize, grid: &PolarGrid) -> Result<SquintPoint> {
    let cfg = plan.config();
    let (offsets, spacing, freq) = (antenna_index_grid(cfg), cfg.spacing(), cfg.subcarrier_freq(m));
    let weights = plan.weights(m);
    let w = weights.entries();
    let best = scan(&grid.ranges(), &grid.angles(), &|r, a| coherent_gain(&offsets, spacing, freq, w, r, a))
        .ok_or(Error::EmptyGrid)?;
    Ok(SquintPoint {
        m,
        range: best.range,
        angle: best.angle,
    })
}

/// Grid point maximizing the gain at `freq` of the PS-only beamformer built
/// from `phase_profile` (no delay lines).
pub fn brute_force_focus_ps(
    phase_profile: &PhaseProfile,
    config: &ArrayConfig,
    freq: f64,
    grid: &PolarGrid,
) -> Result<PolarPoint> {
    let (range, angle) = focus_of(&ps_beamformer(phase_profile), freq, config, grid)?;
    PolarPoint::new(range, angle)
}
