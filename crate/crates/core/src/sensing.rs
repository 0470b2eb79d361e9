//! Two-stage squint-assisted localization.
//!
//! Stage one sweeps the angle sector once: the lowest carrier focuses on
//! `(r_mid, θ_max)`, the highest on `(r_mid, θ_min)`, and every user feeds
//! back its strongest subcarrier, which maps to an angle. Users sharing a
//! feedback index form one angle group. Stage two runs one radial sweep per
//! group, from `(r_min, θ̂)` to `(r_max, θ̂)`, and maps each member's
//! feedback to a range.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{ArrayConfig, PolarPoint};
use crate::beamforming::SweepPlan;
use crate::rng::stream;
use crate::squint_math::{td_squint_angle, td_squint_distance};
use crate::{Error, Result};

/// Receiver noise variance; fixed.
pub const NOISE_VARIANCE: f64 = 1.0;

/// Default `r_mid` for the angle sweep, meters.
pub const DEFAULT_R_MID: f64 = 40.0;

/// Default half-width of the optional range-refinement sweep, meters.
pub const DEFAULT_REFINE_HALF_WIDTH: f64 = 5.0;

const STAGE_ANGLE: u64 = 1;
const STAGE_DISTANCE: u64 = 2;
const STAGE_REFINE: u64 = 3;

/// Sector the users are known to occupy. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingRange {
    pub theta_max: f64,
    pub theta_min: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub r_mid: f64,
}

impl SensingRange {
    pub fn new(theta_max: f64, theta_min: f64, r_min: f64, r_max: f64, r_mid: f64) -> Result<Self> {
        if !(theta_min < theta_max) {
            return Err(Error::invalid("sensing range", "need theta_min < theta_max"));
        }
        if theta_max.abs() >= std::f64::consts::FRAC_PI_2 || theta_min.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::invalid("sensing range", "angles must lie inside (-90°, 90°)"));
        }
        if !(0.0 < r_min && r_min < r_mid && r_mid < r_max) {
            return Err(Error::invalid(
                "sensing range",
                format!("need 0 < r_min < r_mid < r_max, got {r_min}, {r_mid}, {r_max}"),
            ));
        }
        Ok(Self {
            theta_max,
            theta_min,
            r_min,
            r_max,
            r_mid,
        })
    }

    /// ±60°, 3 m to 82 m, `r_mid` = 40 m.
    pub fn reference() -> Self {
        Self::new(60f64.to_radians(), (-60f64).to_radians(), 3.0, 82.0, DEFAULT_R_MID)
            .expect("valid reference range")
    }

    pub fn contains(&self, p: PolarPoint) -> bool {
        let tol = 1e-12;
        p.angle() >= self.theta_min - tol
            && p.angle() <= self.theta_max + tol
            && p.range() >= self.r_min - tol
            && p.range() <= self.r_max + tol
    }
}

/// Signal-to-noise ratio of a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    /// Per-antenna-element SNR in dB: the noiseless peak sample power,
    /// after the N-fold array gain, is `N·10^(dB/10)·σ²`.
    Db(f64),
    /// No noise and no random pilot phase.
    Noiseless,
}

impl Snr {
    pub fn is_noiseless(&self) -> bool {
        matches!(self, Snr::Noiseless)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: Snr,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            snr: Snr::Noiseless,
            seed: 0,
        }
    }

    pub fn db(snr_db: f64, seed: u64) -> Self {
        Self {
            snr: Snr::Db(snr_db),
            seed,
        }
    }
}

/// Power samples one user saw during a sweep, with its fed-back index.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementReport {
    pub user_id: u64,
    pub samples: Vec<f64>,
    /// Argmax of `samples`, lowest index on ties.
    pub feedback: usize,
}

/// A user to be localized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: u64,
    pub position: PolarPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub user_id: u64,
    /// Radians.
    pub angle: f64,
    /// Meters; `None` when only the angle stage ran.
    pub range: Option<f64>,
    pub angle_subcarrier: usize,
    pub distance_subcarrier: Option<usize>,
    /// Either stage fed back a band-edge tone, pinning the estimate to the
    /// sensing boundary.
    pub clamped: bool,
}

/// Users sharing one angle-stage feedback index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AngleGroup {
    pub subcarrier: usize,
    /// Indices into the input sequence, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationRun {
    pub estimates: Vec<LocalizationEstimate>,
    pub groups: Vec<AngleGroup>,
    pub sweep_count: usize,
    pub clamp_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProtocolOptions {
    /// Follow each coarse range estimate with a radial sweep over
    /// `[r̂ − Δ, r̂ + Δ]` (clipped to the sensing range).
    pub refine_half_width: Option<f64>,
}

/// Angle sweep from `(r_mid, θ_max)` at the lowest tone to `(r_mid, θ_min)` at the highest.
pub fn plan_angle_sweep(range: &SensingRange, config: &ArrayConfig) -> Result<SweepPlan> {
    Ok(SweepPlan::new(
        PolarPoint::new(range.r_mid, range.theta_max)?,
        PolarPoint::new(range.r_mid, range.theta_min)?,
        *config,
    ))
}

/// Radial sweep from `(r_min, θ̂)` to `(r_max, θ̂)`.
pub fn plan_distance_sweep(theta_hat: f64, range: &SensingRange, config: &ArrayConfig) -> Result<SweepPlan> {
    radial_plan(theta_hat, range.r_min, range.r_max, config)
}

fn radial_plan(theta: f64, r_lo: f64, r_hi: f64, config: &ArrayConfig) -> Result<SweepPlan> {
    Ok(SweepPlan::new(
        PolarPoint::new(r_lo, theta)?,
        PolarPoint::new(r_hi, theta)?,
        *config,
    ))
}

/// Index of the largest sample, lowest index on ties.
pub fn argmax_lowest(samples: &[f64]) -> usize {
    samples
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > samples[best] { i } else { best })
}

/// One user's view of one sweep.
///
/// Noiseless: `samples[m] = g̃(user, m)²`. Otherwise each tone gets a random
/// pilot phase `ψ_m` and circular Gaussian noise of variance σ²:
/// `samples[m] = |√ρ·g̃_m·e^{jψ_m} + n_m|²`, with ρ scaling the noiseless
/// peak to `N·SNR·σ²`.
pub fn simulate_measurement<R: Rng + ?Sized>(
    user: &User,
    plan: &SweepPlan,
    noise: &NoiseSpec,
    rng: &mut R,
) -> MeasurementReport {
    let cfg = plan.config();
    let amps = plan.amplitudes(user.position, cfg.path_loss());
    let samples: Vec<f64> = match noise.snr {
        Snr::Noiseless => amps.iter().map(|a| a * a).collect(),
        Snr::Db(db) => {
            let peak = amps.iter().fold(0.0f64, |m, a| m.max(a * a));
            let target = cfg.num_antennas() as f64 * 10f64.powf(db / 10.0) * NOISE_VARIANCE;
            let gain = if peak > 0.0 { (target / peak).sqrt() } else { 0.0 };
            let component = Normal::new(0.0, (NOISE_VARIANCE / 2.0).sqrt()).expect("finite sigma");
            amps.iter()
                .map(|&a| {
                    let psi = rng.random::<f64>() * std::f64::consts::TAU;
                    let (s, c) = psi.sin_cos();
                    let re = gain * a * c + component.sample(rng);
                    let im = gain * a * s + component.sample(rng);
                    re * re + im * im
                })
                .collect()
        }
    };
    let feedback = argmax_lowest(&samples);
    MeasurementReport {
        user_id: user.id,
        samples,
        feedback,
    }
}

/// Angle of the squint point of tone `m` on an angle sweep.
pub fn estimate_angle(m: usize, plan: &SweepPlan) -> Result<f64> {
    td_squint_angle(plan, plan.config().baseband_freq(m))
}

/// Range of the squint point of tone `m` on a radial sweep.
pub fn estimate_distance(m: usize, plan: &SweepPlan) -> Result<f64> {
    td_squint_distance(plan, plan.config().baseband_freq(m))
}

/// Groups users by equal angle-stage feedback index, ordered by index.
pub fn group_angles(feedback: &[usize]) -> Vec<AngleGroup> {
    let mut order: Vec<usize> = (0..feedback.len()).collect();
    order.sort_by_key(|&i| (feedback[i], i));
    let mut groups: Vec<AngleGroup> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if g.subcarrier == feedback[i] => g.members.push(i),
            _ => groups.push(AngleGroup {
                subcarrier: feedback[i],
                members: vec![i],
            }),
        }
    }
    groups
}

/// Runs both stages for every user: one angle sweep plus one radial sweep
/// per angle group (plus one refinement sweep per user when enabled).
pub fn localize_all(
    users: &[User],
    range: &SensingRange,
    config: &ArrayConfig,
    noise: &NoiseSpec,
    options: &ProtocolOptions,
) -> Result<LocalizationRun> {
    if let Some(u) = users.iter().find(|u| !range.contains(u.position)) {
        return Err(Error::invalid(
            "user",
            format!(
                "user {} at ({:.4} m, {:.4}°) lies outside the sensing range",
                u.id,
                u.position.range(),
                u.position.angle_deg()
            ),
        ));
    }
    let m_max = config.num_subcarriers();
    let edge = |m: usize| m == 0 || m == m_max;

    let angle_plan = plan_angle_sweep(range, config)?;
    let angle_feedback: Vec<usize> = users
        .par_iter()
        .map(|u| {
            let mut rng = stream(noise.seed, &[u.id, STAGE_ANGLE]);
            simulate_measurement(u, &angle_plan, noise, &mut rng).feedback
        })
        .collect();
    let angles: Vec<f64> = angle_feedback
        .iter()
        .map(|&m| estimate_angle(m, &angle_plan).map(|a| a.clamp(range.theta_min, range.theta_max)))
        .collect::<Result<_>>()?;

    let groups = group_angles(&angle_feedback);
    let mut estimates: Vec<LocalizationEstimate> = users
        .iter()
        .zip(&angle_feedback)
        .zip(&angles)
        .map(|((u, &m), &a)| LocalizationEstimate {
            user_id: u.id,
            angle: a,
            range: None,
            angle_subcarrier: m,
            distance_subcarrier: None,
            clamped: edge(m),
        })
        .collect();

    let mut sweep_count = 1;
    for group in &groups {
        let theta_hat = angles[group.members[0]];
        let plan = plan_distance_sweep(theta_hat, range, config)?;
        sweep_count += 1;
        let found: Vec<(usize, usize, f64)> = group
            .members
            .par_iter()
            .map(|&i| {
                let u = &users[i];
                let mut rng = stream(noise.seed, &[u.id, STAGE_DISTANCE]);
                let m = simulate_measurement(u, &plan, noise, &mut rng).feedback;
                estimate_distance(m, &plan).map(|r| (i, m, r.clamp(range.r_min, range.r_max)))
            })
            .collect::<Result<_>>()?;
        for (i, m, r) in found {
            let e = &mut estimates[i];
            e.range = Some(r);
            e.distance_subcarrier = Some(m);
            e.clamped |= edge(m);
        }
    }

    if let Some(half) = options.refine_half_width {
        let refined: Vec<Option<f64>> = users
            .par_iter()
            .zip(&estimates)
            .map(|(u, e)| {
                let coarse = e.range.expect("distance stage ran");
                let lo = (coarse - half).max(range.r_min);
                let hi = (coarse + half).min(range.r_max);
                if hi - lo <= f64::EPSILON * hi {
                    return Ok(None);
                }
                let plan = radial_plan(e.angle, lo, hi, config)?;
                let mut rng = stream(noise.seed, &[u.id, STAGE_REFINE]);
                let m = simulate_measurement(u, &plan, noise, &mut rng).feedback;
                estimate_distance(m, &plan).map(|r| Some(r.clamp(range.r_min, range.r_max)))
            })
            .collect::<Result<_>>()?;
        for (e, r) in estimates.iter_mut().zip(refined) {
            if let Some(r) = r {
                e.range = Some(r);
                sweep_count += 1;
            }
        }
    }

    let clamp_count = estimates.iter().filter(|e| e.clamped).count();
    Ok(LocalizationRun {
        estimates,
        groups,
        sweep_count,
        clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::squint_math::{subcarrier_for_angle, td_squint_point};
    use approx::assert_abs_diff_eq;

    fn deg(r: f64, d: f64) -> PolarPoint {
        PolarPoint::from_degrees(r, d).unwrap()
    }

    fn user(id: u64, r: f64, d: f64) -> User {
        User {
            id,
            position: deg(r, d),
        }
    }

    #[test]
    fn range_validation() {
        assert!(SensingRange::new(0.1, 0.2, 3.0, 82.0, 40.0).is_err());
        assert!(SensingRange::new(1.0, -1.0, 3.0, 82.0, 90.0).is_err());
        assert!(SensingRange::new(1.0, -1.0, 3.0, 82.0, 40.0).is_ok());
    }

    #[test]
    fn angle_plan_matches_reference_setup() {
        let plan = plan_angle_sweep(&SensingRange::reference(), &ArrayConfig::default()).unwrap();
        assert_eq!(plan.start(), deg(40.0, 60.0));
        assert_eq!(plan.end(), deg(40.0, -60.0));
    }

    #[test]
    fn degenerate_single_angle_plan() {
        let cfg = ArrayConfig::default();
        let plan = SweepPlan::new(deg(40.0, 20.0), deg(40.0, 20.0), cfg);
        for m in [0, 300, 2048] {
            assert_abs_diff_eq!(estimate_angle(m, &plan).unwrap(), 20f64.to_radians(), epsilon = 1e-12);
        }
        let fixed = radial_plan(0.3, 10.0, 10.0, &cfg).unwrap();
        for m in [0, 1024, 2048] {
            assert_abs_diff_eq!(estimate_distance(m, &fixed).unwrap(), 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn radial_plan_keeps_angle() {
        let range = SensingRange::reference();
        let th = 30.0092f64.to_radians();
        let plan = plan_distance_sweep(th, &range, &ArrayConfig::default()).unwrap();
        assert_eq!(plan.start(), PolarPoint::new(3.0, th).unwrap());
        assert_eq!(plan.end(), PolarPoint::new(82.0, th).unwrap());
        for m in (0..=2048).step_by(128) {
            assert_abs_diff_eq!(estimate_angle(m, &plan).unwrap(), th, epsilon = 1e-12);
        }
    }

    #[test]
    fn noiseless_reference_user() {
        let cfg = ArrayConfig::default();
        let range = SensingRange::reference();
        let plan = plan_angle_sweep(&range, &cfg).unwrap();
        let u = user(0, 30.0, 30.0);
        let mut rng = stream(0, &[]);
        let rep = simulate_measurement(&u, &plan, &NoiseSpec::noiseless(), &mut rng);
        assert_eq!(rep.samples.len(), 2049);
        assert_eq!(rep.feedback, 401);
        assert_abs_diff_eq!(estimate_angle(401, &plan).unwrap().to_degrees(), 30.0092, epsilon = 1e-3);
        assert_abs_diff_eq!(estimate_angle(0, &plan).unwrap(), range.theta_max, epsilon = 1e-12);

        let radial = plan_distance_sweep(30.0092f64.to_radians(), &range, &cfg).unwrap();
        let rep = simulate_measurement(&u, &radial, &NoiseSpec::noiseless(), &mut rng);
        assert_eq!(rep.feedback, 1900);
        assert_abs_diff_eq!(estimate_distance(2048, &radial).unwrap(), 82.0, epsilon = 1e-9);
    }

    #[test]
    fn user_on_squint_point_feeds_back_its_tone() {
        let cfg = ArrayConfig::default();
        let plan = plan_angle_sweep(&SensingRange::reference(), &cfg).unwrap();
        for k in [150, 1024, 1700] {
            let sp = td_squint_point(&plan, k).unwrap();
            let u = User {
                id: 1,
                position: PolarPoint::new(sp.range, sp.angle).unwrap(),
            };
            let rep = simulate_measurement(&u, &plan, &NoiseSpec::noiseless(), &mut stream(1, &[]));
            assert_eq!(rep.feedback, k);
        }
    }

    #[test]
    fn high_snr_converges_to_noiseless_feedback() {
        let cfg = ArrayConfig::default();
        let plan = plan_angle_sweep(&SensingRange::reference(), &cfg).unwrap();
        let u = user(3, 30.0, 30.0);
        for seed in 0..100 {
            let noise = NoiseSpec::db(120.0, seed);
            let rep = simulate_measurement(&u, &plan, &noise, &mut stream(seed, &[]));
            assert_eq!(rep.feedback, 401, "seed {seed}");
        }
    }

    #[test]
    fn measurements_are_seed_deterministic() {
        let cfg = ArrayConfig::default();
        let plan = plan_angle_sweep(&SensingRange::reference(), &cfg).unwrap();
        let u = user(5, 20.0, -10.0);
        let noise = NoiseSpec::db(0.0, 9);
        let a = simulate_measurement(&u, &plan, &noise, &mut stream(9, &[5]));
        let b = simulate_measurement(&u, &plan, &noise, &mut stream(9, &[5]));
        assert_eq!(a, b);
        let c = simulate_measurement(&u, &plan, &noise, &mut stream(10, &[5]));
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn grouping_rules() {
        assert_eq!(
            group_angles(&[7, 3, 7]),
            vec![
                AngleGroup { subcarrier: 3, members: vec![1] },
                AngleGroup { subcarrier: 7, members: vec![0, 2] },
            ]
        );
        assert_eq!(group_angles(&[1, 2, 3]).len(), 3);
        assert!(group_angles(&[]).is_empty());

        // With M = 64 two users 0.01° apart land on the same tone.
        let cfg = ArrayConfig::default().with_num_subcarriers(64).unwrap();
        let plan = plan_angle_sweep(&SensingRange::reference(), &cfg).unwrap();
        let a = subcarrier_for_angle(10f64.to_radians(), &plan).unwrap();
        let b = subcarrier_for_angle(10.01f64.to_radians(), &plan).unwrap();
        assert_eq!(group_angles(&[a, b]).len(), 1);
    }

    #[test]
    fn sweep_counts() {
        let cfg = ArrayConfig::default();
        let range = SensingRange::reference();
        let opts = ProtocolOptions::default();
        let one = localize_all(&[user(0, 30.0, 30.0)], &range, &cfg, &NoiseSpec::noiseless(), &opts).unwrap();
        assert_eq!(one.sweep_count, 2);
        let e = one.estimates[0];
        assert_eq!(e.angle_subcarrier, 401);
        assert_eq!(e.distance_subcarrier, Some(1900));

        let three = [user(0, 10.0, 20.0), user(1, 50.0, 20.0), user(2, 30.0, -40.0)];
        let run = localize_all(&three, &range, &cfg, &NoiseSpec::noiseless(), &opts).unwrap();
        assert_eq!(run.groups.len(), 2);
        assert_eq!(run.sweep_count, 3);

        let distinct: Vec<User> = (0..5).map(|i| user(i, 25.0, -50.0 + 25.0 * i as f64)).collect();
        let run = localize_all(&distinct, &range, &cfg, &NoiseSpec::noiseless(), &opts).unwrap();
        assert_eq!(run.sweep_count, 1 + 5);
    }

    #[test]
    fn outside_users_are_rejected() {
        let r = localize_all(
            &[user(0, 90.0, 0.0)],
            &SensingRange::reference(),
            &ArrayConfig::default(),
            &NoiseSpec::noiseless(),
            &ProtocolOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn refinement_does_not_hurt_reference_user() {
        let cfg = ArrayConfig::default();
        let range = SensingRange::reference();
        let users = [user(0, 30.0, 30.0)];
        let coarse = localize_all(&users, &range, &cfg, &NoiseSpec::noiseless(), &ProtocolOptions::default()).unwrap();
        let fine = localize_all(
            &users,
            &range,
            &cfg,
            &NoiseSpec::noiseless(),
            &ProtocolOptions { refine_half_width: Some(DEFAULT_REFINE_HALF_WIDTH) },
        )
        .unwrap();
        assert_eq!(fine.sweep_count, 3);
        let ec = (coarse.estimates[0].range.unwrap() - 30.0).abs();
        let ef = (fine.estimates[0].range.unwrap() - 30.0).abs();
        assert!(ef <= ec, "refined {ef} vs coarse {ec}");
    }
}
