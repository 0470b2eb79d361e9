//! Experiment drivers: trajectory tables, gain heatmaps, per-user power
//! curves and Monte Carlo RMSE studies.
//!
//! Monte Carlo trials run in parallel but every trial draws from its own
//! seeded stream and results are summed in trial order, so output is
//! bit-identical for any worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{antenna_index_grid, ArrayConfig, PolarPoint};
use crate::beamforming::SweepPlan;
use crate::rng::{derive_seed, stream};
use crate::sensing::{
    estimate_angle, estimate_distance, localize_all, plan_angle_sweep, plan_distance_sweep, NoiseSpec,
    ProtocolOptions, SensingRange, Snr, User,
};
use crate::squint_math::{
    coherent_gain, ps_trajectory, subcarrier_for_angle, subcarrier_for_distance, td_trajectory, PolarGrid,
};
use crate::{Error, Result};

const LABEL_POSITIONS: u64 = 0x706f73;
const LABEL_NOISE: u64 = 0x6e6f69;

/// One subcarrier's squint point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub m: usize,
    /// Hz.
    pub freq: f64,
    /// Radians.
    pub angle: f64,
    pub range: f64,
}

fn rows(points: Vec<crate::squint_math::SquintPoint>, cfg: &ArrayConfig) -> Vec<TrajectoryRow> {
    points
        .into_iter()
        .map(|p| TrajectoryRow {
            m: p.m,
            freq: cfg.subcarrier_freq(p.m),
            angle: p.angle,
            range: p.range,
        })
        .collect()
}

/// Closed-form squint points of a delay-assisted sweep, `m = 0..=M`.
pub fn trajectory_export(plan: &SweepPlan) -> Result<Vec<TrajectoryRow>> {
    Ok(rows(td_trajectory(plan)?, plan.config()))
}

/// Squint points of a phase-shifter-only beam focused at `focus` for `f0`.
pub fn ps_trajectory_export(focus: PolarPoint, config: &ArrayConfig) -> Result<Vec<TrajectoryRow>> {
    Ok(rows(ps_trajectory(focus, config)?, config))
}

/// `(min t_n, max t_n)` of the plan's delay profile, seconds.
pub fn delay_range_report(plan: &SweepPlan) -> (f64, f64) {
    plan.delay_profile().range()
}

/// Per-subcarrier heatmaps of phase-coherent gain, each scaled to peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    grid: PolarGrid,
    ranges: Vec<f64>,
    angles: Vec<f64>,
    subcarriers: Vec<usize>,
    /// One row-major matrix per subcarrier: row = range, column = angle.
    matrices: Vec<Vec<f64>>,
}

impl GainMap {
    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn subcarriers(&self) -> &[usize] {
        &self.subcarriers
    }

    pub fn matrix(&self, k: usize) -> &[f64] {
        &self.matrices[k]
    }

    pub fn value(&self, k: usize, row: usize, col: usize) -> f64 {
        self.matrices[k][row * self.angles.len() + col]
    }

    /// Brightest cell of matrix `k` as `(range, angle)`. Ties go to the
    /// smaller range, then the smaller angle.
    pub fn argmax(&self, k: usize) -> (f64, f64) {
        let cols = self.angles.len();
        let mut best = 0;
        for (i, &v) in self.matrices[k].iter().enumerate() {
            if v > self.matrices[k][best] {
                best = i;
            }
        }
        (self.ranges[best / cols], self.angles[best % cols])
    }
}

/// Gain of each selected subcarrier at every grid point, peak-normalized
/// per subcarrier. Path loss is left out so the map shows focusing only.
pub fn gain_map(plan: &SweepPlan, grid: &PolarGrid, subcarriers: &[usize]) -> Result<GainMap> {
    if subcarriers.is_empty() {
        return Err(Error::invalid("gain map", "subcarrier subset is empty"));
    }
    let cfg = plan.config();
    if let Some(&m) = subcarriers.iter().find(|&&m| m > cfg.num_subcarriers()) {
        return Err(Error::invalid(
            "gain map",
            format!("subcarrier {m} exceeds M = {}", cfg.num_subcarriers()),
        ));
    }
    let ranges = grid.ranges();
    let angles = grid.angles();
    if ranges.is_empty() || angles.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let offsets = antenna_index_grid(cfg);
    let matrices = subcarriers
        .iter()
        .map(|&m| {
            let w = plan.weights(m);
            let freq = cfg.subcarrier_freq(m);
            let raw: Vec<f64> = ranges
                .par_iter()
                .flat_map_iter(|&r| {
                    angles
                        .iter()
                        .map(|&a| coherent_gain(&offsets, cfg.spacing(), freq, w.entries(), r, a))
                        .collect::<Vec<_>>()
                })
                .collect();
            let peak = raw.iter().fold(0.0f64, |p, &v| p.max(v));
            if peak > 0.0 {
                raw.into_iter().map(|v| v / peak).collect()
            } else {
                raw
            }
        })
        .collect();
    Ok(GainMap {
        grid: *grid,
        ranges,
        angles,
        subcarriers: subcarriers.to_vec(),
        matrices,
    })
}

/// Noiseless received power of `user` on every subcarrier of `plan`,
/// divided by its peak.
pub fn user_power_curve(user: PolarPoint, plan: &SweepPlan) -> Vec<(usize, f64)> {
    let power: Vec<f64> = plan
        .amplitudes(user, plan.config().path_loss())
        .into_iter()
        .map(|a| a * a)
        .collect();
    let peak = power.iter().fold(0.0f64, |p, &v| p.max(v));
    power
        .into_iter()
        .enumerate()
        .map(|(m, p)| (m, if peak > 0.0 { p / peak } else { 0.0 }))
        .collect()
}

/// How users are placed in each Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Placement {
    /// The same users every trial; only noise changes.
    Fixed { users: Vec<PolarPoint> },
    /// `users` users at one range, angles uniform over the sector.
    AngleStudy { range: f64, users: usize },
    /// `users` users at one angle (radians), ranges uniform over the range span.
    DistanceStudy { angle: f64, users: usize },
    /// Angles and ranges both uniform over the sensing range.
    Uniform { users: usize },
}

impl Placement {
    /// Users of `trial`; independent of the SNR.
    pub fn draw(&self, range: &SensingRange, seed: u64, trial: u64) -> Result<Vec<User>> {
        let mut rng = stream(seed, &[LABEL_POSITIONS, trial]);
        let theta = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(range.theta_min..=range.theta_max);
        let points: Vec<PolarPoint> = match self {
            Placement::Fixed { users } => users.clone(),
            Placement::AngleStudy { range: r, users } => (0..*users)
                .map(|_| PolarPoint::new(*r, theta(&mut rng)))
                .collect::<Result<_>>()?,
            Placement::DistanceStudy { angle, users } => (0..*users)
                .map(|_| PolarPoint::new(rng.random_range(range.r_min..=range.r_max), *angle))
                .collect::<Result<_>>()?,
            Placement::Uniform { users } => (0..*users)
                .map(|_| {
                    let a = theta(&mut rng);
                    PolarPoint::new(rng.random_range(range.r_min..=range.r_max), a)
                })
                .collect::<Result<_>>()?,
        };
        Ok(points
            .into_iter()
            .enumerate()
            .map(|(i, position)| User { id: i as u64, position })
            .collect())
    }
}

/// Everything an RMSE study needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseStudy {
    pub label: String,
    pub placement: Placement,
    pub snrs: Vec<Snr>,
    pub trials: usize,
    pub seed: u64,
    pub range: SensingRange,
    pub config: ArrayConfig,
    pub options: ProtocolOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseResult {
    pub snr: Snr,
    pub label: String,
    pub angle_rmse_deg: f64,
    pub distance_rmse_m: f64,
    pub trials: usize,
    pub clamps: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    angle_sq: f64,
    distance_sq: f64,
    count: usize,
    clamps: usize,
}

impl Tally {
    fn add(mut self, other: Tally) -> Tally {
        self.angle_sq += other.angle_sq;
        self.distance_sq += other.distance_sq;
        self.count += other.count;
        self.clamps += other.clamps;
        self
    }

    fn rmse(&self) -> (f64, f64) {
        if self.count == 0 {
            return (0.0, 0.0);
        }
        let n = self.count as f64;
        ((self.angle_sq / n).sqrt(), (self.distance_sq / n).sqrt())
    }
}

/// Runs `trials` independent draws per SNR and reports RMSE over all users
/// and trials. Each trial's placement and base noise stream are shared by
/// every SNR, so the SNR axis compares like with like.
pub fn rmse_experiment(study: &RmseStudy) -> Result<Vec<RmseResult>> {
    if study.trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    if study.snrs.is_empty() {
        return Err(Error::invalid("snr_db", "need at least one SNR"));
    }
    let draws: Vec<Vec<User>> = (0..study.trials as u64)
        .map(|t| study.placement.draw(&study.range, study.seed, t))
        .collect::<Result<_>>()?;

    study
        .snrs
        .iter()
        .map(|&snr| {
            let per_trial: Vec<Tally> = draws
                .par_iter()
                .enumerate()
                .map(|(t, users)| {
                    let noise = NoiseSpec {
                        snr,
                        seed: derive_seed(study.seed, &[LABEL_NOISE, t as u64]),
                    };
                    let run = localize_all(users, &study.range, &study.config, &noise, &study.options)?;
                    let mut tally = Tally {
                        clamps: run.clamp_count,
                        ..Tally::default()
                    };
                    for (u, e) in users.iter().zip(&run.estimates) {
                        let da = (e.angle - u.position.angle()).to_degrees();
                        let dr = e.range.expect("distance stage ran") - u.position.range();
                        tally.angle_sq += da * da;
                        tally.distance_sq += dr * dr;
                        tally.count += 1;
                    }
                    Ok(tally)
                })
                .collect::<Result<_>>()?;
            let total = per_trial.into_iter().fold(Tally::default(), Tally::add);
            let (a, d) = total.rmse();
            Ok(RmseResult {
                snr,
                label: study.label.clone(),
                angle_rmse_deg: a,
                distance_rmse_m: d,
                trials: study.trials,
                clamps: total.clamps,
            })
        })
        .collect()
}

/// RMSE left by the finite set of squint points alone: each user is
/// snapped to the nearest subcarrier of the angle sweep (for angle) and of
/// the radial sweep through its true angle (for range).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationFloor {
    pub angle_rmse_deg: f64,
    pub distance_rmse_m: f64,
}

/// [`QuantizationFloor`] over the same user draws [`rmse_experiment`] uses.
pub fn quantization_floor(study: &RmseStudy) -> Result<QuantizationFloor> {
    if study.trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    let angle_plan = plan_angle_sweep(&study.range, &study.config)?;
    let mut total = Tally::default();
    for t in 0..study.trials as u64 {
        for u in study.placement.draw(&study.range, study.seed, t)? {
            let (r, th) = (u.position.range(), u.position.angle());
            let qa = estimate_angle(subcarrier_for_angle(th, &angle_plan)?, &angle_plan)?;
            let radial = plan_distance_sweep(th, &study.range, &study.config)?;
            let qr = estimate_distance(subcarrier_for_distance(r, &radial)?, &radial)?;
            let da = (qa - th).to_degrees();
            total.angle_sq += da * da;
            total.distance_sq += (qr - r) * (qr - r);
            total.count += 1;
        }
    }
    let (a, d) = total.rmse();
    Ok(QuantizationFloor {
        angle_rmse_deg: a,
        distance_rmse_m: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::squint_math::brute_force_focus_coarse;
    use approx::assert_abs_diff_eq;

    fn deg(r: f64, d: f64) -> PolarPoint {
        PolarPoint::from_degrees(r, d).unwrap()
    }

    fn argmax(curve: &[(usize, f64)]) -> usize {
        curve.iter().fold(0, |b, &(m, v)| if v > curve[b].1 { m } else { b })
    }

    #[test]
    fn trajectory_endpoints_and_t1() {
        let cfg = ArrayConfig::default();
        let plan = SweepPlan::new(deg(5.0, 85.0), deg(80.0, 85.0), cfg);
        let rows = trajectory_export(&plan).unwrap();
        assert_eq!(rows.len(), 2049);
        assert_abs_diff_eq!(rows[0].range, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rows[2048].range, 80.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rows[2048].freq, 33e9, epsilon = 1e-3);
        for w in rows.windows(2) {
            assert_abs_diff_eq!(w[1].angle.to_degrees(), 85.0, epsilon = 1e-9);
            assert!(w[1].range > w[0].range);
        }
    }

    #[test]
    fn ps_only_export_small_grid() {
        let cfg = ArrayConfig::half_wavelength(128, 30e9, 6e9, 16).unwrap();
        let rows = ps_trajectory_export(deg(40.0, 60.0), &cfg).unwrap();
        assert_eq!(rows.len(), 17);
        assert_abs_diff_eq!(rows[0].angle.to_degrees(), 60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rows[16].angle.to_degrees(), 46.19, epsilon = 0.01);
    }

    #[test]
    fn delay_ranges() {
        let cfg = ArrayConfig::default();
        let t2 = SweepPlan::new(deg(30.0, -60.0), deg(50.0, -60.0), cfg);
        let (lo, hi) = delay_range_report(&t2);
        assert_abs_diff_eq!(lo, 0.8324e-6, epsilon = 2e-9);
        assert_abs_diff_eq!(hi, 0.8342e-6, epsilon = 2e-9);

        let p = deg(20.0, 10.0);
        let fixed = SweepPlan::new(p, p, cfg);
        let (lo, hi) = delay_range_report(&fixed);
        let d: Vec<f64> = crate::array_model::antenna_distances(p, &cfg)
            .into_iter()
            .map(|r| r / crate::array_model::SPEED_OF_LIGHT)
            .collect();
        let spread = d.iter().cloned().fold(f64::MIN, f64::max) - d.iter().cloned().fold(f64::MAX, f64::min);
        assert_abs_diff_eq!(hi - lo, spread, epsilon = 1e-15);
    }

    #[test]
    fn small_gain_map_squints_across_sector() {
        let cfg = ArrayConfig::default().with_num_subcarriers(8).unwrap();
        let plan = SweepPlan::new(deg(10.0, 30.0), deg(10.0, -30.0), cfg);
        let grid = PolarGrid::from_degrees(3.17, 30.0, 1.0, -40.0, 40.0, 1.0).unwrap();
        let subs: Vec<usize> = (0..=8).collect();
        let map = gain_map(&plan, &grid, &subs).unwrap();
        let mut last = f64::INFINITY;
        for (k, &sub) in subs.iter().enumerate() {
            let m = map.matrix(k);
            assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(m.iter().cloned().fold(0.0, f64::max), 1.0);
            let (r, a) = map.argmax(k);
            assert!(a < last, "subcarrier {k}: {a} !< {last}");
            last = a;
            let oracle = brute_force_focus_coarse(&plan, sub, &grid).unwrap();
            assert_eq!((r, a), (oracle.range, oracle.angle));
        }
        assert_abs_diff_eq!(map.argmax(0).1.to_degrees(), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(map.argmax(8).1.to_degrees(), -30.0, epsilon = 1e-9);
    }

    #[test]
    fn gain_map_single_point_and_errors() {
        let cfg = ArrayConfig::default();
        let plan = SweepPlan::new(deg(10.0, 30.0), deg(10.0, -30.0), cfg);
        let grid = PolarGrid::from_degrees(10.0, 10.0, 1.0, 30.0, 30.0, 1.0).unwrap();
        let map = gain_map(&plan, &grid, &[0]).unwrap();
        assert_eq!(map.matrix(0), &[1.0]);
        assert!(gain_map(&plan, &grid, &[]).is_err());
        assert!(gain_map(&plan, &grid, &[4000]).is_err());
    }

    #[test]
    fn power_curves() {
        let cfg = ArrayConfig::default();
        let range = SensingRange::reference();
        let angle_plan = plan_angle_sweep(&range, &cfg).unwrap();
        let curve = user_power_curve(deg(30.0, 30.0), &angle_plan);
        assert_eq!(curve.len(), 2049);
        assert_eq!(argmax(&curve), 401);
        assert_eq!(argmax(&user_power_curve(angle_plan.start(), &angle_plan)), 0);

        let radial = plan_distance_sweep(30f64.to_radians(), &range, &cfg).unwrap();
        let peaks: Vec<usize> = [5.0, 15.0, 30.0]
            .iter()
            .map(|&r| argmax(&user_power_curve(deg(r, 30.0), &radial)))
            .collect();
        assert!(peaks[0] < peaks[1] && peaks[1] < peaks[2], "{peaks:?}");
    }

    fn study(placement: Placement, snrs: Vec<Snr>, trials: usize) -> RmseStudy {
        RmseStudy {
            label: "test".into(),
            placement,
            snrs,
            trials,
            seed: 11,
            range: SensingRange::reference(),
            config: ArrayConfig::default(),
            options: ProtocolOptions::default(),
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let s = study(Placement::Uniform { users: 1 }, vec![Snr::Noiseless], 0);
        assert!(rmse_experiment(&s).is_err());
        assert!(quantization_floor(&s).is_err());
    }

    #[test]
    fn draws_stay_in_range_and_repeat() {
        let r = SensingRange::reference();
        let p = Placement::Uniform { users: 6 };
        let a = p.draw(&r, 3, 0).unwrap();
        assert_eq!(a, p.draw(&r, 3, 0).unwrap());
        assert_ne!(a, p.draw(&r, 3, 1).unwrap());
        assert!(a.iter().all(|u| r.contains(u.position)));
    }

    #[test]
    fn noiseless_angle_rmse_matches_floor() {
        let s = study(Placement::AngleStudy { range: 40.0, users: 3 }, vec![Snr::Noiseless], 8);
        let res = rmse_experiment(&s).unwrap();
        let floor = quantization_floor(&s).unwrap();
        assert!(floor.angle_rmse_deg <= 0.06);
        assert_abs_diff_eq!(res[0].angle_rmse_deg, floor.angle_rmse_deg, epsilon = 1e-3);
    }

    #[test]
    fn fixed_users_improve_with_snr() {
        let users = vec![deg(40.0, 0.0), deg(40.0, 30.0), deg(40.0, 50.0)];
        let s = study(Placement::Fixed { users }, vec![Snr::Db(-10.0), Snr::Db(10.0), Snr::Db(30.0)], 12);
        let res = rmse_experiment(&s).unwrap();
        assert!(res[0].angle_rmse_deg > res[1].angle_rmse_deg);
        assert!(res[1].angle_rmse_deg > res[2].angle_rmse_deg);
        assert_eq!(res, rmse_experiment(&s).unwrap());
    }

    #[test]
    fn result_does_not_depend_on_worker_count() {
        let s = study(Placement::Uniform { users: 2 }, vec![Snr::Db(0.0)], 6);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| rmse_experiment(&s)).unwrap();
        let b = four.install(|| rmse_experiment(&s)).unwrap();
        assert_eq!(a, b);
    }
}
