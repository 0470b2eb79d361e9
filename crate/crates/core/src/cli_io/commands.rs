//! One function per subcommand. Each resolves the scenario, runs the
//! library and writes its tables into the output directory.

use std::path::{Path, PathBuf};

use super::scenario::TrajectoryMode;
use super::table::{fmt_f64, Table};
use super::{CliError, ScenarioFile, EXIT_OK, EXIT_RUNTIME};
use crate::array_model::PolarPoint;
use crate::beamforming::SweepPlan;
use crate::harness::{
    delay_range_report, gain_map, ps_trajectory_export, quantization_floor, rmse_experiment, trajectory_export,
};
use crate::sensing::{localize_all, NoiseSpec, ProtocolOptions, Snr, User};

/// Files a command wrote and the exit code it asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandReport {
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
}

fn write(out: &Path, name: &str, table: &Table) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let path = out.join(name);
    std::fs::write(&path, table.render()).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn deg(rad: f64) -> String {
    fmt_f64(rad.to_degrees())
}

fn snr_cell(snr: Snr) -> String {
    match snr {
        Snr::Db(db) => fmt_f64(db),
        Snr::Noiseless => "inf".into(),
    }
}

fn td_plan(s: &ScenarioFile) -> Result<SweepPlan, CliError> {
    let t = s
        .trajectory
        .ok_or_else(|| CliError::Config("missing `[trajectory]` table".into()))?;
    let end = t
        .end
        .ok_or_else(|| CliError::Config("`trajectory.end` is required for mode \"td\"".into()))?;
    Ok(SweepPlan::new(
        t.start.to_point("trajectory.start")?,
        end.to_point("trajectory.end")?,
        s.array_config()?,
    ))
}

/// `trajectory.csv`: one row per subcarrier plus a delay-range trailer.
pub fn cmd_trajectory(s: &ScenarioFile, out: &Path) -> Result<CommandReport, CliError> {
    let t = s
        .trajectory
        .ok_or_else(|| CliError::Config("missing `[trajectory]` table".into()))?;
    let cfg = s.array_config()?;
    let mut table = Table::new(
        "trajectory",
        &s.config_hash(),
        &[("m", "index"), ("f_m_hz", "Hz"), ("theta_deg", "deg"), ("r_m", "m")],
    );
    let (rows, delays) = match t.mode {
        TrajectoryMode::Td => {
            let plan = td_plan(s)?;
            (trajectory_export(&plan)?, Some(delay_range_report(&plan)))
        }
        TrajectoryMode::Ps => (ps_trajectory_export(t.start.to_point("trajectory.start")?, &cfg)?, None),
    };
    table = table.with_meta("mode", format!("{:?}", t.mode).to_lowercase());
    for r in rows {
        table.push(vec![r.m.to_string(), fmt_f64(r.freq), deg(r.angle), fmt_f64(r.range)]);
    }
    if let Some((lo, hi)) = delays {
        table.trailer.push(format!("delay_range_s={},{}", fmt_f64(lo), fmt_f64(hi)));
    }
    Ok(CommandReport {
        files: vec![write(out, "trajectory.csv", &table)?],
        exit_code: EXIT_OK,
    })
}

/// One `gainmap_m<m>.csv` per selected subcarrier: rows are ranges,
/// columns are angles (degrees, in the column line).
pub fn cmd_gainmap(s: &ScenarioFile, out: &Path) -> Result<CommandReport, CliError> {
    if s.trajectory.map(|t| t.mode) == Some(TrajectoryMode::Ps) {
        return Err(CliError::Config("gain maps need `trajectory.mode = \"td\"`".into()));
    }
    let plan = td_plan(s)?;
    let cfg = plan.config();
    let grid = s.oracle_grid()?;
    let subs = s.gainmap_subcarriers(cfg.num_subcarriers())?;
    let map = gain_map(&plan, &grid, &subs)?;
    let width = cfg.num_subcarriers().to_string().len();
    let grid_desc = format!(
        "r_min_m={} r_max_m={} r_step_m={} theta_min_deg={} theta_max_deg={} theta_step_deg={}",
        fmt_f64(grid.r_min),
        fmt_f64(grid.r_max),
        fmt_f64(grid.r_step),
        deg(grid.theta_min),
        deg(grid.theta_max),
        deg(grid.theta_step),
    );
    let angle_labels: Vec<String> = map
        .angles()
        .iter()
        .map(|a| fmt_f64((a.to_degrees() * 1e9).round() / 1e9))
        .collect();
    let hash = s.config_hash();
    let mut files = Vec::with_capacity(subs.len());
    for (k, &m) in subs.iter().enumerate() {
        let mut table = Table::new("gainmap", &hash, &[("r_m", "m"), ("gain", "normalized")])
            .with_meta("m", m.to_string())
            .with_meta("f_m_hz", fmt_f64(cfg.subcarrier_freq(m)))
            .with_meta("grid", grid_desc.clone());
        table.columns = std::iter::once("r_m".to_string())
            .chain(angle_labels.iter().cloned())
            .collect();
        for (row, &r) in map.ranges().iter().enumerate() {
            let mut cells = Vec::with_capacity(angle_labels.len() + 1);
            cells.push(fmt_f64(r));
            cells.extend((0..angle_labels.len()).map(|col| fmt_f64(map.value(k, row, col))));
            table.push(cells);
        }
        files.push(write(out, &format!("gainmap_m{m:0width$}.csv"), &table)?);
    }
    Ok(CommandReport {
        files,
        exit_code: EXIT_OK,
    })
}

/// `localize.csv`: one row per listed user. Users that cannot be placed
/// get an error row; the exit code is nonzero only if every user fails.
pub fn cmd_localize(s: &ScenarioFile, out: &Path) -> Result<CommandReport, CliError> {
    let cfg = s.array_config()?;
    let range = s.sensing_range()?;
    let snrs = s.snrs()?;
    if snrs.len() > 1 {
        log::warn!("localize uses only the first of {} SNR values", snrs.len());
    }
    let noise = NoiseSpec {
        snr: snrs.first().copied().unwrap_or(Snr::Noiseless),
        seed: s.noise.seed,
    };

    let mut users = Vec::new();
    let mut failures: Vec<(usize, String)> = Vec::new();
    for (i, u) in s.users.iter().enumerate() {
        match PolarPoint::from_degrees(u.r_m, u.theta_deg) {
            Ok(p) if range.contains(p) => users.push(User {
                id: i as u64,
                position: p,
            }),
            Ok(_) => failures.push((i, "outside-sensing-range".into())),
            Err(_) => failures.push((i, "invalid-position".into())),
        }
    }
    let run = localize_all(&users, &range, &cfg, &noise, &ProtocolOptions::default())?;

    let mut table = Table::new(
        "localize",
        &s.config_hash(),
        &[
            ("user_id", "-"),
            ("true_r_m", "m"),
            ("true_theta_deg", "deg"),
            ("est_r_m", "m"),
            ("est_theta_deg", "deg"),
            ("m_angle", "index"),
            ("m_distance", "index"),
            ("sweep_count", "-"),
            ("status", "-"),
        ],
    )
    .with_meta("snr_db", snr_cell(noise.snr))
    .with_meta("seed", noise.seed.to_string());

    let mut estimates = run.estimates.iter().peekable();
    for (i, u) in s.users.iter().enumerate() {
        let head = vec![i.to_string(), fmt_f64(u.r_m), fmt_f64(u.theta_deg)];
        let tail = match estimates.peek() {
            Some(e) if e.user_id == i as u64 => {
                let e = estimates.next().expect("peeked");
                vec![
                    e.range.map(fmt_f64).unwrap_or_default(),
                    deg(e.angle),
                    e.angle_subcarrier.to_string(),
                    e.distance_subcarrier.map(|m| m.to_string()).unwrap_or_default(),
                    run.sweep_count.to_string(),
                    if e.clamped { "clamped" } else { "ok" }.to_string(),
                ]
            }
            _ => {
                let reason = failures
                    .iter()
                    .find(|(j, _)| *j == i)
                    .map(|(_, r)| r.as_str())
                    .unwrap_or("unknown");
                vec![String::new(), String::new(), String::new(), String::new(), String::new(), format!("error:{reason}")]
            }
        };
        table.push(head.into_iter().chain(tail).collect());
    }
    let all_failed = !s.users.is_empty() && users.is_empty();
    if all_failed {
        log::error!("no user could be localized");
    }
    Ok(CommandReport {
        files: vec![write(out, "localize.csv", &table)?],
        exit_code: if all_failed { EXIT_RUNTIME } else { EXIT_OK },
    })
}

/// `rmse.csv`: one row per SNR, with the quantization floor as a trailer.
pub fn cmd_rmse(s: &ScenarioFile, out: &Path) -> Result<CommandReport, CliError> {
    let study = s.rmse_study()?;
    let results = rmse_experiment(&study)?;
    let floor = quantization_floor(&study)?;
    let mut table = Table::new(
        "rmse",
        &s.config_hash(),
        &[
            ("snr_db", "dB"),
            ("angle_rmse_deg", "deg"),
            ("distance_rmse_m", "m"),
            ("trials", "-"),
            ("clamps", "-"),
        ],
    )
    .with_meta("label", study.label.clone())
    .with_meta("seed", study.seed.to_string());
    for r in &results {
        table.push(vec![
            snr_cell(r.snr),
            fmt_f64(r.angle_rmse_deg),
            fmt_f64(r.distance_rmse_m),
            r.trials.to_string(),
            r.clamps.to_string(),
        ]);
    }
    table.trailer.push(format!(
        "quantization_floor angle_rmse_deg={} distance_rmse_m={}",
        fmt_f64(floor.angle_rmse_deg),
        fmt_f64(floor.distance_rmse_m)
    ));
    Ok(CommandReport {
        files: vec![write(out, "rmse.csv", &table)?],
        exit_code: EXIT_OK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scenario(text: &str) -> ScenarioFile {
        ScenarioFile::parse(text).unwrap()
    }

    fn read(path: &Path) -> Table {
        Table::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn trajectory_table() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario(
            "[trajectory]\nmode = \"td\"\nstart = { r_m = 10, theta_deg = 30 }\nend = { r_m = 10, theta_deg = -30 }\n",
        );
        let rep = cmd_trajectory(&s, dir.path()).unwrap();
        let t = read(&rep.files[0]);
        assert_eq!(t.rows.len(), 2049);
        let th = t.floats("theta_deg").unwrap();
        assert_abs_diff_eq!(th[0], 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(th[2048], -30.0, epsilon = 1e-9);
        assert!(t.trailer[0].starts_with("delay_range_s="));
        assert_eq!(t.config_hash, s.config_hash());
    }

    #[test]
    fn missing_sections_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario("");
        assert_eq!(cmd_trajectory(&s, dir.path()).unwrap_err().exit_code(), 2);
        assert_eq!(cmd_rmse(&s, dir.path()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn localize_rows_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario("[[users]]\nr_m = 30\ntheta_deg = 30\n[[users]]\nr_m = 95\ntheta_deg = 0\n");
        let rep = cmd_localize(&s, dir.path()).unwrap();
        assert_eq!(rep.exit_code, 0);
        let t = read(&rep.files[0]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][5], "401");
        assert_eq!(t.rows[0][6], "1900");
        assert_eq!(t.rows[1][8], "error:outside-sensing-range");

        let s = scenario("[[users]]\nr_m = 95\ntheta_deg = 0\n");
        assert_eq!(cmd_localize(&s, dir.path()).unwrap().exit_code, 3);
        let s = scenario("");
        let rep = cmd_localize(&s, dir.path()).unwrap();
        assert_eq!(rep.exit_code, 0);
        assert!(read(&rep.files[0]).rows.is_empty());
    }
}
