//! Scenario files.
//!
//! TOML with units spelled out in every key (`f0_ghz`, `r_min_m`,
//! `theta_deg`). Angles are degrees in the file and radians everywhere
//! else. Unknown keys are rejected with the closest valid key as a hint.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::array_model::{ArrayConfig, PathLoss, PolarPoint};
use crate::harness::{Placement, RmseStudy};
use crate::sensing::{ProtocolOptions, SensingRange, Snr, DEFAULT_REFINE_HALF_WIDTH};
use crate::squint_math::PolarGrid;

/// Allowed keys per table path; `users` and `trajectory.start/end` are
/// the nested tables.
const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["array", "sensing", "users", "noise", "oracle", "trajectory", "gainmap", "rmse"]),
    (
        "array",
        &["num_antennas", "spacing_m", "f0_ghz", "bandwidth_ghz", "num_subcarriers", "path_loss", "wavelength_m"],
    ),
    ("sensing", &["theta_max_deg", "theta_min_deg", "r_min_m", "r_max_m", "r_mid_m"]),
    ("users", &["r_m", "theta_deg"]),
    ("noise", &["snr_db", "trials", "seed"]),
    (
        "oracle",
        &["r_min_m", "r_max_m", "r_step_m", "theta_min_deg", "theta_max_deg", "theta_step_deg"],
    ),
    ("trajectory", &["mode", "start", "end"]),
    ("trajectory.start", &["r_m", "theta_deg"]),
    ("trajectory.end", &["r_m", "theta_deg"]),
    ("gainmap", &["subcarriers"]),
    (
        "rmse",
        &["label", "placement", "users_per_trial", "range_m", "theta_deg", "refine", "refine_half_width_m"],
    ),
];

fn suggest(key: &str, allowed: &[&str]) -> Option<String> {
    allowed
        .iter()
        .map(|a| (strsim::levenshtein(key, a), *a))
        .min()
        .filter(|(d, a)| *d <= 3.max(a.len() / 3))
        .map(|(_, a)| a.to_string())
}

fn check_table(path: &str, table: &toml::Table) -> Result<(), CliError> {
    let allowed = SCHEMA
        .iter()
        .find(|(p, _)| *p == path)
        .map(|(_, keys)| *keys)
        .unwrap_or(&[]);
    for (key, value) in table {
        let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        if !allowed.contains(&key.as_str()) {
            let hint = suggest(key, allowed)
                .map(|s| format!("; did you mean `{s}`?"))
                .unwrap_or_default();
            return Err(CliError::Config(format!("unknown key `{full}`{hint}")));
        }
        let child = if path == "users" { "users".to_string() } else { full.clone() };
        match value {
            toml::Value::Table(t) if SCHEMA.iter().any(|(p, _)| *p == child) => check_table(&child, t)?,
            toml::Value::Array(items) if key == "users" && path.is_empty() => {
                for item in items {
                    match item {
                        toml::Value::Table(t) => check_table("users", t)?,
                        _ => return Err(CliError::Config("`users` entries must be tables".into())),
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// A number or a named value such as `"half-wavelength"` or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOr {
    Number(f64),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub num_antennas: usize,
    pub spacing_m: NumberOr,
    pub f0_ghz: f64,
    pub bandwidth_ghz: f64,
    pub num_subcarriers: usize,
    pub path_loss: PathLoss,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            num_antennas: 128,
            spacing_m: NumberOr::Name("half-wavelength".into()),
            f0_ghz: 30.0,
            bandwidth_ghz: 3.0,
            num_subcarriers: 2048,
            path_loss: PathLoss::default(),
            wavelength_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    pub theta_max_deg: f64,
    pub theta_min_deg: f64,
    pub r_min_m: f64,
    pub r_max_m: f64,
    pub r_mid_m: f64,
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            theta_max_deg: 60.0,
            theta_min_deg: -60.0,
            r_min_m: 3.0,
            r_max_m: 82.0,
            r_mid_m: crate::sensing::DEFAULT_R_MID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointEntry {
    pub r_m: f64,
    pub theta_deg: f64,
}

impl PointEntry {
    pub fn to_point(self, key: &str) -> Result<PolarPoint, CliError> {
        PolarPoint::from_degrees(self.r_m, self.theta_deg)
            .map_err(|e| CliError::Config(format!("`{key}`: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub snr_db: Vec<NumberOr>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            snr_db: vec![NumberOr::Name("inf".into())],
            trials: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub r_min_m: f64,
    pub r_max_m: f64,
    pub r_step_m: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub theta_step_deg: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            r_min_m: 3.17,
            r_max_m: 81.92,
            r_step_m: 0.4,
            theta_min_deg: -90.0,
            theta_max_deg: 90.0,
            theta_step_deg: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryMode {
    /// Phase shifters plus delay lines, start to end.
    Td,
    /// Phase shifters only, focused at `start` for the lowest carrier.
    Ps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub mode: TrajectoryMode,
    pub start: PointEntry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<PointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubcarrierSet {
    List(Vec<usize>),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainmapSection {
    pub subcarriers: SubcarrierSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementKind {
    Fixed,
    AngleStudy,
    DistanceStudy,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseSection {
    #[serde(default = "default_label")]
    pub label: String,
    pub placement: PlacementKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub users_per_trial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default)]
    pub refine: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_half_width_m: Option<f64>,
}

fn default_label() -> String {
    "rmse".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub array: ArraySection,
    #[serde(default)]
    pub sensing: SensingSection,
    #[serde(default)]
    pub users: Vec<PointEntry>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gainmap: Option<GainmapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<RmseSection>,
}

fn config_err(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {e}"))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        check_table("", &table)?;
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Canonical text of the resolved scenario; the basis of the config hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`ScenarioFile::canonical`].
    pub fn config_hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn array_config(&self) -> Result<ArrayConfig, CliError> {
        let a = &self.array;
        let f0 = a.f0_ghz * 1e9;
        let w = a.bandwidth_ghz * 1e9;
        let cfg = match &a.spacing_m {
            NumberOr::Name(n) if n == "half-wavelength" => {
                ArrayConfig::half_wavelength(a.num_antennas, f0, w, a.num_subcarriers)
            }
            NumberOr::Name(n) => {
                return Err(config_err(
                    "array.spacing_m",
                    format!("expected meters or \"half-wavelength\", got \"{n}\""),
                ))
            }
            NumberOr::Number(d) => ArrayConfig::new(a.num_antennas, *d, f0, w, a.num_subcarriers),
        }
        .map_err(|e| config_err("array", e))?
        .with_path_loss(a.path_loss);
        match a.wavelength_m {
            Some(l) => cfg.with_wavelength(l).map_err(|e| config_err("array.wavelength_m", e)),
            None => Ok(cfg),
        }
    }

    pub fn sensing_range(&self) -> Result<SensingRange, CliError> {
        let s = &self.sensing;
        SensingRange::new(
            s.theta_max_deg.to_radians(),
            s.theta_min_deg.to_radians(),
            s.r_min_m,
            s.r_max_m,
            s.r_mid_m,
        )
        .map_err(|e| config_err("sensing", e))
    }

    pub fn snrs(&self) -> Result<Vec<Snr>, CliError> {
        self.noise
            .snr_db
            .iter()
            .map(|v| match v {
                NumberOr::Number(db) if db.is_finite() => Ok(Snr::Db(*db)),
                NumberOr::Number(db) if *db > 0.0 => Ok(Snr::Noiseless),
                NumberOr::Name(n) if n == "inf" => Ok(Snr::Noiseless),
                other => Err(config_err("noise.snr_db", format!("expected dB or \"inf\", got {other:?}"))),
            })
            .collect()
    }

    pub fn oracle_grid(&self) -> Result<PolarGrid, CliError> {
        let o = self.oracle.unwrap_or_default();
        PolarGrid::from_degrees(
            o.r_min_m,
            o.r_max_m,
            o.r_step_m,
            o.theta_min_deg,
            o.theta_max_deg,
            o.theta_step_deg,
        )
        .map_err(|e| config_err("oracle", e))
    }

    pub fn gainmap_subcarriers(&self, m_max: usize) -> Result<Vec<usize>, CliError> {
        match self.gainmap.as_ref().map(|g| &g.subcarriers) {
            None => Ok((0..=m_max).collect()),
            Some(SubcarrierSet::Name(n)) if n == "all" => Ok((0..=m_max).collect()),
            Some(SubcarrierSet::Name(n)) => Err(config_err(
                "gainmap.subcarriers",
                format!("expected a list or \"all\", got \"{n}\""),
            )),
            Some(SubcarrierSet::List(l)) if l.is_empty() => {
                Err(config_err("gainmap.subcarriers", "list is empty"))
            }
            Some(SubcarrierSet::List(l)) => match l.iter().find(|&&m| m > m_max) {
                Some(m) => Err(config_err("gainmap.subcarriers", format!("{m} exceeds M = {m_max}"))),
                None => Ok(l.clone()),
            },
        }
    }

    /// The Monte Carlo study described by `[rmse]`, `[noise]` and `[users]`.
    pub fn rmse_study(&self) -> Result<RmseStudy, CliError> {
        let section = self
            .rmse
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `[rmse]` table".into()))?;
        if self.noise.trials == 0 {
            return Err(config_err("noise.trials", "need at least one trial"));
        }
        let users_per_trial = || {
            section
                .users_per_trial
                .filter(|&k| k > 0)
                .ok_or_else(|| config_err("rmse.users_per_trial", "need a positive user count"))
        };
        let range = self.sensing_range()?;
        let placement = match section.placement {
            PlacementKind::Fixed => Placement::Fixed {
                users: self
                    .users
                    .iter()
                    .enumerate()
                    .map(|(i, u)| u.to_point(&format!("users[{i}]")))
                    .collect::<Result<_, _>>()?,
            },
            PlacementKind::AngleStudy => Placement::AngleStudy {
                range: section.range_m.unwrap_or(range.r_mid),
                users: users_per_trial()?,
            },
            PlacementKind::DistanceStudy => Placement::DistanceStudy {
                angle: section
                    .theta_deg
                    .ok_or_else(|| config_err("rmse.theta_deg", "required for distance-study"))?
                    .to_radians(),
                users: users_per_trial()?,
            },
            PlacementKind::Uniform => Placement::Uniform {
                users: users_per_trial()?,
            },
        };
        Ok(RmseStudy {
            label: section.label.clone(),
            placement,
            snrs: self.snrs()?,
            trials: self.noise.trials,
            seed: self.noise.seed,
            range,
            config: self.array_config()?,
            options: ProtocolOptions {
                refine_half_width: section
                    .refine
                    .then(|| section.refine_half_width_m.unwrap_or(DEFAULT_REFINE_HALF_WIDTH)),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn defaults_match_reference_setup() {
        let s = ScenarioFile::parse("").unwrap();
        let cfg = s.array_config().unwrap();
        assert_eq!(cfg, ArrayConfig::default());
        assert_eq!(s.sensing_range().unwrap(), SensingRange::reference());
        assert_eq!(s.snrs().unwrap(), vec![Snr::Noiseless]);
    }

    #[test]
    fn full_file_parses() {
        let text = r#"
            [array]
            num_antennas = 64
            spacing_m = 0.005
            f0_ghz = 30
            bandwidth_ghz = 6.0
            num_subcarriers = 16
            path_loss = "unit"

            [sensing]
            theta_max_deg = 50
            theta_min_deg = -50
            r_min_m = 4
            r_max_m = 60
            r_mid_m = 30

            [[users]]
            r_m = 30
            theta_deg = 30

            [noise]
            snr_db = [-10, 0, "inf"]
            trials = 5
            seed = 9

            [trajectory]
            mode = "td"
            start = { r_m = 10, theta_deg = 30 }
            end = { r_m = 10, theta_deg = -30 }

            [gainmap]
            subcarriers = [0, 8, 16]

            [rmse]
            placement = "angle-study"
            users_per_trial = 3
        "#;
        let s = ScenarioFile::parse(text).unwrap();
        let cfg = s.array_config().unwrap();
        assert_eq!(cfg.num_antennas(), 64);
        assert_eq!(cfg.path_loss(), PathLoss::Unit);
        assert_eq!(cfg.bandwidth(), 6e9);
        assert_eq!(s.snrs().unwrap(), vec![Snr::Db(-10.0), Snr::Db(0.0), Snr::Noiseless]);
        assert_eq!(s.gainmap_subcarriers(16).unwrap(), vec![0, 8, 16]);
        let study = s.rmse_study().unwrap();
        assert_eq!(study.placement, Placement::AngleStudy { range: 30.0, users: 3 });
        assert_eq!(study.trials, 5);
    }

    #[test]
    fn unknown_keys_get_suggestions() {
        let err = ScenarioFile::parse("[array]\nf0_hz = 30\n").unwrap_err().to_string();
        assert!(err.contains("array.f0_hz") && err.contains("f0_ghz"), "{err}");
        let err = ScenarioFile::parse("[[users]]\nr_m = 3\ntheta_rad = 0.5\n").unwrap_err().to_string();
        assert!(err.contains("users.theta_rad") && err.contains("theta_deg"), "{err}");
        let err = ScenarioFile::parse("[trajectory]\nmode = \"td\"\nstart = { r = 3, theta_deg = 1 }\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("trajectory.start.r"), "{err}");
        assert!(ScenarioFile::parse("[wat]\n").is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[array]\nspacing_m = \"quarter\"\n",
            "[noise]\nsnr_db = [\"loud\"]\n",
            "[sensing]\ntheta_max_deg = 95\n",
        ] {
            let s = ScenarioFile::parse(text);
            let failed = match s {
                Err(_) => true,
                Ok(s) => s.array_config().is_err() || s.snrs().is_err() || s.sensing_range().is_err(),
            };
            assert!(failed, "{text}");
        }
        let s = ScenarioFile::parse("[noise]\nsnr_db = [0]\ntrials = 0\nseed = 1\n[rmse]\nplacement = \"uniform\"\nusers_per_trial = 1\n")
            .unwrap();
        assert!(s.rmse_study().is_err());
    }

    #[test]
    fn degree_conversion_at_boundary() {
        for d in [-60.0, 0.0, 60.0, 85.0] {
            let p = PointEntry { r_m: 10.0, theta_deg: d }.to_point("u").unwrap();
            assert_abs_diff_eq!(p.angle(), d * std::f64::consts::PI / 180.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p.angle_deg(), d, epsilon = 1e-12);
        }
        assert!(PointEntry { r_m: 10.0, theta_deg: 90.0 }.to_point("u").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioFile::parse("").unwrap();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
        b.noise.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
