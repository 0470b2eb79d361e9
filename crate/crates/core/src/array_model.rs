//! ULA geometry, propagation distances and the near-field LoS channel.
//!
//! Antennas sit on the y-axis at `(0, n·d)` with `n = -(N-1)/2, ..., (N-1)/2`.
//! Users live in the right half-plane; positions are kept in polar form
//! `(r, θ)` with θ measured from the array broadside (the x-axis).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::{Error, Result};

/// Propagation speed used throughout, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// `e^{-j2π·cycles}`, reducing the argument to one cycle first.
#[inline]
pub(crate) fn phasor(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.round();
    let (s, c) = (2.0 * PI * frac).sin_cos();
    Complex64::new(c, -s)
}

/// Amplitude law applied to each channel entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathLoss {
    /// `√β(f)/r_n` with `√β(f) = c/(4πf)`, evaluated at each subcarrier.
    FreeSpace,
    /// `√β(f0)/r_n`: spherical spreading with the gain frozen at the lowest
    /// carrier, so the amplitude is flat across the band.
    #[default]
    Spreading,
    /// Unit amplitude; only the propagation phase remains.
    Unit,
}

impl PathLoss {
    /// Amplitude of one channel entry at frequency `freq` and distance `dist`.
    #[inline]
    pub fn amplitude(self, freq: f64, lowest_freq: f64, dist: f64) -> f64 {
        match self {
            PathLoss::FreeSpace => SPEED_OF_LIGHT / (4.0 * PI * freq * dist),
            PathLoss::Spreading => SPEED_OF_LIGHT / (4.0 * PI * lowest_freq * dist),
            PathLoss::Unit => 1.0,
        }
    }
}

/// Array geometry and OFDM grid.
///
/// The grid has `M + 1` tones at `f_m = f0 + m·W/M`, `m = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    num_antennas: usize,
    spacing: f64,
    lowest_freq: f64,
    bandwidth: f64,
    num_subcarriers: usize,
    path_loss: PathLoss,
    wavelength_override: Option<f64>,
}

impl ArrayConfig {
    pub fn new(
        num_antennas: usize,
        spacing: f64,
        lowest_freq: f64,
        bandwidth: f64,
        num_subcarriers: usize,
    ) -> Result<Self> {
        if num_antennas < 2 {
            return Err(Error::invalid("num_antennas", format!("need N >= 2, got {num_antennas}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("spacing", format!("need d > 0, got {spacing}")));
        }
        if !(lowest_freq > 0.0 && lowest_freq.is_finite()) {
            return Err(Error::invalid("lowest_freq", format!("need f0 > 0, got {lowest_freq}")));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", format!("need W > 0, got {bandwidth}")));
        }
        if num_subcarriers < 1 {
            return Err(Error::invalid("num_subcarriers", "need M >= 1"));
        }
        Ok(Self {
            num_antennas,
            spacing,
            lowest_freq,
            bandwidth,
            num_subcarriers,
            path_loss: PathLoss::default(),
            wavelength_override: None,
        })
    }

    /// Array with `d = λ0/2`, λ0 being the wavelength of the lowest carrier.
    pub fn half_wavelength(
        num_antennas: usize,
        lowest_freq: f64,
        bandwidth: f64,
        num_subcarriers: usize,
    ) -> Result<Self> {
        Self::new(
            num_antennas,
            SPEED_OF_LIGHT / lowest_freq / 2.0,
            lowest_freq,
            bandwidth,
            num_subcarriers,
        )
    }

    pub fn with_path_loss(mut self, path_loss: PathLoss) -> Self {
        self.path_loss = path_loss;
        self
    }

    pub fn with_num_subcarriers(mut self, num_subcarriers: usize) -> Result<Self> {
        if num_subcarriers < 1 {
            return Err(Error::invalid("num_subcarriers", "need M >= 1"));
        }
        self.num_subcarriers = num_subcarriers;
        Ok(self)
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", format!("need W > 0, got {bandwidth}")));
        }
        self.bandwidth = bandwidth;
        Ok(self)
    }

    /// Override the wavelength used for the Rayleigh distance.
    pub fn with_wavelength(mut self, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid("wavelength", format!("need λ > 0, got {wavelength}")));
        }
        self.wavelength_override = Some(wavelength);
        Ok(self)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lowest_freq(&self) -> f64 {
        self.lowest_freq
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `M`; the grid holds `M + 1` tones.
    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn path_loss(&self) -> PathLoss {
        self.path_loss
    }

    pub fn highest_freq(&self) -> f64 {
        self.lowest_freq + self.bandwidth
    }

    /// `f_m = f0 + m·W/M`.
    pub fn subcarrier_freq(&self, m: usize) -> f64 {
        self.lowest_freq + self.baseband_freq(m)
    }

    /// `f̃_m = m·W/M`.
    pub fn baseband_freq(&self, m: usize) -> f64 {
        m as f64 * self.bandwidth / self.num_subcarriers as f64
    }

    /// `D = (N-1)·d`.
    pub fn aperture(&self) -> f64 {
        (self.num_antennas - 1) as f64 * self.spacing
    }

    /// Wavelength for the Rayleigh boundary: `c/f0` unless overridden.
    pub fn wavelength(&self) -> f64 {
        self.wavelength_override
            .unwrap_or(SPEED_OF_LIGHT / self.lowest_freq)
    }

    /// Antenna offsets `n`, see [`antenna_index_grid`].
    pub fn antenna_offsets(&self) -> Vec<f64> {
        antenna_index_grid(self)
    }
}

impl Default for ArrayConfig {
    /// 128 antennas at half-wavelength spacing, 30 GHz lowest carrier,
    /// 3 GHz bandwidth, 2048 subcarrier steps.
    fn default() -> Self {
        Self::half_wavelength(128, 30e9, 3e9, 2048).expect("valid default array")
    }
}

/// A position in polar form. `angle` is in radians, strictly inside (−π/2, π/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    range: f64,
    angle: f64,
}

impl PolarPoint {
    pub fn new(range: f64, angle: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::invalid("range", format!("need r > 0, got {range}")));
        }
        if !(angle.abs() < FRAC_PI_2) {
            return Err(Error::invalid(
                "angle",
                format!("need |θ| < 90°, got {:.6}°", angle.to_degrees()),
            ));
        }
        Ok(Self { range, angle })
    }

    pub fn from_degrees(range: f64, angle_deg: f64) -> Result<Self> {
        Self::new(range, angle_deg.to_radians())
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Angle in radians.
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle.to_degrees()
    }

    pub fn to_cartesian(self) -> CartesianPoint {
        CartesianPoint {
            x: self.range * self.angle.cos(),
            y: self.range * self.angle.sin(),
        }
    }

    /// The same range mirrored across broadside.
    pub fn mirrored(self) -> Self {
        Self {
            range: self.range,
            angle: -self.angle,
        }
    }
}

/// A position in Cartesian form; the array is on the y-axis, so `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    x: f64,
    y: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x > 0.0 && x.is_finite()) || !y.is_finite() {
            return Err(Error::invalid("position", format!("need x > 0, got ({x}, {y})")));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn to_polar(self) -> PolarPoint {
        PolarPoint {
            range: self.x.hypot(self.y),
            angle: self.y.atan2(self.x),
        }
    }
}

impl From<PolarPoint> for CartesianPoint {
    fn from(p: PolarPoint) -> Self {
        p.to_cartesian()
    }
}

impl From<CartesianPoint> for PolarPoint {
    fn from(p: CartesianPoint) -> Self {
        p.to_polar()
    }
}

/// `n_i = -(N-1)/2 + i` for `i = 0..N`; half-integers when N is even.
pub fn antenna_index_grid(config: &ArrayConfig) -> Vec<f64> {
    let half = (config.num_antennas - 1) as f64 / 2.0;
    (0..config.num_antennas).map(|i| i as f64 - half).collect()
}

/// `√(x² + (y − n·d)²)`.
pub fn exact_distance(p: impl Into<CartesianPoint>, n: f64, d: f64) -> f64 {
    let p = p.into();
    p.x.hypot(p.y - n * d)
}

/// Second-order (Fresnel) expansion `r − n·d·sinθ + (n·d·cosθ)²/(2r)`.
pub fn fresnel_distance(p: PolarPoint, n: f64, d: f64) -> f64 {
    let nd = n * d;
    let (s, c) = p.angle.sin_cos();
    p.range - nd * s + (nd * c).powi(2) / (2.0 * p.range)
}

/// Exact distances from `p` to every antenna, in array order.
pub fn antenna_distances(p: PolarPoint, config: &ArrayConfig) -> Vec<f64> {
    let c = p.to_cartesian();
    antenna_index_grid(config)
        .into_iter()
        .map(|n| exact_distance(c, n, config.spacing))
        .collect()
}

/// `Z = 2(N·d)²/λ`, using the `D ≈ N·d` aperture.
pub fn rayleigh_distance(config: &ArrayConfig) -> f64 {
    let nd = config.num_antennas as f64 * config.spacing;
    2.0 * nd * nd / config.wavelength()
}

/// LoS channel towards an N-antenna array.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    entries: Vec<Complex64>,
}

impl ChannelVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|h| h.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `[h]_n = a(f, r_n)·e^{−j2π·f·r_n/c}` with the amplitude law of
/// `config.path_loss()` and exact antenna distances.
pub fn channel_vector(p: PolarPoint, freq: f64, config: &ArrayConfig) -> ChannelVector {
    channel_vector_with(p, freq, config, config.path_loss)
}

pub fn channel_vector_with(
    p: PolarPoint,
    freq: f64,
    config: &ArrayConfig,
    path_loss: PathLoss,
) -> ChannelVector {
    let entries = antenna_distances(p, config)
        .into_iter()
        .map(|r| {
            path_loss.amplitude(freq, config.lowest_freq, r) * phasor(freq * r / SPEED_OF_LIGHT)
        })
        .collect();
    ChannelVector { entries }
}
