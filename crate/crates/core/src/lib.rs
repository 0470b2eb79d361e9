//! Near-field wideband beam squint for a ULA/OFDM base station.
//!
//! The crate models how the focus of a single-RF-chain beamformer drifts
//! across OFDM subcarriers in the near field, steers that drift with a bank
//! of phase shifters cascaded with time-delay lines, and uses the resulting
//! frequency-to-position map to localize users from a single max-power
//! subcarrier feedback per sweep.
//!
//! Layout, bottom-up:
//!
//! - [`array_model`]: array geometry, propagation distances, LoS channel.
//! - [`beamforming`]: phase/delay profiles, sweep plans, received power.
//! - [`squint_math`]: closed-form squint trajectories, their inverses and the
//!   brute-force grid oracle.
//! - [`sensing`]: two-stage angle/distance localization protocol.
//! - [`harness`]: experiment drivers (trajectories, gain maps, RMSE studies).
//! - [`cli_io`]: scenario files, table emission and CLI commands.

pub mod array_model;
pub mod beamforming;
pub mod cli_io;
mod error;
pub mod harness;
pub mod rng;
pub mod sensing;
pub mod squint_math;

pub use error::{Error, Result};
