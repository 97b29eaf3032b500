//! Simulated plants: a linear dispersive dual-polarization coherent link and
//! a nonlinear IM/DD link with square-law detection.

mod cd;
mod coherent;
mod imdd;

pub use cd::{cd_fir, cd_memory_symbols, default_cd_taps, CdTaps};
pub use coherent::{
    coherent_channel_apply, coherent_tx, CoherentChannelConfig, CoherentOutput, PolModel,
};
pub use imdd::{imdd_channel_apply, ImddChannelConfig, ImddOutput, Nonlinearity};

/// Dispersion scaling between two symbol rates over the same fiber.
pub fn rate_scaled_beta2l(beta2l: f64, from_gbd: f64, to_gbd: f64) -> f64 {
    beta2l * (to_gbd / from_gbd).powi(2)
}
