use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{RngStream, SignalBlock};
use crate::error::{Error, Result};

/// Output of [`awgn_add`]: the noisy block and the noise variance used.
#[derive(Debug, Clone)]
pub struct NoisyBlock {
    pub block: SignalBlock,
    /// Total variance per complex sample (both quadratures together).
    pub noise_var: f64,
}

/// Adds circularly-symmetric complex Gaussian noise.
///
/// SNR is defined per complex (two-dimensional) sample:
/// `noise_var = P / 10^(snr_db / 10)`, where `P` is the measured mean sample
/// power when `measured_power` is set and 1 otherwise. `snr_db = +inf`
/// disables the noise.
pub fn awgn_add(
    signal: &SignalBlock,
    snr_db: f64,
    rng: &RngStream,
    measured_power: bool,
) -> Result<NoisyBlock> {
    if signal.is_empty() {
        return Err(Error::param("cannot add noise to an empty signal"));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::param("snr_db must be finite or +inf"));
    }
    if snr_db == f64::INFINITY {
        return Ok(NoisyBlock {
            block: signal.clone(),
            noise_var: 0.0,
        });
    }
    let power = if measured_power { signal.power() } else { 1.0 };
    let noise_var = power / 10f64.powf(snr_db / 10.0);
    let std = (noise_var / 2.0).sqrt();
    let mut r = rng.rng();
    let samples = signal
        .samples()
        .iter()
        .map(|&s| {
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            s + Complex64::new(re * std, im * std)
        })
        .collect();
    Ok(NoisyBlock {
        block: signal.with_samples(samples)?,
        noise_var,
    })
}

/// Adds real Gaussian noise of the given variance (photocurrent noise).
pub fn awgn_add_real(x: &[f64], noise_var: f64, rng: &RngStream) -> Vec<f64> {
    if noise_var <= 0.0 {
        return x.to_vec();
    }
    let std = noise_var.sqrt();
    let mut r = rng.rng();
    x.iter()
        .map(|&v| {
            let n: f64 = r.sample(StandardNormal);
            v + std * n
        })
        .collect()
}
