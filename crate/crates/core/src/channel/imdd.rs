use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cd::{cd_fir, default_cd_taps};
use crate::error::{Error, Result};
use crate::signal::{awgn_add_real, fir_apply_real, filter_full, rrc_taps, FirMode, RngStream, SignalBlock};

/// Memoryless transfer applied to the optical field amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    None,
    /// Electro-absorption modulator, `a -> sat * tanh(a / sat)`.
    Eam { sat: f64 },
    /// Saturable optical amplifier with small-signal gain `g0` and output
    /// saturation power `p_sat`. The small-signal gain is normalized out.
    Soa { p_sat: f64, g0: f64 },
}

impl Nonlinearity {
    pub fn apply(&self, a: f64) -> f64 {
        match *self {
            Nonlinearity::None => a,
            Nonlinearity::Eam { sat } => sat * (a / sat).tanh(),
            Nonlinearity::Soa { p_sat, g0 } => {
                if p_sat.is_infinite() {
                    return a;
                }
                a / (1.0 + g0 * a * a / p_sat).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImddChannelConfig {
    pub sps: usize,
    pub rolloff: f64,
    #[serde(default = "default_span")]
    pub span_symbols: usize,
    pub beta2l: f64,
    #[serde(default)]
    pub cd_taps_len: Option<usize>,
    pub nonlinearity: Nonlinearity,
    /// Thermal SNR in dB per sample, relative to unit modulation power.
    pub snr_db: f64,
    /// Signal-dependent noise: the per-sample variance is scaled by
    /// `1 + shot * intensity`.
    #[serde(default)]
    pub shot: Option<f64>,
    /// DC bias added to the PAM levels; chosen automatically when absent.
    #[serde(default)]
    pub bias: Option<f64>,
}

fn default_span() -> usize {
    32
}

impl ImddChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sps < 2 {
            return Err(Error::param("IM/DD simulation needs sps >= 2"));
        }
        match self.nonlinearity {
            Nonlinearity::Eam { sat } if !(sat > 0.0) => {
                return Err(Error::param("EAM saturation must be positive"))
            }
            Nonlinearity::Soa { p_sat, g0 } if !(p_sat > 0.0 && g0 > 0.0) => {
                return Err(Error::param("SOA parameters must be positive"))
            }
            _ => {}
        }
        if let Some(n) = self.cd_taps_len {
            if n % 2 == 0 {
                return Err(Error::param("cd_taps_len must be odd"));
            }
        }
        Ok(())
    }

    /// Smallest bias keeping the shaped drive non-negative for any sequence
    /// drawn from levels bounded by `max_level`, plus a 5% margin.
    pub fn auto_bias(&self, max_level: f64) -> Result<f64> {
        let g = rrc_taps(self.rolloff, self.span_symbols, self.sps)?;
        let mut worst: f64 = 0.0;
        for phase in 0..self.sps {
            let (mut pos, mut abs) = (0.0, 0.0);
            for t in g.iter().skip(phase).step_by(self.sps) {
                pos += t;
                abs += t.abs();
            }
            // bias * pos - max_level * abs >= 0
            if pos > 0.0 {
                worst = worst.max(max_level * abs / pos);
            }
        }
        Ok(worst * 1.05)
    }
}

/// Received photocurrent at `sps`, its noiseless counterpart and the bias
/// and noise variance that were used.
#[derive(Debug, Clone)]
pub struct ImddOutput {
    pub rx: SignalBlock,
    pub clean: Vec<f64>,
    pub bias: f64,
    pub noise_var: f64,
}

/// Upsample, RRC shaping of the biased drive, field nonlinearity,
/// dispersion on the field, square-law detection, noise, receive RRC.
///
/// The drive is the transmitted optical power; the field amplitude is its
/// square root. Symbol `k` sits at output sample `k * sps`.
pub fn imdd_channel_apply(
    pam_symbols: &[f64],
    cfg: &ImddChannelConfig,
    rng: &RngStream,
) -> Result<ImddOutput> {
    cfg.validate()?;
    let sps = cfg.sps;
    let max_level = pam_symbols.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bias = match cfg.bias {
        Some(b) => b,
        None => cfg.auto_bias(max_level)?,
    };
    let g = rrc_taps(cfg.rolloff, cfg.span_symbols, sps)?;
    let mut up = vec![0.0; pam_symbols.len() * sps];
    for (k, &a) in pam_symbols.iter().enumerate() {
        up[k * sps] = a + bias;
    }
    let drive = fir_apply_real(&up, &g, FirMode::Same)?;
    if let Some(min) = drive.iter().cloned().reduce(f64::min) {
        if min < 0.0 {
            return Err(Error::param(format!(
                "negative optical drive {min:.3e} after bias {bias}"
            )));
        }
    }
    let field: Vec<Complex64> = drive
        .iter()
        .map(|&d| Complex64::new(cfg.nonlinearity.apply(d.sqrt()), 0.0))
        .collect();
    let field = if cfg.beta2l == 0.0 {
        field
    } else {
        let n_taps = cfg.cd_taps_len.unwrap_or_else(|| default_cd_taps(cfg.beta2l, sps));
        let cd = cd_fir(cfg.beta2l, n_taps, sps)?.taps;
        let full = filter_full(&field, &cd);
        let d = (cd.len() - 1) / 2;
        full[d..d + field.len()].to_vec()
    };
    let intensity: Vec<f64> = field.iter().map(|e| e.norm_sqr()).collect();

    let noise_var = if cfg.snr_db.is_infinite() {
        0.0
    } else {
        10f64.powf(-cfg.snr_db / 10.0)
    };
    let noisy = match cfg.shot {
        Some(k) if noise_var > 0.0 => {
            let unit = awgn_add_real(&vec![0.0; intensity.len()], 1.0, &rng.substream(20));
            intensity
                .iter()
                .zip(unit)
                .map(|(&i, n)| i + n * (noise_var * (1.0 + k * i.max(0.0))).sqrt())
                .collect()
        }
        _ => awgn_add_real(&intensity, noise_var, &rng.substream(20)),
    };
    let rx = fir_apply_real(&noisy, &g, FirMode::Same)?;
    let clean = fir_apply_real(&intensity, &g, FirMode::Same)?;
    Ok(ImddOutput {
        rx: SignalBlock::from_real(&rx, sps, 1.0)?,
        clean,
        bias,
        noise_var,
    })
}
