//! Blind VAE-based linear equalizer (VAE-LE), its VQ-VAE simplification and
//! channel-estimate extraction.
//!
//! Encoder: 2x2 butterfly followed by a Gaussian soft demapper. Decoder: a
//! 2x2 FIR mapping the posterior symbol means back to the received samples.

mod elbo;
mod estimate;
mod train;
mod vq;

pub use elbo::{elbo_gradient, elbo_gradient_check, elbo_loss, ElboBreakdown, VaeGradient};
pub use estimate::{channel_estimate, ChannelEstimate};
pub use train::{vae_train, vae_train_sliding, VaeTrainConfig, VaeTrainResult};
pub use vq::{vq_quantize, vqvae_gradient, vqvae_loss, vqvae_train, VqBreakdown};

use num_complex::Complex64;

use crate::classic::{butterfly_apply, ButterflyFir};
use crate::constellation::{soft_demap, Constellation, PosteriorBlock};
use crate::error::{Error, Result};
use crate::signal::DualPolBlock;

/// Upper bound on the decoder (channel hypothesis) length.
pub const MAX_DECODER_LEN: usize = 41;

/// `2 * memory + 1` samples, capped at [`MAX_DECODER_LEN`].
pub fn default_decoder_len(cd_memory_symbols: f64, sps: usize) -> usize {
    let n = 2 * (cd_memory_symbols * sps as f64).ceil() as usize + 1;
    n.min(MAX_DECODER_LEN)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeLeModel {
    /// Butterfly encoder, received samples to symbols.
    pub encoder: ButterflyFir,
    /// Channel hypothesis: `decoder.taps[q][p]` maps symbol lane `p` to
    /// received lane `q`; `decoder.sps_in` is the received sample rate.
    pub decoder: ButterflyFir,
    pub sigma2: f64,
    pub constellation: Constellation,
}

impl VaeLeModel {
    /// Center-spike encoder and decoder, `sigma2 = 1`.
    pub fn cold_start(c: &Constellation, encoder_len: usize, decoder_len: usize, sps: usize) -> Result<Self> {
        let m = Self {
            encoder: ButterflyFir::identity(encoder_len, sps)?,
            decoder: ButterflyFir::identity(decoder_len, sps)?,
            sigma2: 1.0,
            constellation: c.clone(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.decoder.len() > MAX_DECODER_LEN {
            return Err(Error::param(format!("decoder longer than {MAX_DECODER_LEN} taps")));
        }
        if self.encoder.sps_in != self.decoder.sps_in {
            return Err(Error::param("encoder and decoder disagree on samples per symbol"));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::param("sigma2 must be positive and finite"));
        }
        Ok(())
    }

    pub fn sps(&self) -> usize {
        self.encoder.sps_in
    }
}

/// Equalize with the encoder, then soft-demap each lane with `sigma2`.
pub fn vae_posterior(rx: &DualPolBlock, model: &VaeLeModel) -> Result<[PosteriorBlock; 2]> {
    model.validate()?;
    let z = butterfly_apply(rx, &model.encoder)?;
    Ok([
        soft_demap(z.x.samples(), &model.constellation, model.sigma2)?,
        soft_demap(z.y.samples(), &model.constellation, model.sigma2)?,
    ])
}

/// Interleaved `(re, im)` of every tap, in `[p][q][k]` order.
pub(crate) fn pack(w: &ButterflyFir) -> Vec<f64> {
    let mut v = Vec::with_capacity(8 * w.len());
    for row in &w.taps {
        for t in row {
            for c in t {
                v.push(c.re);
                v.push(c.im);
            }
        }
    }
    v
}

pub(crate) fn unpack(w: &mut ButterflyFir, v: &[f64]) {
    let mut i = 0;
    for row in &mut w.taps {
        for t in row {
            for c in t.iter_mut() {
                *c = Complex64::new(v[i], v[i + 1]);
                i += 2;
            }
        }
    }
}

pub(crate) fn pack_taps(taps: &[[Vec<Complex64>; 2]; 2]) -> Vec<f64> {
    taps.iter()
        .flatten()
        .flatten()
        .flat_map(|c| [c.re, c.im])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_qam;

    #[test]
    fn pack_roundtrip() {
        let mut w = ButterflyFir::identity(5, 1).unwrap();
        w.taps[1][0][3] = Complex64::new(0.25, -0.5);
        let v = pack(&w);
        let mut u = ButterflyFir::identity(5, 1).unwrap();
        unpack(&mut u, &v);
        assert_eq!(u, w);
        assert_eq!(pack_taps(&w.taps), v);
    }

    #[test]
    fn posterior_one_hot_on_identity() {
        let c = build_qam(4).unwrap();
        let idx: Vec<usize> = (0..40).map(|i| (i * 7 + 1) % 4).collect();
        let x: Vec<Complex64> = idx.iter().map(|&i| c.points()[i]).collect();
        let y: Vec<Complex64> = idx.iter().map(|&i| c.points()[3 - i]).collect();
        let rx = DualPolBlock::from_lanes(x, y, 1, 1.0).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 5, 5, 1).unwrap();
        m.sigma2 = 1e-4;
        let q = vae_posterior(&rx, &m).unwrap();
        for (n, &i) in idx.iter().enumerate() {
            assert!((q[0].row(n)[i] - 1.0).abs() < 1e-12);
            assert!((q[1].row(n)[3 - i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_flat_for_huge_sigma() {
        let c = crate::constellation::pcs_shape(&build_qam(16).unwrap(), 3.5, 1e-9).unwrap();
        let x: Vec<Complex64> = (0..20).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect();
        let rx = DualPolBlock::from_lanes(x.clone(), x, 1, 1.0).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 3, 3, 1).unwrap();
        m.sigma2 = 1e12;
        for lane in vae_posterior(&rx, &m).unwrap() {
            for n in 0..lane.rows() {
                for (a, b) in lane.row(n).iter().zip(c.priors()) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_long_decoder() {
        let c = build_qam(4).unwrap();
        assert!(VaeLeModel::cold_start(&c, 5, MAX_DECODER_LEN + 2, 1).is_err());
    }
}
