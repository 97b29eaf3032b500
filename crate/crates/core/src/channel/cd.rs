use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Dispersion FIR together with the energy it lost to truncation.
#[derive(Debug, Clone)]
pub struct CdTaps {
    pub taps: Vec<Complex64>,
    /// `1 - sum |h|^2`, the all-pass energy outside the kept window.
    pub truncation_loss: f64,
}

/// Chromatic-dispersion FIR for the all-pass response
/// `exp(-j beta2l/2 w^2)`, `w` in rad/symbol, sampled at `sps`.
///
/// The response is evaluated on an FFT grid of at least `8 * n_taps` points
/// and truncated symmetrically around the zero-delay tap.
pub fn cd_fir(beta2l: f64, n_taps: usize, sps: usize) -> Result<CdTaps> {
    if n_taps % 2 == 0 {
        return Err(Error::param("dispersion filter needs an odd tap count"));
    }
    if sps == 0 || !beta2l.is_finite() {
        return Err(Error::param("invalid dispersion parameters"));
    }
    let n_fft = (8 * n_taps).next_power_of_two().max(64);
    let mut spec: Vec<Complex64> = (0..n_fft)
        .map(|k| {
            let mut w = 2.0 * std::f64::consts::PI * k as f64 / n_fft as f64;
            if k >= n_fft / 2 {
                w -= 2.0 * std::f64::consts::PI;
            }
            let ws = w * sps as f64;
            Complex64::from_polar(1.0, -0.5 * beta2l * ws * ws)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n_fft).process(&mut spec);
    let scale = 1.0 / n_fft as f64;
    let c = n_taps / 2;
    let taps: Vec<Complex64> = (0..n_taps)
        .map(|i| spec[(i + n_fft - c) % n_fft] * scale)
        .collect();
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    Ok(CdTaps {
        taps,
        truncation_loss: 1.0 - energy,
    })
}

/// Group-delay spread over the signal band, in symbols.
pub fn cd_memory_symbols(beta2l: f64) -> f64 {
    2.0 * std::f64::consts::PI * beta2l.abs()
}

/// Smallest odd tap count spanning twice the dispersive spread at `sps`.
pub fn default_cd_taps(beta2l: f64, sps: usize) -> usize {
    let n = (4.0 * std::f64::consts::PI * beta2l.abs() * (sps * sps) as f64).ceil() as usize;
    n | 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, sample_symbols};
    use crate::signal::{fir_apply, rrc_taps, FirMode, RngStream, SignalBlock};

    #[test]
    fn zero_dispersion_is_impulse() {
        let h = cd_fir(0.0, 11, 2).unwrap();
        for (i, t) in h.taps.iter().enumerate() {
            if i == 5 {
                assert!((t - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            } else {
                assert!(t.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn even_taps_rejected() {
        assert!(cd_fir(1.0, 10, 1).is_err());
    }

    #[test]
    fn opposite_dispersion_is_conjugate() {
        let a = cd_fir(1.3, 41, 2).unwrap().taps;
        let b = cd_fir(-1.3, 41, 2).unwrap().taps;
        for (x, y) in a.iter().zip(&b) {
            assert!((x.conj() - y).norm() < 1e-12);
        }
    }

    #[test]
    fn energy_within_one_percent() {
        for &(beta, sps) in &[(0.2, 2usize), (1.43, 1), (1.43, 2), (3.0, 2)] {
            let n = default_cd_taps(beta, sps);
            let h = cd_fir(beta, n, sps).unwrap();
            assert!(h.truncation_loss.abs() < 0.01, "beta {beta} sps {sps}: {}", h.truncation_loss);
        }
    }

    fn shaped_signal(sps: usize, n_sym: usize) -> SignalBlock {
        let c = build_qam(4).unwrap();
        let (_, sym) = sample_symbols(&c, n_sym, &RngStream::new(3, 3));
        let mut up = vec![Complex64::default(); n_sym * sps];
        for (k, s) in sym.iter().enumerate() {
            up[k * sps] = *s;
        }
        let g: Vec<Complex64> = rrc_taps(0.1, 64, sps)
            .unwrap()
            .into_iter()
            .map(|x| Complex64::new(x, 0.0))
            .collect();
        fir_apply(&SignalBlock::new(up, sps, 1.0).unwrap(), &g, FirMode::Same).unwrap()
    }

    #[test]
    fn cascade_with_inverse_is_identity() {
        for &(beta, sps) in &[(1.43, 2usize), (3.0, 2), (0.2, 4), (0.5, 4), (1.43, 4)] {
            let n = (4.0 * std::f64::consts::PI * beta * (sps * sps) as f64).ceil() as usize | 1;
            let s = shaped_signal(sps, 4000);
            let fwd = cd_fir(beta, n, sps).unwrap().taps;
            let bwd = cd_fir(-beta, n, sps).unwrap().taps;
            let out = fir_apply(&fir_apply(&s, &fwd, FirMode::Same).unwrap(), &bwd, FirMode::Same).unwrap();
            let guard = 1000;
            let range = guard..s.len() - guard;
            let err: f64 = range.clone().map(|i| (out.samples()[i] - s.samples()[i]).norm_sqr()).sum();
            let pow: f64 = range.map(|i| s.samples()[i].norm_sqr()).sum();
            assert!(err / pow < 1e-4, "beta {beta} sps {sps}: {}", err / pow);
        }
    }

    #[test]
    fn all_pass_over_passband() {
        for &(beta, sps) in &[(1.43, 1usize), (1.43, 2), (0.5, 2)] {
            let n = 2 * default_cd_taps(beta, sps) + 1;
            let h = cd_fir(beta, n, sps).unwrap().taps;
            // DTFT over 90% of the signal band |w_sample| <= pi / sps.
            let edge = 0.9 * std::f64::consts::PI / sps as f64;
            for k in 0..=200 {
                let w = -edge + 2.0 * edge * k as f64 / 200.0;
                let resp: Complex64 = h
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * Complex64::from_polar(1.0, -w * i as f64))
                    .sum();
                assert!((resp.norm() - 1.0).abs() < 0.02, "beta {beta} sps {sps} w {w}: {}", resp.norm());
            }
        }
    }
}
