use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use super::SignalBlock;
use crate::error::{Error, Result};

/// Output framing for [`fir_apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirMode {
    /// Input length, shifted so that the center tap is aligned with the input.
    Same,
    /// Full linear convolution, `n + taps - 1` samples.
    Full,
}

/// Root-raised-cosine taps, `span_symbols * sps + 1` long and unit energy.
pub fn rrc_taps(rolloff: f64, span_symbols: usize, sps: usize) -> Result<Vec<f64>> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::param(format!("rolloff {rolloff} outside (0, 1]")));
    }
    if span_symbols == 0 || sps == 0 {
        return Err(Error::param("span and sps must be positive"));
    }
    let n = span_symbols * sps;
    if n % 2 != 0 {
        return Err(Error::param("span_symbols * sps must be even"));
    }
    let half = (n / 2) as f64;
    let mut taps: Vec<f64> = (0..=n)
        .map(|i| rrc_value((i as f64 - half) / sps as f64, rolloff))
        .collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let norm = energy.sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    Ok(taps)
}

fn rrc_value(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let edge = 1.0 / (4.0 * beta);
    if (t.abs() - edge).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Linear convolution of a block with complex taps.
pub fn fir_apply(signal: &SignalBlock, taps: &[Complex64], mode: FirMode) -> Result<SignalBlock> {
    if taps.is_empty() {
        return Err(Error::param("FIR taps must not be empty"));
    }
    let full = convolve(signal.samples(), taps);
    let out = frame(full, signal.len(), taps.len(), mode);
    match mode {
        FirMode::Same => signal.with_samples(out),
        // Full output length generally breaks the sps framing; the caller gets
        // a 1-sps view of the raw convolution.
        FirMode::Full => SignalBlock::new(out, 1, signal.symbol_rate()),
    }
}

/// Real-valued convenience variant used along the IM/DD chain.
pub fn fir_apply_real(x: &[f64], taps: &[f64], mode: FirMode) -> Result<Vec<f64>> {
    if taps.is_empty() {
        return Err(Error::param("FIR taps must not be empty"));
    }
    let mut full = vec![0.0; x.len() + taps.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (k, &t) in taps.iter().enumerate() {
            full[i + k] += xi * t;
        }
    }
    Ok(frame(full, x.len(), taps.len(), mode))
}

/// Full linear convolution of two complex sequences.
pub fn filter_full(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    convolve(a, b)
}

pub(crate) fn convolve(x: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    let mut full = vec![Complex64::default(); x.len() + taps.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi.re == 0.0 && xi.im == 0.0 {
            continue;
        }
        for (k, &t) in taps.iter().enumerate() {
            full[i + k] += xi * t;
        }
    }
    full
}

fn frame<T: Copy>(full: Vec<T>, n: usize, n_taps: usize, mode: FirMode) -> Vec<T> {
    match mode {
        FirMode::Full => full,
        FirMode::Same => {
            let delay = (n_taps - 1) / 2;
            full[delay..delay + n].to_vec()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(v: &[f64]) -> SignalBlock {
        SignalBlock::from_real(v, 1, 1.0).unwrap()
    }

    #[test]
    fn rrc_unit_energy_and_symmetric() {
        let t = rrc_taps(1.0, 8, 1).unwrap();
        assert_eq!(t.len(), 9);
        let e: f64 = t.iter().map(|x| x * x).sum();
        assert!((e - 1.0).abs() < 1e-12);
        for i in 0..t.len() {
            assert!((t[i] - t[t.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn rrc_center_is_max() {
        let t = rrc_taps(0.5, 8, 4).unwrap();
        let c = t.len() / 2;
        assert!(t.iter().all(|&x| x <= t[c]));
    }

    /// Cascade of an RRC with its time reverse, sampled at symbol spacing.
    fn max_isi(rolloff: f64, span: usize, sps: usize) -> f64 {
        let t = rrc_taps(rolloff, span, sps).unwrap();
        let rev: Vec<f64> = t.iter().rev().copied().collect();
        let rc = fir_apply_real(&t, &rev, FirMode::Full).unwrap();
        let c = rc.len() / 2;
        let mut worst = 0.0f64;
        let mut k = sps;
        while k <= c {
            worst = worst.max(rc[c - k].abs() / rc[c]).max(rc[c + k].abs() / rc[c]);
            k += sps;
        }
        worst
    }

    #[test]
    fn rrc_cascade_truncation_isi() {
        // Rectangular truncation at 16 symbols leaves ~8e-3 worst-case ISI
        // for rolloff 0.1 (value from an independent numpy evaluation).
        let isi = max_isi(0.1, 16, 2);
        assert!((isi - 7.992_116e-3).abs() < 1e-8, "isi {isi}");
    }

    #[test]
    fn rrc_cascade_nyquist_grid() {
        for &beta in &[0.1, 0.25, 0.5, 1.0] {
            for &sps in &[2usize, 4, 8] {
                let isi = max_isi(beta, 64, sps);
                assert!(isi < 1e-3, "beta {beta} sps {sps}: {isi}");
            }
        }
    }

    #[test]
    fn rrc_rejects_bad_params() {
        assert!(rrc_taps(0.0, 8, 2).is_err());
        assert!(rrc_taps(1.5, 8, 2).is_err());
        assert!(rrc_taps(0.5, 3, 1).is_err());
    }

    #[test]
    fn identity_kernel() {
        let s = block(&[1.0, -2.0, 3.0, 0.5]);
        let out = fir_apply(&s, &[Complex64::new(1.0, 0.0)], FirMode::Same).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn impulse_response_full() {
        let s = block(&[1.0]);
        let taps = [Complex64::new(0.5, 1.0), Complex64::new(-2.0, 0.0), Complex64::new(0.0, 3.0)];
        let out = fir_apply(&s, &taps, FirMode::Full).unwrap();
        assert_eq!(out.samples(), &taps);
    }

    #[test]
    fn shift_kernel_delays() {
        let s = block(&[1.0, 2.0, 3.0]);
        let taps = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let out = fir_apply(&s, &taps, FirMode::Full).unwrap();
        let re: Vec<f64> = out.real_parts();
        assert_eq!(re, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_taps_rejected() {
        assert!(fir_apply(&block(&[1.0]), &[], FirMode::Same).is_err());
    }

    proptest! {
        #[test]
        fn fir_is_linear(
            s1 in prop::collection::vec(-10.0f64..10.0, 16),
            s2 in prop::collection::vec(-10.0f64..10.0, 16),
            taps in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..9),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let taps: Vec<Complex64> = taps.into_iter().map(|(r, i)| Complex64::new(r, i)).collect();
            let mix: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + b * y).collect();
            let lhs = fir_apply(&block(&mix), &taps, FirMode::Same).unwrap();
            let o1 = fir_apply(&block(&s1), &taps, FirMode::Same).unwrap();
            let o2 = fir_apply(&block(&s2), &taps, FirMode::Same).unwrap();
            for i in 0..16 {
                let rhs = o1.samples()[i] * a + o2.samples()[i] * b;
                let scale = a.abs() * o1.samples()[i].norm() + b.abs() * o2.samples()[i].norm();
                let d = (lhs.samples()[i] - rhs).norm();
                prop_assert!(d <= 1e-12 * scale);
            }
        }
    }
}
