use libm::erfc;

use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// Phase ambiguity to resolve before counting errors.
#[derive(Debug, Clone, Copy)]
pub enum Ambiguity<'a> {
    None,
    /// Search the four 90 degree rotations of the given constellation.
    QamRotations(&'a Constellation),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerReport {
    pub ser: f64,
    /// `decisions[i + lag]` is compared with `reference[i]`.
    pub lag: isize,
    /// Number of quarter turns applied to the decisions.
    pub rotation: usize,
    pub errors: usize,
    pub compared: usize,
}

fn overlap(n_dec: usize, n_ref: usize, lag: isize) -> (usize, usize) {
    let lo = if lag < 0 { (-lag) as usize } else { 0 };
    let hi = (n_ref as isize).min(n_dec as isize - lag).max(0) as usize;
    (lo, hi.max(lo))
}

fn lag_order(max_lag: usize) -> impl Iterator<Item = isize> {
    std::iter::once(0).chain((1..=max_lag as isize).flat_map(|l| [l, -l]))
}

/// Symbol error rate with lag search over `[-max_lag, max_lag]` and optional
/// rotation search. The minimum over all candidates is reported.
pub fn symbol_error_rate(
    decisions: &[usize],
    reference: &[usize],
    ambiguity: Ambiguity<'_>,
    max_lag: usize,
) -> Result<SerReport> {
    if decisions.len().abs_diff(reference.len()) > max_lag {
        return Err(Error::Evaluation(format!(
            "length mismatch {} vs {} exceeds alignment window {}",
            decisions.len(),
            reference.len(),
            max_lag
        )));
    }
    let rotations: Vec<Option<Vec<usize>>> = match ambiguity {
        Ambiguity::None => vec![None],
        Ambiguity::QamRotations(c) => (0..4).map(|k| Some(c.rotation_map(k))).collect(),
    };
    let mut best: Option<SerReport> = None;
    for (rot, map) in rotations.iter().enumerate() {
        let mapped: Vec<usize> = match map {
            None => decisions.to_vec(),
            Some(m) => decisions.iter().map(|&d| m[d]).collect(),
        };
        for lag in lag_order(max_lag) {
            let (lo, hi) = overlap(mapped.len(), reference.len(), lag);
            if hi == lo {
                continue;
            }
            let errors = (lo..hi)
                .filter(|&i| mapped[(i as isize + lag) as usize] != reference[i])
                .count();
            let ser = errors as f64 / (hi - lo) as f64;
            if best.is_none_or(|b| ser < b.ser) {
                best = Some(SerReport {
                    ser,
                    lag,
                    rotation: rot,
                    errors,
                    compared: hi - lo,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Evaluation("no overlap between decisions and reference".into()))
}

/// Bit error rate under the alignment found by [`symbol_error_rate`].
pub fn bit_error_rate(
    decisions: &[usize],
    reference: &[usize],
    c: &Constellation,
    alignment: &SerReport,
) -> f64 {
    let map = c.rotation_map(alignment.rotation);
    let (lo, hi) = overlap(decisions.len(), reference.len(), alignment.lag);
    if hi == lo {
        return 0.0;
    }
    let bits = c.bits_per_symbol();
    let errors: u32 = (lo..hi)
        .map(|i| {
            let d = map[decisions[(i as isize + alignment.lag) as usize]];
            (c.label(d) ^ c.label(reference[i])).count_ones()
        })
        .sum();
    errors as f64 / ((hi - lo) * bits) as f64
}

/// Bit error probability of antipodal signalling in AWGN, `Q(sqrt(2 Es/N0))`.
pub fn theory_ber_2pam(esn0_db: f64) -> f64 {
    let esn0 = 10f64.powf(esn0_db / 10.0);
    0.5 * erfc(esn0.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_qam;
    use proptest::prelude::*;

    #[test]
    fn identical_is_zero() {
        let a = vec![0, 1, 2, 3, 2, 1];
        let r = symbol_error_rate(&a, &a, Ambiguity::None, 32).unwrap();
        assert_eq!(r.ser, 0.0);
        assert_eq!(r.lag, 0);
    }

    #[test]
    fn all_wrong_is_one() {
        let a = vec![0usize; 10];
        let b = vec![1usize; 10];
        let r = symbol_error_rate(&a, &b, Ambiguity::None, 0).unwrap();
        assert_eq!(r.ser, 1.0);
    }

    #[test]
    fn qpsk_rotation_absorbed() {
        let c = build_qam(4).unwrap();
        let reference: Vec<usize> = (0..200).map(|i| (i * 7 + i / 3) % 4).collect();
        let quarter = c.rotation_map(1);
        let rotated: Vec<usize> = reference.iter().map(|&i| quarter[i]).collect();
        let plain = symbol_error_rate(&rotated, &reference, Ambiguity::None, 0).unwrap();
        assert!(plain.ser > 0.5);
        let r = symbol_error_rate(&rotated, &reference, Ambiguity::QamRotations(&c), 0).unwrap();
        assert_eq!(r.ser, 0.0);
        assert_eq!(r.rotation, 3);
    }

    #[test]
    fn finds_lag() {
        let reference: Vec<usize> = (0..100).map(|i| (i * i + 3 * i) % 5).collect();
        let mut delayed = vec![0, 0, 0];
        delayed.extend_from_slice(&reference[..97]);
        let r = symbol_error_rate(&delayed, &reference, Ambiguity::None, 8).unwrap();
        assert_eq!(r.lag, 3);
        assert_eq!(r.ser, 0.0);
    }

    #[test]
    fn length_mismatch_beyond_window() {
        let r = symbol_error_rate(&[0; 10], &[0; 50], Ambiguity::None, 32);
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn theory_values() {
        assert!((theory_ber_2pam(f64::NEG_INFINITY) - 0.5).abs() < 1e-15);
        // Reference value of 0.5 * erfc(1).
        let v0 = theory_ber_2pam(0.0);
        assert!((v0 - 7.864_960_352_514_258e-2).abs() < 1e-12, "{v0:e}");
        let v = theory_ber_2pam(9.59);
        assert!((v / 1.0e-5 - 1.0).abs() < 0.02, "{v}");
    }

    proptest! {
        #[test]
        fn symmetric_without_ambiguity(
            a in prop::collection::vec(0usize..4, 40),
            b in prop::collection::vec(0usize..4, 40),
        ) {
            let ab = symbol_error_rate(&a, &b, Ambiguity::None, 5).unwrap();
            let ba = symbol_error_rate(&b, &a, Ambiguity::None, 5).unwrap();
            prop_assert_eq!(ab.ser, ba.ser);
        }
    }
}
