use num_complex::Complex64;

use super::VaeLeModel;

/// Decoder taps as a 2x2 channel estimate, with an optional alignment score
/// against a ground-truth response.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub taps: [[Vec<Complex64>; 2]; 2],
    pub score: Option<f64>,
}

/// `truth[p][q]` maps input lane `q` to output lane `p`, center-aligned at
/// the decoder's sample rate.
pub fn channel_estimate(model: &VaeLeModel, truth: Option<&[[Vec<Complex64>; 2]; 2]>) -> ChannelEstimate {
    let taps = model.decoder.taps.clone();
    let score = truth.map(|t| alignment_score(&taps, t));
    ChannelEstimate { taps, score }
}

/// Normalized correlation in `[0, 1]`. Blind training recovers each symbol
/// lane only up to a phase, a delay and a lane swap, so every column of the
/// estimate takes its own phase and lag, and both lane assignments are tried.
pub fn alignment_score(h: &[[Vec<Complex64>; 2]; 2], truth: &[[Vec<Complex64>; 2]; 2]) -> f64 {
    let energy = |m: &[[Vec<Complex64>; 2]; 2]| -> f64 { m.iter().flatten().flatten().map(|v| v.norm_sqr()).sum() };
    let (eh, et) = (energy(h), energy(truth));
    if eh == 0.0 || et == 0.0 {
        return 0.0;
    }
    let max_lag = (h[0][0].len() + truth[0][0].len()) as isize;
    let column = |hp: usize, tp: usize| -> f64 {
        let ch = (h[0][hp].len() / 2) as isize;
        let ct = (truth[0][tp].len() / 2) as isize;
        (-max_lag..=max_lag)
            .map(|lag| {
                let mut s = Complex64::default();
                for q in 0..2 {
                    for (kt, t) in truth[q][tp].iter().enumerate() {
                        let kh = kt as isize - ct + ch + lag;
                        if kh >= 0 && (kh as usize) < h[q][hp].len() {
                            s += h[q][hp][kh as usize] * t.conj();
                        }
                    }
                }
                s.norm()
            })
            .fold(0.0, f64::max)
    };
    let direct = column(0, 0) + column(1, 1);
    let swapped = column(1, 0) + column(0, 1);
    (direct.max(swapped) / (eh * et).sqrt()).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_qam;
    use crate::signal::RngStream;
    use rand::Rng;

    fn random_taps(seed: u64, n: usize) -> [[Vec<Complex64>; 2]; 2] {
        let mut r = RngStream::new(seed, 3).rng();
        std::array::from_fn(|_| {
            std::array::from_fn(|_| {
                (0..n)
                    .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
                    .collect()
            })
        })
    }

    #[test]
    fn ground_truth_scores_one() {
        let c = build_qam(4).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 5, 9, 1).unwrap();
        let t = random_taps(1, 9);
        m.decoder.taps = t.clone();
        let est = channel_estimate(&m, Some(&t));
        assert!((est.score.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invariant_to_column_phase_lag_and_swap() {
        let t = random_taps(2, 9);
        let mut h: [[Vec<Complex64>; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| vec![Complex64::default(); 11]));
        let rot = [Complex64::from_polar(1.0, 0.4), Complex64::from_polar(1.0, -2.0)];
        for q in 0..2 {
            for p in 0..2 {
                // Column p of the truth becomes column 1-p, shifted by one tap.
                for k in 0..9 {
                    h[q][1 - p][k + 2] = t[q][p][k] * rot[p];
                }
            }
        }
        assert!((alignment_score(&h, &t) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_pair_scores_low() {
        let s = alignment_score(&random_taps(3, 19), &random_taps(4, 19));
        assert!(s < 0.8, "{s}");
    }
}
