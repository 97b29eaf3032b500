use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::DualPolBlock;

/// 2x2 MIMO FIR; `taps[p][q]` feeds input lane `q` into output lane `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterflyFir {
    pub taps: [[Vec<Complex64>; 2]; 2],
    pub sps_in: usize,
}

impl ButterflyFir {
    /// Center-spike identity of odd length `n`.
    pub fn identity(n: usize, sps_in: usize) -> Result<Self> {
        if n % 2 == 0 || n == 0 {
            return Err(Error::param("butterfly length must be odd"));
        }
        if !(1..=2).contains(&sps_in) {
            return Err(Error::param("butterfly input must be 1 or 2 samples per symbol"));
        }
        let mut taps: [[Vec<Complex64>; 2]; 2] =
            std::array::from_fn(|_| std::array::from_fn(|_| vec![Complex64::default(); n]));
        taps[0][0][n / 2] = Complex64::new(1.0, 0.0);
        taps[1][1][n / 2] = Complex64::new(1.0, 0.0);
        Ok(Self { taps, sps_in })
    }

    pub fn len(&self) -> usize {
        self.taps[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps[0][0].is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n % 2 == 0 {
            return Err(Error::param("butterfly length must be odd"));
        }
        for row in &self.taps {
            for t in row {
                if t.len() != n {
                    return Err(Error::param("butterfly branches differ in length"));
                }
                if t.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::Numerical("butterfly taps are not finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Output of lane `p` for symbol `n` (zero-padded input).
    #[inline]
    pub fn output_at(&self, lanes: [&[Complex64]; 2], p: usize, n: usize) -> Complex64 {
        let len = self.len();
        let c = (len / 2) as isize;
        let base = (n * self.sps_in) as isize + c;
        let m = lanes[0].len() as isize;
        let mut acc = Complex64::default();
        // Valid k range: 0 <= base - k < m.
        let k_lo = (base - m + 1).max(0) as usize;
        let k_hi = ((base + 1).min(len as isize)).max(0) as usize;
        for q in 0..2 {
            let w = &self.taps[p][q];
            let r = lanes[q];
            for k in k_lo..k_hi {
                acc += w[k] * r[(base - k as isize) as usize];
            }
        }
        acc
    }

    /// Multiplies every tap by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for row in &mut out.taps {
            for t in row {
                t.iter_mut().for_each(|v| *v *= factor);
            }
        }
        out
    }
}

/// `z_p = sum_q w_pq * r_q`, decimated to one sample per symbol with the
/// center tap aligned to symbol sample `n * sps`.
pub fn butterfly_apply(rx: &DualPolBlock, w: &ButterflyFir) -> Result<DualPolBlock> {
    if rx.sps() != w.sps_in {
        return Err(Error::param(format!(
            "input has {} samples per symbol, equalizer expects {}",
            rx.sps(),
            w.sps_in
        )));
    }
    w.validate()?;
    let lanes = rx.lanes();
    let n = rx.num_symbols();
    let x = (0..n).map(|k| w.output_at(lanes, 0, k)).collect();
    let y = (0..n).map(|k| w.output_at(lanes, 1, k)).collect();
    DualPolBlock::from_lanes(x, y, 1, rx.x.symbol_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(sps: usize, n: usize, seed: f64) -> DualPolBlock {
        let x = (0..n * sps).map(|i| Complex64::new((i as f64 * seed).sin(), (i as f64 * 0.7).cos())).collect();
        let y = (0..n * sps).map(|i| Complex64::new((i as f64 * 1.3).cos(), (i as f64 * seed).sin())).collect();
        DualPolBlock::from_lanes(x, y, sps, 1.0).unwrap()
    }

    #[test]
    fn identity_samples_symbol_rate() {
        let rx = block(2, 50, 0.37);
        let w = ButterflyFir::identity(7, 2).unwrap();
        let out = butterfly_apply(&rx, &w).unwrap();
        assert_eq!(out.x.samples(), rx.x.symbol_rate_samples(0).as_slice());
        assert_eq!(out.y.samples(), rx.y.symbol_rate_samples(0).as_slice());
    }

    #[test]
    fn cross_branches_swap() {
        let rx = block(1, 40, 0.2);
        let mut w = ButterflyFir::identity(5, 1).unwrap();
        w.taps[0][0][2] = Complex64::default();
        w.taps[1][1][2] = Complex64::default();
        w.taps[0][1][2] = Complex64::new(1.0, 0.0);
        w.taps[1][0][2] = Complex64::new(1.0, 0.0);
        let out = butterfly_apply(&rx, &w).unwrap();
        assert_eq!(out.x.samples(), rx.y.samples());
        assert_eq!(out.y.samples(), rx.x.samples());
    }

    #[test]
    fn sps_mismatch() {
        let rx = block(2, 10, 0.1);
        let w = ButterflyFir::identity(5, 1).unwrap();
        assert!(butterfly_apply(&rx, &w).is_err());
    }

    #[test]
    fn superposition() {
        let a = block(2, 30, 0.3);
        let b = block(2, 30, 0.9);
        let mut w = ButterflyFir::identity(9, 2).unwrap();
        for (p, row) in w.taps.iter_mut().enumerate() {
            for (q, t) in row.iter_mut().enumerate() {
                for (k, v) in t.iter_mut().enumerate() {
                    *v += Complex64::new(0.1 * (k + p) as f64, -0.05 * (k * q) as f64);
                }
            }
        }
        let (ca, cb) = (Complex64::new(0.5, 2.0), Complex64::new(-1.0, 0.3));
        let comb = |u: &[Complex64], v: &[Complex64]| u.iter().zip(v).map(|(s, t)| ca * s + cb * t).collect::<Vec<_>>();
        let s = DualPolBlock::from_lanes(comb(a.x.samples(), b.x.samples()), comb(a.y.samples(), b.y.samples()), 2, 1.0).unwrap();
        let (oa, ob, os) = (butterfly_apply(&a, &w).unwrap(), butterfly_apply(&b, &w).unwrap(), butterfly_apply(&s, &w).unwrap());
        for k in 0..30 {
            let want = ca * oa.x.samples()[k] + cb * ob.x.samples()[k];
            assert!((os.x.samples()[k] - want).norm() <= 1e-12 * (1.0 + want.norm()));
        }
    }
}
