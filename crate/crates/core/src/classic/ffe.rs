use super::linalg::{mean_diag, solve_ridge};
use crate::error::{Error, Result};

/// Ridge regularization for least-squares training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `1e-6 * trace(X^T X) / n_cols`.
    Auto,
    Fixed(f64),
}

impl Ridge {
    pub(crate) fn value(self, features: &[f64], cols: usize) -> f64 {
        self.from_trace(mean_diag(features, cols))
    }

    /// Ridge for a known `trace(X^T X) / n_cols`.
    pub(crate) fn from_trace(self, mean_diag: f64) -> f64 {
        match self {
            Ridge::Auto => 1e-6 * mean_diag,
            Ridge::Fixed(v) => v,
        }
    }
}

/// Real-valued FIR equalizer producing one estimate per symbol window.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFfe {
    pub taps: Vec<f64>,
    pub bias: f64,
}

impl LinearFfe {
    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    /// `window` must be centered on the decision sample and at least as wide
    /// as the filter; the central `n_taps` samples are used.
    pub fn predict(&self, window: &[f64]) -> f64 {
        let off = (window.len() - self.taps.len()) / 2;
        self.bias
            + self
                .taps
                .iter()
                .zip(&window[off..])
                .map(|(t, x)| t * x)
                .sum::<f64>()
    }
}

/// Least-squares FIR from a row-major feature matrix (`n_taps` columns) and
/// target symbols. With `intercept` a bias is fitted as well.
pub fn ffe_train_ls(
    features: &[f64],
    targets: &[f64],
    n_taps: usize,
    ridge: Ridge,
    intercept: bool,
) -> Result<LinearFfe> {
    let rows = targets.len();
    if n_taps == 0 || features.len() != rows * n_taps {
        return Err(Error::param("feature matrix shape does not match n_taps"));
    }
    if rows < 10 * n_taps {
        return Err(Error::param(format!(
            "need at least {} training symbols, got {rows}",
            10 * n_taps
        )));
    }
    if !intercept {
        let lambda = ridge.value(features, n_taps);
        let taps = solve_ridge(features, rows, n_taps, targets, lambda)?;
        return Ok(LinearFfe { taps, bias: 0.0 });
    }
    let cols = n_taps + 1;
    let mut aug = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        aug.extend_from_slice(&features[r * n_taps..(r + 1) * n_taps]);
        aug.push(1.0);
    }
    let lambda = ridge.value(features, n_taps);
    let w = solve_ridge(&aug, rows, cols, targets, lambda)?;
    Ok(LinearFfe {
        taps: w[..n_taps].to_vec(),
        bias: w[n_taps],
    })
}

/// Normalized LMS training, starting from zero taps.
pub fn ffe_train_lms(
    features: &[f64],
    targets: &[f64],
    n_taps: usize,
    step: f64,
    epochs: usize,
) -> Result<LinearFfe> {
    let rows = targets.len();
    if n_taps == 0 || features.len() != rows * n_taps {
        return Err(Error::param("feature matrix shape does not match n_taps"));
    }
    if !(step > 0.0 && step < 2.0) {
        return Err(Error::param("NLMS step must lie in (0, 2)"));
    }
    let mut m = LinearFfe {
        taps: vec![0.0; n_taps],
        bias: 0.0,
    };
    let mut trace = Vec::new();
    for _ in 0..epochs {
        let mut sse = 0.0;
        for r in 0..rows {
            let x = &features[r * n_taps..(r + 1) * n_taps];
            let e = targets[r] - m.predict(x);
            sse += e * e;
            let norm = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
            let g = step * e / norm;
            m.taps.iter_mut().zip(x).for_each(|(t, v)| *t += g * v);
            m.bias += g;
        }
        trace.push(sse / rows as f64);
        if !sse.is_finite() {
            return Err(Error::training("LMS diverged", trace));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Windows of `n_taps` centered samples of `y` around each symbol.
    fn design(y: &[f64], n_taps: usize) -> Vec<f64> {
        let h = (n_taps / 2) as isize;
        let mut a = Vec::with_capacity(y.len() * n_taps);
        for k in 0..y.len() as isize {
            for j in -h..=h {
                let i = k + j;
                a.push(if i >= 0 && (i as usize) < y.len() { y[i as usize] } else { 0.0 });
            }
        }
        a
    }

    fn symbols(n: usize, seed: u64) -> Vec<f64> {
        let mut r = RngStream::new(seed, 0).rng();
        (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
    }

    fn mse(m: &LinearFfe, a: &[f64], t: &[f64], lo: usize, hi: usize) -> f64 {
        let n = m.n_taps();
        (lo..hi).map(|r| (m.predict(&a[r * n..(r + 1) * n]) - t[r]).powi(2)).sum::<f64>() / (hi - lo) as f64
    }

    #[test]
    fn identity_channel_gives_impulse() {
        let s = symbols(2000, 1);
        let a = design(&s, 11);
        let m = ffe_train_ls(&a, &s, 11, Ridge::Auto, false).unwrap();
        for (i, t) in m.taps.iter().enumerate() {
            // Auto ridge shrinks the unit tap by about 1e-6.
            let want = if i == 5 { 1.0 } else { 0.0 };
            assert!((t - want).abs() < 1e-5, "tap {i}: {t}");
        }
    }

    #[test]
    fn inverts_minimum_phase_channel() {
        let s = symbols(5000, 2);
        let h = [1.0, 0.4, 0.1];
        let y: Vec<f64> = (0..s.len())
            .map(|k| (0..3).filter(|&j| k >= j).map(|j| h[j] * s[k - j]).sum())
            .collect();
        let a = design(&y, 31);
        let m = ffe_train_ls(&a, &s, 31, Ridge::Auto, false).unwrap();
        let e = mse(&m, &a, &s, 50, 4950);
        assert!(e < 1e-4, "mse {e}");
    }

    #[test]
    fn uncorrelated_targets_shrink_to_zero() {
        let mut r = RngStream::new(3, 1).rng();
        let n = 1_000_000;
        let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let t: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let a = design(&x, 11);
        let m = ffe_train_ls(&a, &t, 11, Ridge::Auto, false).unwrap();
        let norm = m.taps.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "{norm}");
    }

    #[test]
    fn too_few_rows() {
        let s = symbols(50, 4);
        assert!(ffe_train_ls(&design(&s, 11), &s, 11, Ridge::Auto, false).is_err());
    }

    #[test]
    fn longer_filters_never_fit_worse() {
        let s = symbols(3000, 5);
        let y: Vec<f64> = (0..s.len())
            .map(|k| s[k] + if k > 0 { 0.5 * s[k - 1] } else { 0.0 } + 0.1 * (k as f64).sin())
            .collect();
        let mut prev = f64::INFINITY;
        for n in [1usize, 3, 5, 9, 15, 21] {
            let a = design(&y, n);
            let m = ffe_train_ls(&a, &s, n, Ridge::Fixed(1e-9), false).unwrap();
            let e = mse(&m, &a, &s, 0, s.len());
            assert!(e <= prev + 1e-9, "n {n}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn lms_approaches_ls() {
        let s = symbols(4000, 6);
        let y: Vec<f64> = (0..s.len()).map(|k| s[k] + if k > 0 { 0.3 * s[k - 1] } else { 0.0 } + 0.2).collect();
        let a = design(&y, 9);
        let ls = ffe_train_ls(&a, &s, 9, Ridge::Auto, true).unwrap();
        let lms = ffe_train_lms(&a, &s, 9, 0.05, 5).unwrap();
        let (e1, e2) = (mse(&ls, &a, &s, 10, 3990), mse(&lms, &a, &s, 10, 3990));
        assert!(e2 < e1 + 1e-2, "lms {e2} ls {e1}");
    }
}
