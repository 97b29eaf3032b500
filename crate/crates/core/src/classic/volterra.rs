use super::ffe::Ridge;
use super::linalg::NormalEquations;
use crate::error::{Error, Result};

pub fn volterra_feature_count(m1: usize, m2: usize) -> usize {
    m1 + m2 * (m2 + 1) / 2
}

fn centered(window: &[f64], m: usize) -> &[f64] {
    let off = (window.len() - m) / 2;
    &window[off..off + m]
}

/// Linear terms from the `m1` samples nearest the window center, followed by
/// all products `x_i x_j` (`i <= j`) of the `m2` samples nearest the center.
pub fn volterra_features(window: &[f64], m1: usize, m2: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; volterra_feature_count(m1, m2)];
    volterra_features_into(window, m1, m2, &mut out)?;
    Ok(out)
}

pub(crate) fn volterra_features_into(window: &[f64], m1: usize, m2: usize, out: &mut [f64]) -> Result<()> {
    if m2 > m1 {
        return Err(Error::param("second-order memory exceeds linear memory"));
    }
    if window.len() < m1.max(m2) {
        return Err(Error::param("window shorter than Volterra memory"));
    }
    out[..m1].copy_from_slice(centered(window, m1));
    let q = centered(window, m2);
    let mut k = m1;
    for i in 0..m2 {
        for j in i..m2 {
            out[k] = q[i] * q[j];
            k += 1;
        }
    }
    Ok(())
}

/// Second-order Volterra equalizer with a symmetric (upper-triangle) kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraModel {
    pub m1: usize,
    pub m2: usize,
    pub kernel1: Vec<f64>,
    pub kernel2: Vec<f64>,
    pub bias: f64,
}

impl VolterraModel {
    pub fn zeros(m1: usize, m2: usize) -> Result<Self> {
        if m2 > m1 {
            return Err(Error::param("second-order memory exceeds linear memory"));
        }
        Ok(Self {
            m1,
            m2,
            kernel1: vec![0.0; m1],
            kernel2: vec![0.0; m2 * (m2 + 1) / 2],
            bias: 0.0,
        })
    }

    pub fn predict(&self, window: &[f64]) -> f64 {
        let lin = centered(window, self.m1);
        let q = centered(window, self.m2);
        let mut acc = self.bias + self.kernel1.iter().zip(lin).map(|(k, x)| k * x).sum::<f64>();
        let mut idx = 0;
        for i in 0..self.m2 {
            let mut row = 0.0;
            for j in i..self.m2 {
                row += self.kernel2[idx] * q[j];
                idx += 1;
            }
            acc += row * q[i];
        }
        acc
    }

    /// Least-squares fit with intercept on rows of `width`-sample windows.
    pub fn fit(
        windows: &[f64],
        width: usize,
        targets: &[f64],
        m1: usize,
        m2: usize,
        ridge: Ridge,
    ) -> Result<Self> {
        let rows = targets.len();
        let nf = volterra_feature_count(m1, m2);
        if rows < 10 * nf {
            return Err(Error::param(format!(
                "Volterra fit needs at least {} rows, got {rows}",
                10 * nf
            )));
        }
        let cols = nf + 1;
        if windows.len() != rows * width {
            return Err(Error::param("window matrix does not match targets"));
        }
        // Features are built and folded in blocks to bound memory.
        let block = 1024;
        let mut ne = NormalEquations::new(cols);
        let mut a = vec![0.0; block * cols];
        for start in (0..rows).step_by(block) {
            let n = block.min(rows - start);
            for r in 0..n {
                let dst = &mut a[r * cols..(r + 1) * cols];
                let src = &windows[(start + r) * width..(start + r + 1) * width];
                volterra_features_into(src, m1, m2, &mut dst[..nf])?;
                dst[nf] = 1.0;
            }
            ne.add_rows(&a[..n * cols], &targets[start..start + n])?;
        }
        let lambda = ridge.from_trace(ne.trace(nf) / nf as f64);
        let w = ne.solve(lambda)?;
        Ok(Self {
            m1,
            m2,
            kernel1: w[..m1].to_vec(),
            kernel2: w[m1..nf].to_vec(),
            bias: w[nf],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::LinearFfe;

    #[test]
    fn feature_count() {
        let w: Vec<f64> = (0..9).map(|v| v as f64).collect();
        assert_eq!(volterra_features(&w, 7, 3).unwrap().len(), 13);
    }

    #[test]
    fn single_tap_features() {
        assert_eq!(volterra_features(&[3.0], 1, 1).unwrap(), vec![3.0, 9.0]);
    }

    #[test]
    fn zero_window_zero_features() {
        assert!(volterra_features(&[0.0; 11], 7, 5).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn memory_order_checked() {
        assert!(volterra_features(&[0.0; 11], 3, 5).is_err());
    }

    #[test]
    fn predict_matches_features() {
        let w = [0.3, -1.0, 2.0, 0.5, -0.7];
        let mut m = VolterraModel::zeros(5, 3).unwrap();
        m.kernel1 = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        m.kernel2 = vec![1.0, -1.0, 0.5, 2.0, 0.25, -0.5];
        m.bias = 0.7;
        let f = volterra_features(&w, 5, 3).unwrap();
        let k: Vec<f64> = m.kernel1.iter().chain(&m.kernel2).copied().collect();
        let direct = m.bias + f.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>();
        assert!((m.predict(&w) - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_quadratic_kernel_is_linear_ffe() {
        let w = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1, 0.0];
        let mut m = VolterraModel::zeros(5, 3).unwrap();
        m.kernel1 = vec![0.1, -0.2, 0.9, 0.4, 0.05];
        m.bias = -0.3;
        let ffe = LinearFfe {
            taps: m.kernel1.clone(),
            bias: m.bias,
        };
        assert_eq!(m.predict(&w), ffe.predict(&w));
    }
}
