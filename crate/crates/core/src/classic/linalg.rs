use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rows folded into the normal equations per block.
const BLOCK_ROWS: usize = 2048;

/// Streaming accumulator for `A^T A` and `A^T b`.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    cols: usize,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            gram: DMatrix::zeros(cols, cols),
            rhs: DVector::zeros(cols),
        }
    }

    /// Adds a row-major block of rows and their targets.
    pub fn add_rows(&mut self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != b.len() * self.cols {
            return Err(Error::param("design block and targets disagree in shape"));
        }
        for (ab, bb) in a.chunks(BLOCK_ROWS * self.cols).zip(b.chunks(BLOCK_ROWS)) {
            let blk = DMatrix::from_row_slice(bb.len(), self.cols, ab);
            let t = DVector::from_column_slice(bb);
            self.gram.gemm_tr(1.0, &blk, &blk, 1.0);
            self.rhs.gemv_tr(1.0, &blk, &t, 1.0);
        }
        Ok(())
    }

    /// Sum of the first `n` diagonal entries of `A^T A`.
    pub fn trace(&self, n: usize) -> f64 {
        (0..n.min(self.cols)).map(|i| self.gram[(i, i)]).sum()
    }

    /// Solves `(A^T A + ridge I) w = A^T b` by Cholesky.
    pub fn solve(&self, ridge: f64) -> Result<Vec<f64>> {
        let mut gram = self.gram.clone();
        for i in 0..self.cols {
            gram[(i, i)] += ridge;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
        let w = chol.solve(&self.rhs);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("least-squares solution is not finite".into()));
        }
        Ok(w.iter().copied().collect())
    }
}

/// Solves `(A^T A + ridge I) w = A^T b` for a row-major `rows x cols` matrix.
pub fn solve_ridge(a: &[f64], rows: usize, cols: usize, b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if a.len() != rows * cols || b.len() != rows {
        return Err(Error::param("design matrix and targets disagree in shape"));
    }
    let mut ne = NormalEquations::new(cols);
    ne.add_rows(a, b)?;
    ne.solve(ridge)
}

/// Trace of `A^T A` divided by the column count.
pub(crate) fn mean_diag(a: &[f64], cols: usize) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>() / cols.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocked_accumulation_matches_direct_solution() {
        // y = 2 x0 - x1 + 0.5 exactly, more rows than one block.
        let rows = 3 * BLOCK_ROWS + 17;
        let mut a = Vec::with_capacity(rows * 3);
        let mut b = Vec::with_capacity(rows);
        for r in 0..rows {
            let x0 = ((r * 7919) % 1000) as f64 / 500.0 - 1.0;
            let x1 = ((r * 104_729) % 997) as f64 / 498.5 - 1.0;
            a.extend_from_slice(&[x0, x1, 1.0]);
            b.push(2.0 * x0 - x1 + 0.5);
        }
        let w = solve_ridge(&a, rows, 3, &b, 0.0).unwrap();
        for (got, want) in w.iter().zip([2.0, -1.0, 0.5]) {
            assert!((got - want).abs() < 1e-10);
        }
    }
}
