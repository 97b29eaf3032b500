//! Minimal neural runtime (tensors, tape autodiff, conv/dense layers) and
//! the supervised CNN equalizer.

mod cnn;
mod report;
mod tape;

pub use cnn::{
    cnn_train, macs_per_symbol_cnn, macs_per_window_cnn, parse_layers, CnnConfig, CnnModel, LabeledData,
    LayerSpec, OutputMode, TrainOptions,
};
pub(crate) use cnn::nearest_level;
pub use report::{checksum, TrainReport};
pub use tape::{Grads, Tape, Tensor, Var};

use rand::Rng;

use crate::signal::RngStream;

/// Finite-difference check of every parameter gradient of a random small
/// network (conv, ReLU, dense; cross-entropy or MSE head) on a random batch.
///
/// Coordinates whose central difference crosses a ReLU kink are skipped,
/// since the one-sided slopes differ there. Returns the largest relative
/// error `|a - fd| / max(|a|, |fd|, 1e-3 * max|a|)` and the number of
/// compared coordinates.
pub fn cnn_gradient_check(seed: u64) -> crate::Result<(f64, usize)> {
    let mut r = RngStream::new(seed, 77).rng();
    let classes = r.random_range(2..4usize);
    let symbols = r.random_range(1..3usize);
    let window = r.random_range(10..18usize);
    let c1 = r.random_range(1..4usize);
    let k1 = r.random_range(2..5usize);
    let s1 = r.random_range(1..3usize);
    let l1 = (window - k1) / s1 + 1;
    let c2 = r.random_range(1..3usize);
    let k2 = r.random_range(1..4usize).min(l1);
    let l2 = l1 - k2 + 1;
    let regression = r.random_bool(0.3);
    let out = if regression { symbols } else { symbols * classes };
    let cfg = CnnConfig {
        input_window: window,
        layers: parse_layers(&format!(
            "conv(1,{c1},{k1},{s1}) relu conv({c1},{c2},{k2},1) relu dense({},{out})",
            c2 * l2
        ))?,
        symbols_per_window: symbols,
        n_classes: classes,
        output: if regression { OutputMode::Regression } else { OutputMode::Classes },
    };
    cfg.validate()?;
    let mut model = CnnModel::init(&cfg, &RngStream::new(seed, 78))?;
    // Nonzero biases so dense and conv bias paths are exercised.
    let flat: Vec<f64> = model.flat_params().iter().map(|v| v + r.random_range(-0.2..0.2)).collect();
    model.set_flat_params(&flat)?;
    let batch = r.random_range(1..5usize);
    let x: Vec<f64> = (0..batch * window).map(|_| r.random_range(-1.5..1.5)).collect();
    let labels: Vec<usize> = (0..batch * symbols).map(|_| r.random_range(0..classes)).collect();
    let targets: Vec<f64> = (0..batch * symbols).map(|_| r.random_range(-1.0..1.0)).collect();

    let eval = |m: &CnnModel| -> crate::Result<(f64, Vec<bool>, Vec<f64>)> {
        let mut tape = Tape::new();
        let (y, leaves) = m.forward(&mut tape, &x, batch)?;
        let loss = if regression {
            tape.mse(y, &targets)?
        } else {
            tape.softmax_ce(y, classes, &labels)?
        };
        let g = tape.backward(loss)?;
        let grads: Vec<f64> = leaves
            .iter()
            .map(|v| g.wrt(*v).map(|t| t.data().to_vec()))
            .collect::<crate::Result<Vec<_>>>()?
            .concat();
        // Activation pattern of every ReLU input.
        let pattern = x.chunks(window).flat_map(|w| relu_pattern(m, w)).collect();
        Ok((tape.value(loss)?.data()[0], pattern, grads))
    };
    let (_, base_pattern, analytic) = eval(&model)?;
    let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for i in 0..flat.len() {
        let mut p = flat.clone();
        p[i] += h;
        model.set_flat_params(&p)?;
        let (lp, pp, _) = eval(&model)?;
        p[i] -= 2.0 * h;
        model.set_flat_params(&p)?;
        let (lm, pm, _) = eval(&model)?;
        if pp != base_pattern || pm != base_pattern {
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3 * scale).max(1e-300);
        worst = worst.max(err);
        compared += 1;
    }
    Ok((worst, compared))
}

/// Signs of every ReLU input for one window.
fn relu_pattern(m: &CnnModel, window: &[f64]) -> Vec<bool> {
    let mut t = Tape::new();
    let leaves: Vec<Var> = m.params.iter().map(|p| t.leaf(p.clone())).collect();
    let mut h = t.leaf(Tensor::from_vec(&[1, 1, window.len()], window.to_vec()).unwrap());
    let mut pi = 0;
    let mut pattern = Vec::new();
    for l in &m.cfg.layers {
        h = match *l {
            LayerSpec::Conv1d { stride, .. } => {
                pi += 2;
                t.conv1d(h, leaves[pi - 2], leaves[pi - 1], stride).unwrap()
            }
            LayerSpec::Dense { .. } => {
                pi += 2;
                t.dense(h, leaves[pi - 2], leaves[pi - 1]).unwrap()
            }
            LayerSpec::Relu => {
                pattern.extend(t.value(h).unwrap().data().iter().map(|&v| v > 0.0));
                t.relu(h).unwrap()
            }
        };
    }
    pattern
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_gradients_match_finite_differences() {
        for seed in 0..20 {
            let (err, n) = cnn_gradient_check(seed).unwrap();
            assert!(n > 0);
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn dense_quadratic_gradient_is_analytic() {
        // d/dW |Wx - t|^2 / n = 2 (Wx - t) x^T / n.
        let w = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 0.25, 2.0, 0.1, -0.3]).unwrap();
        let x = [1.0, 2.0, -1.0];
        let t = [0.3, -0.7];
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::from_vec(&[1, 3], x.to_vec()).unwrap());
        let wv = tape.leaf(w.clone());
        let bv = tape.leaf(Tensor::zeros(&[2]));
        let y = tape.dense(xv, wv, bv).unwrap();
        let l = tape.mse(y, &t).unwrap();
        let g = tape.backward(l).unwrap();
        let yv = tape.value(y).unwrap().data().to_vec();
        for o in 0..2 {
            for j in 0..3 {
                let want = 2.0 * (yv[o] - t[o]) * x[j] / 2.0;
                assert!((g.wrt(wv).unwrap().data()[o * 3 + j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn full_batch_descent_on_convex_problem_is_monotone() {
        let mut r = RngStream::new(8, 0).rng();
        let n = 64;
        let x: Vec<f64> = (0..n * 4).map(|_| r.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut w = Tensor::zeros(&[1, 4]);
        let mut b = Tensor::zeros(&[1]);
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let mut tape = Tape::new();
            let xv = tape.leaf(Tensor::from_vec(&[n, 4], x.clone()).unwrap());
            let wv = tape.leaf(w.clone());
            let bv = tape.leaf(b.clone());
            let y = tape.dense(xv, wv, bv).unwrap();
            let l = tape.mse(y, &t).unwrap();
            let lv = tape.value(l).unwrap().data()[0];
            assert!(lv <= prev + 1e-9);
            prev = lv;
            let g = tape.backward(l).unwrap();
            for (p, d) in w.data_mut().iter_mut().zip(g.wrt(wv).unwrap().data()) {
                *p -= 0.05 * d;
            }
            for (p, d) in b.data_mut().iter_mut().zip(g.wrt(bv).unwrap().data()) {
                *p -= 0.05 * d;
            }
        }
    }
}
