use num_complex::Complex64;

use super::butterfly::ButterflyFir;
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::signal::DualPolBlock;

/// Godard radius `R = E|c|^4 / E|c|^2` under the constellation priors.
pub fn cma_radius(c: &Constellation) -> f64 {
    c.moment(4) / c.moment(2)
}

/// Default step: `1e-3` divided by the mean input sample power.
pub fn default_cma_step(rx: &DualPolBlock) -> f64 {
    let p = 0.5 * (rx.x.power() + rx.y.power());
    1e-3 / p.max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaConfig {
    pub step: f64,
    /// Number of per-symbol updates; the block is cycled when longer.
    pub n_updates: usize,
    /// Updates per loss-trace entry.
    pub trace_block: usize,
    /// Check for both lanes locking onto one source after every trace block.
    pub singularity_guard: bool,
    /// Store tap snapshots every this many updates.
    pub snapshot_every: Option<usize>,
}

impl CmaConfig {
    pub fn new(step: f64, n_updates: usize) -> Self {
        Self {
            step,
            n_updates,
            trace_block: 1000,
            singularity_guard: true,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CmaResult {
    pub taps: ButterflyFir,
    /// Mean `(|z|^2 - R)^2` over each trace block, both lanes.
    pub loss_trace: Vec<f64>,
    /// The y lane was re-initialized by the singularity guard.
    pub reinitialized: bool,
    pub snapshots: Vec<(usize, ButterflyFir)>,
}

/// Mean CMA cost over all symbols and both lanes.
pub fn cma_loss(rx: &DualPolBlock, w: &ButterflyFir, radius: f64) -> f64 {
    let lanes = rx.lanes();
    let n = rx.num_symbols();
    let mut acc = 0.0;
    for k in 0..n {
        for p in 0..2 {
            let e = w.output_at(lanes, p, k).norm_sqr() - radius;
            acc += e * e;
        }
    }
    acc / (2 * n.max(1)) as f64
}

/// Per-symbol stochastic gradient descent on `E[(|z|^2 - R)^2]`.
pub fn cma_train(rx: &DualPolBlock, w0: &ButterflyFir, radius: f64, cfg: &CmaConfig) -> Result<CmaResult> {
    if !(cfg.step > 0.0) {
        return Err(Error::param("CMA step must be positive"));
    }
    if rx.sps() != w0.sps_in {
        return Err(Error::param("input sps does not match the equalizer"));
    }
    w0.validate()?;
    let mut w = w0.clone();
    let lanes = rx.lanes();
    let n_sym = rx.num_symbols();
    if n_sym == 0 {
        return Err(Error::param("empty training block"));
    }
    let len = w.len();
    let c = (len / 2) as isize;
    let m = lanes[0].len() as isize;
    let block = cfg.trace_block.max(1);
    let mut trace = Vec::new();
    let mut acc = 0.0;
    let mut in_block = 0usize;
    let mut reinitialized = false;
    let mut snapshots = Vec::new();
    for u in 0..cfg.n_updates {
        let n = u % n_sym;
        let base = (n * w.sps_in) as isize + c;
        for p in 0..2 {
            let z = w.output_at(lanes, p, n);
            let e = z.norm_sqr() - radius;
            acc += e * e;
            let g = z * (cfg.step * e);
            for q in 0..2 {
                let taps = &mut w.taps[p][q];
                for (k, t) in taps.iter_mut().enumerate() {
                    let i = base - k as isize;
                    if i >= 0 && i < m {
                        *t -= g * lanes[q][i as usize].conj();
                    }
                }
            }
        }
        in_block += 1;
        if in_block == block || u + 1 == cfg.n_updates {
            let mean = acc / (2 * in_block) as f64;
            trace.push(mean);
            if !mean.is_finite() || mean > 1e3 {
                return Err(Error::training(format!("CMA diverged (block loss {mean:.3e})"), trace));
            }
            acc = 0.0;
            in_block = 0;
            if cfg.singularity_guard && !reinitialized {
                let end = n + 1;
                let start = end.saturating_sub(2000);
                if end - start >= 200 && lanes_correlated(&w, lanes, start, end) {
                    orthogonalize_y(&mut w);
                    reinitialized = true;
                }
            }
        }
        if let Some(every) = cfg.snapshot_every {
            if (u + 1) % every == 0 {
                snapshots.push((u + 1, w.clone()));
            }
        }
    }
    Ok(CmaResult {
        taps: w,
        loss_trace: trace,
        reinitialized,
        snapshots,
    })
}

/// Peak normalized cross-correlation between the two outputs exceeds 0.9.
fn lanes_correlated(w: &ButterflyFir, lanes: [&[Complex64]; 2], start: usize, end: usize) -> bool {
    let zx: Vec<Complex64> = (start..end).map(|k| w.output_at(lanes, 0, k)).collect();
    let zy: Vec<Complex64> = (start..end).map(|k| w.output_at(lanes, 1, k)).collect();
    let px: f64 = zx.iter().map(|v| v.norm_sqr()).sum();
    let py: f64 = zy.iter().map(|v| v.norm_sqr()).sum();
    if px <= 0.0 || py <= 0.0 {
        return false;
    }
    let max_lag = (w.len() / 2) as isize;
    let n = zx.len() as isize;
    (-max_lag..=max_lag).any(|l| {
        let mut s = Complex64::default();
        for i in 0..n {
            let j = i + l;
            if j >= 0 && j < n {
                s += zx[i as usize] * zy[j as usize].conj();
            }
        }
        s.norm() / (px * py).sqrt() > 0.9
    })
}

/// `w_yx = -conj(reverse(w_xy))`, `w_yy = conj(reverse(w_xx))`.
fn orthogonalize_y(w: &mut ButterflyFir) {
    let rev_conj = |v: &[Complex64]| v.iter().rev().map(|t| t.conj()).collect::<Vec<_>>();
    let yx: Vec<Complex64> = rev_conj(&w.taps[0][1]).into_iter().map(|t| -t).collect();
    let yy = rev_conj(&w.taps[0][0]);
    w.taps[1][0] = yx;
    w.taps[1][1] = yy;
}
