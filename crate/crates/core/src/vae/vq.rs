use num_complex::Complex64;

use super::elbo::{encode, encoder_backward, reconstruct, resid_backward, Span, VaeGradient};
use super::train::batch_start;
use super::{pack, pack_taps, unpack, VaeLeModel};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::signal::DualPolBlock;

use super::VaeTrainConfig;

/// Per-symbol VQ-VAE terms; `total = recon + commit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqBreakdown {
    pub recon: f64,
    pub commit: f64,
    pub total: f64,
}

/// Prior-weighted nearest point: `argmin_c |z - c|^2 - sigma2 ln p(c)`.
pub fn vq_quantize(z: &[Complex64], c: &Constellation, sigma2: f64) -> Vec<usize> {
    let bias: Vec<f64> = c.priors().iter().map(|p| -sigma2 * p.ln()).collect();
    z.iter()
        .map(|&v| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, (pt, b)) in c.points().iter().zip(&bias).enumerate() {
                let d = (v - pt).norm_sqr() + b;
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

struct VqEval {
    breakdown: VqBreakdown,
    grad: VaeGradient,
    residual_power: f64,
}

fn vq_evaluate(lanes: [&[Complex64]; 2], model: &VaeLeModel, beta: f64, span: &Span) -> VqEval {
    let c = &model.constellation;
    let s2 = model.sigma2;
    let enc = encode(lanes, &model.encoder, span);
    let xhat = [0, 1].map(|p| {
        vq_quantize(&enc.z[p], c, s2)
            .into_iter()
            .map(|k| c.points()[k])
            .collect::<Vec<_>>()
    });
    let rec = reconstruct(lanes, &model.decoder, &xhat, span);
    let n = span.interior() as f64;
    let a = 1.0 / (s2 * n);
    let mut commit = 0.0;
    for p in 0..2 {
        for i in span.e..span.b - span.e {
            commit += (enc.z[p][i] - xhat[p][i]).norm_sqr();
        }
    }
    let recon = rec.r1 * a;
    let commit = beta * commit / n;
    let (gx, mut gh) = resid_backward(&model.decoder, &xhat, &rec, span);
    gh.iter_mut().flatten().flatten().for_each(|g| *g *= a);
    // Straight-through: the quantizer passes its input gradient to z.
    let gz = [0, 1].map(|p| {
        (0..span.b)
            .map(|i| {
                let mut g = gx[p][i] * a;
                if span.is_interior(i) {
                    g += 2.0 * beta * (enc.z[p][i] - xhat[p][i]) / n;
                }
                g
            })
            .collect::<Vec<_>>()
    });
    let gw = encoder_backward(lanes, &model.encoder, &gz, span);
    VqEval {
        breakdown: VqBreakdown {
            recon,
            commit,
            total: recon + commit,
        },
        grad: VaeGradient {
            encoder: gw,
            decoder: gh,
            sigma2: -recon / s2,
        },
        residual_power: rec.r1 / (2 * span.m_len()) as f64,
    }
}

fn check(rx: &DualPolBlock, model: &VaeLeModel, beta: f64) -> Result<Span> {
    model.validate()?;
    if !(beta >= 0.0) {
        return Err(Error::param("beta_commit must be non-negative"));
    }
    if rx.sps() != model.sps() {
        return Err(Error::param("received block and model disagree on sps"));
    }
    Span::new(0, rx.num_symbols(), model.decoder.len(), model.sps())
}

/// Hard-quantized reconstruction loss plus commitment term over the block.
pub fn vqvae_loss(rx: &DualPolBlock, model: &VaeLeModel, beta_commit: f64) -> Result<VqBreakdown> {
    let span = check(rx, model, beta_commit)?;
    Ok(vq_evaluate(rx.lanes(), model, beta_commit, &span).breakdown)
}

/// Loss and straight-through gradient over the block.
pub fn vqvae_gradient(rx: &DualPolBlock, model: &VaeLeModel, beta_commit: f64) -> Result<(VqBreakdown, VaeGradient)> {
    let span = check(rx, model, beta_commit)?;
    let ev = vq_evaluate(rx.lanes(), model, beta_commit, &span);
    Ok((ev.breakdown, ev.grad))
}

/// Mini-batch Adam on the VQ-VAE loss, same batching and noise-variance
/// update as [`super::vae_train`].
pub fn vqvae_train(
    rx: &DualPolBlock,
    model0: &VaeLeModel,
    beta_commit: f64,
    cfg: &VaeTrainConfig,
) -> Result<(VaeLeModel, Vec<VqBreakdown>)> {
    check(rx, model0, beta_commit)?;
    if cfg.batch < 4 * model0.decoder.len() || rx.num_symbols() < cfg.batch {
        return Err(Error::param("batch must hold 4 decoder lengths and fit the block"));
    }
    let lanes = rx.lanes();
    let mut model = model0.clone();
    let mut enc = pack(&model.encoder);
    let mut dec = pack(&model.decoder);
    let mut adam_e = Adam::new(cfg.encoder, enc.len());
    let mut adam_d = Adam::new(cfg.decoder, dec.len());
    let probe = Span::new(0, cfg.batch, model.decoder.len(), model.sps())?;
    let mut trace = Vec::with_capacity(cfg.n_steps);
    for step in 0..cfg.n_steps {
        let n0 = batch_start(step, probe.interior(), cfg.batch, rx.num_symbols());
        let ev = vq_evaluate(lanes, &model, beta_commit, &Span { n0, ..probe });
        if !ev.breakdown.total.is_finite() {
            return Err(Error::training(
                format!("non-finite VQ-VAE loss at step {step}"),
                trace.iter().map(|b: &VqBreakdown| b.total).collect(),
            ));
        }
        trace.push(ev.breakdown);
        adam_e.step(&mut enc, &pack_taps(&ev.grad.encoder));
        adam_d.step(&mut dec, &pack_taps(&ev.grad.decoder));
        unpack(&mut model.encoder, &enc);
        unpack(&mut model.decoder, &dec);
        if cfg.update_sigma2 {
            model.sigma2 = ev.residual_power.max(cfg.sigma2_floor);
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, pcs_shape, sample_symbols};
    use crate::signal::RngStream;

    #[test]
    fn uniform_zero_commit_is_min_distance() {
        let c = build_qam(16).unwrap();
        let z: Vec<Complex64> = (0..200).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        assert_eq!(vq_quantize(&z, &c, 0.7), c.decide(&z));
    }

    #[test]
    fn quantizer_is_idempotent() {
        let c = pcs_shape(&build_qam(64).unwrap(), 4.6, 1e-9).unwrap();
        let z: Vec<Complex64> = (0..300).map(|i| Complex64::new((i as f64 * 0.3).sin() * 1.5, (i as f64 * 0.7).cos())).collect();
        let once: Vec<Complex64> = vq_quantize(&z, &c, 0.05).into_iter().map(|k| c.points()[k]).collect();
        let twice: Vec<Complex64> = vq_quantize(&once, &c, 0.05).into_iter().map(|k| c.points()[k]).collect();
        assert_eq!(once, twice);
    }

    #[test]
    fn on_grid_noiseless_has_zero_loss() {
        let c = build_qam(16).unwrap();
        let (_, x) = sample_symbols(&c, 300, &RngStream::new(1, 1));
        let (_, y) = sample_symbols(&c, 300, &RngStream::new(1, 2));
        let rx = DualPolBlock::from_lanes(x, y, 1, 1.0).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 5, 5, 1).unwrap();
        m.sigma2 = 1e-3;
        let b = vqvae_loss(&rx, &m, 0.25).unwrap();
        assert!(b.recon < 1e-25 && b.commit == 0.0);
    }

    #[test]
    fn decoder_gradient_matches_finite_differences() {
        // The quantizer is piecewise constant; decoder taps are smooth.
        let c = build_qam(4).unwrap();
        let (_, x) = sample_symbols(&c, 80, &RngStream::new(2, 1));
        let (_, y) = sample_symbols(&c, 80, &RngStream::new(2, 2));
        let rx = DualPolBlock::from_lanes(x, y, 1, 1.0).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 5, 5, 1).unwrap();
        m.decoder.taps[0][1][1] = Complex64::new(0.3, 0.2);
        m.sigma2 = 0.5;
        let (_, g) = vqvae_gradient(&rx, &m, 0.1).unwrap();
        let h = 1e-6;
        for k in 0..5 {
            let mut a = m.clone();
            let mut b = m.clone();
            a.decoder.taps[1][0][k].im += h;
            b.decoder.taps[1][0][k].im -= h;
            let fd = (vqvae_loss(&rx, &a, 0.1).unwrap().total - vqvae_loss(&rx, &b, 0.1).unwrap().total) / (2.0 * h);
            assert!((fd - g.decoder[1][0][k].im).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}
