use num_complex::Complex64;
use rand::Rng;

use super::VaeLeModel;
use crate::classic::ButterflyFir;
use crate::constellation::{build_qam, demap_row, pcs_shape, Constellation, PosteriorBlock};
use crate::error::{Error, Result};
use crate::signal::{DualPolBlock, RngStream};

/// Per-symbol ELBO terms; `total = recon + kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// Gradients in `d/dRe + i d/dIm` form, same layout as the model.
#[derive(Debug, Clone)]
pub struct VaeGradient {
    pub encoder: [[Vec<Complex64>; 2]; 2],
    pub decoder: [[Vec<Complex64>; 2]; 2],
    pub sigma2: f64,
}

/// Batch of `b` symbols starting at `n0`. Reconstruction and KL are summed
/// over the interior symbols `[n0 + e, n0 + b - e)` whose decoder support
/// lies inside the batch, and normalized by their count.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Span {
    pub n0: usize,
    pub b: usize,
    pub e: usize,
    pub sps: usize,
}

impl Span {
    pub fn new(n0: usize, b: usize, decoder_len: usize, sps: usize) -> Result<Self> {
        let e = (decoder_len / 2).div_ceil(sps);
        if b <= 2 * e {
            return Err(Error::Evaluation(format!(
                "batch of {b} symbols leaves no interior for a {decoder_len}-tap decoder"
            )));
        }
        Ok(Self { n0, b, e, sps })
    }

    pub fn interior(&self) -> usize {
        self.b - 2 * self.e
    }

    pub fn m0(&self) -> usize {
        (self.n0 + self.e) * self.sps
    }

    pub fn m_len(&self) -> usize {
        self.interior() * self.sps
    }

    /// Offset of `(symbol i, tap k)` in the interior sample range.
    #[inline]
    pub fn m_index(&self, i: usize, k: usize, ch: usize) -> Option<usize> {
        let m = ((self.n0 + i) * self.sps + k) as isize - ch as isize - self.m0() as isize;
        (m >= 0 && (m as usize) < self.m_len()).then_some(m as usize)
    }

    pub fn is_interior(&self, i: usize) -> bool {
        i >= self.e && i < self.b - self.e
    }
}

/// Decoder-side quantities shared by the soft and hard (VQ) losses.
pub(crate) struct Recon {
    pub resid: [Vec<Complex64>; 2],
    /// Sum over in-range taps of `|h_qp|^2` per symbol lane and symbol.
    pub g: [Vec<f64>; 2],
    pub r1: f64,
}

pub(crate) fn reconstruct(
    lanes: [&[Complex64]; 2],
    h: &ButterflyFir,
    mu: &[Vec<Complex64>; 2],
    span: &Span,
) -> Recon {
    let ch = h.len() / 2;
    let ml = span.m_len();
    let m0 = span.m0();
    let mut rhat = [vec![Complex64::default(); ml], vec![Complex64::default(); ml]];
    let mut g = [vec![0.0; span.b], vec![0.0; span.b]];
    for p in 0..2 {
        for i in 0..span.b {
            let x = mu[p][i];
            for k in 0..h.len() {
                if let Some(m) = span.m_index(i, k, ch) {
                    for q in 0..2 {
                        let t = h.taps[q][p][k];
                        rhat[q][m] += t * x;
                        g[p][i] += t.norm_sqr();
                    }
                }
            }
        }
    }
    let mut r1 = 0.0;
    let resid = [0, 1].map(|q| {
        (0..ml)
            .map(|m| {
                let e = lanes[q][m0 + m] - rhat[q][m];
                r1 += e.norm_sqr();
                e
            })
            .collect::<Vec<_>>()
    });
    Recon { resid, g, r1 }
}

/// Backpropagates a gradient `g_rhat`-style residual to the decoder taps and
/// to the symbol estimates: returns `(dR1/dx, dR1/dh)` for `R1 = sum |e|^2`.
pub(crate) fn resid_backward(
    h: &ButterflyFir,
    x: &[Vec<Complex64>; 2],
    rec: &Recon,
    span: &Span,
) -> ([Vec<Complex64>; 2], [[Vec<Complex64>; 2]; 2]) {
    let ch = h.len() / 2;
    let mut gx = [vec![Complex64::default(); span.b], vec![Complex64::default(); span.b]];
    let mut gh: [[Vec<Complex64>; 2]; 2] =
        std::array::from_fn(|_| std::array::from_fn(|_| vec![Complex64::default(); h.len()]));
    for p in 0..2 {
        for i in 0..span.b {
            for k in 0..h.len() {
                if let Some(m) = span.m_index(i, k, ch) {
                    for q in 0..2 {
                        let e = rec.resid[q][m];
                        gx[p][i] -= 2.0 * e * h.taps[q][p][k].conj();
                        gh[q][p][k] -= 2.0 * e * x[p][i].conj();
                    }
                }
            }
        }
    }
    (gx, gh)
}

fn moments(q: &[f64], c: &Constellation) -> (Complex64, f64) {
    let mut mu = Complex64::default();
    let mut e2 = 0.0;
    for (w, p) in q.iter().zip(c.points()) {
        mu += p * *w;
        e2 += w * p.norm_sqr();
    }
    (mu, e2)
}

fn kl_row(q: &[f64], prior: &[f64]) -> f64 {
    q.iter()
        .zip(prior)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, p)| a * (a / p).ln())
        .sum()
}

struct Forward {
    q: [Vec<f64>; 2],
    mu: [Vec<Complex64>; 2],
    v: [Vec<f64>; 2],
    rec: Recon,
    r2: f64,
    breakdown: ElboBreakdown,
}

fn forward_from_q(
    lanes: [&[Complex64]; 2],
    q: [Vec<f64>; 2],
    model: &VaeLeModel,
    span: &Span,
) -> Forward {
    let c = &model.constellation;
    let m = c.len();
    let mut mu = [Vec::with_capacity(span.b), Vec::with_capacity(span.b)];
    let mut v = [Vec::with_capacity(span.b), Vec::with_capacity(span.b)];
    let mut kl = 0.0;
    for p in 0..2 {
        for i in 0..span.b {
            let row = &q[p][i * m..(i + 1) * m];
            let (a, e2) = moments(row, c);
            mu[p].push(a);
            v[p].push((e2 - a.norm_sqr()).max(0.0));
            if span.is_interior(i) {
                kl += kl_row(row, c.priors());
            }
        }
    }
    let rec = reconstruct(lanes, &model.decoder, &mu, span);
    let r2: f64 = (0..2)
        .map(|p| v[p].iter().zip(&rec.g[p]).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let n = span.interior() as f64;
    let recon = (rec.r1 + r2) / (model.sigma2 * n);
    let kl = kl / n;
    Forward {
        q,
        mu,
        v,
        rec,
        r2,
        breakdown: ElboBreakdown {
            recon,
            kl,
            total: recon + kl,
        },
    }
}

/// ELBO of posteriors `q` (one block per lane, aligned with the symbol grid
/// of `rx`) under the model's decoder and noise variance.
pub fn elbo_loss(rx: &DualPolBlock, q: &[PosteriorBlock; 2], model: &VaeLeModel) -> Result<ElboBreakdown> {
    model.validate()?;
    if rx.sps() != model.sps() {
        return Err(Error::Evaluation("received block and decoder disagree on sps".into()));
    }
    let n = rx.num_symbols();
    for lane in q {
        if lane.rows() != n || lane.size() != model.constellation.len() {
            return Err(Error::Evaluation(format!(
                "posterior is {}x{}, expected {n}x{}",
                lane.rows(),
                lane.size(),
                model.constellation.len()
            )));
        }
    }
    let span = Span::new(0, n, model.decoder.len(), model.sps())?;
    let qv = [q[0].as_slice().to_vec(), q[1].as_slice().to_vec()];
    Ok(forward_from_q(rx.lanes(), qv, model, &span).breakdown)
}

pub(crate) struct EncoderPass {
    pub z: [Vec<Complex64>; 2],
}

pub(crate) fn encode(lanes: [&[Complex64]; 2], w: &ButterflyFir, span: &Span) -> EncoderPass {
    EncoderPass {
        z: [0, 1].map(|p| (0..span.b).map(|i| w.output_at(lanes, p, span.n0 + i)).collect()),
    }
}

/// `g_w[p][q][k] = sum_i g_z[p][i] conj(r_q[(n0 + i) sps + c - k])`.
pub(crate) fn encoder_backward(
    lanes: [&[Complex64]; 2],
    w: &ButterflyFir,
    gz: &[Vec<Complex64>; 2],
    span: &Span,
) -> [[Vec<Complex64>; 2]; 2] {
    let len = w.len();
    let c = (len / 2) as isize;
    let ml = lanes[0].len() as isize;
    let mut gw: [[Vec<Complex64>; 2]; 2] =
        std::array::from_fn(|_| std::array::from_fn(|_| vec![Complex64::default(); len]));
    for p in 0..2 {
        for (i, g) in gz[p].iter().enumerate() {
            if *g == Complex64::default() {
                continue;
            }
            let base = ((span.n0 + i) * w.sps_in) as isize + c;
            for q in 0..2 {
                for k in 0..len {
                    let j = base - k as isize;
                    if j >= 0 && j < ml {
                        gw[p][q][k] += g * lanes[q][j as usize].conj();
                    }
                }
            }
        }
    }
    gw
}

pub(crate) struct Evaluated {
    pub breakdown: ElboBreakdown,
    pub grad: VaeGradient,
    /// `(R1 + R2) / (2 * samples)`, the closed-form noise-variance update.
    pub residual_power: f64,
    /// Mean of `1 - max_c q` over interior symbols.
    pub ser_proxy: f64,
}

pub(crate) fn evaluate(lanes: [&[Complex64]; 2], model: &VaeLeModel, span: &Span) -> Evaluated {
    let c = &model.constellation;
    let m = c.len();
    let s2 = model.sigma2;
    let enc = encode(lanes, &model.encoder, span);
    let log_p: Vec<f64> = c.priors().iter().map(|p| p.ln()).collect();
    let q = [0, 1].map(|p| {
        let mut out = vec![0.0; span.b * m];
        for i in 0..span.b {
            demap_row(enc.z[p][i], c.points(), &log_p, s2, &mut out[i * m..(i + 1) * m]);
        }
        out
    });
    let f = forward_from_q(lanes, q, model, span);
    let n = span.interior() as f64;
    let a = 1.0 / (s2 * n);

    let (mut gmu, mut gh) = resid_backward(&model.decoder, &f.mu, &f.rec, span);
    for p in 0..2 {
        for i in 0..span.b {
            gmu[p][i] = a * (gmu[p][i] - 2.0 * f.mu[p][i] * f.rec.g[p][i]);
        }
    }
    let h = &model.decoder;
    let ch = h.len() / 2;
    for q in 0..2 {
        for p in 0..2 {
            for k in 0..h.len() {
                let vs: f64 = (0..span.b)
                    .filter(|&i| span.m_index(i, k, ch).is_some())
                    .map(|i| f.v[p][i])
                    .sum();
                gh[q][p][k] = a * (gh[q][p][k] + 2.0 * h.taps[q][p][k] * vs);
            }
        }
    }

    let mut gz = [vec![Complex64::default(); span.b], vec![Complex64::default(); span.b]];
    let mut gs2 = -f.breakdown.recon / s2;
    let mut dl = vec![0.0; m];
    let mut proxy = 0.0;
    for p in 0..2 {
        for i in 0..span.b {
            let row = &f.q[p][i * m..(i + 1) * m];
            let interior = span.is_interior(i);
            let mut mean = 0.0;
            for (j, (&qc, pt)) in row.iter().zip(c.points()).enumerate() {
                let mut d = (gmu[p][i].conj() * pt).re + a * f.rec.g[p][i] * pt.norm_sqr();
                if interior && qc > 0.0 {
                    d += (qc / c.priors()[j]).ln() / n;
                }
                dl[j] = d;
                mean += qc * d;
            }
            let z = enc.z[p][i];
            let mut acc = Complex64::default();
            for (j, (&qc, pt)) in row.iter().zip(c.points()).enumerate() {
                let d = qc * (dl[j] - mean);
                acc += pt * d;
                gs2 += d * (z - pt).norm_sqr() / (s2 * s2);
            }
            gz[p][i] = acc * (2.0 / s2);
            if interior {
                proxy += 1.0 - row.iter().cloned().fold(0.0, f64::max);
            }
        }
    }
    let gw = encoder_backward(lanes, &model.encoder, &gz, span);
    Evaluated {
        breakdown: f.breakdown,
        grad: VaeGradient {
            encoder: gw,
            decoder: gh,
            sigma2: gs2,
        },
        residual_power: (f.rec.r1 + f.r2) / (2 * span.m_len()) as f64,
        ser_proxy: proxy / (2.0 * n),
    }
}

/// Loss and analytic gradient over the whole block with the encoder-driven
/// posterior.
pub fn elbo_gradient(rx: &DualPolBlock, model: &VaeLeModel) -> Result<(ElboBreakdown, VaeGradient)> {
    model.validate()?;
    if rx.sps() != model.sps() {
        return Err(Error::param("received block and model disagree on sps"));
    }
    let span = Span::new(0, rx.num_symbols(), model.decoder.len(), model.sps())?;
    let ev = evaluate(rx.lanes(), model, &span);
    Ok((ev.breakdown, ev.grad))
}

fn rand_c(r: &mut impl Rng, s: f64) -> Complex64 {
    Complex64::new(r.random_range(-s..s), r.random_range(-s..s))
}

/// Random 64-symbol block and a perturbed 5-tap model over PCS 16-QAM.
fn random_instance(seed: u64, sps: usize) -> Result<(DualPolBlock, VaeLeModel)> {
    let mut r = RngStream::new(seed, 77).rng();
    let c = pcs_shape(&build_qam(16)?, 3.6, 1e-9)?;
    let n = 64;
    let x = (0..n * sps).map(|_| rand_c(&mut r, 1.0)).collect();
    let y = (0..n * sps).map(|_| rand_c(&mut r, 1.0)).collect();
    let rx = DualPolBlock::from_lanes(x, y, sps, 1.0)?;
    let mut m = VaeLeModel::cold_start(&c, 5, 5, sps)?;
    for w in [&mut m.encoder, &mut m.decoder] {
        for row in &mut w.taps {
            for t in row {
                t.iter_mut().for_each(|v| *v += rand_c(&mut r, 0.3));
            }
        }
    }
    m.sigma2 = r.random_range(0.3..1.5);
    Ok((rx, m))
}

/// Central-difference check (step `1e-6`) of the ELBO gradient with respect
/// to every encoder tap, decoder tap and `sigma2` on a random instance.
/// Returns the largest relative error `|a - fd| / max(|a|, |fd|, 1e-3 * max|a|)`.
pub fn elbo_gradient_check(seed: u64, sps: usize) -> Result<f64> {
    let (rx, m) = random_instance(seed, sps)?;
    let loss = |m: &VaeLeModel| -> Result<f64> { Ok(elbo_gradient(&rx, m)?.0.total) };
    let (_, g) = elbo_gradient(&rx, &m)?;
    let h = 1e-6;
    let scale = g
        .encoder
        .iter()
        .chain(g.decoder.iter())
        .flatten()
        .flatten()
        .map(|v| v.norm())
        .fold(g.sigma2.abs(), f64::max);
    let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3 * scale).max(1e-300);
    let mut worst = 0.0f64;
    for which in 0..2 {
        for p in 0..2 {
            for q in 0..2 {
                for k in 0..m.encoder.len() {
                    for part in 0..2 {
                        let d = if part == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
                        let mut plus = m.clone();
                        let mut minus = m.clone();
                        let (tp, tm) = if which == 0 {
                            (&mut plus.encoder, &mut minus.encoder)
                        } else {
                            (&mut plus.decoder, &mut minus.decoder)
                        };
                        tp.taps[p][q][k] += d;
                        tm.taps[p][q][k] -= d;
                        let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
                        let gv = if which == 0 { g.encoder[p][q][k] } else { g.decoder[p][q][k] };
                        worst = worst.max(rel(if part == 0 { gv.re } else { gv.im }, fd));
                    }
                }
            }
        }
    }
    let mut plus = m.clone();
    let mut minus = m.clone();
    plus.sigma2 += h;
    minus.sigma2 -= h;
    let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
    Ok(worst.max(rel(g.sigma2, fd)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, pcs_shape, soft_demap};
    use crate::signal::RngStream;
    use rand::Rng;

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..6 {
            assert!(elbo_gradient_check(seed, 1).unwrap() < 1e-5);
        }
        assert!(elbo_gradient_check(99, 2).unwrap() < 1e-5);
    }

    #[test]
    fn prior_posterior_has_zero_kl() {
        let c = pcs_shape(&build_qam(64).unwrap(), 4.6, 1e-9).unwrap();
        let (rx, mut m) = random_instance(3, 1).unwrap();
        m.constellation = c.clone();
        for row in &mut m.decoder.taps {
            for t in row {
                t.iter_mut().for_each(|v| *v = Complex64::default());
            }
        }
        let n = rx.num_symbols();
        let q = [PosteriorBlock::constant(c.priors(), n), PosteriorBlock::constant(c.priors(), n)];
        let b = elbo_loss(&rx, &q, &m).unwrap();
        assert_eq!(b.kl, 0.0);
        let e = 2; // interior margin for a 5-tap decoder at 1 sps
        let p: f64 = (e..n - e)
            .map(|i| rx.x.samples()[i].norm_sqr() + rx.y.samples()[i].norm_sqr())
            .sum();
        let want = p / m.sigma2 / (n - 2 * e) as f64;
        assert!((b.recon - want).abs() < 1e-12 * want);
        assert!((b.total - b.recon - b.kl).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_limit() {
        let c = build_qam(4).unwrap();
        let mut r = RngStream::new(5, 0).rng();
        let n = 200;
        let idx: [Vec<usize>; 2] = [0, 1].map(|_| (0..n).map(|_| r.random_range(0..4)).collect());
        let h = [Complex64::new(1.0, 0.0), Complex64::new(0.3, -0.2), Complex64::new(-0.1, 0.05)];
        let sym = |l: usize, i: isize| {
            if i < 0 || i >= n as isize {
                Complex64::default()
            } else {
                c.points()[idx[l][i as usize]]
            }
        };
        // Causal 3-tap response, decoder centered so tap k=2..4 hold it.
        let lane = |l: usize| (0..n as isize).map(|i| (0..3).map(|j| h[j] * sym(l, i - j as isize)).sum()).collect();
        let rx = DualPolBlock::from_lanes(lane(0), lane(1), 1, 1.0).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 5, 5, 1).unwrap();
        for p in 0..2 {
            m.decoder.taps[p][p] = vec![Complex64::default(), Complex64::default(), h[0], h[1], h[2]];
        }
        m.sigma2 = 1e-3;
        let one_hot = |l: usize| {
            let mut q = vec![0.0; n * 4];
            for (i, &k) in idx[l].iter().enumerate() {
                q[i * 4 + k] = 1.0;
            }
            PosteriorBlock::from_rows(q, 4).unwrap()
        };
        let b = elbo_loss(&rx, &[one_hot(0), one_hot(1)], &m).unwrap();
        assert!(b.recon < 1e-20, "recon {}", b.recon);
    }

    #[test]
    fn kl_nonnegative_and_misaligned_rejected() {
        for seed in 10..20 {
            let (rx, m) = random_instance(seed, 1).unwrap();
            let (b, _) = elbo_gradient(&rx, &m).unwrap();
            assert!(b.kl >= -1e-12 && b.recon >= 0.0);
        }
        let (rx, m) = random_instance(1, 1).unwrap();
        let q = soft_demap(&rx.x.samples()[..10], &m.constellation, 1.0).unwrap();
        assert!(matches!(elbo_loss(&rx, &[q.clone(), q], &m), Err(Error::Evaluation(_))));
    }

    #[test]
    fn phase_equivariance() {
        let (rx, m) = random_instance(4, 1).unwrap();
        let phi = 0.91;
        let rot = Complex64::from_polar(1.0, phi);
        let rx2 = DualPolBlock::from_lanes(
            rx.x.samples().iter().map(|v| v * rot).collect(),
            rx.y.samples().iter().map(|v| v * rot).collect(),
            1,
            1.0,
        )
        .unwrap();
        let mut m2 = m.clone();
        m2.encoder = m.encoder.scaled(rot.conj());
        let a = super::super::vae_posterior(&rx, &m).unwrap();
        let b = super::super::vae_posterior(&rx2, &m2).unwrap();
        for l in 0..2 {
            for (u, v) in a[l].as_slice().iter().zip(b[l].as_slice()) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
