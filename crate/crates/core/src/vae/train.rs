use super::elbo::{evaluate, ElboBreakdown, Span};
use super::{pack, pack_taps, unpack, VaeLeModel};
use crate::checkpoint::Checkpointable;
use crate::classic::ButterflyFir;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::signal::DualPolBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeTrainConfig {
    pub encoder: AdamConfig,
    pub decoder: AdamConfig,
    /// Symbols per mini-batch.
    pub batch: usize,
    pub n_steps: usize,
    /// Closed-form noise-variance update each step.
    pub update_sigma2: bool,
    pub sigma2_floor: f64,
    /// Store encoder snapshots every this many steps.
    pub snapshot_every: Option<usize>,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            encoder: AdamConfig::default(),
            decoder: AdamConfig::default(),
            batch: 256,
            n_steps: 1000,
            update_sigma2: true,
            sigma2_floor: 1e-6,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VaeTrainResult {
    pub model: VaeLeModel,
    pub trace: Vec<ElboBreakdown>,
    /// Posterior-implied symbol error `1 - max_c q`, averaged per batch.
    pub ser_proxy: Vec<f64>,
    /// `(symbols consumed, encoder)` pairs.
    pub snapshots: Vec<(usize, ButterflyFir)>,
}

impl VaeTrainResult {
    /// `step, recon, kl, total, ser_proxy` rows.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "recon", "kl", "total", "ser_proxy"])?;
        for (i, (b, s)) in self.trace.iter().zip(&self.ser_proxy).enumerate() {
            out.write_record([
                i.to_string(),
                format!("{:e}", b.recon),
                format!("{:e}", b.kl),
                format!("{:e}", b.total),
                format!("{:e}", s),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Batches walk the block so that consecutive interiors tile it; the
/// returned symbol count is the end of the latest batch on that walk.
pub(crate) fn batch_start(step: usize, stride: usize, batch: usize, n: usize) -> usize {
    (step * stride) % (n - batch + 1)
}

/// Mini-batch Adam on encoder and decoder taps with a closed-form noise
/// variance update.
pub fn vae_train(rx: &DualPolBlock, model0: &VaeLeModel, cfg: &VaeTrainConfig) -> Result<VaeTrainResult> {
    model0.validate()?;
    if rx.sps() != model0.sps() {
        return Err(Error::param("received block and model disagree on sps"));
    }
    if cfg.batch < 4 * model0.decoder.len() {
        return Err(Error::param(format!(
            "batch must be at least 4x the decoder length ({})",
            4 * model0.decoder.len()
        )));
    }
    let n = rx.num_symbols();
    if n < cfg.batch {
        return Err(Error::param("block shorter than one batch"));
    }
    let lanes = rx.lanes();
    let mut model = model0.clone();
    let mut enc = pack(&model.encoder);
    let mut dec = pack(&model.decoder);
    let mut adam_e = Adam::new(cfg.encoder, enc.len());
    let mut adam_d = Adam::new(cfg.decoder, dec.len());
    let probe = Span::new(0, cfg.batch, model.decoder.len(), model.sps())?;
    let stride = probe.interior();
    let mut trace = Vec::with_capacity(cfg.n_steps);
    let mut proxy = Vec::with_capacity(cfg.n_steps);
    let mut snapshots = Vec::new();
    for step in 0..cfg.n_steps {
        let n0 = batch_start(step, stride, cfg.batch, n);
        let span = Span { n0, ..probe };
        let ev = evaluate(lanes, &model, &span);
        if !ev.breakdown.total.is_finite() {
            let totals = trace.iter().map(|b: &ElboBreakdown| b.total).collect();
            return Err(Error::training_at(
                format!("non-finite ELBO at step {step}"),
                totals,
                model.to_checkpoint().to_text(),
            ));
        }
        trace.push(ev.breakdown);
        proxy.push(ev.ser_proxy);
        adam_e.step(&mut enc, &pack_taps(&ev.grad.encoder));
        adam_d.step(&mut dec, &pack_taps(&ev.grad.decoder));
        unpack(&mut model.encoder, &enc);
        unpack(&mut model.decoder, &dec);
        if cfg.update_sigma2 {
            model.sigma2 = ev.residual_power.max(cfg.sigma2_floor);
        }
        if let Some(every) = cfg.snapshot_every {
            if (step + 1) % every == 0 {
                snapshots.push(((step + 1) * stride + 2 * probe.e, model.encoder.clone()));
            }
        }
    }
    Ok(VaeTrainResult {
        model,
        trace,
        ser_proxy: proxy,
        snapshots,
    })
}

/// Re-trains over sliding windows of `window` symbols advanced by `stride`,
/// warm-starting each window from the previous model. Returns the window
/// start and the model trained on it.
pub fn vae_train_sliding(
    rx: &DualPolBlock,
    model0: &VaeLeModel,
    cfg: &VaeTrainConfig,
    window: usize,
    stride: usize,
) -> Result<Vec<(usize, VaeLeModel)>> {
    if window == 0 || stride == 0 || window > rx.num_symbols() {
        return Err(Error::param("window and stride must be positive and fit the block"));
    }
    let mut out = Vec::new();
    let mut model = model0.clone();
    let mut start = 0;
    while start + window <= rx.num_symbols() {
        let part = rx.slice_symbols(start, window)?;
        model = vae_train(&part, &model, cfg)?.model;
        out.push((start, model.clone()));
        start += stride;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, sample_symbols};
    use crate::signal::RngStream;

    fn noiseless(n: usize, seed: u64) -> (DualPolBlock, crate::constellation::Constellation) {
        let c = build_qam(4).unwrap();
        let (_, x) = sample_symbols(&c, n, &RngStream::new(seed, 1));
        let (_, y) = sample_symbols(&c, n, &RngStream::new(seed, 2));
        (DualPolBlock::from_lanes(x, y, 1, 1.0).unwrap(), c)
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let (rx, c) = noiseless(4000, 1);
        let mut m = VaeLeModel::cold_start(&c, 7, 5, 1).unwrap();
        m.sigma2 = 1e-2;
        let cfg = VaeTrainConfig {
            n_steps: 50,
            batch: 256,
            ..VaeTrainConfig::default()
        };
        let res = vae_train(&rx, &m, &cfg).unwrap();
        let first = res.trace[0].total;
        for b in &res.trace {
            assert!(b.total <= first + 1e-6, "{} > {first}", b.total);
        }
    }

    #[test]
    fn deterministic_traces() {
        let (rx, c) = noiseless(3000, 2);
        let m = VaeLeModel::cold_start(&c, 5, 5, 1).unwrap();
        let cfg = VaeTrainConfig {
            n_steps: 30,
            ..VaeTrainConfig::default()
        };
        let a = vae_train(&rx, &m, &cfg).unwrap();
        let b = vae_train(&rx, &m, &cfg).unwrap();
        let bits = |r: &VaeTrainResult| r.trace.iter().map(|t| t.total.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let mut csv = Vec::new();
        a.write_trace_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("step,recon,kl,total,ser_proxy\n"));
        assert_eq!(text.lines().count(), 31);
    }

    #[test]
    fn small_batch_rejected() {
        let (rx, c) = noiseless(1000, 3);
        let m = VaeLeModel::cold_start(&c, 5, 9, 1).unwrap();
        let cfg = VaeTrainConfig {
            batch: 20,
            ..VaeTrainConfig::default()
        };
        assert!(matches!(vae_train(&rx, &m, &cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn sliding_windows_cover_block() {
        let (rx, c) = noiseless(2000, 4);
        let m = VaeLeModel::cold_start(&c, 5, 5, 1).unwrap();
        let cfg = VaeTrainConfig {
            n_steps: 5,
            ..VaeTrainConfig::default()
        };
        let out = vae_train_sliding(&rx, &m, &cfg, 1000, 500).unwrap();
        assert_eq!(out.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![0, 500, 1000]);
    }
}
