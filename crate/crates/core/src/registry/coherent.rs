//! Built-in blind coherent families: CMA and the VAE-based equalizer.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{parse_params, BlindEqualizer, BlindOutcome, CoherentData, TraceRow};
use crate::classic::{cma_radius, cma_train, default_cma_step, macs_per_symbol_classic, ButterflyFir, ClassicShape, CmaConfig};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use crate::signal::{bit_error_rate, symbol_error_rate, Ambiguity, DualPolBlock};
use crate::vae::{channel_estimate, default_decoder_len, vae_train, VaeLeModel, VaeTrainConfig};

/// Largest equalizer delay searched when aligning decisions.
const MAX_LAG: usize = 30;

/// SER and BER of a symbol-rate equalizer output over `range`.
///
/// Each lane gets a blind fourth-power phase correction and power
/// normalization. The lane assignment, quarter-turn rotation and delay with
/// the fewest errors are used, so blind ambiguities are not counted.
pub fn coherent_error_rates(
    z: &DualPolBlock,
    reference: &[Vec<usize>; 2],
    c: &Constellation,
    range: Range<usize>,
) -> Result<(f64, f64)> {
    if range.end > z.num_symbols() || reference.iter().any(|r| r.len() < range.end) || range.is_empty() {
        return Err(Error::Evaluation("evaluation range outside the block".into()));
    }
    let energy = c.mean_energy();
    let decide = |lane: &[Complex64]| -> Vec<usize> {
        let zs = &lane[range.clone()];
        let m4: Complex64 = zs.iter().map(|v| v.powu(4)).sum();
        // Square QAM has a negative real fourth moment.
        let rot = Complex64::from_polar(1.0, -(-m4).arg() / 4.0);
        let p = zs.iter().map(|v| v.norm_sqr()).sum::<f64>() / zs.len() as f64;
        let g = rot * (energy / p.max(1e-300)).sqrt();
        c.decide(&zs.iter().map(|v| v * g).collect::<Vec<_>>())
    };
    let d = [decide(z.x.samples()), decide(z.y.samples())];
    let mut best: Option<(f64, f64)> = None;
    for swap in [false, true] {
        let (mut ser, mut ber) = (0.0, 0.0);
        for (lane, dec) in d.iter().enumerate() {
            let r = &reference[lane ^ usize::from(swap)][range.clone()];
            let rep = symbol_error_rate(dec, r, Ambiguity::QamRotations(c), MAX_LAG)?;
            ser += rep.ser / 2.0;
            ber += bit_error_rate(dec, r, c, &rep) / 2.0;
        }
        if best.is_none_or(|(s, _)| ser < s) {
            best = Some((ser, ber));
        }
    }
    best.ok_or_else(|| Error::Evaluation("no lane assignment".into()))
}

fn default_snapshot() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaGrid {
    pub taps: Vec<usize>,
    /// Step size; scaled to the received power when absent.
    #[serde(default)]
    pub step: Option<f64>,
    /// Per-symbol updates; one pass over the training block when absent.
    #[serde(default)]
    pub updates: Option<usize>,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaFamily {
    pub taps: usize,
    pub step: Option<f64>,
    pub updates: Option<usize>,
    pub snapshot_every: usize,
}

pub(super) fn cma_factory(t: &toml::Table) -> Result<Vec<Box<dyn BlindEqualizer>>> {
    let g: CmaGrid = parse_params("cma", t)?;
    g.taps
        .iter()
        .map(|&taps| {
            Ok(Box::new(CmaFamily {
                taps,
                step: g.step,
                updates: g.updates,
                snapshot_every: g.snapshot_every.max(1),
            }) as Box<dyn BlindEqualizer>)
        })
        .collect()
}

impl BlindEqualizer for CmaFamily {
    fn family(&self) -> &'static str {
        "cma"
    }

    fn id(&self) -> String {
        format!("cma-{}", self.taps)
    }

    fn macs_per_symbol(&self) -> Result<f64> {
        Ok(macs_per_symbol_classic(ClassicShape::Butterfly { taps: self.taps }) as f64)
    }

    fn adapt(&self, d: &CoherentData<'_>, _seed: u64) -> Result<BlindOutcome> {
        let w0 = ButterflyFir::identity(self.taps, d.train.sps())?;
        let mut cfg = CmaConfig::new(
            self.step.unwrap_or_else(|| default_cma_step(d.train)),
            self.updates.unwrap_or(d.train.num_symbols()),
        );
        cfg.snapshot_every = Some(self.snapshot_every);
        let r = cma_train(d.train, &w0, cma_radius(d.constellation), &cfg)?;
        let trace = r
            .loss_trace
            .iter()
            .enumerate()
            .map(|(i, &loss)| TraceRow {
                step: (i + 1) * cfg.trace_block,
                loss,
                metric: f64::NAN,
            })
            .collect();
        Ok(BlindOutcome {
            taps: r.taps,
            snapshots: r.snapshots,
            train_steps: cfg.n_updates as u64,
            trace,
            metrics: vec![("reinitialized".into(), f64::from(u8::from(r.reinitialized)))],
        })
    }
}

fn default_lr() -> f64 {
    1e-3
}

fn default_batch() -> usize {
    256
}

fn default_steps() -> usize {
    3000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeGrid {
    pub encoder_taps: Vec<usize>,
    /// Decoder length; derived from the dispersion memory when absent.
    #[serde(default)]
    pub decoder_taps: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub decoder_lr: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    /// Fixed noise variance; the closed-form update is used when absent.
    #[serde(default)]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeFamily {
    pub encoder_taps: usize,
    pub grid: VaeGrid,
}

pub(super) fn vae_factory(t: &toml::Table) -> Result<Vec<Box<dyn BlindEqualizer>>> {
    let g: VaeGrid = parse_params("vae", t)?;
    g.encoder_taps
        .iter()
        .map(|&n| {
            Ok(Box::new(VaeFamily {
                encoder_taps: n,
                grid: g.clone(),
            }) as Box<dyn BlindEqualizer>)
        })
        .collect()
}

impl BlindEqualizer for VaeFamily {
    fn family(&self) -> &'static str {
        "vae"
    }

    fn id(&self) -> String {
        match self.grid.decoder_taps {
            Some(d) => format!("vae-{}-d{d}", self.encoder_taps),
            None => format!("vae-{}", self.encoder_taps),
        }
    }

    /// Inference runs only the butterfly encoder.
    fn macs_per_symbol(&self) -> Result<f64> {
        Ok(macs_per_symbol_classic(ClassicShape::Butterfly { taps: self.encoder_taps }) as f64)
    }

    fn adapt(&self, d: &CoherentData<'_>, _seed: u64) -> Result<BlindOutcome> {
        let g = &self.grid;
        let sps = d.train.sps();
        let nd = g
            .decoder_taps
            .unwrap_or_else(|| default_decoder_len(d.cd_memory_symbols, sps));
        let mut m0 = VaeLeModel::cold_start(d.constellation, self.encoder_taps, nd, sps)?;
        let mut cfg = VaeTrainConfig {
            encoder: AdamConfig::with_lr(g.lr),
            decoder: AdamConfig::with_lr(g.decoder_lr.unwrap_or(g.lr)),
            batch: g.batch,
            n_steps: g.steps,
            snapshot_every: Some(g.snapshot_every.unwrap_or((g.steps / 20).max(1))),
            ..VaeTrainConfig::default()
        };
        if let Some(s) = g.sigma2 {
            m0.sigma2 = s;
            cfg.update_sigma2 = false;
        }
        let r = vae_train(d.train, &m0, &cfg)?;
        let est = channel_estimate(&r.model, Some(d.impulse));
        let trace = r
            .trace
            .iter()
            .zip(&r.ser_proxy)
            .enumerate()
            .map(|(i, (b, &p))| TraceRow {
                step: i + 1,
                loss: b.total,
                metric: p,
            })
            .collect();
        Ok(BlindOutcome {
            taps: r.model.encoder.clone(),
            snapshots: r.snapshots,
            train_steps: g.steps as u64,
            trace,
            metrics: vec![
                ("sigma2".into(), r.model.sigma2),
                ("channel_score".into(), est.score.unwrap_or(f64::NAN)),
            ],
        })
    }
}
