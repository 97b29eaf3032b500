//! Cell-parallel sweep execution with a deterministic merge.
//!
//! A cell is one `(channel variant, SNR, model, seed)` combination. Data
//! for each `(variant, SNR, seed)` is simulated once and shared by every
//! model, and every cell derives its randomness from its seed alone, so the
//! worker count never changes results.

use std::ops::Range;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario, ScenarioVariant};
use crate::channel::{cd_memory_symbols, coherent_channel_apply, coherent_tx};
use crate::classic::{butterfly_apply, ButterflyFir};
use crate::constellation::{build_pam, build_qam, pcs_shape, Constellation};
use crate::dataset::{ImddStream, Standardizer};
use crate::error::{Error, Result};
use crate::registry::{
    coherent_error_rates, BlindEqualizer, CoherentData, ImddData, ImddEqualizer, Registry, TraceRow,
};
use crate::signal::{DualPolBlock, RngStream};

/// One results row; the column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub model_id: String,
    pub seed: u64,
    pub snr_db: f64,
    pub macs_per_symbol: f64,
    pub ser: f64,
    pub ber: f64,
    pub train_steps: u64,
    /// Empty unless wall-clock recording is enabled.
    pub wall_s: Option<f64>,
    pub config_hash: String,
}

pub const RESULT_COLUMNS: [&str; 10] = [
    "scenario",
    "model_id",
    "seed",
    "snr_db",
    "macs_per_symbol",
    "ser",
    "ber",
    "train_steps",
    "wall_s",
    "config_hash",
];

/// A named per-cell measurement beyond the results columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    pub model_id: String,
    pub seed: u64,
    pub snr_db: f64,
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub scenario: String,
    pub model_id: String,
    pub seed: u64,
    pub snr_db: f64,
    pub error: String,
}

/// Convergence trace of one cell. `kind` is `train` (loss and validation
/// metric per epoch or step) or `startup` (SER after a number of symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub scenario: String,
    pub model_id: String,
    pub seed: u64,
    pub snr_db: f64,
    pub kind: &'static str,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
    pub metrics: Vec<MetricRow>,
    pub failures: Vec<FailureRow>,
    pub traces: Vec<CellTrace>,
}

impl ExperimentResult {
    pub fn cells(&self) -> usize {
        self.rows.len() + self.failures.len()
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.cells() == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.cells() as f64
        }
    }
}

enum Models {
    Imdd(Vec<Box<dyn ImddEqualizer>>),
    Blind(Vec<Box<dyn BlindEqualizer>>),
}

impl Models {
    fn len(&self) -> usize {
        match self {
            Models::Imdd(v) => v.len(),
            Models::Blind(v) => v.len(),
        }
    }

    fn id(&self, i: usize) -> String {
        match self {
            Models::Imdd(v) => v[i].id(),
            Models::Blind(v) => v[i].id(),
        }
    }

    fn macs(&self, i: usize) -> Result<f64> {
        match self {
            Models::Imdd(v) => v[i].macs_per_symbol(),
            Models::Blind(v) => v[i].macs_per_symbol(),
        }
    }
}

fn expand_models(cfg: &ExperimentConfig, registry: &Registry) -> Result<Models> {
    let mut models = match cfg.scenario {
        Scenario::Imdd => {
            let mut v = Vec::new();
            for m in &cfg.models {
                v.extend(registry.expand_imdd(&m.family, &m.params)?);
            }
            Models::Imdd(v)
        }
        Scenario::CoherentPcs => {
            let mut v = Vec::new();
            for m in &cfg.models {
                v.extend(registry.expand_blind(&m.family, &m.params)?);
            }
            Models::Blind(v)
        }
    };
    if cfg.cap_to_budget {
        let keep: Vec<bool> = (0..models.len())
            .map(|i| models.macs(i).map(|m| m <= cfg.mac_budget))
            .collect::<Result<_>>()?;
        let mut k = keep.iter();
        match &mut models {
            Models::Imdd(v) => v.retain(|_| *k.next().unwrap_or(&true)),
            Models::Blind(v) => v.retain(|_| *k.next().unwrap_or(&true)),
        }
    }
    let mut ids: Vec<String> = (0..models.len()).map(|i| models.id(i)).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate model id `{}`", w[0])));
    }
    Ok(models)
}

struct ImddSet {
    train: ImddStream,
    val: ImddStream,
    test: ImddStream,
    norm: Standardizer,
}

struct CoherentSet {
    rx: DualPolBlock,
    train: DualPolBlock,
    reference: [Vec<usize>; 2],
    constellation: Constellation,
    impulse: [[Vec<Complex64>; 2]; 2],
    cd_memory: f64,
    eval: Range<usize>,
}

enum CellData {
    Imdd(ImddSet),
    Coherent(CoherentSet),
}

fn simulate(cfg: &ExperimentConfig, v: &ScenarioVariant, snr: f64, seed: u64) -> Result<CellData> {
    let rng = RngStream::new(seed, 0);
    let d = &cfg.data;
    match cfg.scenario {
        Scenario::Imdd => {
            let s = cfg.imdd.as_ref().ok_or_else(|| Error::Config("missing [imdd] table".into()))?;
            let c = build_pam(s.pam)?;
            let ch = cfg.imdd_channel(snr, v.beta2l_scale)?;
            let train = ImddStream::simulate(&c, &ch, d.train_symbols, &rng.substream(1))?;
            let val = ImddStream::simulate(&c, &ch, d.val_symbols, &rng.substream(2))?;
            let test = ImddStream::simulate(&c, &ch, d.eval_symbols, &rng.substream(3))?;
            let norm = Standardizer::fit(&train.samples);
            Ok(CellData::Imdd(ImddSet { train, val, test, norm }))
        }
        Scenario::CoherentPcs => {
            let s = cfg
                .coherent
                .as_ref()
                .ok_or_else(|| Error::Config("missing [coherent] table".into()))?;
            let base = build_qam(s.qam)?;
            let c = match s.entropy {
                Some(h) => pcs_shape(&base, h, 1e-9)?,
                None => base,
            };
            let ch = cfg.coherent_channel(snr, v.beta2l_scale)?;
            let n = d.train_symbols + d.eval_symbols;
            let (tx, reference) = coherent_tx(&c, n, s.sps, s.rolloff, s.symbol_rate_gbd * 1e9, &rng.substream(1))?;
            let out = coherent_channel_apply(&tx, &ch, &rng.substream(3))?;
            let train = out.rx.slice_symbols(0, d.train_symbols)?;
            Ok(CellData::Coherent(CoherentSet {
                rx: out.rx,
                train,
                reference,
                constellation: c,
                impulse: out.impulse,
                cd_memory: cd_memory_symbols(ch.beta2l),
                eval: d.train_symbols..n,
            }))
        }
    }
}

struct CellOutput {
    row: ResultRow,
    metrics: Vec<(String, f64)>,
    traces: Vec<(&'static str, Vec<TraceRow>)>,
}

fn run_imdd(eq: &dyn ImddEqualizer, s: &ImddSet, seed: u64) -> Result<(f64, f64, u64, Vec<(String, f64)>, Vec<TraceRow>)> {
    let data = ImddData {
        train: &s.train,
        val: &s.val,
        test: &s.test,
        norm: s.norm,
    };
    let out = eq.fit_eval(&data, seed)?;
    let n = out.decisions.len();
    if n == 0 || n > s.test.len() {
        return Err(Error::Evaluation(format!("{} decisions for {} test symbols", n, s.test.len())));
    }
    let reference = &s.test.labels[..n];
    let errors = out.decisions.iter().zip(reference).filter(|(a, b)| a != b).count();
    let ber = s.test.ber(&out.decisions, reference);
    Ok((errors as f64 / n as f64, ber, out.train_steps, out.metrics, out.trace))
}

type BlindResult = (f64, f64, u64, Vec<(String, f64)>, Vec<TraceRow>, Vec<TraceRow>);

fn run_blind(eq: &dyn BlindEqualizer, s: &CoherentSet, seed: u64, target: f64) -> Result<BlindResult> {
    let data = CoherentData {
        train: &s.train,
        constellation: &s.constellation,
        impulse: &s.impulse,
        cd_memory_symbols: s.cd_memory,
    };
    let out = eq.adapt(&data, seed)?;
    let rates = |w: &ButterflyFir| -> Result<(f64, f64)> {
        let z = butterfly_apply(&s.rx, w)?;
        coherent_error_rates(&z, &s.reference, &s.constellation, s.eval.clone())
    };
    let (ser, ber) = rates(&out.taps)?;
    let mut startup = Vec::with_capacity(out.snapshots.len());
    for (k, w) in &out.snapshots {
        startup.push(TraceRow {
            step: *k,
            loss: f64::NAN,
            metric: rates(w)?.0,
        });
    }
    let reached = startup
        .iter()
        .find(|r| r.metric < target)
        .map_or(f64::INFINITY, |r| r.step as f64);
    let mut metrics = out.metrics;
    metrics.push(("symbols_to_target".into(), reached));
    Ok((ser, ber, out.train_steps, metrics, out.trace, startup))
}

/// Runs every cell of the grid on `workers` threads.
///
/// Cell failures are recorded and the sweep continues. Rows, metrics,
/// failures and traces come back in grid order (variant, SNR, model, seed).
pub fn run_experiment(cfg: &ExperimentConfig, registry: &Registry, workers: usize) -> Result<ExperimentResult> {
    run_cells(cfg, registry, workers, None)
}

/// [`run_experiment`] restricted to the model with id `only`, if given.
pub fn run_cells(
    cfg: &ExperimentConfig,
    registry: &Registry,
    workers: usize,
    only: Option<&str>,
) -> Result<ExperimentResult> {
    cfg.validate(registry)?;
    let hash = cfg.config_hash()?;
    let mut models = expand_models(cfg, registry)?;
    if let Some(id) = only {
        match &mut models {
            Models::Imdd(v) => v.retain(|m| m.id() == id),
            Models::Blind(v) => v.retain(|m| m.id() == id),
        }
        if models.len() == 0 {
            return Err(Error::Usage(format!("no model with id `{id}` in the config grid")));
        }
    }
    let variants = cfg.variants();
    let mut keys = Vec::new();
    for (vi, _) in variants.iter().enumerate() {
        for (si, _) in cfg.snr_db.iter().enumerate() {
            for (ei, _) in cfg.seeds.iter().enumerate() {
                keys.push((vi, si, ei));
            }
        }
    }
    let key_index = |vi: usize, si: usize, ei: usize| (vi * cfg.snr_db.len() + si) * cfg.seeds.len() + ei;
    let mut cells = Vec::new();
    if models.len() > 0 {
        for (vi, _) in variants.iter().enumerate() {
            for (si, _) in cfg.snr_db.iter().enumerate() {
                for mi in 0..models.len() {
                    for (ei, _) in cfg.seeds.iter().enumerate() {
                        cells.push((vi, si, mi, ei));
                    }
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;

    let (data, outputs) = pool.install(|| {
        let data: Vec<Result<CellData>> = if cells.is_empty() {
            Vec::new()
        } else {
            keys.par_iter()
                .map(|&(vi, si, ei)| simulate(cfg, &variants[vi], cfg.snr_db[si], cfg.seeds[ei]))
                .collect()
        };
        let outputs: Vec<Result<CellOutput>> = cells
            .par_iter()
            .map(|&(vi, si, mi, ei)| {
                let (seed, snr) = (cfg.seeds[ei], cfg.snr_db[si]);
                let d = data[key_index(vi, si, ei)]
                    .as_ref()
                    .map_err(|e| Error::Evaluation(format!("data simulation failed: {e}")))?;
                let start = Instant::now();
                let macs = models.macs(mi)?;
                let (ser, ber, steps, metrics, traces) = match (&models, d) {
                    (Models::Imdd(v), CellData::Imdd(s)) => {
                        let (ser, ber, steps, m, t) = run_imdd(v[mi].as_ref(), s, seed)?;
                        (ser, ber, steps, m, vec![("train", t)])
                    }
                    (Models::Blind(v), CellData::Coherent(s)) => {
                        let (ser, ber, steps, m, t, st) = run_blind(v[mi].as_ref(), s, seed, cfg.startup_target_ser)?;
                        (ser, ber, steps, m, vec![("train", t), ("startup", st)])
                    }
                    _ => return Err(Error::Config("model kind does not match the scenario".into())),
                };
                let wall = start.elapsed().as_secs_f64();
                log::info!(
                    "{} {} seed {seed} snr {snr}: ser {ser:.3e} ber {ber:.3e} ({wall:.1} s)",
                    variants[vi].label,
                    models.id(mi)
                );
                Ok(CellOutput {
                    row: ResultRow {
                        scenario: variants[vi].label.clone(),
                        model_id: models.id(mi),
                        seed,
                        snr_db: snr,
                        macs_per_symbol: macs,
                        ser,
                        ber,
                        train_steps: steps,
                        wall_s: cfg.wall_clock.then_some(wall),
                        config_hash: hash.clone(),
                    },
                    metrics,
                    traces,
                })
            })
            .collect();
        (data, outputs)
    });

    let mut res = ExperimentResult {
        config_hash: hash,
        ..ExperimentResult::default()
    };
    for (&(vi, si, ei), d) in keys.iter().zip(&data) {
        let (scenario, seed, snr) = (&variants[vi].label, cfg.seeds[ei], cfg.snr_db[si]);
        let baseline = match d {
            Ok(CellData::Imdd(s)) => {
                let dec = s.test.unequalized_decisions(s.test.levels.len());
                Some(s.test.ber(&dec, &s.test.labels))
            }
            Ok(CellData::Coherent(s)) => {
                let id = ButterflyFir::identity(1, s.rx.sps())?;
                let z = butterfly_apply(&s.rx, &id)?;
                coherent_error_rates(&z, &s.reference, &s.constellation, s.eval.clone())
                    .ok()
                    .map(|(ser, _)| ser)
            }
            Err(_) => None,
        };
        if let Some(v) = baseline {
            let key = if cfg.scenario == Scenario::Imdd { "ber" } else { "ser" };
            res.metrics.push(MetricRow {
                scenario: scenario.clone(),
                model_id: "unequalized".into(),
                seed,
                snr_db: snr,
                key: key.into(),
                value: v,
            });
        }
    }
    for (&(vi, si, mi, ei), out) in cells.iter().zip(outputs) {
        let (scenario, seed, snr) = (variants[vi].label.clone(), cfg.seeds[ei], cfg.snr_db[si]);
        match out {
            Ok(o) => {
                for (key, value) in o.metrics {
                    res.metrics.push(MetricRow {
                        scenario: scenario.clone(),
                        model_id: o.row.model_id.clone(),
                        seed,
                        snr_db: snr,
                        key,
                        value,
                    });
                }
                for (kind, rows) in o.traces {
                    if !rows.is_empty() {
                        res.traces.push(CellTrace {
                            scenario: scenario.clone(),
                            model_id: o.row.model_id.clone(),
                            seed,
                            snr_db: snr,
                            kind,
                            rows,
                        });
                    }
                }
                res.rows.push(o.row);
            }
            Err(e) => {
                log::warn!("{scenario} {} seed {seed} snr {snr} failed: {e}", models.id(mi));
                res.failures.push(FailureRow {
                    scenario,
                    model_id: models.id(mi),
                    seed,
                    snr_db: snr,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(res)
}
