//! Built-in supervised IM/DD families: linear FFE, Volterra, CNN and SNN.

use serde::{Deserialize, Serialize};

use super::{parse_params, ImddData, ImddEqualizer, ImddOutcome, TraceRow};
use crate::classic::{ffe_train_ls, macs_per_symbol_classic, ClassicShape, Ridge, VolterraModel};
use crate::dataset::{ImddStream, Standardizer, WindowSet};
use crate::error::{Error, Result};
use crate::nn::{
    cnn_train, macs_per_symbol_cnn, nearest_level, CnnConfig, LabeledData, LayerSpec, OutputMode, TrainOptions,
    TrainReport,
};
use crate::optim::AdamConfig;
use crate::snn::{snn_decide_all, snn_train, synops_per_symbol, Encoder, LifParams, SnnConfig};

fn windows(s: &ImddStream, width: usize, group: usize, norm: &Standardizer) -> WindowSet {
    let mut w = WindowSet::grouped(s, width, group);
    w.standardize(norm);
    w
}

fn targets(s: &ImddStream) -> Vec<f64> {
    s.labels.iter().map(|&l| s.levels[l]).collect()
}

fn ridge(v: Option<f64>) -> Ridge {
    v.map_or(Ridge::Auto, Ridge::Fixed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfeGrid {
    pub taps: Vec<usize>,
    /// Fixed ridge; automatic when absent.
    #[serde(default)]
    pub ridge: Option<f64>,
}

/// Least-squares linear FFE with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct FfeFamily {
    pub taps: usize,
    pub ridge: Option<f64>,
}

pub(super) fn ffe_factory(t: &toml::Table) -> Result<Vec<Box<dyn ImddEqualizer>>> {
    let g: FfeGrid = parse_params("ffe", t)?;
    g.taps
        .iter()
        .map(|&taps| {
            if taps == 0 {
                return Err(Error::Config("ffe taps must be positive".into()));
            }
            Ok(Box::new(FfeFamily { taps, ridge: g.ridge }) as Box<dyn ImddEqualizer>)
        })
        .collect()
}

impl ImddEqualizer for FfeFamily {
    fn family(&self) -> &'static str {
        "linear"
    }

    fn id(&self) -> String {
        format!("ffe-{}", self.taps)
    }

    fn macs_per_symbol(&self) -> Result<f64> {
        Ok(macs_per_symbol_classic(ClassicShape::Ffe { taps: self.taps }) as f64)
    }

    fn fit_eval(&self, d: &ImddData<'_>, _seed: u64) -> Result<ImddOutcome> {
        let tr = windows(d.train, self.taps, 1, &d.norm);
        let m = ffe_train_ls(&tr.data, &targets(d.train), self.taps, ridge(self.ridge), true)?;
        drop(tr);
        let te = windows(d.test, self.taps, 1, &d.norm);
        let decisions = (0..te.rows())
            .map(|r| nearest_level(m.predict(te.row(r)), &d.test.levels))
            .collect();
        Ok(ImddOutcome {
            decisions,
            train_steps: 1,
            trace: Vec::new(),
            metrics: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolterraGrid {
    /// `[m1, m2]` pairs: linear and second-order memory in samples.
    pub memory: Vec<[usize; 2]>,
    #[serde(default)]
    pub ridge: Option<f64>,
}

/// Second-order Volterra equalizer fitted by least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraFamily {
    pub m1: usize,
    pub m2: usize,
    pub ridge: Option<f64>,
}

pub(super) fn volterra_factory(t: &toml::Table) -> Result<Vec<Box<dyn ImddEqualizer>>> {
    let g: VolterraGrid = parse_params("volterra", t)?;
    g.memory
        .iter()
        .map(|&[m1, m2]| {
            if m1 == 0 || m2 > m1 {
                return Err(Error::Config(format!("volterra memory [{m1}, {m2}] needs 0 < m2 <= m1")));
            }
            Ok(Box::new(VolterraFamily { m1, m2, ridge: g.ridge }) as Box<dyn ImddEqualizer>)
        })
        .collect()
}

impl ImddEqualizer for VolterraFamily {
    fn family(&self) -> &'static str {
        "volterra"
    }

    fn id(&self) -> String {
        format!("volterra-{}x{}", self.m1, self.m2)
    }

    fn macs_per_symbol(&self) -> Result<f64> {
        Ok(macs_per_symbol_classic(ClassicShape::Volterra { m1: self.m1, m2: self.m2 }) as f64)
    }

    fn fit_eval(&self, d: &ImddData<'_>, _seed: u64) -> Result<ImddOutcome> {
        let tr = windows(d.train, self.m1, 1, &d.norm);
        let m = VolterraModel::fit(&tr.data, self.m1, &targets(d.train), self.m1, self.m2, ridge(self.ridge))?;
        drop(tr);
        let te = windows(d.test, self.m1, 1, &d.norm);
        let decisions = (0..te.rows())
            .map(|r| nearest_level(m.predict(te.row(r)), &d.test.levels))
            .collect();
        Ok(ImddOutcome {
            decisions,
            train_steps: 1,
            trace: Vec::new(),
            metrics: Vec::new(),
        })
    }
}

/// Optimizer and loop settings shared by the neural families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralTraining {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub patience: usize,
    /// Use at most this many training symbols.
    pub max_train_symbols: Option<usize>,
}

impl Default for NeuralTraining {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 30,
            batch: 128,
            patience: 5,
            max_train_symbols: None,
        }
    }
}

impl NeuralTraining {
    fn options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch: self.batch,
            patience: self.patience,
            seed,
        }
    }

    fn steps(&self, rows: usize, epochs: usize) -> u64 {
        (epochs * rows.div_ceil(self.batch.max(1))) as u64
    }

    fn cap(&self, set: WindowSet) -> WindowSet {
        match self.max_train_symbols {
            Some(n) => {
                let g = set.group;
                set.head(n / g)
            }
            None => set,
        }
    }
}

fn trace(rep: &TrainReport) -> Vec<TraceRow> {
    rep.loss_trace
        .iter()
        .zip(&rep.val_ber_trace)
        .enumerate()
        .map(|(i, (&loss, &metric))| TraceRow { step: i + 1, loss, metric })
        .collect()
}

fn check_classes(classes: usize, s: &ImddStream) -> Result<()> {
    if classes != s.levels.len() {
        return Err(Error::Config(format!(
            "model has {classes} classes but the scenario has {}",
            s.levels.len()
        )));
    }
    Ok(())
}

fn default_one() -> usize {
    1
}

fn default_classes() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnVariant {
    /// Input samples per window.
    pub window: usize,
    /// Symbols decided per window.
    #[serde(default = "default_one")]
    pub symbols: usize,
    /// Layer text, e.g. `conv(1,4,9,2) relu dense(48,2)`.
    pub layers: String,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub output: OutputMode,
    /// Overrides the generated identifier.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnGrid {
    pub variants: Vec<CnnVariant>,
    #[serde(default)]
    pub training: NeuralTraining,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnFamily {
    pub cfg: CnnConfig,
    pub training: NeuralTraining,
    pub name: Option<String>,
}

pub(super) fn cnn_factory(t: &toml::Table) -> Result<Vec<Box<dyn ImddEqualizer>>> {
    let g: CnnGrid = parse_params("cnn", t)?;
    g.variants
        .iter()
        .map(|v| {
            let mut cfg = CnnConfig::parse(&v.layers, v.window, v.symbols, v.classes)?;
            cfg.output = v.output;
            cfg.validate()?;
            Ok(Box::new(CnnFamily {
                cfg,
                training: g.training.clone(),
                name: v.name.clone(),
            }) as Box<dyn ImddEqualizer>)
        })
        .collect()
}

/// Compact layer code: `conv(1,16,13,2)` becomes `c16k13s2`, `relu` `r`,
/// `dense(48,2)` `d2`.
fn layer_code(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(|l| match *l {
            LayerSpec::Conv1d { out_ch, kernel, stride, .. } if stride > 1 => format!("c{out_ch}k{kernel}s{stride}"),
            LayerSpec::Conv1d { out_ch, kernel, .. } => format!("c{out_ch}k{kernel}"),
            LayerSpec::Relu => "r".into(),
            LayerSpec::Dense { outputs, .. } => format!("d{outputs}"),
        })
        .collect::<Vec<_>>()
        .join(".")
}

impl ImddEqualizer for CnnFamily {
    fn family(&self) -> &'static str {
        "cnn"
    }

    fn id(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let mse = if self.cfg.output == OutputMode::Regression { "-mse" } else { "" };
        format!(
            "cnn-w{}g{}-{}{mse}",
            self.cfg.input_window,
            self.cfg.symbols_per_window,
            layer_code(&self.cfg.layers)
        )
    }

    fn macs_per_symbol(&self) -> Result<f64> {
        macs_per_symbol_cnn(&self.cfg)
    }

    fn fit_eval(&self, d: &ImddData<'_>, seed: u64) -> Result<ImddOutcome> {
        check_classes(self.cfg.n_classes, d.train)?;
        let (w, g) = (self.cfg.input_window, self.cfg.symbols_per_window);
        let tr = self.training.cap(windows(d.train, w, g, &d.norm));
        let va = windows(d.val, w, g, &d.norm);
        let (lt, bt) = (&d.train.levels, &d.train.bit_labels);
        let (model, rep) = cnn_train(
            LabeledData { windows: &tr, levels: lt, bit_labels: bt },
            LabeledData { windows: &va, levels: lt, bit_labels: bt },
            &self.cfg,
            AdamConfig::with_lr(self.training.lr),
            &self.training.options(seed),
        )?;
        let rows = tr.rows();
        drop((tr, va));
        let te = windows(d.test, w, g, &d.norm);
        Ok(ImddOutcome {
            decisions: model.decide(&te, &d.test.levels)?,
            train_steps: self.training.steps(rows, rep.epochs),
            trace: trace(&rep),
            metrics: vec![("best_epoch".into(), rep.best_epoch as f64)],
        })
    }
}

fn default_timesteps() -> usize {
    10
}

fn default_beta() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnnVariant {
    pub window: usize,
    pub hidden: Vec<usize>,
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    #[serde(default)]
    pub encoder: Encoder,
    #[serde(default = "default_beta")]
    pub surrogate_beta: f64,
    #[serde(default)]
    pub lif: LifParams,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnnGrid {
    pub variants: Vec<SnnVariant>,
    #[serde(default)]
    pub training: NeuralTraining,
    /// Test windows used to measure SynOps.
    #[serde(default = "default_synops_rows")]
    pub synops_rows: usize,
}

fn default_synops_rows() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnFamily {
    pub cfg: SnnConfig,
    pub training: NeuralTraining,
    pub synops_rows: usize,
    pub name: Option<String>,
}

pub(super) fn snn_factory(t: &toml::Table) -> Result<Vec<Box<dyn ImddEqualizer>>> {
    let g: SnnGrid = parse_params("snn", t)?;
    g.variants
        .iter()
        .map(|v| {
            let mut sizes = vec![v.window];
            sizes.extend(&v.hidden);
            sizes.push(v.classes);
            let cfg = SnnConfig {
                sizes,
                timesteps: v.timesteps,
                encoder: v.encoder,
                surrogate_beta: v.surrogate_beta,
                lif: v.lif,
            };
            cfg.validate()?;
            Ok(Box::new(SnnFamily {
                cfg,
                training: g.training.clone(),
                synops_rows: g.synops_rows,
                name: v.name.clone(),
            }) as Box<dyn ImddEqualizer>)
        })
        .collect()
}

impl ImddEqualizer for SnnFamily {
    fn family(&self) -> &'static str {
        "snn"
    }

    fn id(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let hidden: Vec<String> = self.cfg.sizes[1..self.cfg.sizes.len() - 1]
            .iter()
            .map(ToString::to_string)
            .collect();
        let enc = match self.cfg.encoder {
            Encoder::Current => "",
            Encoder::Ternary { .. } => "-tern",
        };
        format!(
            "snn-w{}-h{}-t{}{enc}",
            self.cfg.input_width(),
            hidden.join("."),
            self.cfg.timesteps
        )
    }

    /// Dense-equivalent cost: every synapse active at every timestep.
    fn macs_per_symbol(&self) -> Result<f64> {
        Ok((self.cfg.timesteps as u64 * self.cfg.dense_macs()) as f64)
    }

    fn fit_eval(&self, d: &ImddData<'_>, seed: u64) -> Result<ImddOutcome> {
        check_classes(self.cfg.n_classes(), d.train)?;
        let w = self.cfg.input_width();
        let tr = self.training.cap(windows(d.train, w, 1, &d.norm));
        let va = windows(d.val, w, 1, &d.norm);
        let (lv, bl) = (&d.train.levels, &d.train.bit_labels);
        let (model, rep) = snn_train(
            LabeledData { windows: &tr, levels: lv, bit_labels: bl },
            LabeledData { windows: &va, levels: lv, bit_labels: bl },
            &self.cfg,
            AdamConfig::with_lr(self.training.lr),
            &self.training.options(seed),
        )?;
        let rows = tr.rows();
        drop((tr, va));
        let te = windows(d.test, w, 1, &d.norm);
        let synops = synops_per_symbol(
            &model,
            &LabeledData { windows: &te, levels: lv, bit_labels: bl },
            self.synops_rows,
        )?;
        let bound = self.macs_per_symbol()?;
        Ok(ImddOutcome {
            decisions: snn_decide_all(&model, &te)?,
            train_steps: self.training.steps(rows, rep.epochs),
            trace: trace(&rep),
            metrics: vec![
                ("best_epoch".into(), rep.best_epoch as f64),
                ("synops_per_symbol".into(), synops),
                ("dense_bound".into(), bound),
                ("synops_ratio".into(), synops / bound),
            ],
        })
    }
}
