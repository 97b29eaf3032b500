//! Supervised 1-D CNN equalizer for IM/DD windows.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::report::{checksum, TrainReport};
use super::tape::{Tape, Tensor, Var};
use crate::checkpoint::{Checkpoint, Checkpointable};
use crate::dataset::WindowSet;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::signal::RngStream;

/// One network layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Dense { inputs: usize, outputs: usize },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => write!(f, "conv({in_ch},{out_ch},{kernel},{stride})"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense({inputs},{outputs})"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "relu" {
            return Ok(LayerSpec::Relu);
        }
        let bad = || Error::Config(format!("cannot parse layer `{s}`"));
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<usize> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(|a| a.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match (name, args.as_slice()) {
            ("conv", &[in_ch, out_ch, kernel, stride]) => Ok(LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
            }),
            ("dense", &[inputs, outputs]) => Ok(LayerSpec::Dense { inputs, outputs }),
            _ => Err(bad()),
        }
    }
}

/// Parses a space-separated layer list.
pub fn parse_layers(text: &str) -> Result<Vec<LayerSpec>> {
    text.split_whitespace().map(str::parse).collect()
}

/// Output head: class scores (cross-entropy) or one real estimate per
/// symbol (MSE against the transmitted level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    #[default]
    Classes,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnConfig {
    /// Samples per input window.
    pub input_window: usize,
    pub layers: Vec<LayerSpec>,
    /// Symbols decided per window.
    pub symbols_per_window: usize,
    pub n_classes: usize,
    pub output: OutputMode,
}

impl CnnConfig {
    /// Parses a space-separated layer list such as
    /// `conv(1,4,9,2) relu dense(48,2)`.
    pub fn parse(layers: &str, input_window: usize, symbols_per_window: usize, n_classes: usize) -> Result<Self> {
        let cfg = Self {
            input_window,
            layers: parse_layers(layers)?,
            symbols_per_window,
            n_classes,
            output: OutputMode::Classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn layers_text(&self) -> String {
        self.layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
    }

    /// Output width of the final layer.
    pub fn output_width(&self) -> usize {
        self.symbols_per_window
            * match self.output {
                OutputMode::Classes => self.n_classes,
                OutputMode::Regression => 1,
            }
    }

    /// Checks the shape chain and returns the `(channels, length)` after
    /// every layer; dense outputs are reported as `(outputs, 1)`.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        if self.input_window == 0 || self.symbols_per_window == 0 || self.n_classes < 2 {
            return Err(Error::param("window, symbols and classes must be positive"));
        }
        let mut shape = (1usize, self.input_window);
        let mut flat = false;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            shape = match *l {
                LayerSpec::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                } => {
                    if flat || in_ch != shape.0 || kernel == 0 || stride == 0 || out_ch == 0 || kernel > shape.1 {
                        return Err(Error::param(format!("layer {i} `{l}` does not fit input {shape:?}")));
                    }
                    (out_ch, (shape.1 - kernel) / stride + 1)
                }
                LayerSpec::Relu => shape,
                LayerSpec::Dense { inputs, outputs } => {
                    if inputs != shape.0 * shape.1 || outputs == 0 {
                        return Err(Error::param(format!("layer {i} `{l}` does not fit input {shape:?}")));
                    }
                    flat = true;
                    (outputs, 1)
                }
            };
            out.push(shape);
        }
        let last = shape.0 * shape.1;
        if last != self.output_width() {
            return Err(Error::param(format!(
                "network emits {last} values, expected {}",
                self.output_width()
            )));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }
}

/// Real MACs for one input window: conv layers count
/// `out_len * out_ch * in_ch * kernel`, dense layers `in * out`; biases and
/// activations are free. Returns 0 for an empty network.
pub fn macs_per_window_cnn(cfg: &CnnConfig) -> Result<u64> {
    let shapes = cfg.shapes()?;
    Ok(cfg
        .layers
        .iter()
        .zip(&shapes)
        .map(|(l, &(_, out_len))| match *l {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => (out_len * out_ch * in_ch * kernel) as u64,
            LayerSpec::Relu => 0,
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs) as u64,
        })
        .sum())
}

/// MACs per decided symbol.
pub fn macs_per_symbol_cnn(cfg: &CnnConfig) -> Result<f64> {
    Ok(macs_per_window_cnn(cfg)? as f64 / cfg.symbols_per_window as f64)
}

/// Weights and biases of a [`CnnConfig`], one pair per parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub cfg: CnnConfig,
    pub params: Vec<Tensor>,
}

impl CnnModel {
    /// He-uniform weights, zero biases.
    pub fn init(cfg: &CnnConfig, rng: &RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng.rng();
        let mut params = Vec::new();
        for l in &cfg.layers {
            let (wshape, fan_in) = match *l {
                LayerSpec::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => (vec![out_ch, in_ch, kernel], in_ch * kernel),
                LayerSpec::Dense { inputs, outputs } => (vec![outputs, inputs], inputs),
                LayerSpec::Relu => continue,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let n: usize = wshape.iter().product();
            let w: Vec<f64> = (0..n).map(|_| r.random_range(-bound..bound)).collect();
            params.push(Tensor::from_vec(&wshape, w)?);
            params.push(Tensor::zeros(&[wshape[0]]));
        }
        Ok(Self {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::param("parameter vector length mismatch"));
        }
        let mut off = 0;
        for t in &mut self.params {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Records the forward pass of `batch` windows; returns the output and
    /// the parameter leaves in `params` order.
    pub fn forward(&self, tape: &mut Tape, windows: &[f64], batch: usize) -> Result<(Var, Vec<Var>)> {
        let w = self.cfg.input_window;
        if windows.len() != batch * w {
            return Err(Error::param("window buffer does not match batch size"));
        }
        let leaves: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let mut h = tape.leaf(Tensor::from_vec(&[batch, 1, w], windows.to_vec())?);
        let mut pi = 0;
        for l in &self.cfg.layers {
            h = match *l {
                LayerSpec::Conv1d { stride, .. } => {
                    let y = tape.conv1d(h, leaves[pi], leaves[pi + 1], stride)?;
                    pi += 2;
                    y
                }
                LayerSpec::Dense { .. } => {
                    let y = tape.dense(h, leaves[pi], leaves[pi + 1])?;
                    pi += 2;
                    y
                }
                LayerSpec::Relu => tape.relu(h)?,
            };
        }
        // A convolutional head emits `[batch, classes, symbols]`; scores are
        // consumed per symbol.
        if tape.value(h)?.shape().len() == 3 {
            h = tape.transpose(h)?;
        }
        Ok((h, leaves))
    }

    /// Raw network outputs, `output_width` values per window.
    pub fn predict(&self, windows: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (y, _) = self.forward(&mut tape, windows, batch)?;
        Ok(tape.value(y)?.data().to_vec())
    }

    /// Class decisions for every symbol of every row of `set`.
    pub fn decide(&self, set: &WindowSet, levels: &[f64]) -> Result<Vec<usize>> {
        if set.width != self.cfg.input_window || set.group != self.cfg.symbols_per_window {
            return Err(Error::param("window set framing does not match the network"));
        }
        let chunk = 1024;
        let mut out = Vec::with_capacity(set.labels.len());
        for start in (0..set.rows()).step_by(chunk) {
            let b = chunk.min(set.rows() - start);
            let y = self.predict(&set.data[start * set.width..(start + b) * set.width], b)?;
            match self.cfg.output {
                OutputMode::Classes => out.extend(y.chunks(self.cfg.n_classes).map(argmax)),
                OutputMode::Regression => out.extend(y.iter().map(|&v| nearest_level(v, levels))),
            }
        }
        Ok(out)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn nearest_level(v: f64, levels: &[f64]) -> usize {
    let mut best = 0;
    for (i, l) in levels.iter().enumerate() {
        if (v - l).abs() < (v - levels[best]).abs() {
            best = i;
        }
    }
    best
}

/// Loop settings shared by the neural trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch: 128,
            patience: 5,
            seed: 0,
        }
    }
}

/// Labeled windows plus the class-to-bit map used for validation BER.
#[derive(Debug, Clone, Copy)]
pub struct LabeledData<'a> {
    pub windows: &'a WindowSet,
    pub levels: &'a [f64],
    pub bit_labels: &'a [u32],
}

impl LabeledData<'_> {
    pub fn ber(&self, decisions: &[usize]) -> f64 {
        let bits = self.levels.len().next_power_of_two().trailing_zeros().max(1) as usize;
        let errors: u32 = decisions
            .iter()
            .zip(&self.windows.labels)
            .map(|(&d, &r)| (self.bit_labels[d] ^ self.bit_labels[r]).count_ones())
            .sum();
        errors as f64 / (decisions.len().max(1) * bits) as f64
    }
}

/// Minibatch Adam on cross-entropy (or MSE for the regression head) with
/// early stopping on validation BER. The returned model holds the best
/// validation weights.
pub fn cnn_train(
    train: LabeledData<'_>,
    val: LabeledData<'_>,
    cfg: &CnnConfig,
    opt: AdamConfig,
    opts: &TrainOptions,
) -> Result<(CnnModel, TrainReport)> {
    cfg.validate()?;
    let set = train.windows;
    if set.width != cfg.input_window || set.group != cfg.symbols_per_window || set.rows() == 0 {
        return Err(Error::param("training windows do not match the network framing"));
    }
    if opts.epochs == 0 || opts.batch == 0 {
        return Err(Error::param("epochs and batch must be positive"));
    }
    let seed = RngStream::new(opts.seed, 0);
    let mut model = CnnModel::init(cfg, &seed.substream(1))?;
    let mut adam = Adam::new(opt, model.n_params());
    let mut flat = model.flat_params();
    let mut order: Vec<usize> = (0..set.rows()).collect();
    let mut buf = Vec::with_capacity(opts.batch * set.width);
    let mut labels = Vec::with_capacity(opts.batch * set.group);
    let mut targets = Vec::with_capacity(opts.batch * set.group);
    let mut report = TrainReport::new(macs_per_symbol_cnn(cfg)?);
    let mut best = (f64::INFINITY, flat.clone());
    let mut since_best = 0;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut seed.substream(100 + epoch as u64).rng());
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch) {
            buf.clear();
            labels.clear();
            targets.clear();
            for &r in chunk {
                buf.extend_from_slice(set.row(r));
                labels.extend_from_slice(set.row_labels(r));
            }
            targets.extend(labels.iter().map(|&l| train.levels[l]));
            let mut tape = Tape::new();
            let (y, leaves) = model.forward(&mut tape, &buf, chunk.len())?;
            let loss = match cfg.output {
                OutputMode::Classes => tape.softmax_ce(y, cfg.n_classes, &labels)?,
                OutputMode::Regression => tape.mse(y, &targets)?,
            };
            let lv = tape.value(loss)?.data()[0];
            if !lv.is_finite() {
                report.loss_trace.push(lv);
                return Err(Error::training_at(
                    format!("non-finite loss in epoch {epoch}"),
                    report.loss_trace,
                    model.to_checkpoint().to_text(),
                ));
            }
            epoch_loss += lv * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let mut g = Vec::with_capacity(flat.len());
            for v in &leaves {
                g.extend_from_slice(grads.wrt(*v)?.data());
            }
            adam.step(&mut flat, &g);
            model.set_flat_params(&flat)?;
        }
        report.loss_trace.push(epoch_loss / set.rows() as f64);
        let ber = val.ber(&model.decide(val.windows, val.levels)?);
        report.val_ber_trace.push(ber);
        report.epochs = epoch + 1;
        // Ties keep the later, longer-trained weights; only a strict gain
        // resets the patience counter.
        since_best = if ber < best.0 { 0 } else { since_best + 1 };
        if ber <= best.0 {
            best = (ber, flat.clone());
            report.best_epoch = epoch;
        }
        if since_best >= opts.patience {
            break;
        }
    }
    model.set_flat_params(&best.1)?;
    report.checksum = checksum(&best.1);
    Ok((model, report))
}

impl Checkpointable for CnnModel {
    fn to_checkpoint(&self) -> Checkpoint {
        let mode = match self.cfg.output {
            OutputMode::Classes => "classes",
            OutputMode::Regression => "regression",
        };
        Checkpoint {
            params: self.flat_params(),
            ..Checkpoint::new("cnn")
                .with("input_window", self.cfg.input_window)
                .with("symbols_per_window", self.cfg.symbols_per_window)
                .with("n_classes", self.cfg.n_classes)
                .with("output", mode)
                .with("layers", self.cfg.layers_text())
        }
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("cnn")?;
        let output = match ck.get("output")? {
            "classes" => OutputMode::Classes,
            "regression" => OutputMode::Regression,
            o => return Err(Error::Format(format!("unknown output mode `{o}`"))),
        };
        let cfg = CnnConfig {
            input_window: ck.get_usize("input_window")?,
            layers: parse_layers(ck.get("layers")?)?,
            symbols_per_window: ck.get_usize("symbols_per_window")?,
            n_classes: ck.get_usize("n_classes")?,
            output,
        };
        cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut m = CnnModel::init(&cfg, &RngStream::new(0, 0))?;
        m.set_flat_params(&ck.params)
            .map_err(|_| Error::Format("cnn parameter count mismatch".into()))?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(layers: &str, w: usize) -> CnnConfig {
        CnnConfig::parse(layers, w, 1, 2).unwrap()
    }

    #[test]
    fn layer_text_round_trip() {
        let c = cfg("conv(1,4,8,2) relu dense(52,2)", 32);
        assert_eq!(c.layers_text(), "conv(1,4,8,2) relu dense(52,2)");
        assert!("conv(1,2)".parse::<LayerSpec>().is_err());
        assert!("pool(2)".parse::<LayerSpec>().is_err());
    }

    #[test]
    fn mac_examples() {
        // Single dense 16 -> 2 classes would be 32; the one-output
        // regression head matches the 16-MAC example.
        let mut c = CnnConfig {
            input_window: 16,
            layers: vec![LayerSpec::Dense { inputs: 16, outputs: 1 }],
            symbols_per_window: 1,
            n_classes: 2,
            output: OutputMode::Regression,
        };
        assert_eq!(macs_per_symbol_cnn(&c).unwrap(), 16.0);
        c.layers = vec![LayerSpec::Conv1d {
            in_ch: 1,
            out_ch: 4,
            kernel: 8,
            stride: 2,
        }];
        c.input_window = 32;
        c.symbols_per_window = 52;
        assert_eq!(macs_per_window_cnn(&c).unwrap(), 416);
        assert_eq!(macs_per_symbol_cnn(&c).unwrap(), 8.0);
    }

    #[test]
    fn empty_network_costs_nothing() {
        let c = CnnConfig {
            input_window: 2,
            layers: vec![],
            symbols_per_window: 1,
            n_classes: 2,
            output: OutputMode::Classes,
        };
        assert_eq!(macs_per_window_cnn(&c).unwrap(), 0);
    }

    #[test]
    fn shape_chain_checked() {
        assert!(CnnConfig::parse("conv(1,4,8,2) relu dense(50,2)", 32, 1, 2).is_err());
        assert!(CnnConfig::parse("conv(2,4,8,2)", 32, 1, 2).is_err());
        assert!(CnnConfig::parse("dense(32,4) conv(1,1,1,1)", 32, 1, 2).is_err());
    }

    #[test]
    fn stacked_linear_convs_compose() {
        let mut r = RngStream::new(4, 0).rng();
        let x: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let k1: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let k2: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        // Cross-correlation composes as k[j] = sum_i k1[j - i] k2[i].
        let mut k = vec![0.0; 6];
        for (i, a) in k2.iter().enumerate() {
            for (j, b) in k1.iter().enumerate() {
                k[i + j] += a * b;
            }
        }
        let run = |kernels: &[&[f64]]| {
            let mut tp = Tape::new();
            let mut h = tp.leaf(Tensor::from_vec(&[1, 1, 20], x.clone()).unwrap());
            for kk in kernels {
                let w = tp.leaf(Tensor::from_vec(&[1, 1, kk.len()], kk.to_vec()).unwrap());
                let b = tp.leaf(Tensor::zeros(&[1]));
                h = tp.conv1d(h, w, b, 1).unwrap();
            }
            tp.value(h).unwrap().data().to_vec()
        };
        let two = run(&[&k1, &k2]);
        let one = run(&[&k]);
        assert_eq!(two.len(), one.len());
        for (a, b) in two.iter().zip(&one) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = cfg("conv(1,3,5,2) relu dense(18,2)", 16);
        let m = CnnModel::init(&c, &RngStream::new(1, 0)).unwrap();
        let back = CnnModel::from_checkpoint(&Checkpoint::from_text(&m.to_checkpoint().to_text()).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    fn toy_set(seed: u64, rows: usize) -> WindowSet {
        // Class is the sign of the sum of the middle two samples, with a
        // margin of 0.2 around the boundary.
        let mut r = RngStream::new(seed, 0).rng();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        while labels.len() < rows {
            let w: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
            if (w[3] + w[4]).abs() < 0.2 {
                continue;
            }
            labels.push(usize::from(w[3] + w[4] > 0.0));
            data.extend(w);
        }
        WindowSet {
            data,
            width: 8,
            group: 1,
            labels,
        }
    }

    #[test]
    fn separable_toy_data_is_learned() {
        let train = toy_set(1, 512);
        let val = toy_set(2, 256);
        let levels = [-1.0, 1.0];
        let bits = [0, 1];
        let c = cfg("conv(1,2,3,1) relu dense(12,2)", 8);
        let opts = TrainOptions {
            epochs: 50,
            batch: 32,
            patience: 50,
            seed: 3,
        };
        let (m, rep) = cnn_train(
            LabeledData { windows: &train, levels: &levels, bit_labels: &bits },
            LabeledData { windows: &val, levels: &levels, bit_labels: &bits },
            &c,
            AdamConfig::with_lr(1e-2),
            &opts,
        )
        .unwrap();
        let d = m.decide(&train, &levels).unwrap();
        let acc = d.iter().zip(&train.labels).filter(|(a, b)| a == b).count();
        assert_eq!(acc, train.rows());
        assert!(rep.epochs <= 50 && !rep.loss_trace.is_empty());
        assert_eq!(rep.macs_per_symbol, 3.0 * 6.0 * 2.0 + 24.0);

        let (_, again) = cnn_train(
            LabeledData { windows: &train, levels: &levels, bit_labels: &bits },
            LabeledData { windows: &val, levels: &levels, bit_labels: &bits },
            &c,
            AdamConfig::with_lr(1e-2),
            &opts,
        )
        .unwrap();
        assert_eq!(again.checksum, rep.checksum);
        assert_eq!(again.loss_trace, rep.loss_trace);
    }

    #[test]
    fn framing_mismatch_rejected() {
        let train = toy_set(1, 64);
        let levels = [-1.0, 1.0];
        let bits = [0, 1];
        let d = LabeledData { windows: &train, levels: &levels, bit_labels: &bits };
        let c = cfg("dense(16,2)", 16);
        assert!(cnn_train(d, d, &c, AdamConfig::default(), &TrainOptions::default()).is_err());
    }
}
