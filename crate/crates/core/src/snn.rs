//! Feed-forward spiking equalizer: discrete-time LIF layers, input
//! encoders, surrogate-gradient training and SynOps accounting.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Checkpointable};
use crate::error::{Error, Result};
use crate::nn::{checksum, LabeledData, TrainOptions, TrainReport};
use crate::optim::{Adam, AdamConfig};
use crate::signal::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reset {
    /// `v -= v_th` after a spike.
    Subtract,
    /// The leaked membrane is cleared after a spike.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    /// Membrane decay constant in timesteps.
    pub tau_mem: f64,
    /// Synaptic current decay constant in timesteps.
    pub tau_syn: f64,
    pub v_th: f64,
    pub reset: Reset,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_mem: 5.0,
            tau_syn: 2.0,
            v_th: 1.0,
            reset: Reset::Subtract,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_mem > 0.0 && self.tau_syn > 0.0 && self.v_th > 0.0) {
            return Err(Error::param("LIF time constants and threshold must be positive"));
        }
        Ok(())
    }

    pub fn alpha_mem(&self) -> f64 {
        (-1.0 / self.tau_mem).exp()
    }

    pub fn alpha_syn(&self) -> f64 {
        (-1.0 / self.tau_syn).exp()
    }
}

/// How an input window becomes per-timestep input activity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoder {
    /// Samples drive the first layer as constant currents.
    #[default]
    Current,
    /// Each sample emits a `+1` / `-1` event every timestep when it lies
    /// above `+threshold` / below `-threshold`, nothing otherwise.
    Ternary { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnConfig {
    /// Input features, hidden sizes..., output classes.
    pub sizes: Vec<usize>,
    pub timesteps: usize,
    pub encoder: Encoder,
    /// Fast-sigmoid surrogate slope.
    pub surrogate_beta: f64,
    pub lif: LifParams,
}

impl SnnConfig {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self {
            sizes,
            timesteps: 10,
            encoder: Encoder::Current,
            surrogate_beta: 10.0,
            lif: LifParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::param("SNN needs at least input and output layers of non-zero size"));
        }
        if self.timesteps == 0 {
            return Err(Error::param("SNN needs at least one timestep"));
        }
        if !(self.surrogate_beta > 0.0) {
            return Err(Error::param("surrogate slope must be positive"));
        }
        Ok(())
    }

    /// Dense MACs of one timestep: `sum in * out` over layers.
    pub fn dense_macs(&self) -> u64 {
        self.sizes.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }
}

/// Pseudo-derivative of the spike nonlinearity,
/// `1 / (1 + beta * |v - v_th|)^2`.
pub fn surrogate_grad(v: f64, v_th: f64, beta: f64) -> f64 {
    let d = 1.0 + beta * (v - v_th).abs();
    1.0 / (d * d)
}

/// Spike nonlinearity used in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    /// Exact threshold crossing, `H(v - v_th)`.
    Heaviside,
    /// `(v - v_th) / (1 + beta |v - v_th|)`, whose derivative equals the
    /// surrogate; used to validate gradients by finite differences.
    Smooth,
}

impl SpikeFn {
    fn eval(self, v: f64, v_th: f64, beta: f64) -> f64 {
        match self {
            SpikeFn::Heaviside => {
                if v >= v_th {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::Smooth => {
                let x = v - v_th;
                x / (1.0 + beta * x.abs())
            }
        }
    }
}

/// Per-timestep state of one layer, row-major `[T x neurons]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LifTrace {
    pub neurons: usize,
    pub currents: Vec<f64>,
    pub membrane: Vec<f64>,
    /// Empty for the non-spiking readout layer.
    pub spikes: Vec<f64>,
}

impl LifTrace {
    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s != 0.0).count()
    }
}

/// Runs one LIF layer over `[T x features]` input currents:
/// `i_t = a_syn i_{t-1} + W x_t`, `v_t = a_mem v_{t-1} + i_t - reset`,
/// spike when `v_t >= v_th`. `weights` is row-major `[neurons x features]`.
pub fn lif_forward(input: &[f64], features: usize, weights: &[f64], params: &LifParams) -> Result<LifTrace> {
    params.validate()?;
    if features == 0 || input.len() % features != 0 || weights.len() % features != 0 {
        return Err(Error::param("LIF input and weight shapes do not chain"));
    }
    let neurons = weights.len() / features;
    let bias = vec![0.0; neurons];
    Ok(layer_forward(input, features, weights, &bias, params, Some((SpikeFn::Heaviside, 1.0))))
}

/// Layer recurrence; `spiking = None` gives the non-spiking readout.
fn layer_forward(
    input: &[f64],
    features: usize,
    w: &[f64],
    b: &[f64],
    p: &LifParams,
    spiking: Option<(SpikeFn, f64)>,
) -> LifTrace {
    let n = b.len();
    let steps = input.len() / features;
    let (am, asyn) = (p.alpha_mem(), p.alpha_syn());
    let mut tr = LifTrace {
        neurons: n,
        currents: vec![0.0; steps * n],
        membrane: vec![0.0; steps * n],
        spikes: if spiking.is_some() { vec![0.0; steps * n] } else { Vec::new() },
    };
    for t in 0..steps {
        let x = &input[t * features..(t + 1) * features];
        for j in 0..n {
            let wr = &w[j * features..(j + 1) * features];
            let drive: f64 = b[j]
                + x.iter()
                    .zip(wr)
                    .filter(|(xv, _)| **xv != 0.0)
                    .map(|(xv, wv)| xv * wv)
                    .sum::<f64>();
            let (i_prev, v_prev, s_prev) = if t == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let k = (t - 1) * n + j;
                (
                    tr.currents[k],
                    tr.membrane[k],
                    if spiking.is_some() { tr.spikes[k] } else { 0.0 },
                )
            };
            let i = asyn * i_prev + drive;
            let v = match p.reset {
                Reset::Subtract => am * v_prev + i - p.v_th * s_prev,
                Reset::Zero => am * v_prev * (1.0 - s_prev) + i,
            };
            tr.currents[t * n + j] = i;
            tr.membrane[t * n + j] = v;
            if let Some((f, beta)) = spiking {
                tr.spikes[t * n + j] = f.eval(v, p.v_th, beta);
            }
        }
    }
    tr
}

/// Backpropagation through time for one layer. `g_spikes` and `g_membrane`
/// are external gradients `[T x neurons]` (either may be empty). Adds the
/// weight and bias gradients and returns the input gradient `[T x features]`.
#[allow(clippy::too_many_arguments)]
fn layer_backward(
    tr: &LifTrace,
    input: &[f64],
    features: usize,
    w: &[f64],
    p: &LifParams,
    beta: f64,
    g_spikes: &[f64],
    g_membrane: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let n = tr.neurons;
    let steps = input.len() / features;
    let spiking = !tr.spikes.is_empty();
    let (am, asyn) = (p.alpha_mem(), p.alpha_syn());
    let mut gx = vec![0.0; steps * features];
    let mut gv_next = vec![0.0; n];
    let mut gi_next = vec![0.0; n];
    let mut gi = vec![0.0; n];
    for t in (0..steps).rev() {
        for j in 0..n {
            let k = t * n + j;
            let (s, v) = (if spiking { tr.spikes[k] } else { 0.0 }, tr.membrane[k]);
            let mut gv = g_membrane.get(k).copied().unwrap_or(0.0);
            if spiking {
                // Paths from v_{t+1} through the leak and the reset of s_t.
                let (leak, via_reset) = match p.reset {
                    Reset::Subtract => (am, -p.v_th),
                    Reset::Zero => (am * (1.0 - s), -am * v),
                };
                let gs = g_spikes.get(k).copied().unwrap_or(0.0) + via_reset * gv_next[j];
                gv += leak * gv_next[j] + gs * surrogate_grad(v, p.v_th, beta);
            } else {
                gv += am * gv_next[j];
            }
            gi[j] = gv + asyn * gi_next[j];
            gv_next[j] = gv;
        }
        let x = &input[t * features..(t + 1) * features];
        let gxt = &mut gx[t * features..(t + 1) * features];
        for j in 0..n {
            let g = gi[j];
            if g == 0.0 {
                continue;
            }
            gb[j] += g;
            let wr = &w[j * features..(j + 1) * features];
            let gwr = &mut gw[j * features..(j + 1) * features];
            for f in 0..features {
                gwr[f] += g * x[f];
                gxt[f] += g * wr[f];
            }
        }
        gi_next.copy_from_slice(&gi);
    }
    gx
}

/// Weights `[out x in]` and biases per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    pub cfg: SnnConfig,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Traces of every layer for one input window.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnRun {
    /// Encoded input activity `[T x input]`.
    pub input: Vec<f64>,
    pub layers: Vec<LifTrace>,
    /// Max over time of each readout membrane.
    pub logits: Vec<f64>,
    pub argmax_t: Vec<usize>,
}

impl SnnModel {
    /// Uniform `+-sqrt(3 / fan_in) * gain` weights, zero biases. The gain
    /// makes the first hidden layer cross threshold at unit-variance input.
    pub fn init(cfg: &SnnConfig, rng: &RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng.rng();
        let gain = 2.0 * cfg.lif.v_th;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in cfg.sizes.windows(2) {
            let bound = gain * (3.0 / w[0] as f64).sqrt();
            weights.push((0..w[0] * w[1]).map(|_| r.random_range(-bound..bound)).collect());
            biases.push(vec![0.0; w[1]]);
        }
        Ok(Self {
            cfg: cfg.clone(),
            weights,
            biases,
        })
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::param("parameter vector length mismatch"));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.len();
            w.copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = b.len();
            b.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Input activity for one window, `[T x input]`.
    pub fn encode(&self, window: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = match self.cfg.encoder {
            Encoder::Current => window.to_vec(),
            Encoder::Ternary { threshold } => window
                .iter()
                .map(|&v| {
                    if v > threshold {
                        1.0
                    } else if v < -threshold {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        };
        x.repeat(self.cfg.timesteps)
    }

    /// Forward pass of one window with the given spike nonlinearity.
    pub fn run(&self, window: &[f64], spike: SpikeFn) -> Result<SnnRun> {
        if window.len() != self.cfg.input_width() {
            return Err(Error::param("window width does not match the input layer"));
        }
        let input = self.encode(window);
        let depth = self.weights.len();
        let mut layers: Vec<LifTrace> = Vec::with_capacity(depth);
        for l in 0..depth {
            let (src, feats) = if l == 0 {
                (&input, self.cfg.sizes[0])
            } else {
                (&layers[l - 1].spikes, self.cfg.sizes[l])
            };
            let spiking = (l + 1 < depth).then_some((spike, self.cfg.surrogate_beta));
            let tr = layer_forward(src, feats, &self.weights[l], &self.biases[l], &self.cfg.lif, spiking);
            layers.push(tr);
        }
        let out = &layers[depth - 1];
        let c = out.neurons;
        let mut logits = vec![f64::NEG_INFINITY; c];
        let mut argmax_t = vec![0; c];
        for t in 0..self.cfg.timesteps {
            for j in 0..c {
                let v = out.membrane[t * c + j];
                if v > logits[j] {
                    logits[j] = v;
                    argmax_t[j] = t;
                }
            }
        }
        Ok(SnnRun {
            input,
            layers,
            logits,
            argmax_t,
        })
    }

    pub fn decide(&self, window: &[f64]) -> Result<usize> {
        let run = self.run(window, SpikeFn::Heaviside)?;
        Ok(argmax(&run.logits))
    }

    /// Cross-entropy of one window and its gradient (flat parameter order).
    pub fn loss_and_grad(&self, window: &[f64], label: usize, spike: SpikeFn) -> Result<(f64, Vec<f64>, SnnRun)> {
        let run = self.run(window, spike)?;
        let c = run.logits.len();
        if label >= c {
            return Err(Error::param("label out of range"));
        }
        let m = run.logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let s: f64 = run.logits.iter().map(|v| (v - m).exp()).sum();
        let loss = m + s.ln() - run.logits[label];
        let depth = self.weights.len();
        let steps = self.cfg.timesteps;
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut g_mem = vec![0.0; steps * c];
        for j in 0..c {
            let p = (run.logits[j] - m).exp() / s;
            g_mem[run.argmax_t[j] * c + j] = p - if j == label { 1.0 } else { 0.0 };
        }
        let mut g_spikes: Vec<f64> = Vec::new();
        for l in (0..depth).rev() {
            let (src, feats) = if l == 0 {
                (&run.input, self.cfg.sizes[0])
            } else {
                (&run.layers[l - 1].spikes, self.cfg.sizes[l])
            };
            let gm: &[f64] = if l + 1 == depth { &g_mem } else { &[] };
            let gx = layer_backward(
                &run.layers[l],
                src,
                feats,
                &self.weights[l],
                &self.cfg.lif,
                self.cfg.surrogate_beta,
                &g_spikes,
                gm,
                &mut gw[l],
                &mut gb[l],
            );
            g_spikes = gx;
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (w, b) in gw.iter().zip(&gb) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        Ok((loss, flat, run))
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

/// Synaptic operations of one run: every non-zero presynaptic event
/// (input activity or hidden spike) costs its fan-out.
pub fn synops_count(model: &SnnModel, run: &SnnRun) -> u64 {
    let mut ops = 0u64;
    for l in 0..model.weights.len() {
        let pre = if l == 0 { &run.input } else { &run.layers[l - 1].spikes };
        let fan_out = model.cfg.sizes[l + 1] as u64;
        ops += pre.iter().filter(|&&v| v != 0.0).count() as u64 * fan_out;
    }
    ops
}

/// Mean SynOps per decided symbol over the rows of `data`.
pub fn synops_per_symbol(model: &SnnModel, data: &LabeledData<'_>, max_rows: usize) -> Result<f64> {
    let rows = data.windows.rows().min(max_rows);
    if rows == 0 {
        return Ok(0.0);
    }
    let mut total = 0u64;
    for r in 0..rows {
        total += synops_count(model, &model.run(data.windows.row(r), SpikeFn::Heaviside)?);
    }
    Ok(total as f64 / rows as f64)
}

/// Writes `layer,t,neuron` for every hidden spike of `run`.
pub fn write_raster_csv(run: &SnnRun, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "layer,t,neuron")?;
    for (l, tr) in run.layers.iter().enumerate() {
        for (k, &s) in tr.spikes.iter().enumerate() {
            if s != 0.0 {
                writeln!(f, "{l},{},{}", k / tr.neurons, k % tr.neurons)?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

/// Minibatch Adam with backpropagation through time and surrogate
/// gradients; early stopping on validation BER as for the CNN.
pub fn snn_train(
    train: LabeledData<'_>,
    val: LabeledData<'_>,
    cfg: &SnnConfig,
    opt: AdamConfig,
    opts: &TrainOptions,
) -> Result<(SnnModel, TrainReport)> {
    cfg.validate()?;
    let set = train.windows;
    if set.width != cfg.input_width() || set.group != 1 || set.rows() == 0 {
        return Err(Error::param("training windows do not match the SNN input layer"));
    }
    if cfg.n_classes() != train.levels.len() {
        return Err(Error::param("SNN output size must equal the class count"));
    }
    if opts.epochs == 0 || opts.batch == 0 {
        return Err(Error::param("epochs and batch must be positive"));
    }
    let seed = RngStream::new(opts.seed, 0);
    let mut model = SnnModel::init(cfg, &seed.substream(1))?;
    let mut adam = Adam::new(opt, model.n_params());
    let mut flat = model.flat_params();
    let mut order: Vec<usize> = (0..set.rows()).collect();
    let mut report = TrainReport::new(cfg.dense_macs() as f64);
    let mut best = (f64::INFINITY, flat.clone());
    let mut since_best = 0;
    let mut g = vec![0.0; flat.len()];
    for epoch in 0..opts.epochs {
        order.shuffle(&mut seed.substream(100 + epoch as u64).rng());
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch) {
            g.iter_mut().for_each(|v| *v = 0.0);
            for &r in chunk {
                let (l, gr, _) = model.loss_and_grad(set.row(r), set.labels[r], SpikeFn::Heaviside)?;
                if !l.is_finite() {
                    report.loss_trace.push(l);
                    return Err(Error::training_at(
                        format!("non-finite loss in epoch {epoch}"),
                        report.loss_trace,
                        model.to_checkpoint().to_text(),
                    ));
                }
                epoch_loss += l;
                for (a, b) in g.iter_mut().zip(&gr) {
                    *a += b / chunk.len() as f64;
                }
            }
            adam.step(&mut flat, &g);
            model.set_flat_params(&flat)?;
        }
        report.loss_trace.push(epoch_loss / set.rows() as f64);
        let ber = val.ber(&snn_decide_all(&model, val.windows)?);
        report.val_ber_trace.push(ber);
        report.epochs = epoch + 1;
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

/// Decisions for every row of a window set.
pub fn snn_decide_all(model: &SnnModel, set: &crate::dataset::WindowSet) -> Result<Vec<usize>> {
    (0..set.rows()).map(|r| model.decide(set.row(r))).collect()
}

/// Finite-difference check of the full-network gradient on the smooth
/// forward variant for a random network and window. Returns the largest
/// relative error `|a - fd| / max(|a|, |fd|, 1e-3 * max|a|)`.
pub fn snn_gradient_check(seed: u64) -> Result<f64> {
    let mut r = RngStream::new(seed, 91).rng();
    let input = r.random_range(2..6usize);
    let hidden = r.random_range(2..6usize);
    let depth = r.random_range(1..3usize);
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(hidden, depth));
    sizes.push(r.random_range(2..4usize));
    let mut cfg = SnnConfig::new(sizes);
    cfg.timesteps = r.random_range(2..7usize);
    cfg.surrogate_beta = r.random_range(0.5..5.0);
    cfg.lif = LifParams {
        tau_mem: r.random_range(1.5..8.0),
        tau_syn: r.random_range(1.0..4.0),
        v_th: r.random_range(0.5..1.5),
        reset: if r.random_bool(0.5) { Reset::Subtract } else { Reset::Zero },
    };
    let mut model = SnnModel::init(&cfg, &RngStream::new(seed, 92))?;
    // Moderate weights keep the readout softmax away from saturation; the
    // readout integrates with gain 1 / ((1 - a_mem)(1 - a_syn)).
    let gain = (1.0 - cfg.lif.alpha_mem()) * (1.0 - cfg.lif.alpha_syn());
    for w in model.weights.iter_mut().chain(&mut model.biases) {
        w.iter_mut().for_each(|v| *v = r.random_range(-0.8..0.8));
    }
    let last = model.weights.len() - 1;
    model.weights[last].iter_mut().for_each(|v| *v *= gain);
    model.biases[last].iter_mut().for_each(|v| *v *= gain);
    let flat = model.flat_params();
    let window: Vec<f64> = (0..input).map(|_| r.random_range(-1.5..1.5)).collect();
    let label = r.random_range(0..cfg.n_classes());
    let (_, analytic, run0) = model.loss_and_grad(&window, label, SpikeFn::Smooth)?;
    let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let mut p = flat.clone();
        p[i] += h;
        model.set_flat_params(&p)?;
        let (lp, _, rp) = model.loss_and_grad(&window, label, SpikeFn::Smooth)?;
        p[i] -= 2.0 * h;
        model.set_flat_params(&p)?;
        let (lm, _, rm) = model.loss_and_grad(&window, label, SpikeFn::Smooth)?;
        // The max-over-time readout has kinks where the argmax moves.
        if rp.argmax_t != run0.argmax_t || rm.argmax_t != run0.argmax_t {
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let e = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3 * scale).max(1e-300);
        worst = worst.max(e);
    }
    Ok(worst)
}

impl Checkpointable for SnnModel {
    fn to_checkpoint(&self) -> Checkpoint {
        let sizes: Vec<String> = self.cfg.sizes.iter().map(ToString::to_string).collect();
        let encoder = match self.cfg.encoder {
            Encoder::Current => "current".to_string(),
            Encoder::Ternary { threshold } => format!("ternary:{threshold:?}"),
        };
        let reset = match self.cfg.lif.reset {
            Reset::Subtract => "subtract",
            Reset::Zero => "zero",
        };
        Checkpoint {
            params: self.flat_params(),
            ..Checkpoint::new("snn")
                .with("sizes", sizes.join(","))
                .with("timesteps", self.cfg.timesteps)
                .with("encoder", encoder)
                .with("surrogate_beta", format!("{:?}", self.cfg.surrogate_beta))
                .with("tau_mem", format!("{:?}", self.cfg.lif.tau_mem))
                .with("tau_syn", format!("{:?}", self.cfg.lif.tau_syn))
                .with("v_th", format!("{:?}", self.cfg.lif.v_th))
                .with("reset", reset)
        }
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("snn")?;
        let bad = |k: &str| Error::Format(format!("bad `{k}` in snn checkpoint"));
        let sizes = ck
            .get("sizes")?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad("sizes")))
            .collect::<Result<Vec<usize>>>()?;
        let encoder = match ck.get("encoder")? {
            "current" => Encoder::Current,
            e => Encoder::Ternary {
                threshold: e
                    .strip_prefix("ternary:")
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("encoder"))?,
            },
        };
        let reset = match ck.get("reset")? {
            "subtract" => Reset::Subtract,
            "zero" => Reset::Zero,
            _ => return Err(bad("reset")),
        };
        let cfg = SnnConfig {
            sizes,
            timesteps: ck.get_usize("timesteps")?,
            encoder,
            surrogate_beta: ck.get_f64("surrogate_beta")?,
            lif: LifParams {
                tau_mem: ck.get_f64("tau_mem")?,
                tau_syn: ck.get_f64("tau_syn")?,
                v_th: ck.get_f64("v_th")?,
                reset,
            },
        };
        cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut m = SnnModel::init(&cfg, &RngStream::new(0, 0))?;
        m.set_flat_params(&ck.params)
            .map_err(|_| Error::Format("snn parameter count mismatch".into()))?;
        Ok(m)
    }
}
