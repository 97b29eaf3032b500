//! Supervised IM/DD data: per-symbol sample windows and class labels.

use crate::channel::{imdd_channel_apply, ImddChannelConfig};
use crate::constellation::{sample_symbols, Constellation};
use crate::error::{Error, Result};
use crate::signal::RngStream;

/// Received samples of one IM/DD run with the transmitted class indices.
#[derive(Debug, Clone)]
pub struct ImddStream {
    /// Received samples at `sps`, symbol `k` centered on sample `k * sps`.
    pub samples: Vec<f64>,
    pub sps: usize,
    pub labels: Vec<usize>,
    /// Transmitted level and Gray bit label of each class.
    pub levels: Vec<f64>,
    pub bit_labels: Vec<u32>,
}

impl ImddStream {
    /// Simulates `n_symbols` through the IM/DD channel.
    pub fn simulate(
        c: &Constellation,
        cfg: &ImddChannelConfig,
        n_symbols: usize,
        rng: &RngStream,
    ) -> Result<Self> {
        if !c.is_real() {
            return Err(Error::param("IM/DD needs a real (PAM) constellation"));
        }
        let (labels, sym) = sample_symbols(c, n_symbols, &rng.substream(1));
        let levels: Vec<f64> = sym.iter().map(|s| s.re).collect();
        let out = imdd_channel_apply(&levels, cfg, &rng.substream(2))?;
        Ok(Self {
            samples: out.rx.real_parts(),
            sps: cfg.sps,
            labels,
            levels: c.points().iter().map(|p| p.re).collect(),
            bit_labels: c.labels().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Window of `width` samples centered on symbol `k`, zero outside.
    pub fn window_into(&self, k: usize, width: usize, out: &mut [f64]) {
        self.group_window_into(k, 1, width, out);
    }

    /// Window of `width` samples centered on the middle of symbols
    /// `k..k + group`, zero outside.
    pub fn group_window_into(&self, k: usize, group: usize, width: usize, out: &mut [f64]) {
        // Twice the center sample index keeps half-sample centers exact.
        let center2 = (2 * k + group - 1) * self.sps;
        let start = (center2 as isize - (width as isize - 1)).div_euclid(2);
        for (j, o) in out.iter_mut().enumerate().take(width) {
            let i = start + j as isize;
            *o = if i >= 0 && (i as usize) < self.samples.len() {
                self.samples[i as usize]
            } else {
                0.0
            };
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.levels.len().max(2).next_power_of_two().trailing_zeros() as usize
    }

    /// Bit errors between class decisions and the transmitted labels,
    /// divided by the number of compared bits.
    pub fn ber(&self, decisions: &[usize], reference: &[usize]) -> f64 {
        let n = decisions.len().min(reference.len());
        if n == 0 {
            return 0.0;
        }
        let errors: u32 = decisions
            .iter()
            .zip(reference)
            .map(|(&d, &r)| (self.bit_labels[d] ^ self.bit_labels[r]).count_ones())
            .sum();
        errors as f64 / (n * self.bits_per_symbol()) as f64
    }

    /// Hard decisions straight from the center samples (no equalizer),
    /// thresholds halfway between the class means.
    pub fn unequalized_decisions(&self, n_classes: usize) -> Vec<usize> {
        let center: Vec<f64> = (0..self.len()).map(|k| self.samples[k * self.sps]).collect();
        let mut sum = vec![0.0; n_classes];
        let mut cnt = vec![0usize; n_classes];
        for (v, &l) in center.iter().zip(&self.labels) {
            sum[l] += v;
            cnt[l] += 1;
        }
        let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &c)| s / c.max(1) as f64).collect();
        center
            .iter()
            .map(|v| {
                (0..n_classes)
                    .min_by(|&a, &b| (v - means[a]).abs().total_cmp(&(v - means[b]).abs()))
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// Row-major window matrix. Row `r` covers symbols
/// `r * group..(r + 1) * group`, whose labels are stored consecutively.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub data: Vec<f64>,
    pub width: usize,
    pub group: usize,
    pub labels: Vec<usize>,
}

impl WindowSet {
    pub fn from_stream(s: &ImddStream, width: usize) -> Self {
        Self::grouped(s, width, 1)
    }

    /// Windows of `width` samples, each centered on a group of `group`
    /// consecutive symbols. A trailing partial group is dropped.
    pub fn grouped(s: &ImddStream, width: usize, group: usize) -> Self {
        let group = group.max(1);
        let rows = s.len() / group;
        let mut data = vec![0.0; rows * width];
        for r in 0..rows {
            s.group_window_into(r * group, group, width, &mut data[r * width..(r + 1) * width]);
        }
        Self {
            data,
            width,
            group,
            labels: s.labels[..rows * group].to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.labels.len() / self.group
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_labels(&self, i: usize) -> &[usize] {
        &self.labels[i * self.group..(i + 1) * self.group]
    }

    /// Keeps the first `rows` rows.
    pub fn head(mut self, rows: usize) -> Self {
        let rows = rows.min(self.rows());
        self.data.truncate(rows * self.width);
        self.labels.truncate(rows * self.group);
        self
    }

    /// Applies `(x - mean) / std` in place.
    pub fn standardize(&mut self, norm: &Standardizer) {
        for v in &mut self.data {
            *v = (*v - norm.mean) / norm.std;
        }
    }
}

/// Scalar standardization fitted on raw received samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(samples: &[f64]) -> Self {
        let n = samples.len().max(1) as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt().max(1e-12),
        }
    }
}
