//! Complex-baseband signal containers and the DSP primitives shared by the
//! channel models and equalizers.
//!
//! All processing happens in normalized time: one symbol period is 1 and the
//! physical symbol rate is carried along as metadata only.

mod filter;
mod metrics;
mod noise;
mod rng;

pub use filter::{filter_full, fir_apply, fir_apply_real, rrc_taps, FirMode};
pub use metrics::{bit_error_rate, symbol_error_rate, theory_ber_2pam, Ambiguity, SerReport};
pub use noise::{awgn_add, awgn_add_real, NoisyBlock};
pub use rng::RngStream;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A block of complex baseband samples at `sps` samples per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    samples: Vec<Complex64>,
    sps: usize,
    symbol_rate: f64,
}

impl SignalBlock {
    pub fn new(samples: Vec<Complex64>, sps: usize, symbol_rate: f64) -> Result<Self> {
        if sps == 0 {
            return Err(Error::param("samples per symbol must be at least 1"));
        }
        if samples.len() % sps != 0 {
            return Err(Error::param(format!(
                "block length {} is not a multiple of sps {}",
                samples.len(),
                sps
            )));
        }
        if !(symbol_rate > 0.0 && symbol_rate.is_finite()) {
            return Err(Error::param("symbol rate must be positive and finite"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::Numerical("signal block contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sps,
            symbol_rate,
        })
    }

    /// Real-valued samples stored with zero imaginary part.
    pub fn from_real(samples: &[f64], sps: usize, symbol_rate: f64) -> Result<Self> {
        Self::new(
            samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sps,
            symbol_rate,
        )
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.re).collect()
    }

    pub fn sps(&self) -> usize {
        self.sps
    }

    pub fn symbol_rate(&self) -> f64 {
        self.symbol_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_symbols(&self) -> usize {
        self.samples.len() / self.sps
    }

    /// Mean power per complex sample.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Same metadata, new samples. The length must still be a multiple of sps.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, self.sps, self.symbol_rate)
    }

    /// Every `sps`-th sample starting at `phase`.
    pub fn symbol_rate_samples(&self, phase: usize) -> Vec<Complex64> {
        self.samples
            .iter()
            .skip(phase)
            .step_by(self.sps)
            .copied()
            .collect()
    }
}

/// Two aligned polarization lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolBlock {
    pub x: SignalBlock,
    pub y: SignalBlock,
}

impl DualPolBlock {
    pub fn new(x: SignalBlock, y: SignalBlock) -> Result<Self> {
        if x.len() != y.len() || x.sps() != y.sps() {
            return Err(Error::param(
                "polarization lanes must share length and samples per symbol",
            ));
        }
        Ok(Self { x, y })
    }

    pub fn from_lanes(
        x: Vec<Complex64>,
        y: Vec<Complex64>,
        sps: usize,
        symbol_rate: f64,
    ) -> Result<Self> {
        Self::new(
            SignalBlock::new(x, sps, symbol_rate)?,
            SignalBlock::new(y, sps, symbol_rate)?,
        )
    }

    pub fn sps(&self) -> usize {
        self.x.sps()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn num_symbols(&self) -> usize {
        self.x.num_symbols()
    }

    pub fn lanes(&self) -> [&[Complex64]; 2] {
        [self.x.samples(), self.y.samples()]
    }

    /// Sub-block covering symbols `[start, start + count)`.
    pub fn slice_symbols(&self, start: usize, count: usize) -> Result<Self> {
        let s = self.sps();
        let (a, b) = (start * s, (start + count) * s);
        if b > self.len() {
            return Err(Error::param("symbol slice out of range"));
        }
        Self::from_lanes(
            self.x.samples()[a..b].to_vec(),
            self.y.samples()[a..b].to_vec(),
            s,
            self.x.symbol_rate(),
        )
    }
}
