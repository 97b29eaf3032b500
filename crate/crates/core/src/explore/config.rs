//! Experiment configuration (TOML) and its content hash.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{rate_scaled_beta2l, CoherentChannelConfig, ImddChannelConfig};
use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Dual-polarization PCS-QAM with dispersion and polarization mixing,
    /// blind equalizers.
    CoherentPcs,
    /// Short-reach PAM with dispersion and a saturable nonlinearity,
    /// supervised equalizers.
    Imdd,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::CoherentPcs => "coherent_pcs",
            Scenario::Imdd => "imdd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Supervised training symbols, or the blind adaptation block.
    pub train_symbols: usize,
    /// Validation symbols for early stopping (IM/DD only).
    pub val_symbols: usize,
    /// Held-out evaluation symbols.
    pub eval_symbols: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_symbols: 100_000,
            val_symbols: 50_000,
            eval_symbols: 100_000,
        }
    }
}

/// Symbol-rate emulation by dispersion scaling: each rate in `gbd` runs the
/// channel with `beta2l * (rate / reference_gbd)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateScaling {
    pub reference_gbd: f64,
    pub gbd: Vec<f64>,
}

fn default_pam() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImddScenario {
    #[serde(default = "default_pam")]
    pub pam: usize,
    /// Channel fields except `snr_db`, which comes from the SNR grid.
    pub channel: toml::Table,
}

fn default_qam() -> usize {
    64
}

fn default_one() -> usize {
    1
}

fn default_rolloff() -> f64 {
    0.2
}

fn default_rate() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentScenario {
    #[serde(default = "default_qam")]
    pub qam: usize,
    /// Maxwell-Boltzmann shaping to this entropy; uniform when absent.
    #[serde(default)]
    pub entropy: Option<f64>,
    #[serde(default = "default_one")]
    pub sps: usize,
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    #[serde(default = "default_rate")]
    pub symbol_rate_gbd: f64,
    /// Channel fields except `snr_db`.
    pub channel: toml::Table,
}

/// One `[[models]]` entry: a registered family and its parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub family: String,
    #[serde(flatten)]
    pub params: toml::Table,
}

fn default_budget() -> f64 {
    2000.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_target() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub snr_db: Vec<f64>,
    /// MACs per symbol. Artifact default of 2000; the published budget line
    /// only approximates an FPGA limit and is not quantified.
    #[serde(default = "default_budget")]
    pub mac_budget: f64,
    /// Drop grid points above `mac_budget` before running.
    #[serde(default)]
    pub cap_to_budget: bool,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub rates: Option<RateScaling>,
    #[serde(default)]
    pub imdd: Option<ImddScenario>,
    #[serde(default)]
    pub coherent: Option<CoherentScenario>,
    #[serde(default)]
    pub models: Vec<ModelGrid>,
    /// SER that defines convergence in the startup comparison.
    #[serde(default = "default_target")]
    pub startup_target_ser: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Record wall-clock seconds. Off by default, since timings would make
    /// reruns differ byte for byte.
    #[serde(default)]
    pub wall_clock: bool,
}

/// One channel variant of the sweep: a label and its dispersion scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioVariant {
    pub label: String,
    pub beta2l_scale: f64,
}

fn with_snr<T: serde::de::DeserializeOwned>(table: &toml::Table, snr_db: f64, scale: f64) -> Result<T> {
    if table.contains_key("snr_db") {
        return Err(Error::Config("`snr_db` belongs to the top-level SNR grid, not the channel table".into()));
    }
    let mut t = table.clone();
    t.insert("snr_db".into(), toml::Value::Float(snr_db));
    if let Some(b) = t.get_mut("beta2l") {
        let v = b
            .as_float()
            .or_else(|| b.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config("`beta2l` must be a number".into()))?;
        *b = toml::Value::Float(v * scale);
    }
    toml::Value::Table(t)
        .try_into()
        .map_err(|e| Error::Config(format!("channel table: {e}")))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 prefix of the canonical TOML form, ignoring the output
    /// directory and the wall-clock flag.
    pub fn config_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.wall_clock = false;
        let digest = Sha256::digest(c.to_toml_string()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self, registry: &Registry) -> Result<()> {
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR grid contains NaN".into()));
        }
        if !(self.mac_budget >= 0.0) {
            return Err(Error::Config("mac_budget must be non-negative".into()));
        }
        if self.data.eval_symbols == 0 || self.data.train_symbols == 0 {
            return Err(Error::Config("train and eval symbol counts must be positive".into()));
        }
        if let Some(r) = &self.rates {
            if !(r.reference_gbd > 0.0) || r.gbd.iter().any(|g| !(*g > 0.0)) {
                return Err(Error::Config("symbol rates must be positive".into()));
            }
        }
        match self.scenario {
            Scenario::Imdd => {
                let s = self
                    .imdd
                    .as_ref()
                    .ok_or_else(|| Error::Config("scenario `imdd` needs an [imdd] table".into()))?;
                if s.pam < 2 {
                    return Err(Error::Config("pam order must be at least 2".into()));
                }
                if self.data.val_symbols == 0 {
                    return Err(Error::Config("IM/DD runs need validation symbols".into()));
                }
                self.imdd_channel(0.0, 1.0)?.validate()?;
                for m in &self.models {
                    registry.expand_imdd(&m.family, &m.params)?;
                }
            }
            Scenario::CoherentPcs => {
                self.coherent
                    .as_ref()
                    .ok_or_else(|| Error::Config("scenario `coherent_pcs` needs a [coherent] table".into()))?;
                self.coherent_channel(0.0, 1.0)?.validate()?;
                for m in &self.models {
                    registry.expand_blind(&m.family, &m.params)?;
                }
            }
        }
        Ok(())
    }

    /// Channel variants: one per emulated symbol rate, or the base channel.
    pub fn variants(&self) -> Vec<ScenarioVariant> {
        let base = self.scenario.name();
        match &self.rates {
            None => vec![ScenarioVariant {
                label: base.to_string(),
                beta2l_scale: 1.0,
            }],
            Some(r) => r
                .gbd
                .iter()
                .map(|&g| ScenarioVariant {
                    label: format!("{base}@{g}gbd"),
                    beta2l_scale: rate_scaled_beta2l(1.0, r.reference_gbd, g),
                })
                .collect(),
        }
    }

    pub fn imdd_channel(&self, snr_db: f64, beta2l_scale: f64) -> Result<ImddChannelConfig> {
        let s = self
            .imdd
            .as_ref()
            .ok_or_else(|| Error::Config("missing [imdd] table".into()))?;
        with_snr(&s.channel, snr_db, beta2l_scale)
    }

    pub fn coherent_channel(&self, snr_db: f64, beta2l_scale: f64) -> Result<CoherentChannelConfig> {
        let s = self
            .coherent
            .as_ref()
            .ok_or_else(|| Error::Config("missing [coherent] table".into()))?;
        with_snr(&s.channel, snr_db, beta2l_scale)
    }
}
