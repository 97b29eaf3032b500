//! Equalizer families behind two common traits, registered by name.
//!
//! Supervised IM/DD equalizers implement [`ImddEqualizer`]; blind coherent
//! equalizers implement [`BlindEqualizer`]. A [`Registry`] maps a family
//! name to a factory that expands that family's parameter table (one
//! `[[models]]` entry of an experiment config) into concrete instances.

mod coherent;
mod imdd;

use std::collections::BTreeMap;
use std::ops::Range;

use num_complex::Complex64;
use serde::de::DeserializeOwned;

pub use coherent::{coherent_error_rates, CmaFamily, CmaGrid, VaeFamily, VaeGrid};
pub use imdd::{
    CnnFamily, CnnGrid, CnnVariant, FfeFamily, FfeGrid, NeuralTraining, SnnFamily, SnnGrid, SnnVariant,
    VolterraFamily, VolterraGrid,
};

use crate::classic::ButterflyFir;
use crate::constellation::Constellation;
use crate::dataset::{ImddStream, Standardizer};
use crate::error::{Error, Result};
use crate::signal::DualPolBlock;

/// Training, validation and held-out test streams of one IM/DD cell. All
/// windows are standardized with `norm`, fitted on the training samples.
#[derive(Debug, Clone, Copy)]
pub struct ImddData<'a> {
    pub train: &'a ImddStream,
    pub val: &'a ImddStream,
    pub test: &'a ImddStream,
    pub norm: Standardizer,
}

/// One row of a convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    /// Validation BER for supervised models, decision SER for blind ones.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImddOutcome {
    /// Decisions for the first `decisions.len()` test symbols.
    pub decisions: Vec<usize>,
    /// Parameter updates performed (one per closed-form solve).
    pub train_steps: u64,
    pub trace: Vec<TraceRow>,
    /// Extra named measurements, e.g. SynOps.
    pub metrics: Vec<(String, f64)>,
}

/// A supervised equalizer for real-valued IM/DD samples.
pub trait ImddEqualizer: Send + Sync {
    /// Family label used to group points in plots.
    fn family(&self) -> &'static str;
    /// Unique, filename-safe identifier starting with the family name.
    fn id(&self) -> String;
    /// Shape-pure inference cost.
    fn macs_per_symbol(&self) -> Result<f64>;
    /// Trains on `data.train` (validating on `data.val`) and decides the
    /// symbols of `data.test`.
    fn fit_eval(&self, data: &ImddData<'_>, seed: u64) -> Result<ImddOutcome>;
}

/// Received dual-polarization block of one coherent cell.
#[derive(Debug, Clone, Copy)]
pub struct CoherentData<'a> {
    /// Symbols available for blind adaptation.
    pub train: &'a DualPolBlock,
    pub constellation: &'a Constellation,
    /// Composite channel response, center aligned at the received rate.
    pub impulse: &'a [[Vec<Complex64>; 2]; 2],
    pub cd_memory_symbols: f64,
}

#[derive(Debug, Clone)]
pub struct BlindOutcome {
    pub taps: ButterflyFir,
    /// `(symbols consumed, taps)` during adaptation.
    pub snapshots: Vec<(usize, ButterflyFir)>,
    pub train_steps: u64,
    pub trace: Vec<TraceRow>,
    pub metrics: Vec<(String, f64)>,
}

/// A blind 2x2 equalizer for coherent dual-polarization signals.
pub trait BlindEqualizer: Send + Sync {
    fn family(&self) -> &'static str;
    fn id(&self) -> String;
    fn macs_per_symbol(&self) -> Result<f64>;
    fn adapt(&self, data: &CoherentData<'_>, seed: u64) -> Result<BlindOutcome>;
}

pub type ImddFactory = fn(&toml::Table) -> Result<Vec<Box<dyn ImddEqualizer>>>;
pub type BlindFactory = fn(&toml::Table) -> Result<Vec<Box<dyn BlindEqualizer>>>;

/// Name-keyed factories for both equalizer kinds.
#[derive(Clone)]
pub struct Registry {
    imdd: BTreeMap<String, ImddFactory>,
    blind: BTreeMap<String, BlindFactory>,
}

impl Default for Registry {
    /// Built-ins: `ffe`, `volterra`, `cnn`, `snn` (IM/DD) and `cma`, `vae`
    /// (coherent).
    fn default() -> Self {
        let mut r = Self::empty();
        r.register_imdd("ffe", imdd::ffe_factory);
        r.register_imdd("volterra", imdd::volterra_factory);
        r.register_imdd("cnn", imdd::cnn_factory);
        r.register_imdd("snn", imdd::snn_factory);
        r.register_blind("cma", coherent::cma_factory);
        r.register_blind("vae", coherent::vae_factory);
        r
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            imdd: BTreeMap::new(),
            blind: BTreeMap::new(),
        }
    }

    pub fn register_imdd(&mut self, name: &str, f: ImddFactory) {
        self.imdd.insert(name.to_string(), f);
    }

    pub fn register_blind(&mut self, name: &str, f: BlindFactory) {
        self.blind.insert(name.to_string(), f);
    }

    pub fn imdd_families(&self) -> impl Iterator<Item = &str> {
        self.imdd.keys().map(String::as_str)
    }

    pub fn blind_families(&self) -> impl Iterator<Item = &str> {
        self.blind.keys().map(String::as_str)
    }

    pub fn expand_imdd(&self, family: &str, params: &toml::Table) -> Result<Vec<Box<dyn ImddEqualizer>>> {
        let f = self
            .imdd
            .get(family)
            .ok_or_else(|| Error::Config(format!("unknown IM/DD equalizer family `{family}`")))?;
        f(params)
    }

    pub fn expand_blind(&self, family: &str, params: &toml::Table) -> Result<Vec<Box<dyn BlindEqualizer>>> {
        let f = self
            .blind
            .get(family)
            .ok_or_else(|| Error::Config(format!("unknown blind equalizer family `{family}`")))?;
        f(params)
    }
}

/// Deserializes a family's parameter table.
pub fn parse_params<T: DeserializeOwned>(family: &str, params: &toml::Table) -> Result<T> {
    toml::Value::Table(params.clone())
        .try_into()
        .map_err(|e| Error::Config(format!("`{family}` parameters: {e}")))
}

/// Evaluation range: the last `n` symbols of a block of `total`.
pub fn tail_range(total: usize, n: usize) -> Range<usize> {
    total.saturating_sub(n)..total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_registered() {
        let r = Registry::default();
        assert_eq!(r.imdd_families().collect::<Vec<_>>(), ["cnn", "ffe", "snn", "volterra"]);
        assert_eq!(r.blind_families().collect::<Vec<_>>(), ["cma", "vae"]);
    }

    #[test]
    fn unknown_family_is_a_config_error() {
        let r = Registry::default();
        assert!(matches!(r.expand_imdd("rnn", &toml::Table::new()), Err(Error::Config(_))));
        assert!(matches!(r.expand_blind("lms", &toml::Table::new()), Err(Error::Config(_))));
    }

    #[test]
    fn families_expand_their_grids() {
        let r = Registry::default();
        let t: toml::Table = toml::from_str("taps = [5, 7]").unwrap();
        let ids: Vec<String> = r.expand_imdd("ffe", &t).unwrap().iter().map(|m| m.id()).collect();
        assert_eq!(ids, ["ffe-5", "ffe-7"]);
        let t: toml::Table = toml::from_str("memory = [[9, 3]]").unwrap();
        let m = r.expand_imdd("volterra", &t).unwrap();
        assert_eq!(m[0].id(), "volterra-9x3");
        assert_eq!(m[0].macs_per_symbol().unwrap(), 21.0);
        let bad: toml::Table = toml::from_str("tapz = [5]").unwrap();
        assert!(r.expand_imdd("ffe", &bad).is_err());
    }

    /// A user family registered at run time is selectable by name.
    #[test]
    fn custom_family() {
        struct Slicer;
        impl ImddEqualizer for Slicer {
            fn family(&self) -> &'static str {
                "slicer"
            }
            fn id(&self) -> String {
                "slicer".into()
            }
            fn macs_per_symbol(&self) -> Result<f64> {
                Ok(0.0)
            }
            fn fit_eval(&self, data: &ImddData<'_>, _seed: u64) -> Result<ImddOutcome> {
                Ok(ImddOutcome {
                    decisions: data.test.unequalized_decisions(data.test.levels.len()),
                    train_steps: 0,
                    trace: Vec::new(),
                    metrics: Vec::new(),
                })
            }
        }
        let mut r = Registry::default();
        r.register_imdd("slicer", |_| Ok(vec![Box::new(Slicer)]));
        assert_eq!(r.expand_imdd("slicer", &toml::Table::new()).unwrap()[0].id(), "slicer");
    }
}
