//! Independent oracles shared by `selftest` and the acceptance suite.

use rand::Rng;

use super::pareto::{budget_optimum, pareto_front, ParetoPoint};
use crate::channel::{ImddChannelConfig, Nonlinearity};
use crate::classic::{macs_per_symbol_classic, ClassicShape};
use crate::constellation::{build_pam, build_qam, pcs_shape};
use crate::dataset::ImddStream;
use crate::error::Result;
use crate::nn::{cnn_gradient_check, parse_layers, CnnConfig, CnnModel, LayerSpec, OutputMode};
use crate::registry::{ImddEqualizer, Registry};
use crate::signal::{theory_ber_2pam, RngStream};
use crate::snn::{snn_gradient_check, SnnConfig, SnnModel};
use crate::vae::elbo_gradient_check;

/// One AWGN operating point: measured and closed-form BER.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AwgnPoint {
    pub snr_db: f64,
    pub measured: f64,
    pub theory: f64,
}

impl AwgnPoint {
    pub fn rel_error(&self) -> f64 {
        (self.measured - self.theory).abs() / self.theory
    }
}

/// Unequalized PAM-2 BER through the IM/DD channel with no dispersion and
/// no nonlinearity, against `Q(sqrt(2 Es/N0))`. The matched RRC pair makes
/// this a matched-filter receiver, and `Es/N0 = snr - 3.01 dB` at two
/// samples per symbol.
pub fn awgn_oracle(snr_db: f64, n_symbols: usize, seed: u64) -> Result<AwgnPoint> {
    let cfg = ImddChannelConfig {
        sps: 2,
        rolloff: 0.2,
        span_symbols: 64,
        beta2l: 0.0,
        cd_taps_len: None,
        nonlinearity: Nonlinearity::None,
        snr_db,
        shot: None,
        bias: None,
    };
    let s = ImddStream::simulate(&build_pam(2)?, &cfg, n_symbols, &RngStream::new(seed, 0))?;
    let dec = s.unequalized_decisions(2);
    // Skip the filter transients at both ends.
    let edge = 64.min(n_symbols / 4);
    let range = edge..n_symbols - edge;
    let measured = s.ber(&dec[range.clone()], &s.labels[range]);
    Ok(AwgnPoint {
        snr_db,
        measured,
        theory: theory_ber_2pam(snr_db - 10.0 * 2f64.log10()),
    })
}

/// Entropy of Maxwell-Boltzmann shaped 64-QAM solved for 4.6 bits.
pub fn pcs_entropy() -> Result<f64> {
    Ok(pcs_shape(&build_qam(64)?, 4.6, 1e-9)?.entropy())
}

/// Result of one gradient suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSuite {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
}

fn suite(name: &'static str, instances: usize, f: impl Fn(u64) -> Result<f64>) -> Result<GradientSuite> {
    let mut worst: f64 = 0.0;
    for seed in 0..instances as u64 {
        worst = worst.max(f(seed)?);
    }
    Ok(GradientSuite {
        name,
        instances,
        max_rel_error: worst,
    })
}

/// Finite-difference suites for the ELBO (one and two samples per symbol),
/// the CNN and the SNN surrogate path.
pub fn gradient_suites(instances: usize) -> Result<Vec<GradientSuite>> {
    Ok(vec![
        suite("elbo-sps1", instances, |s| elbo_gradient_check(s, 1))?,
        suite("elbo-sps2", instances, |s| elbo_gradient_check(s, 2))?,
        suite("cnn", instances, |s| cnn_gradient_check(s).map(|(e, _)| e))?,
        suite("snn", instances, snn_gradient_check)?,
    ])
}

/// All non-dominated points by exhaustive pairwise comparison.
pub fn brute_force_front(points: &[ParetoPoint]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| {
            !points
                .iter()
                .any(|q| q.macs <= p.macs && q.metric <= p.metric && (q.macs < p.macs || q.metric < p.metric))
        })
        .map(|p| (p.macs, p.metric))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

/// Compares the front and budget optimum with brute force on random
/// instances with many ties. Returns the number of mismatching instances.
pub fn pareto_oracle(instances: usize, seed: u64) -> usize {
    let mut r = RngStream::new(seed, 91).rng();
    let mut bad = 0;
    for _ in 0..instances {
        let n = r.random_range(1..=1000usize);
        let pts: Vec<ParetoPoint> = (0..n)
            .map(|i| {
                ParetoPoint::new(
                    f64::from(r.random_range(0..300u32)) * 10.0,
                    f64::from(r.random_range(0..300u32)) * 1e-3,
                    format!("m{i:02}"),
                )
            })
            .collect();
        let front: Vec<(f64, f64)> = pareto_front(&pts).iter().map(|p| (p.macs, p.metric)).collect();
        let budget = f64::from(r.random_range(0..3100u32));
        let best = pts
            .iter()
            .filter(|p| p.macs <= budget)
            .map(|p| p.metric)
            .fold(f64::INFINITY, f64::min);
        let opt = budget_optimum(&pts, budget);
        let opt_ok = match &opt {
            None => best.is_infinite(),
            Some(o) => o.metric == best && front.contains(&(o.macs, o.metric)),
        };
        if front != brute_force_front(&pts) || !opt_ok {
            bad += 1;
        }
    }
    bad
}

/// Multiply-accumulates of a CNN forward pass counted loop by loop.
fn counted_cnn_macs(cfg: &CnnConfig) -> u64 {
    let (mut ch, mut len) = (1usize, cfg.input_window);
    let mut count = 0u64;
    for l in &cfg.layers {
        match *l {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => {
                let mut out_len = 0;
                let mut start = 0;
                while start + kernel <= len {
                    for _ in 0..out_ch {
                        for _ in 0..in_ch {
                            for _ in 0..kernel {
                                count += 1;
                            }
                        }
                    }
                    out_len += 1;
                    start += stride;
                }
                ch = out_ch;
                len = out_len;
            }
            LayerSpec::Relu => {}
            LayerSpec::Dense { outputs, .. } => {
                for _ in 0..outputs {
                    for _ in 0..ch * len {
                        count += 1;
                    }
                }
                ch = outputs;
                len = 1;
            }
        }
    }
    count
}

/// One audited model.
#[derive(Debug, Clone, PartialEq)]
pub struct MacAudit {
    pub model: String,
    pub reported: f64,
    pub counted: f64,
    /// Reported MACs agree across two random weight draws.
    pub shape_pure: bool,
}

impl MacAudit {
    pub fn ok(&self) -> bool {
        self.shape_pure && (self.reported - self.counted).abs() <= 1e-9 * self.counted.max(1.0)
    }
}

fn imdd_model(registry: &Registry, family: &str, toml_text: &str) -> Result<Box<dyn ImddEqualizer>> {
    let t: toml::Table = toml::from_str(toml_text).map_err(|e| crate::Error::Config(e.to_string()))?;
    let mut v = registry.expand_imdd(family, &t)?;
    Ok(v.remove(0))
}

/// Random CNN, Volterra, FFE, butterfly and SNN shapes, with the reported
/// cost checked against an explicit operation count.
pub fn mac_audit(models: usize, seed: u64) -> Result<Vec<MacAudit>> {
    let reg = Registry::default();
    let mut r = RngStream::new(seed, 92).rng();
    let mut out = Vec::with_capacity(models);
    for i in 0..models {
        let audit = match i % 5 {
            0 => {
                // Last conv emits `classes` channels over `g` positions.
                let (g, classes) = (r.random_range(1..17usize), 2usize);
                let (c1, k1, s1) = (r.random_range(2..17usize), r.random_range(3..14usize), r.random_range(1..3usize));
                let k2 = r.random_range(1..8usize);
                let l1 = k2 + g - 1;
                let window = (l1 - 1) * s1 + k1 + r.random_range(0..s1);
                let layers = format!("conv(1,{c1},{k1},{s1}) relu conv({c1},{classes},{k2},1)");
                let fam = imdd_model(
                    &reg,
                    "cnn",
                    &format!("variants = [{{ window = {window}, symbols = {g}, layers = \"{layers}\" }}]"),
                )?;
                let cfg = CnnConfig {
                    input_window: window,
                    layers: parse_layers(&layers)?,
                    symbols_per_window: g,
                    n_classes: classes,
                    output: OutputMode::Classes,
                };
                let a = CnnModel::init(&cfg, &RngStream::new(seed, 1000 + i as u64))?;
                let b = CnnModel::init(&cfg, &RngStream::new(seed, 2000 + i as u64))?;
                let pure = a.params != b.params
                    && crate::nn::macs_per_symbol_cnn(&a.cfg)? == crate::nn::macs_per_symbol_cnn(&b.cfg)?;
                MacAudit {
                    model: fam.id(),
                    reported: fam.macs_per_symbol()?,
                    counted: counted_cnn_macs(&cfg) as f64 / g as f64,
                    shape_pure: pure,
                }
            }
            1 => {
                let m1 = r.random_range(1..200usize);
                let m2 = r.random_range(1..=m1.min(50));
                let fam = imdd_model(&reg, "volterra", &format!("memory = [[{m1}, {m2}]]"))?;
                let mut counted = m1;
                for a in 0..m2 {
                    for _ in a..m2 {
                        // x_a * x_b, then the weight.
                        counted += 2;
                    }
                }
                MacAudit {
                    model: fam.id(),
                    reported: fam.macs_per_symbol()?,
                    counted: counted as f64,
                    shape_pure: true,
                }
            }
            2 => {
                let n = r.random_range(1..400usize);
                let fam = imdd_model(&reg, "ffe", &format!("taps = [{n}]"))?;
                MacAudit {
                    model: fam.id(),
                    reported: fam.macs_per_symbol()?,
                    counted: n as f64,
                    shape_pure: true,
                }
            }
            3 => {
                let n = r.random_range(1..60usize);
                // Four complex branches of n taps for two output symbols,
                // four real MACs per complex MAC.
                let counted = (4 * n * 4) as f64 / 2.0;
                MacAudit {
                    model: format!("butterfly-{n}"),
                    reported: macs_per_symbol_classic(ClassicShape::Butterfly { taps: n }) as f64,
                    counted,
                    shape_pure: true,
                }
            }
            _ => {
                let w = r.random_range(3..40usize);
                let h = r.random_range(2..48usize);
                let t = r.random_range(1..16usize);
                let fam = imdd_model(
                    &reg,
                    "snn",
                    &format!("variants = [{{ window = {w}, hidden = [{h}], timesteps = {t} }}]"),
                )?;
                let mut cfg = SnnConfig::new(vec![w, h, 2]);
                cfg.timesteps = t;
                let a = SnnModel::init(&cfg, &RngStream::new(seed, 3000 + i as u64))?;
                let b = SnnModel::init(&cfg, &RngStream::new(seed, 4000 + i as u64))?;
                let mut counted = 0u64;
                for _ in 0..t {
                    for pair in cfg.sizes.windows(2) {
                        counted += (pair[0] * pair[1]) as u64;
                    }
                }
                MacAudit {
                    model: fam.id(),
                    reported: fam.macs_per_symbol()?,
                    counted: counted as f64,
                    shape_pure: a.flat_params() != b.flat_params(),
                }
            }
        };
        out.push(audit);
    }
    Ok(out)
}
