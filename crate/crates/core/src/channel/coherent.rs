use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cd::{cd_fir, default_cd_taps};
use crate::constellation::{sample_symbols, Constellation};
use crate::error::{Error, Result};
use crate::signal::{awgn_add, fir_apply, rrc_taps, DualPolBlock, FirMode, RngStream, SignalBlock};

/// Polarization mixing element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolModel {
    /// Real rotation `[[cos, -sin], [sin, cos]]`.
    Rotation { theta: f64 },
    /// Arbitrary unitary Jones matrix, entries as `[re, im]`.
    Jones { matrix: [[[f64; 2]; 2]; 2] },
    /// Single differential-group-delay element between two rotations:
    /// `R(theta) diag(1, delay(tau)) R(-theta)`, `tau` in symbol periods.
    Dgd { theta: f64, tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentChannelConfig {
    /// Odd tap count of the dispersion FIR; derived from `beta2l` when absent.
    #[serde(default)]
    pub cd_taps_len: Option<usize>,
    pub beta2l: f64,
    pub pol_model: PolModel,
    /// Per-sample SNR in dB; `inf` disables noise.
    pub snr_db: f64,
    /// Extra polarization rotation rate in rad/symbol.
    #[serde(default)]
    pub time_varying: Option<f64>,
}

impl CoherentChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.cd_taps_len {
            if n % 2 == 0 {
                return Err(Error::param("cd_taps_len must be odd"));
            }
        }
        if let PolModel::Jones { matrix } = &self.pol_model {
            let m = jones(matrix);
            // J^H J = I
            for i in 0..2 {
                for j in 0..2 {
                    let v: Complex64 = (0..2).map(|k| m[k][i].conj() * m[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (v - Complex64::new(want, 0.0)).norm() > 1e-9 {
                        return Err(Error::param("Jones matrix is not unitary"));
                    }
                }
            }
        }
        if let PolModel::Dgd { tau, .. } = self.pol_model {
            if !(tau >= 0.0) {
                return Err(Error::param("DGD must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn cd_taps_for(&self, sps: usize) -> usize {
        self.cd_taps_len
            .unwrap_or_else(|| default_cd_taps(self.beta2l, sps))
    }
}

fn jones(m: &[[[f64; 2]; 2]; 2]) -> [[Complex64; 2]; 2] {
    let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
    [[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]]
}

fn rotation(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn mix(m: &[[Complex64; 2]; 2], x: Complex64, y: Complex64) -> (Complex64, Complex64) {
    (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
}

fn matmul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut o = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

/// Centered odd-length FIR delaying by `d` samples (two-tap interpolation).
fn fractional_delay(d: f64) -> Vec<Complex64> {
    let k = d.floor() as usize;
    let f = d - k as f64;
    let c = k + 1;
    let mut taps = vec![Complex64::default(); 2 * c + 1];
    taps[c + k] = Complex64::new(1.0 - f, 0.0);
    taps[c + k + 1] += Complex64::new(f, 0.0);
    taps
}

/// Received block, noise variance and the composite 2x2 impulse response
/// (`impulse[p][q]` maps input lane `q` to output lane `p`, sample-spaced,
/// center-aligned).
#[derive(Debug, Clone)]
pub struct CoherentOutput {
    pub rx: DualPolBlock,
    pub noise_var: f64,
    pub impulse: [[Vec<Complex64>; 2]; 2],
}

/// Polarization mixing, per-lane dispersion, then AWGN.
pub fn coherent_channel_apply(
    tx: &DualPolBlock,
    cfg: &CoherentChannelConfig,
    rng: &RngStream,
) -> Result<CoherentOutput> {
    cfg.validate()?;
    let sps = tx.sps();
    let n = tx.len();
    let rate = cfg.time_varying.unwrap_or(0.0);
    let (static_m, post) = match &cfg.pol_model {
        PolModel::Rotation { theta } => (rotation(*theta), None),
        PolModel::Jones { matrix } => (jones(matrix), None),
        PolModel::Dgd { theta, tau } => (rotation(-*theta), Some((*theta, *tau))),
    };
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for m in 0..n {
        let mut mat = static_m;
        if rate != 0.0 && post.is_none() {
            mat = matmul(&rotation(rate * m as f64 / sps as f64), &mat);
        }
        let (a, b) = mix(&mat, tx.x.samples()[m], tx.y.samples()[m]);
        x.push(a);
        y.push(b);
    }
    let sym_rate = tx.x.symbol_rate();
    let mut xb = SignalBlock::new(x, sps, sym_rate)?;
    let mut yb = SignalBlock::new(y, sps, sym_rate)?;
    let mut dgd_taps = None;
    if let Some((theta, tau)) = post {
        let d = fractional_delay(tau * sps as f64);
        yb = fir_apply(&yb, &d, FirMode::Same)?;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for m in 0..n {
            let mut mat = rotation(theta);
            if rate != 0.0 {
                mat = matmul(&rotation(rate * m as f64 / sps as f64), &mat);
            }
            let (a, b) = mix(&mat, xb.samples()[m], yb.samples()[m]);
            xs.push(a);
            ys.push(b);
        }
        xb = xb.with_samples(xs)?;
        yb = yb.with_samples(ys)?;
        dgd_taps = Some((theta, d));
    }
    let cd = cd_fir(cfg.beta2l, cfg.cd_taps_for(sps), sps)?.taps;
    let xb = fir_apply(&xb, &cd, FirMode::Same)?;
    let yb = fir_apply(&yb, &cd, FirMode::Same)?;

    // Common noise variance for both lanes, from their average power.
    let p = 0.5 * (xb.power() + yb.power());
    let (xb, yb, noise_var) = if cfg.snr_db.is_infinite() {
        (xb, yb, 0.0)
    } else {
        let scale = |b: &SignalBlock| b.with_samples(b.samples().iter().map(|s| s / p.sqrt()).collect());
        let nx = awgn_add(&scale(&xb)?, cfg.snr_db, &rng.substream(0), false)?;
        let ny = awgn_add(&scale(&yb)?, cfg.snr_db, &rng.substream(1), false)?;
        let back = |b: &SignalBlock| b.with_samples(b.samples().iter().map(|s| s * p.sqrt()).collect());
        (back(&nx.block)?, back(&ny.block)?, nx.noise_var * p)
    };

    let impulse = composite_impulse(&static_m, dgd_taps.as_ref(), &cd);
    Ok(CoherentOutput {
        rx: DualPolBlock::new(xb, yb)?,
        noise_var,
        impulse,
    })
}

fn composite_impulse(
    first: &[[Complex64; 2]; 2],
    dgd: Option<&(f64, Vec<Complex64>)>,
    cd: &[Complex64],
) -> [[Vec<Complex64>; 2]; 2] {
    // Polarization part as a 2x2 FIR matrix.
    let pol: [[Vec<Complex64>; 2]; 2] = match dgd {
        None => std::array::from_fn(|p| std::array::from_fn(|q| vec![first[p][q]])),
        Some((theta, d)) => {
            let len = d.len();
            let c = len / 2;
            let mut delta = vec![Complex64::default(); len];
            delta[c] = Complex64::new(1.0, 0.0);
            let diag = [delta, d.clone()];
            let r2 = rotation(*theta);
            std::array::from_fn(|p| {
                std::array::from_fn(|q| {
                    (0..len)
                        .map(|i| (0..2).map(|r| r2[p][r] * diag[r][i] * first[r][q]).sum())
                        .collect()
                })
            })
        }
    };
    std::array::from_fn(|p| {
        std::array::from_fn(|q| crate::signal::filter_full(&pol[p][q], cd))
    })
}

/// Random dual-polarization transmit block. At `sps = 1` the symbols are
/// sent as-is; otherwise they are RRC-shaped and scaled to unit sample power.
pub fn coherent_tx(
    c: &Constellation,
    n_symbols: usize,
    sps: usize,
    rolloff: f64,
    symbol_rate: f64,
    rng: &RngStream,
) -> Result<(DualPolBlock, [Vec<usize>; 2])> {
    let (ix, sx) = sample_symbols(c, n_symbols, &rng.substream(10));
    let (iy, sy) = sample_symbols(c, n_symbols, &rng.substream(11));
    let shape = |s: Vec<Complex64>| -> Result<SignalBlock> {
        if sps == 1 {
            return SignalBlock::new(s, 1, symbol_rate);
        }
        let mut up = vec![Complex64::default(); s.len() * sps];
        for (k, v) in s.iter().enumerate() {
            up[k * sps] = *v * (sps as f64).sqrt();
        }
        let g: Vec<Complex64> = rrc_taps(rolloff, 32, sps)?
            .into_iter()
            .map(|t| Complex64::new(t, 0.0))
            .collect();
        fir_apply(&SignalBlock::new(up, sps, symbol_rate)?, &g, FirMode::Same)
    };
    Ok((DualPolBlock::new(shape(sx)?, shape(sy)?)?, [ix, iy]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_qam;

    fn tx(n: usize) -> DualPolBlock {
        coherent_tx(&build_qam(16).unwrap(), n, 1, 0.1, 40e9, &RngStream::new(1, 0))
            .unwrap()
            .0
    }

    fn cfg(beta: f64, pol: PolModel, snr: f64) -> CoherentChannelConfig {
        CoherentChannelConfig {
            cd_taps_len: None,
            beta2l: beta,
            pol_model: pol,
            snr_db: snr,
            time_varying: None,
        }
    }

    #[test]
    fn identity_channel() {
        let t = tx(256);
        let out = coherent_channel_apply(&t, &cfg(0.0, PolModel::Rotation { theta: 0.0 }, f64::INFINITY), &RngStream::new(2, 0)).unwrap();
        for (a, b) in out.rx.x.samples().iter().zip(t.x.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in out.rx.y.samples().iter().zip(t.y.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn quarter_rotation_swaps_lanes() {
        let t = tx(64);
        let c = cfg(0.0, PolModel::Rotation { theta: std::f64::consts::FRAC_PI_2 }, f64::INFINITY);
        let out = coherent_channel_apply(&t, &c, &RngStream::new(2, 0)).unwrap();
        for m in 0..64 {
            assert!((out.rx.x.samples()[m] + t.y.samples()[m]).norm() < 1e-12);
            assert!((out.rx.y.samples()[m] - t.x.samples()[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn energy_conserved_before_noise() {
        let t = tx(8192);
        let c = cfg(1.5, PolModel::Rotation { theta: 0.7 }, f64::INFINITY);
        let out = coherent_channel_apply(&t, &c, &RngStream::new(2, 0)).unwrap();
        let pin = t.x.power() + t.y.power();
        let pout = out.rx.x.power() + out.rx.y.power();
        assert!((pout / pin - 1.0).abs() < 0.01, "{}", pout / pin);
    }

    #[test]
    fn noiseless_channel_is_linear() {
        let a = tx(300);
        let b = coherent_tx(&build_qam(4).unwrap(), 300, 1, 0.1, 40e9, &RngStream::new(9, 0)).unwrap().0;
        let c = cfg(0.8, PolModel::Dgd { theta: 0.3, tau: 0.4 }, f64::INFINITY);
        let (ka, kb) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
        let comb = |u: &[Complex64], v: &[Complex64]| -> Vec<Complex64> {
            u.iter().zip(v).map(|(p, q)| ka * p + kb * q).collect()
        };
        let sum = DualPolBlock::from_lanes(comb(a.x.samples(), b.x.samples()), comb(a.y.samples(), b.y.samples()), 1, 40e9).unwrap();
        let r = RngStream::new(0, 0);
        let oa = coherent_channel_apply(&a, &c, &r).unwrap().rx;
        let ob = coherent_channel_apply(&b, &c, &r).unwrap().rx;
        let os = coherent_channel_apply(&sum, &c, &r).unwrap().rx;
        for m in 0..300 {
            let want = ka * oa.x.samples()[m] + kb * ob.x.samples()[m];
            assert!((os.x.samples()[m] - want).norm() < 1e-9);
            let want = ka * oa.y.samples()[m] + kb * ob.y.samples()[m];
            assert!((os.y.samples()[m] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn impulse_reproduces_noiseless_output() {
        let t = tx(200);
        for pol in [PolModel::Rotation { theta: 0.6 }, PolModel::Dgd { theta: 0.4, tau: 0.3 }] {
            let c = cfg(0.9, pol, f64::INFINITY);
            let out = coherent_channel_apply(&t, &c, &RngStream::new(0, 0)).unwrap();
            for p in 0..2 {
                let mut acc = vec![Complex64::default(); 200];
                for q in 0..2 {
                    let lane = if q == 0 { &t.x } else { &t.y };
                    let y = fir_apply(lane, &out.impulse[p][q], FirMode::Same).unwrap();
                    for m in 0..200 {
                        acc[m] += y.samples()[m];
                    }
                }
                let got = if p == 0 { &out.rx.x } else { &out.rx.y };
                for m in 30..170 {
                    assert!((acc[m] - got.samples()[m]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn non_unitary_jones_rejected() {
        let c = cfg(0.0, PolModel::Jones { matrix: [[[1.0, 0.0], [0.5, 0.0]], [[0.0, 0.0], [1.0, 0.0]]] }, 20.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn noise_is_reproducible() {
        let t = tx(128);
        let c = cfg(0.5, PolModel::Rotation { theta: 0.2 }, 15.0);
        let a = coherent_channel_apply(&t, &c, &RngStream::new(5, 1)).unwrap();
        let b = coherent_channel_apply(&t, &c, &RngStream::new(5, 1)).unwrap();
        assert_eq!(a.rx, b.rx);
        assert!(a.noise_var > 0.0);
    }
}
