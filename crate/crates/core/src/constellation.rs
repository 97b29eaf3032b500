//! Constellations, probabilistic shaping, symbol sources and the soft
//! demapper.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::signal::RngStream;

/// Constellation points with Gray labels and prior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    priors: Vec<f64>,
    name: String,
}

impl Constellation {
    /// Builds a constellation, normalizing points to unit average energy
    /// under `priors`.
    pub fn new(
        name: impl Into<String>,
        points: Vec<Complex64>,
        labels: Vec<u32>,
        priors: Vec<f64>,
    ) -> Result<Self> {
        let m = points.len();
        if m < 2 {
            return Err(Error::param("constellation needs at least two points"));
        }
        if labels.len() != m || priors.len() != m {
            return Err(Error::param("points, labels and priors differ in length"));
        }
        if priors.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::param("priors must be finite and non-negative"));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("priors sum to {total}, not 1")));
        }
        for i in 0..m {
            for j in i + 1..m {
                if (points[i] - points[j]).norm() < 1e-12 {
                    return Err(Error::param("constellation points must be distinct"));
                }
            }
        }
        let priors: Vec<f64> = priors.iter().map(|p| p / total).collect();
        let energy: f64 = points.iter().zip(&priors).map(|(c, p)| p * c.norm_sqr()).sum();
        if !(energy > 0.0) {
            return Err(Error::param("constellation has zero energy"));
        }
        let scale = energy.sqrt();
        Ok(Self {
            points: points.iter().map(|c| c / scale).collect(),
            labels,
            priors,
            name: name.into(),
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        (self.points.len() as f64).log2().ceil() as usize
    }

    /// Is every point on the real axis?
    pub fn is_real(&self) -> bool {
        self.points.iter().all(|c| c.im.abs() < 1e-15)
    }

    /// Source entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.priors)
    }

    pub fn mean_energy(&self) -> f64 {
        self.moment(2)
    }

    /// `sum_i p_i |c_i|^k`.
    pub fn moment(&self, k: i32) -> f64 {
        self.points
            .iter()
            .zip(&self.priors)
            .map(|(c, p)| p * c.norm().powi(k))
            .sum()
    }

    /// Maps each index to the index of its image under `quarter_turns`
    /// rotations by 90 degrees.
    pub fn rotation_map(&self, quarter_turns: usize) -> Vec<usize> {
        let rot = Complex64::i().powu(quarter_turns as u32 % 4);
        self.points
            .iter()
            .map(|&c| self.nearest(c * rot))
            .collect()
    }

    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, c) in self.points.iter().enumerate() {
            let d = (y - c).norm_sqr();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Minimum-distance decisions.
    pub fn decide(&self, y: &[Complex64]) -> Vec<usize> {
        y.iter().map(|&v| self.nearest(v)).collect()
    }

    /// Copy with all points multiplied by `alpha`, without renormalizing.
    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            points: self.points.iter().map(|c| c * alpha).collect(),
            ..self.clone()
        }
    }

    /// Line-oriented text form: a header, then `re im prior label` per point.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# eqlab constellation v1").unwrap();
        writeln!(out, "name {}", self.name).unwrap();
        writeln!(out, "points {}", self.points.len()).unwrap();
        for ((c, p), l) in self.points.iter().zip(&self.priors).zip(&self.labels) {
            writeln!(out, "{} {} {} {}", c.re, c.im, p, l).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |m: &str| Error::Format(format!("constellation text: {m}"));
        if lines.next() != Some("# eqlab constellation v1") {
            return Err(bad("missing or unsupported header"));
        }
        let name = lines
            .next()
            .and_then(|l| l.strip_prefix("name "))
            .ok_or_else(|| bad("missing name line"))?
            .to_string();
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("points "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("missing point count"))?;
        let mut points = Vec::with_capacity(count);
        let mut priors = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| bad("truncated point list"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad("point lines need four fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("invalid number"));
            points.push(Complex64::new(num(f[0])?, num(f[1])?));
            priors.push(num(f[2])?);
            labels.push(f[3].parse().map_err(|_| bad("invalid label"))?);
        }
        Self::new(name, points, labels, priors)
    }
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum()
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

/// Square Gray-labeled QAM with uniform priors and unit energy.
pub fn build_qam(order: usize) -> Result<Constellation> {
    if !matches!(order, 4 | 16 | 64 | 256) {
        return Err(Error::param(format!("unsupported QAM order {order}")));
    }
    let side = (order as f64).sqrt() as usize;
    let half_bits = side.trailing_zeros();
    let mut points = Vec::with_capacity(order);
    let mut labels = Vec::with_capacity(order);
    for i in 0..side {
        for q in 0..side {
            let re = 2.0 * i as f64 - (side - 1) as f64;
            let im = 2.0 * q as f64 - (side - 1) as f64;
            points.push(Complex64::new(re, im));
            labels.push((gray(i as u32) << half_bits) | gray(q as u32));
        }
    }
    Constellation::new(
        format!("{order}qam"),
        points,
        labels,
        vec![1.0 / order as f64; order],
    )
}

/// Gray-labeled PAM on the real axis with uniform priors and unit energy.
pub fn build_pam(order: usize) -> Result<Constellation> {
    if !matches!(order, 2 | 4 | 8) {
        return Err(Error::param(format!("unsupported PAM order {order}")));
    }
    let points = (0..order)
        .map(|i| Complex64::new(2.0 * i as f64 - (order - 1) as f64, 0.0))
        .collect();
    let labels = (0..order as u32).map(gray).collect();
    Constellation::new(
        format!("pam{order}"),
        points,
        labels,
        vec![1.0 / order as f64; order],
    )
}

fn mb_priors(energies: &[f64], lambda: f64) -> Vec<f64> {
    let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-lambda * (e - emin)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Maxwell-Boltzmann rate parameter giving `target_entropy_bits` on the
/// points of `base` (energies taken as given).
pub fn maxwell_boltzmann_lambda(base: &Constellation, target_entropy_bits: f64, tol: f64) -> Result<f64> {
    let max_h = (base.len() as f64).log2();
    if !(target_entropy_bits > 0.0 && target_entropy_bits <= max_h + 1e-12) {
        return Err(Error::param(format!(
            "target entropy {target_entropy_bits} outside (0, {max_h}]"
        )));
    }
    let energies: Vec<f64> = base.points().iter().map(|c| c.norm_sqr()).collect();
    let h = |l: f64| entropy_bits(&mb_priors(&energies, l));
    if (h(0.0) - target_entropy_bits).abs() <= tol {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while h(hi) > target_entropy_bits {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical("could not bracket shaping parameter".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let hm = h(mid);
        if (hm - target_entropy_bits).abs() <= tol {
            return Ok(mid);
        }
        if hm > target_entropy_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical("shaping bisection did not converge in 200 iterations".into()))
}

/// Maxwell-Boltzmann shaped copy of `base` with the requested entropy,
/// renormalized to unit energy under the new priors.
pub fn pcs_shape(base: &Constellation, target_entropy_bits: f64, tol: f64) -> Result<Constellation> {
    let lambda = maxwell_boltzmann_lambda(base, target_entropy_bits, tol)?;
    let energies: Vec<f64> = base.points().iter().map(|c| c.norm_sqr()).collect();
    Constellation::new(
        format!("{}-pcs{target_entropy_bits}", base.name()),
        base.points().to_vec(),
        base.labels().to_vec(),
        mb_priors(&energies, lambda),
    )
}

/// I.i.d. draws from the priors: indices and the matching points.
pub fn sample_symbols(c: &Constellation, n: usize, rng: &RngStream) -> (Vec<usize>, Vec<Complex64>) {
    let dist = WeightedIndex::new(c.priors()).expect("priors validated at construction");
    let mut r = rng.rng();
    let idx: Vec<usize> = (0..n).map(|_| dist.sample(&mut r)).collect();
    let sym = idx.iter().map(|&i| c.points()[i]).collect();
    (idx, sym)
}

/// Row-stochastic demapper output, `num_symbols x constellation_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBlock {
    q: Vec<f64>,
    size: usize,
}

impl PosteriorBlock {
    pub fn from_rows(q: Vec<f64>, size: usize) -> Result<Self> {
        if size == 0 || q.len() % size != 0 {
            return Err(Error::param("posterior matrix is ragged"));
        }
        Ok(Self { q, size })
    }

    /// Every row equal to `p`.
    pub fn constant(p: &[f64], rows: usize) -> Self {
        let mut q = Vec::with_capacity(rows * p.len());
        for _ in 0..rows {
            q.extend_from_slice(p);
        }
        Self { q, size: p.len() }
    }

    pub fn rows(&self) -> usize {
        self.q.len() / self.size
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.q[n * self.size..(n + 1) * self.size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// Posterior means `E_q[x_n]`.
    pub fn means(&self, c: &Constellation) -> Vec<Complex64> {
        (0..self.rows())
            .map(|n| {
                self.row(n)
                    .iter()
                    .zip(c.points())
                    .map(|(q, p)| p * *q)
                    .sum()
            })
            .collect()
    }

    /// Maximum a-posteriori indices.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|n| {
                let r = self.row(n);
                let mut best = 0;
                for k in 1..r.len() {
                    if r[k] > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Gaussian soft demapper `q(k | y) ~ p_k exp(-|y - c_k|^2 / noise_var)`,
/// evaluated in the log domain.
pub fn soft_demap(y: &[Complex64], c: &Constellation, noise_var: f64) -> Result<PosteriorBlock> {
    if !(noise_var > 0.0) {
        return Err(Error::param("noise variance must be positive"));
    }
    let m = c.len();
    let log_p: Vec<f64> = c.priors().iter().map(|p| p.ln()).collect();
    let mut q = vec![0.0; y.len() * m];
    for (n, &yn) in y.iter().enumerate() {
        let row = &mut q[n * m..(n + 1) * m];
        demap_row(yn, c.points(), &log_p, noise_var, row);
    }
    Ok(PosteriorBlock { q, size: m })
}

pub(crate) fn demap_row(y: Complex64, points: &[Complex64], log_p: &[f64], noise_var: f64, row: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for ((r, c), lp) in row.iter_mut().zip(points).zip(log_p) {
        *r = lp - (y - c).norm_sqr() / noise_var;
        max = max.max(*r);
    }
    let mut s = 0.0;
    for r in row.iter_mut() {
        *r = (*r - max).exp();
        s += *r;
    }
    for r in row.iter_mut() {
        *r /= s;
    }
}
