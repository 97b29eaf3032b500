//! Versioned text checkpoints: a header, `key value` shape lines, then one
//! parameter per line.

use num_complex::Complex64;

use crate::classic::{ButterflyFir, LinearFfe, VolterraModel};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::vae::VaeLeModel;

const HEADER: &str = "# eqlab checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub shape: Vec<(String, String)>,
    pub params: Vec<f64>,
    /// Free-form trailing section, e.g. an embedded constellation.
    pub extra: Option<String>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            shape: Vec::new(),
            params: Vec::new(),
            extra: None,
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.shape.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.shape
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("checkpoint lacks `{key}`")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("`{key}` is not an integer")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("`{key}` is not a number")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nkind {}\n", self.kind);
        for (k, v) in &self.shape {
            s.push_str(&format!("{k} {v}\n"));
        }
        s.push_str(&format!("params {}\n", self.params.len()));
        for p in &self.params {
            // Shortest round-trip representation.
            s.push_str(&format!("{p:?}\n"));
        }
        if let Some(extra) = &self.extra {
            s.push_str("extra\n");
            s.push_str(extra);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(Error::Format("missing checkpoint header".into()));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| Error::Format("missing kind line".into()))?
            .to_string();
        let mut shape = Vec::new();
        let count = loop {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format("missing params line".into()))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad shape line `{line}`")))?;
            if k == "params" {
                break v
                    .parse::<usize>()
                    .map_err(|_| Error::Format("bad parameter count".into()))?;
            }
            shape.push((k.to_string(), v.to_string()));
        };
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format("truncated parameter list".into()))?;
            params.push(
                line.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad parameter `{line}`")))?,
            );
        }
        let extra = match lines.next() {
            Some("extra") => Some(lines.map(|l| format!("{l}\n")).collect()),
            Some(l) => return Err(Error::Format(format!("unexpected line `{l}`"))),
            None => None,
        };
        Ok(Self {
            kind,
            shape,
            params,
            extra,
        })
    }
}

/// Models that round-trip through [`Checkpoint`].
pub trait Checkpointable: Sized {
    fn to_checkpoint(&self) -> Checkpoint;
    fn from_checkpoint(ck: &Checkpoint) -> Result<Self>;
}

fn push_taps(params: &mut Vec<f64>, taps: &[[Vec<Complex64>; 2]; 2]) {
    for c in taps.iter().flatten().flatten() {
        params.push(c.re);
        params.push(c.im);
    }
}

fn read_taps(params: &[f64], n: usize, sps: usize) -> Result<ButterflyFir> {
    if params.len() != 8 * n {
        return Err(Error::Format("butterfly parameter count mismatch".into()));
    }
    let mut w = ButterflyFir::identity(n, sps)?;
    let mut it = params.chunks_exact(2);
    for row in &mut w.taps {
        for t in row {
            for c in t.iter_mut() {
                let v = it.next().expect("length checked");
                *c = Complex64::new(v[0], v[1]);
            }
        }
    }
    w.validate()?;
    Ok(w)
}

impl Checkpointable for ButterflyFir {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("butterfly").with("taps", self.len()).with("sps_in", self.sps_in);
        push_taps(&mut ck.params, &self.taps);
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("butterfly")?;
        read_taps(&ck.params, ck.get_usize("taps")?, ck.get_usize("sps_in")?)
    }
}

impl Checkpointable for LinearFfe {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("ffe").with("taps", self.taps.len());
        ck.params = self.taps.clone();
        ck.params.push(self.bias);
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("ffe")?;
        let n = ck.get_usize("taps")?;
        if ck.params.len() != n + 1 {
            return Err(Error::Format("FFE parameter count mismatch".into()));
        }
        Ok(LinearFfe {
            taps: ck.params[..n].to_vec(),
            bias: ck.params[n],
        })
    }
}

impl Checkpointable for VolterraModel {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("volterra").with("m1", self.m1).with("m2", self.m2);
        ck.params.extend(&self.kernel1);
        ck.params.extend(&self.kernel2);
        ck.params.push(self.bias);
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("volterra")?;
        let (m1, m2) = (ck.get_usize("m1")?, ck.get_usize("m2")?);
        let n2 = m2 * (m2 + 1) / 2;
        if ck.params.len() != m1 + n2 + 1 {
            return Err(Error::Format("Volterra parameter count mismatch".into()));
        }
        let mut m = VolterraModel::zeros(m1, m2)?;
        m.kernel1 = ck.params[..m1].to_vec();
        m.kernel2 = ck.params[m1..m1 + n2].to_vec();
        m.bias = ck.params[m1 + n2];
        Ok(m)
    }
}

impl Checkpointable for VaeLeModel {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("vae_le")
            .with("encoder_taps", self.encoder.len())
            .with("decoder_taps", self.decoder.len())
            .with("sps", self.sps())
            .with("sigma2", format!("{:?}", self.sigma2));
        push_taps(&mut ck.params, &self.encoder.taps);
        push_taps(&mut ck.params, &self.decoder.taps);
        ck.extra = Some(self.constellation.to_text());
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("vae_le")?;
        let ne = ck.get_usize("encoder_taps")?;
        let nd = ck.get_usize("decoder_taps")?;
        let sps = ck.get_usize("sps")?;
        if ck.params.len() != 8 * (ne + nd) {
            return Err(Error::Format("VAE parameter count mismatch".into()));
        }
        let c = Constellation::from_text(
            ck.extra
                .as_deref()
                .ok_or_else(|| Error::Format("VAE checkpoint lacks its constellation".into()))?,
        )?;
        let m = VaeLeModel {
            encoder: read_taps(&ck.params[..8 * ne], ne, sps)?,
            decoder: read_taps(&ck.params[8 * ne..], nd, sps)?,
            sigma2: ck.get_f64("sigma2")?,
            constellation: c,
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{build_qam, pcs_shape};

    fn roundtrip<T: Checkpointable + PartialEq + std::fmt::Debug>(m: &T) {
        let text = m.to_checkpoint().to_text();
        let back = T::from_checkpoint(&Checkpoint::from_text(&text).unwrap()).unwrap();
        assert_eq!(&back, m);
    }

    #[test]
    fn classic_models_roundtrip() {
        let mut w = ButterflyFir::identity(7, 2).unwrap();
        w.taps[0][1][2] = Complex64::new(0.1 + 1e-17, -1.0 / 3.0);
        roundtrip(&w);
        roundtrip(&LinearFfe {
            taps: vec![0.5, -0.25, 1e-300],
            bias: 0.125,
        });
        let mut v = VolterraModel::zeros(5, 3).unwrap();
        v.kernel2[4] = std::f64::consts::PI;
        roundtrip(&v);
    }

    #[test]
    fn vae_roundtrip() {
        let c = pcs_shape(&build_qam(64).unwrap(), 4.6, 1e-9).unwrap();
        let mut m = VaeLeModel::cold_start(&c, 9, 5, 1).unwrap();
        m.sigma2 = 0.0123;
        m.decoder.taps[1][0][0] = Complex64::new(0.2, 0.7);
        let text = m.to_checkpoint().to_text();
        let back = VaeLeModel::from_checkpoint(&Checkpoint::from_text(&text).unwrap()).unwrap();
        assert_eq!(back.encoder, m.encoder);
        assert_eq!(back.decoder, m.decoder);
        assert_eq!(back.sigma2, m.sigma2);
        for (a, b) in back.constellation.priors().iter().zip(c.priors()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_wrong_kind_and_truncation() {
        let ck = LinearFfe { taps: vec![1.0], bias: 0.0 }.to_checkpoint();
        assert!(ButterflyFir::from_checkpoint(&ck).is_err());
        let text = ck.to_text();
        let cut = &text[..text.len() - 4];
        assert!(Checkpoint::from_text(cut).is_err());
        assert!(Checkpoint::from_text("nonsense").is_err());
    }
}
