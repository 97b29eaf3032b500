//! Training summary shared by the neural equalizers.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Validation BER after each epoch.
    pub val_ber_trace: Vec<f64>,
    pub epochs: usize,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    /// SHA-256 of the kept parameters (little-endian `f64` bytes).
    pub checksum: String,
    pub macs_per_symbol: f64,
}

impl TrainReport {
    pub fn new(macs_per_symbol: f64) -> Self {
        Self {
            loss_trace: Vec::new(),
            val_ber_trace: Vec::new(),
            epochs: 0,
            best_epoch: 0,
            checksum: String::new(),
            macs_per_symbol,
        }
    }

    pub fn best_val_ber(&self) -> f64 {
        self.val_ber_trace.get(self.best_epoch).copied().unwrap_or(1.0)
    }

    /// One row per epoch: `epoch,loss,val_ber`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,loss,val_ber")?;
        for (i, (l, b)) in self.loss_trace.iter().zip(&self.val_ber_trace).enumerate() {
            writeln!(f, "{i},{l:?},{b:?}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Hex SHA-256 of a parameter vector.
pub fn checksum(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
