//! Baseline equalizers: 2x2 butterfly with CMA, linear FFE and a
//! second-order Volterra equalizer, plus their MAC accounting.

mod butterfly;
mod cma;
mod ffe;
mod linalg;
mod volterra;

pub use butterfly::{butterfly_apply, ButterflyFir};
pub use cma::{cma_loss, cma_radius, cma_train, default_cma_step, CmaConfig, CmaResult};
pub use ffe::{ffe_train_lms, ffe_train_ls, LinearFfe, Ridge};
pub use linalg::{solve_ridge, NormalEquations};
pub use volterra::{volterra_feature_count, volterra_features, VolterraModel};

/// Model shapes with a closed-form MAC cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicShape {
    /// Butterfly with `taps` complex taps per branch, reported per
    /// polarization symbol.
    Butterfly { taps: usize },
    Ffe { taps: usize },
    Volterra { m1: usize, m2: usize },
}

/// Real MACs per output symbol.
///
/// One complex MAC counts as 4 real MACs, each second-order product as one
/// MAC, and biases are free.
pub fn macs_per_symbol_classic(shape: ClassicShape) -> u64 {
    match shape {
        // 4 branches of N complex taps per dual-pol symbol = 16 N real MACs,
        // i.e. 8 N per polarization.
        ClassicShape::Butterfly { taps } => 8 * taps as u64,
        ClassicShape::Ffe { taps } => taps as u64,
        ClassicShape::Volterra { m1, m2 } => {
            let pairs = (m2 * (m2 + 1) / 2) as u64;
            m1 as u64 + 2 * pairs
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_examples() {
        assert_eq!(macs_per_symbol_classic(ClassicShape::Ffe { taps: 25 }), 25);
        assert_eq!(macs_per_symbol_classic(ClassicShape::Volterra { m1: 7, m2: 3 }), 19);
        assert_eq!(macs_per_symbol_classic(ClassicShape::Butterfly { taps: 25 }), 200);
    }
}
