//! Real-multiplication counting and BER accounting.
//!
//! Counting convention, shared by every detector so comparisons are
//! internally consistent: only real scalar multiplications are counted
//! (additions and comparisons are free), a division counts as one
//! multiplication, and square roots are not counted as multiplications but
//! tallied separately. One complex·complex multiplication therefore costs 4,
//! a complex·real costs 2, and |z|² costs 2.

use crate::Error;
use serde::{Deserialize, Serialize};

/// Running tally of real multiplications inside one detection scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpCounter {
    pub scope_label: String,
    real_mults: u64,
    sqrts: u64,
}

impl OpCounter {
    pub fn new(label: impl Into<String>) -> Self {
        Self { scope_label: label.into(), real_mults: 0, sqrts: 0 }
    }

    pub fn add_mults(&mut self, n: u64) {
        self.real_mults += n;
    }

    pub fn add_sqrts(&mut self, n: u64) {
        self.sqrts += n;
    }

    pub fn real_mults(&self) -> u64 {
        self.real_mults
    }

    pub fn sqrts(&self) -> u64 {
        self.sqrts
    }

    /// Folds another scope's counts into this one; merged parallel trials
    /// sum associatively.
    pub fn merge(&mut self, other: &OpCounter) {
        self.real_mults += other.real_mults;
        self.sqrts += other.sqrts;
    }
}

/// Opens a counting scope to thread through a detector's numerical path.
pub fn count_scope(label: impl Into<String>) -> OpCounter {
    OpCounter::new(label)
}

/// Bit-error statistic with a binomial normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerStat {
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
    pub ci95_half_width: f64,
}

impl BerStat {
    pub fn from_counts(bit_errors: u64, bits_total: u64) -> Self {
        if bits_total == 0 {
            return Self { bit_errors, bits_total, ber: 0.0, ci95_half_width: 0.0 };
        }
        let n = bits_total as f64;
        let p = bit_errors as f64 / n;
        Self { bit_errors, bits_total, ber: p, ci95_half_width: 1.96 * (p * (1.0 - p) / n).sqrt() }
    }

    /// Interval bounds clamped to [0, 1].
    pub fn ci_bounds(&self) -> (f64, f64) {
        ((self.ber - self.ci95_half_width).max(0.0), (self.ber + self.ci95_half_width).min(1.0))
    }

    /// Whether the two 95% intervals overlap; zero-width intervals stay
    /// meaningful because the bounds are closed.
    pub fn ci_overlaps(&self, other: &BerStat) -> bool {
        let (lo_a, hi_a) = self.ci_bounds();
        let (lo_b, hi_b) = other.ci_bounds();
        lo_a <= hi_b && lo_b <= hi_a
    }
}

/// Hamming error fraction between two equal-length bit streams.
pub fn ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<BerStat, Error> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::LengthMismatch { got: rx_bits.len(), want: tx_bits.len() });
    }
    let errors = tx_bits.iter().zip(rx_bits).filter(|(a, b)| a != b).count() as u64;
    Ok(BerStat::from_counts(errors, tx_bits.len() as u64))
}
