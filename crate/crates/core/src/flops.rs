//! Static flop accounting.
//!
//! Counting rules: a dense `m×k` matrix-vector product costs `2mk`; a `k×k`
//! diagonal costs `k`; a length-`k` vector add or subtract costs `k`;
//! permutations, selections and the anti-identity are free. Bias additions
//! are recorded only when `count_bias_adds` is set, since structured layers
//! and dense layers are tallied under different conventions.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounter {
    pub mults: u64,
    pub adds: u64,
    pub count_bias_adds: bool,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_bias_adds() -> Self {
        Self {
            count_bias_adds: true,
            ..Self::default()
        }
    }

    pub fn total(&self) -> u64 {
        self.mults + self.adds
    }

    pub fn reset(&mut self) {
        self.mults = 0;
        self.adds = 0;
    }

    pub fn mul(&mut self, k: usize) {
        self.mults += k as u64;
    }

    pub fn add(&mut self, k: usize) {
        self.adds += k as u64;
    }

    /// Dense `m×k` matvec under the `2mk` convention.
    pub fn dense(&mut self, m: usize, k: usize) {
        self.mul(m * k);
        self.add(m * k);
    }

    pub fn diag(&mut self, k: usize) {
        self.mul(k);
    }

    pub fn bias(&mut self, k: usize) {
        if self.count_bias_adds {
            self.add(k);
        }
    }

    /// Complex multiply: four real products and two real sums.
    pub fn complex_mul(&mut self, count: usize) {
        self.mul(4 * count);
        self.add(2 * count);
    }

    pub fn complex_add(&mut self, count: usize) {
        self.add(2 * count);
    }
}

/// Records into the counter when one is attached.
pub(crate) fn tally(counter: &mut Option<&mut FlopCounter>, f: impl FnOnce(&mut FlopCounter)) {
    if let Some(c) = counter.as_deref_mut() {
        f(c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_convention() {
        let mut c = FlopCounter::new();
        c.dense(8, 8);
        assert_eq!(c.total(), 128);
        c.reset();
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn bias_flag() {
        let mut off = FlopCounter::new();
        off.bias(4);
        assert_eq!(off.total(), 0);
        let mut on = FlopCounter::with_bias_adds();
        on.bias(4);
        assert_eq!(on.total(), 4);
    }
}
