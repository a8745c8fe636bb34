//! Half-integer spin labels stored as doubled integers.
//!
//! Spin and magnetic quantum numbers of an n-qubit system step in halves, so
//! every label is kept as its doubled value: `HalfSpin::from_doubled(3)` is
//! 3/2. This keeps parity logic exact; floats appear only at evaluation time.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A total-spin or magnetic quantum number in units of 1/2.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct HalfSpin(i64);

impl HalfSpin {
    pub const ZERO: HalfSpin = HalfSpin(0);

    /// Builds from the doubled value `2j`.
    pub const fn from_doubled(doubled: i64) -> Self {
        HalfSpin(doubled)
    }

    /// Builds an integer spin.
    pub const fn from_int(j: i64) -> Self {
        HalfSpin(2 * j)
    }

    pub const fn doubled(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Dimension 2j+1 of the spin-j representation. Negative spins are invalid.
    pub fn dimension(self) -> usize {
        debug_assert!(self.0 >= 0);
        (self.0 + 1) as usize
    }

    /// Magnetic numbers m = -j, -j+1, ..., j.
    pub fn magnetic_numbers(self) -> impl Iterator<Item = HalfSpin> {
        let j2 = self.0;
        (0..self.dimension() as i64).map(move |i| HalfSpin(-j2 + 2 * i))
    }

    /// In-block index of a magnetic number, m = -j maps to 0.
    pub fn index_of(self, m: HalfSpin) -> usize {
        debug_assert_eq!((self.0 - m.0) % 2, 0);
        ((m.0 + self.0) / 2) as usize
    }
}

impl fmt::Display for HalfSpin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Spins j = j_min, j_min+1, ..., n/2 occurring in the decomposition of n qubits.
pub fn block_spins(n: usize) -> impl Iterator<Item = HalfSpin> {
    let start = (n % 2) as i64;
    (0..).map(move |k| HalfSpin(start + 2 * k)).take(n / 2 + 1)
}
