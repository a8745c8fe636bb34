//! Local dephasing noise model.

use crate::error::{Error, Result};

/// Uncorrelated dephasing acting on each qubit independently.
///
/// The channel is parametrized by the dephasing strength `r` in [0, 1];
/// equivalently each qubit suffers a phase flip with probability
/// `p_f = (1 - r)/2`. `r = 1` is noiseless, `r = 0` removes all coherences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    r: f64,
}

impl NoiseModel {
    pub fn new(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) || r.is_nan() {
            return Err(Error::Domain(format!(
                "dephasing strength r = {r} outside [0, 1]"
            )));
        }
        Ok(NoiseModel { r })
    }

    /// Noiseless channel, r = 1.
    pub fn noiseless() -> Self {
        NoiseModel { r: 1.0 }
    }

    #[inline]
    pub fn r(self) -> f64 {
        self.r
    }

    /// Phase-flip probability p_f = (1 - r)/2.
    #[inline]
    pub fn flip_probability(self) -> f64 {
        (1.0 - self.r) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_probability_is_half_one_minus_r() {
        let m = NoiseModel::new(0.8).unwrap();
        assert!((m.flip_probability() - 0.1).abs() < 1e-16);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(NoiseModel::new(-0.1).is_err());
        assert!(NoiseModel::new(1.5).is_err());
        assert!(NoiseModel::new(f64::NAN).is_err());
    }
}
