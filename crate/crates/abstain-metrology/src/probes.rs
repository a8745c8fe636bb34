//! Permutation-invariant probe states and their constructors.
//!
//! A probe of n qubits living in the fully symmetric subspace is described by
//! the n+1 real nonnegative coefficients c_m, m = -J..J with J = n/2. Phases
//! can always be absorbed into the measurement, so negative or complex
//! coefficients are rejected rather than silently fixed up.

use crate::error::{Error, Result};
use crate::logspace::LogFactorials;
use crate::noise::NoiseModel;
use crate::spin::HalfSpin;
use crate::spinblocks;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const NORM_TOLERANCE: f64 = 1e-12;

/// An n-qubit permutation-invariant pure probe state.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricProbe {
    n: usize,
    coeffs: Vec<f64>,
}

impl SymmetricProbe {
    /// Accepts coefficients that are already normalized to `NORM_TOLERANCE`.
    ///
    /// Coefficients are indexed by ascending m = -J..J (length n+1) and must
    /// all be nonnegative.
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("probe needs at least one qubit".into()));
        }
        if coeffs.len() != n + 1 {
            return Err(Error::LengthMismatch {
                expected: n + 1,
                found: coeffs.len(),
            });
        }
        for (index, &value) in coeffs.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(Error::NegativeCoefficient { index, value });
            }
        }
        let norm2: f64 = coeffs.iter().map(|c| c * c).sum();
        let deviation = (norm2 - 1.0).abs();
        if deviation > NORM_TOLERANCE {
            return Err(Error::Normalization { deviation });
        }
        Ok(SymmetricProbe { n, coeffs })
    }

    /// Normalizes the given nonnegative coefficients before constructing.
    pub fn normalized(n: usize, mut coeffs: Vec<f64>) -> Result<Self> {
        for (index, &value) in coeffs.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(Error::NegativeCoefficient { index, value });
            }
        }
        let norm2: f64 = coeffs.iter().map(|c| c * c).sum();
        if norm2 <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let inv = norm2.sqrt().recip();
        for c in &mut coeffs {
            *c *= inv;
        }
        // exact within rounding now
        SymmetricProbe::new_unchecked_norm(n, coeffs)
    }

    fn new_unchecked_norm(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != n + 1 {
            return Err(Error::LengthMismatch {
                expected: n + 1,
                found: coeffs.len(),
            });
        }
        Ok(SymmetricProbe { n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximum spin J = n/2.
    pub fn total_spin(&self) -> HalfSpin {
        HalfSpin::from_doubled(self.n as i64)
    }

    /// Coefficients ordered by ascending m.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient c_m.
    pub fn coeff(&self, m: HalfSpin) -> f64 {
        self.coeffs[self.total_spin().index_of(m)]
    }
}

/// n identical copies of the equatorial qubit (|0> + |1>)/sqrt(2).
///
/// c_m = sqrt(C(n, J-m) / 2^n), the binomial amplitude profile.
pub fn multicopy(n: usize) -> Result<SymmetricProbe> {
    if n == 0 {
        return Err(Error::Domain("probe needs at least one qubit".into()));
    }
    let lf = LogFactorials::new(n);
    let ln2 = std::f64::consts::LN_2;
    let coeffs: Vec<f64> = (0..=n)
        .map(|i| (0.5 * (lf.ln_binomial(n, n - i) - n as f64 * ln2)).exp())
        .collect();
    SymmetricProbe::normalized(n, coeffs)
}

/// Conjectured optimal probe at finite success probability:
/// c_m proportional to cos(m pi / (n+2)) exp(-sqrt((1-r^2)/(r^2 n^3)) m^2).
///
/// At r = 1 the Gaussian factor is 1 and the pure-state cosine optimum is
/// recovered.
pub fn optimal_gaussian(n: usize, noise: NoiseModel) -> Result<SymmetricProbe> {
    let r = noise.r();
    if n == 0 {
        return Err(Error::Domain("probe needs at least one qubit".into()));
    }
    if r <= 0.0 {
        return Err(Error::Domain(
            "optimal probe requires r in (0, 1]".into(),
        ));
    }
    let width = ((1.0 - r * r) / (r * r * (n as f64).powi(3))).sqrt();
    let coeffs: Vec<f64> = HalfSpin::from_doubled(n as i64)
        .magnetic_numbers()
        .map(|m| {
            let mv = m.value();
            (mv * std::f64::consts::PI / (n as f64 + 2.0)).cos() * (-width * mv * mv).exp()
        })
        .collect();
    SymmetricProbe::normalized(n, coeffs)
}

/// Probe whose dephased maximal-spin profile is already the ground state of
/// the block Hamiltonian, so no in-block filtering is needed there.
///
/// c_m proportional to xi^J_m sqrt(C(n, J-m) / D^J_{m,m}) with xi^J the
/// minimal eigenvector of H^J.
pub fn ground_profile_probe(n: usize, noise: NoiseModel) -> Result<SymmetricProbe> {
    let r = noise.r();
    if n == 0 {
        return Err(Error::Domain("probe needs at least one qubit".into()));
    }
    if r <= 0.0 {
        return Err(Error::Domain(
            "ground-profile probe requires r in (0, 1]".into(),
        ));
    }
    let ham = spinblocks::coupling_matrix(n, HalfSpin::from_doubled(n as i64), noise)?;
    let (_, xi) = crate::blocksolver::unconstrained_minimum(&ham)?;
    let lf = LogFactorials::new(2 * n + 2);
    let j = HalfSpin::from_doubled(n as i64);
    let mut log_unnorm = Vec::with_capacity(n + 1);
    for (i, m) in j.magnetic_numbers().enumerate() {
        let ld = spinblocks::log_dephasing_coefficient(&lf, n, j, m, m, r)?;
        let lc = lf.ln_binomial(n, ((n as i64 - m.doubled()) / 2) as usize);
        let xv = xi[i].max(0.0);
        if xv > 0.0 {
            log_unnorm.push(xv.ln() + 0.5 * (lc - ld));
        } else {
            log_unnorm.push(f64::NEG_INFINITY);
        }
    }
    let max = log_unnorm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let coeffs: Vec<f64> = log_unnorm.iter().map(|l| (l - max).exp()).collect();
    SymmetricProbe::normalized(n, coeffs)
}

/// On-disk probe format: `{"n": 2, "coeffs": [c_-1, c_0, c_1]}`, ascending m.
#[derive(Serialize, Deserialize)]
pub struct ProbeFile {
    pub n: usize,
    pub coeffs: Vec<f64>,
}

/// Loads a probe from its JSON file, auto-normalizing.
///
/// A norm deviation above 1e-6 is accepted but logged as a warning.
pub fn from_file(path: impl AsRef<Path>) -> Result<SymmetricProbe> {
    let text = std::fs::read_to_string(path)?;
    let parsed: ProbeFile = serde_json::from_str(&text)?;
    if parsed.coeffs.len() != parsed.n + 1 {
        return Err(Error::LengthMismatch {
            expected: parsed.n + 1,
            found: parsed.coeffs.len(),
        });
    }
    let norm2: f64 = parsed.coeffs.iter().map(|c| c * c).sum();
    let deviation = (norm2 - 1.0).abs();
    if deviation > 1e-6 {
        log::warn!(
            "probe file norm deviates by {deviation:e}; coefficients will be rescaled"
        );
    }
    SymmetricProbe::normalized(parsed.n, parsed.coeffs)
}

/// Serializes a probe to its JSON file format.
pub fn to_file(probe: &SymmetricProbe, path: impl AsRef<Path>) -> Result<()> {
    let file = ProbeFile {
        n: probe.n(),
        coeffs: probe.coeffs().to_vec(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn multicopy_single_qubit() {
        let p = multicopy(1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(p.coeffs()[0], s, max_relative = 1e-15);
        assert_relative_eq!(p.coeffs()[1], s, max_relative = 1e-15);
    }

    #[test]
    fn multicopy_four_qubits_is_binomial() {
        let p = multicopy(4).unwrap();
        let sq: Vec<f64> = p.coeffs().iter().map(|c| c * c * 16.0).collect();
        for (got, want) in sq.iter().zip([1.0, 4.0, 6.0, 4.0, 1.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn multicopy_norm_exact_to_machine_precision() {
        for n in [3, 17, 40, 60] {
            let p = multicopy(n).unwrap();
            let norm2: f64 = p.coeffs().iter().map(|c| c * c).sum();
            assert!((norm2 - 1.0).abs() < 1e-13, "n={n}: {norm2}");
        }
    }

    #[test]
    fn optimal_gaussian_reduces_to_cosine_at_r_one() {
        let n = 12;
        let p = optimal_gaussian(n, NoiseModel::noiseless()).unwrap();
        let raw: Vec<f64> = HalfSpin::from_int(6)
            .magnetic_numbers()
            .map(|m| (m.value() * std::f64::consts::PI / (n as f64 + 2.0)).cos())
            .collect();
        let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        for (got, want) in p.coeffs().iter().zip(raw.iter()) {
            assert_relative_eq!(*got, want / norm, max_relative = 1e-12);
        }
    }

    #[test]
    fn probe_symmetric_under_m_negation() {
        let p = optimal_gaussian(9, NoiseModel::new(0.7).unwrap()).unwrap();
        let c = p.coeffs();
        for i in 0..c.len() {
            assert_relative_eq!(c[i], c[c.len() - 1 - i], max_relative = 1e-12);
        }
    }

    #[test]
    fn ground_profile_reduces_to_cosine_at_r_one() {
        // noiseless: the filtered ground state is the cosine profile and the
        // coefficient map is the identity, so the probe is the pure optimum
        let n = 10;
        let p = ground_profile_probe(n, NoiseModel::noiseless()).unwrap();
        let q = optimal_gaussian(n, NoiseModel::noiseless()).unwrap();
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn ground_profile_is_symmetric_and_positive() {
        let p = ground_profile_probe(41, NoiseModel::new(0.8).unwrap()).unwrap();
        let c = p.coeffs();
        for i in 0..c.len() {
            assert!(c[i] > 0.0);
            assert_relative_eq!(c[i], c[c.len() - 1 - i], max_relative = 1e-8);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            SymmetricProbe::new(2, vec![0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            SymmetricProbe::new(1, vec![-0.1, 0.9]),
            Err(Error::NegativeCoefficient { .. })
        ));
        assert!(matches!(
            SymmetricProbe::new(1, vec![0.9, 0.9]),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn probe_file_round_trip_and_rescaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.json");
        std::fs::write(
            &path,
            r#"{"n":2,"coeffs":[0.5,0.7071067811865476,0.5]}"#,
        )
        .unwrap();
        let p = from_file(&path).unwrap();
        assert_eq!(p.n(), 2);
        assert_relative_eq!(p.coeffs()[1], std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);

        // doubled coefficients load to the same probe after normalization
        std::fs::write(&path, r#"{"n":2,"coeffs":[1.0,1.4142135623730951,1.0]}"#).unwrap();
        let q = from_file(&path).unwrap();
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }

        // wrong length is an error
        std::fs::write(&path, r#"{"n":3,"coeffs":[1.0,1.0]}"#).unwrap();
        assert!(matches!(from_file(&path), Err(Error::LengthMismatch { .. })));
    }
}
