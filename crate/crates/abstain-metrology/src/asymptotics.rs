//! Closed-form asymptotic expressions for cross-validation and large-n
//! extrapolation.
//!
//! Every formula is exposed exactly as derived, with domain guards and no
//! silent switching between the pure-state and noisy regimes; callers pick
//! the regime. The continuum potential reproduces the discrete couplings as
//! 2 j^2 (1 - a_m) for large j.

use crate::error::{Error, Result};

/// Continuum potential V^j(x) = j (1-r^2) / (2 r sqrt(1 - (1-r^2) x^2)) on
/// the box x in [-1, 1].
pub fn potential(j: f64, r: f64, x: f64) -> Result<f64> {
    if !(0.0 < r && r <= 1.0) {
        return Err(Error::Domain(format!("potential needs r in (0, 1], got {r}")));
    }
    if x.abs() > 1.0 {
        return Err(Error::Domain(format!("potential evaluated outside the box: x = {x}")));
    }
    if r == 1.0 {
        return Ok(0.0);
    }
    let w = 1.0 - (1.0 - r * r) * x * x;
    if w <= 0.0 {
        return Err(Error::Domain(format!(
            "potential singular at x = {x} for r = {r}"
        )));
    }
    Ok(j * (1.0 - r * r) / (2.0 * r * w.sqrt()))
}

/// Potential depth V^j_0 = j (1-r^2) / (2r) at the bottom of the box.
pub fn potential_depth(j: f64, r: f64) -> f64 {
    j * (1.0 - r * r) / (2.0 * r)
}

/// Harmonic frequency squared of the expanded potential,
/// omega_j^2 = j (1-r^2)^2 / (4r).
pub fn harmonic_frequency_sq(j: f64, r: f64) -> f64 {
    j * (1.0 - r * r).powi(2) / (4.0 * r)
}

/// Ultimate post-selected uncertainty
/// sigma2_ult = (1-r^2)/(n r) (1 + sqrt(2r/n)).
///
/// Degenerates to 0 at r = 1; the noiseless limit is governed by
/// [`pure_heisenberg`] instead.
pub fn ultimate_bound(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    (1.0 - r * r) / (nf * r) * (1.0 + (2.0 * r / nf).sqrt())
}

/// Finite-abstention approximation
/// sigma2 = (1 - (r^2/2) (1-S)) / (n r^2), good for moderate abstention.
pub fn finite_s_approx(n: usize, r: f64, s: f64) -> f64 {
    let s_bar = 1.0 - s;
    (1.0 - 0.5 * r * r * s_bar) / (n as f64 * r * r)
}

/// Deterministic uncertainty of the optimal probe,
/// sigma2_op(1) = (1-r^2)/(n r^2) + 2 sqrt(1-r^2) / (n^{3/2} r).
pub fn optimal_deterministic_bound(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    (1.0 - r * r) / (nf * r * r) + 2.0 * (1.0 - r * r).sqrt() / (nf.powf(1.5) * r)
}

/// Pure-state Heisenberg-limited uncertainty pi^2 / n^2 (asymptotic form of
/// the free-chain ground energy 2 - 2 cos(pi/(n+2))).
pub fn pure_heisenberg(n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::PI * std::f64::consts::PI / (nf * nf)
}

/// The three exponential rates governing the success probabilities of
/// maximal-spin post-selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingExponents {
    /// d ln s_j* / dj = -2 ln(1+r): in-block critical success decay.
    pub block_critical_per_j: f64,
    /// d ln p_J / dn = -(ln 2 - ln(1+r)): maximal-spin weight decay.
    pub max_spin_weight_per_n: f64,
    /// d ln (p_J s_J*) / dn = -ln 2: overall critical success decay,
    /// independent of the noise strength.
    pub critical_success_per_n: f64,
}

/// Asymptotic log-slopes used by the scaling regression tests.
pub fn scaling_exponents(r: f64) -> ScalingExponents {
    ScalingExponents {
        block_critical_per_j: -2.0 * (1.0 + r).ln(),
        max_spin_weight_per_n: -(2.0_f64.ln() - (1.0 + r).ln()),
        critical_success_per_n: -(2.0_f64.ln()),
    }
}
