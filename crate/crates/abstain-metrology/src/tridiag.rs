//! Symmetric tridiagonal numerics: Sturm bisection, inverse iteration and
//! pivoted shifted solves.
//!
//! Block Hamiltonians are tridiagonal with constant diagonal, so every
//! eigenvalue query in this crate reduces to O(dim) Sturm counts and O(dim)
//! solves. Dimensions up to a few thousand are routine.

use crate::error::{Error, Result};

/// Number of eigenvalues of the tridiagonal (diag, off) strictly below
/// `shift`, by counting negative pivots of the LDL^T factorization.
pub fn sturm_count(diag: &[f64], off: &[f64], shift: f64) -> usize {
    let n = diag.len();
    if n == 0 {
        return 0;
    }
    debug_assert_eq!(off.len(), n - 1);
    let guard = 1e-300;
    let mut count = 0usize;
    let mut q = diag[0] - shift;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let q_safe = if q.abs() < guard {
            if q >= 0.0 {
                guard
            } else {
                -guard
            }
        } else {
            q
        };
        q = (diag[i] - shift) - off[i - 1] * off[i - 1] / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin_bounds(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    (lo, hi)
}

/// Smallest eigenvalue by Sturm bisection, accurate to machine precision
/// relative to the spectral scale.
pub fn smallest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    debug_assert!(n > 0);
    if n == 1 {
        return diag[0];
    }
    let (mut lo, mut hi) = gershgorin_bounds(diag, off);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    lo -= 1e-12 * scale;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves (T - shift I) x = rhs with partial pivoting (dgtsv-style), safe for
/// shifts next to an eigenvalue.
pub fn solve_shifted(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return Vec::new();
    }
    let guard = |v: f64| {
        if v.abs() < 1e-300 {
            1e-300_f64.copysign(if v == 0.0 { 1.0 } else { v })
        } else {
            v
        }
    };
    // row i carries (d[i], du[i], du2[i]) at columns (i, i+1, i+2)
    let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
    let mut du = vec![0.0_f64; n];
    let mut du2 = vec![0.0_f64; n];
    let dl: Vec<f64> = off.to_vec();
    for i in 0..n - 1 {
        du[i] = off[i];
    }
    let mut b: Vec<f64> = rhs.to_vec();

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            let fact = dl[i] / guard(d[i]);
            d[i + 1] -= fact * du[i];
            du[i + 1] -= fact * du2[i];
            b[i + 1] -= fact * b[i];
        } else {
            // swap rows i and i+1, then eliminate
            let fact = d[i] / dl[i];
            let (old_d1, old_du0, old_du1, old_du20) = (d[i + 1], du[i], du[i + 1], du2[i]);
            d[i] = dl[i];
            du[i] = old_d1;
            du2[i] = old_du1;
            d[i + 1] = old_du0 - fact * old_d1;
            du[i + 1] = old_du20 - fact * old_du1;
            b.swap(i, i + 1);
            b[i + 1] -= fact * b[i];
        }
    }

    let mut x = b;
    x[n - 1] /= guard(d[n - 1]);
    if n >= 2 {
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / guard(d[n - 2]);
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / guard(d[i]);
    }
    x
}

/// Smallest eigenpair (eigenvalue, unit eigenvector with nonnegative sum)
/// via bisection plus inverse iteration with Rayleigh polish.
pub fn smallest_eigenpair(diag: &[f64], off: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::Domain("empty matrix".into()));
    }
    if n == 1 {
        return Ok((diag[0], vec![1.0]));
    }
    let lambda = smallest_eigenvalue(diag, off);
    let scale = diag
        .iter()
        .chain(off.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut best_residual = f64::INFINITY;
    let mut best = (lambda, v.clone());
    for attempt in 0..60 {
        let shift = lambda - scale * 1e-14 * (1.0 + attempt as f64);
        let w = solve_shifted(diag, off, shift, &v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            // re-seed and retry, the solve degenerated
            for (i, x) in v.iter_mut().enumerate() {
                *x = 1.0 + (i as f64 * 0.618).sin().abs();
            }
            let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm_v);
            continue;
        }
        v = w.iter().map(|x| x / norm).collect();
        // Rayleigh quotient and residual
        let (rq, res) = rayleigh_and_residual(diag, off, &v);
        if res < best_residual {
            best_residual = res;
            best = (rq, v.clone());
        }
        if res <= 1e-12 * scale {
            break;
        }
    }
    let (rq, mut vec_out) = best;
    if best_residual > 1e-10 * scale {
        return Err(Error::NonConvergence {
            context: "inverse iteration for smallest eigenpair",
            iterations: 60,
        });
    }
    if vec_out.iter().sum::<f64>() < 0.0 {
        vec_out.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((rq, vec_out))
}

fn rayleigh_and_residual(diag: &[f64], off: &[f64], v: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut hv = vec![0.0; n];
    for i in 0..n {
        hv[i] = diag[i] * v[i];
        if i > 0 {
            hv[i] += off[i - 1] * v[i - 1];
        }
        if i + 1 < n {
            hv[i] += off[i] * v[i + 1];
        }
    }
    let rq: f64 = hv.iter().zip(v).map(|(a, b)| a * b).sum();
    let res = hv
        .iter()
        .zip(v)
        .map(|(a, b)| (a - rq * b) * (a - rq * b))
        .sum::<f64>()
        .sqrt();
    (rq, res)
}
