//! Per-block uncertainty minimization.
//!
//! Within one spin sector the optimal filtered profile solves
//!
//! ```text
//!     minimize  <xi| H^j |xi>
//!     subject to ||xi|| = 1,  0 <= xi_m <= sqrt(d_m / s_j)
//! ```
//!
//! For s_j = 1 the constraints pin xi to the deterministic profile sqrt(d);
//! for s_j below the block's critical success probability the box is slack
//! and the answer is the minimal eigenpair of H^j. In between, the solution
//! saturates the bound on a coincidence set and is an eigenvector of the
//! bordered free-set problem elsewhere; we find it with a primal active-set
//! iteration whose free-set subproblem is a shifted tridiagonal solve plus a
//! one-dimensional secular equation in the norm multiplier.

use crate::error::{Error, Result};
use crate::spin::HalfSpin;
use crate::spinblocks::{BlockHamiltonian, DephasingBlock};
use crate::tridiag;
use std::collections::HashSet;

/// Feasibility slack on the box constraints.
const FEAS_TOL: f64 = 1e-13;
/// Multipliers may dip this far below zero before a constraint is released.
const MULTIPLIER_TOL: f64 = 1e-11;
/// Relative tolerance of the secular root in the norm multiplier.
const SECULAR_TOL: f64 = 1e-12;

/// Optimal filtered profile of one block at fixed block success probability.
#[derive(Clone, Debug)]
pub struct BlockSolution {
    j: HalfSpin,
    s: f64,
    sigma2: f64,
    xi: Vec<f64>,
    filter: Vec<f64>,
    coincidence: Vec<bool>,
    norm_multiplier: f64,
}

impl BlockSolution {
    pub fn j(&self) -> HalfSpin {
        self.j
    }

    /// Block success probability this profile was solved at.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Block uncertainty <xi|H|xi>.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Normalized filtered profile, entries >= 0.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Filter amplitudes f_m = xi_m sqrt(s / d_m), in [0, 1].
    pub fn filter(&self) -> &[f64] {
        &self.filter
    }

    /// True where the box constraint xi_m = sqrt(d_m / s) is active.
    pub fn coincidence_mask(&self) -> &[bool] {
        &self.coincidence
    }

    /// Lagrange multiplier of the normalization constraint; equals the slope
    /// d(s sigma2_j(s))/ds at this s.
    pub fn norm_multiplier(&self) -> f64 {
        self.norm_multiplier
    }
}

/// Uncertainty of the no-filter (f = 1) strategy: 2 - 2 sum_m o_m.
pub fn deterministic_block_variance(block: &DephasingBlock) -> Result<f64> {
    if !block.has_state() {
        return Err(Error::DegenerateBlock { j: block.j() });
    }
    Ok(2.0 - 2.0 * block.offdiag().iter().sum::<f64>())
}

/// Minimal eigenpair of H^j; the eigenvector is unit norm with nonnegative
/// entries (H = 2I minus a nonnegative tridiagonal, so Perron-Frobenius
/// applies on each coupled segment).
pub fn unconstrained_minimum(ham: &BlockHamiltonian) -> Result<(f64, Vec<f64>)> {
    let dim = ham.dim();
    let diag = vec![2.0; dim];
    let off: Vec<f64> = ham.couplings().iter().map(|a| -a).collect();
    tridiag::smallest_eigenpair(&diag, &off)
}

/// Critical block success probability s_j* = min_m d_m / xi_m^2 over
/// indices with xi_m > 0.
pub fn critical_block_success(block: &DephasingBlock, xi: &[f64]) -> Result<f64> {
    Ok(log_critical_block_success(block, xi)?.exp().min(1.0))
}

/// ln s_j*, stable when tail populations underflow linear f64 range.
pub fn log_critical_block_success(block: &DephasingBlock, xi: &[f64]) -> Result<f64> {
    if !block.has_state() {
        return Err(Error::DegenerateBlock { j: block.j() });
    }
    if xi.len() != block.dim() {
        return Err(Error::Domain(format!(
            "profile length {} does not match block dimension {}",
            xi.len(),
            block.dim()
        )));
    }
    let mut best = f64::INFINITY;
    for (i, &x) in xi.iter().enumerate() {
        if x > 0.0 {
            best = best.min(block.log_diag()[i] - 2.0 * x.ln());
        }
    }
    if best == f64::INFINITY {
        return Err(Error::ZeroVector);
    }
    Ok(best.min(0.0))
}

/// Solves the box-constrained block problem at success probability `s`.
///
/// For s at or below the block critical value the unconstrained optimum is
/// returned unchanged (extra abstention buys nothing); the reported s stays
/// as requested.
pub fn constrained_block_solve(
    block: &DephasingBlock,
    ham: &BlockHamiltonian,
    s: f64,
) -> Result<BlockSolution> {
    constrained_block_solve_warm(block, ham, s, None)
}

/// Same as [`constrained_block_solve`], seeding the active set from a
/// previous nearby solve.
pub fn constrained_block_solve_warm(
    block: &DephasingBlock,
    ham: &BlockHamiltonian,
    s: f64,
    warm_active: Option<&[bool]>,
) -> Result<BlockSolution> {
    if !block.has_state() {
        return Err(Error::DegenerateBlock { j: block.j() });
    }
    if !(s > 0.0 && s <= 1.0 + 1e-12) {
        return Err(Error::InvalidSuccess { s });
    }
    let s = s.min(1.0);
    let dim = block.dim();
    debug_assert_eq!(ham.dim(), dim);
    let d = block.diag();
    let bounds: Vec<f64> = d.iter().map(|&v| (v / s).sqrt()).collect();

    if s >= 1.0 - 1e-12 {
        return Ok(deterministic_solution(block, ham, 1.0));
    }

    let (lambda_min, ground) = unconstrained_minimum(ham)?;
    if ground
        .iter()
        .zip(&bounds)
        .all(|(x, u)| *x <= u + FEAS_TOL)
    {
        return Ok(assemble_solution(
            block,
            ham,
            s,
            ground,
            vec![false; dim],
            lambda_min,
        ));
    }

    active_set_solve(block, ham, s, &bounds, warm_active)
}

/// Variant for callers that already know `s` sits strictly above the block
/// critical value, so the unconstrained eigensolve can be skipped.
pub(crate) fn constrained_solve_above_critical(
    block: &DephasingBlock,
    ham: &BlockHamiltonian,
    s: f64,
    warm_active: Option<&[bool]>,
) -> Result<BlockSolution> {
    if !block.has_state() {
        return Err(Error::DegenerateBlock { j: block.j() });
    }
    if !(s > 0.0 && s <= 1.0 + 1e-12) {
        return Err(Error::InvalidSuccess { s });
    }
    let s = s.min(1.0);
    if s >= 1.0 - 1e-12 {
        return Ok(deterministic_solution(block, ham, 1.0));
    }
    let bounds: Vec<f64> = block.diag().iter().map(|&v| (v / s).sqrt()).collect();
    active_set_solve(block, ham, s, &bounds, warm_active)
}

fn deterministic_solution(block: &DephasingBlock, ham: &BlockHamiltonian, s: f64) -> BlockSolution {
    let xi: Vec<f64> = block.diag().iter().map(|v| v.sqrt()).collect();
    let sigma2 = ham.quadratic_form(&xi);
    assemble_solution(block, ham, s, xi, vec![true; block.dim()], sigma2)
}

/// Solution carrying the unconstrained eigenprofile at a given block success
/// probability; used by the allocator for blocks resting in their flat
/// region, where the eigenpair is already known.
pub(crate) fn unconstrained_block_solution(
    block: &DephasingBlock,
    ham: &BlockHamiltonian,
    s: f64,
    ground: &[f64],
    lambda: f64,
) -> BlockSolution {
    assemble_solution(
        block,
        ham,
        s,
        ground.to_vec(),
        vec![false; block.dim()],
        lambda,
    )
}

fn assemble_solution(
    block: &DephasingBlock,
    ham: &BlockHamiltonian,
    s: f64,
    xi: Vec<f64>,
    coincidence: Vec<bool>,
    norm_multiplier: f64,
) -> BlockSolution {
    let sigma2 = ham.quadratic_form(&xi);
    let filter: Vec<f64> = xi
        .iter()
        .zip(block.diag())
        .map(|(&x, &dm)| {
            if dm > 0.0 {
                (x * (s / dm).sqrt()).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    BlockSolution {
        j: block.j(),
        s,
        sigma2,
        xi,
        filter,
        coincidence,
        norm_multiplier,
    }
}

/// Free-set subproblem: minimize the quadratic over the slice with the
/// actives pinned at their bounds and the free part constrained to the
/// sphere of leftover norm.
struct FreeSolve {
    xi_free: Vec<f64>,
    lambda: f64,
}

fn solve_free_subproblem(
    couplings: &[f64],
    free: &[usize],
    bounds: &[f64],
    active: &[bool],
    rho2: f64,
) -> Result<FreeSolve> {
    let nf = free.len();
    debug_assert!(nf > 0 && rho2 > 0.0);
    let dim = bounds.len();
    let fd = vec![2.0_f64; nf];
    let mut fo = vec![0.0_f64; nf.saturating_sub(1)];
    for k in 0..nf.saturating_sub(1) {
        if free[k + 1] == free[k] + 1 {
            fo[k] = -couplings[free[k]];
        }
    }
    // coupling of the free slice to the pinned boundary values
    let mut neg_g = vec![0.0_f64; nf];
    for (k, &i) in free.iter().enumerate() {
        if i > 0 && active[i - 1] {
            neg_g[k] += couplings[i - 1] * bounds[i - 1];
        }
        if i + 1 < dim && active[i + 1] {
            neg_g[k] += couplings[i] * bounds[i + 1];
        }
    }
    let g_norm = neg_g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lambda_min = tridiag::smallest_eigenvalue(&fd, &fo);

    if g_norm < 1e-300 {
        let (_, v) = tridiag::smallest_eigenpair(&fd, &fo)?;
        let rho = rho2.sqrt();
        return Ok(FreeSolve {
            xi_free: v.iter().map(|x| x * rho).collect(),
            lambda: lambda_min,
        });
    }

    let phi = |lam: f64| -> (Vec<f64>, f64) {
        let x = tridiag::solve_shifted(&fd, &fo, lam, &neg_g);
        let norm2 = x.iter().map(|v| v * v).sum::<f64>();
        (x, norm2)
    };

    let scale = lambda_min.abs().max(1.0);
    let mut hi = lambda_min - 1e-14 * scale;
    let (x_hi, phi_hi) = phi(hi);
    if phi_hi < rho2 {
        // hard case: pseudo-solution plus a ground-state component
        let (_, v) = tridiag::smallest_eigenpair(&fd, &fo)?;
        let dot: f64 = x_hi.iter().zip(&v).map(|(a, b)| a * b).sum();
        let tau = (rho2 - phi_hi).max(0.0).sqrt();
        let sign = if dot >= 0.0 { 1.0 } else { -1.0 };
        let xi_free: Vec<f64> = x_hi
            .iter()
            .zip(&v)
            .map(|(a, b)| a + sign * tau * b)
            .collect();
        return Ok(FreeSolve {
            xi_free,
            lambda: lambda_min,
        });
    }

    let mut lo = lambda_min - (1.0 + g_norm / rho2.sqrt()).max(1.0);
    for _ in 0..200 {
        if phi(lo).1 <= rho2 {
            break;
        }
        lo = lambda_min - 2.0 * (lambda_min - lo);
    }

    // safeguarded Newton on 1/||x(lam)|| - 1/rho, monotone on (lo, hi)
    let rho = rho2.sqrt();
    let mut lam = 0.5 * (lo + hi);
    let mut x = Vec::new();
    for _ in 0..200 {
        let (xc, n2) = phi(lam);
        x = xc;
        if n2 > rho2 {
            hi = lam;
        } else {
            lo = lam;
        }
        let norm = n2.sqrt();
        if (norm - rho).abs() <= SECULAR_TOL * rho {
            break;
        }
        // d(n2)/dlam = 2 x^T (T - lam)^{-1} x
        let y = tridiag::solve_shifted(&fd, &fo, lam, &x);
        let dn2: f64 = 2.0 * x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let psi = 1.0 / norm - 1.0 / rho;
        let dpsi = -0.5 * dn2 / (n2 * norm);
        let step = if dpsi != 0.0 { psi / dpsi } else { 0.0 };
        let cand = lam - step;
        lam = if cand > lo && cand < hi {
            cand
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * scale {
            break;
        }
    }
    // exact norm by final rescale
    let n2: f64 = x.iter().map(|v| v * v).sum();
    let correction = (rho2 / n2).sqrt();
    Ok(FreeSolve {
        xi_free: x.iter().map(|v| v * correction).collect(),
        lambda: lam,
    })
}

fn active_set_solve(
    block: &DephasingBlock,
    ham: &BlockHamiltonian,
    s: f64,
    bounds: &[f64],
    warm_active: Option<&[bool]>,
) -> Result<BlockSolution> {
    let dim = block.dim();
    let couplings = ham.couplings();
    let fixed_zero: Vec<bool> = bounds.iter().map(|&u| u <= 0.0).collect();

    let mut active: Vec<bool> = match warm_active {
        Some(w) if w.len() == dim => w.to_vec(),
        _ => vec![true; dim],
    };
    for i in 0..dim {
        if fixed_zero[i] {
            active[i] = true;
        }
    }

    let max_iter = 60 * dim + 200;
    let mut visited: HashSet<u64> = HashSet::new();
    let mut bland = false;

    for iteration in 0..max_iter {
        let key = hash_mask(&active);
        if !visited.insert(key) {
            bland = true;
        }

        let active_norm2: f64 = (0..dim)
            .filter(|&i| active[i])
            .map(|i| bounds[i] * bounds[i])
            .sum();
        let rho2 = 1.0 - active_norm2;
        let free: Vec<usize> = (0..dim).filter(|&i| !active[i]).collect();

        if free.is_empty() || rho2 <= 1e-15 {
            // all pinned (or no norm left): must release something
            let release = pick_release_at_estimate(ham, bounds, &active, &fixed_zero, bland);
            match release {
                Some(i) => {
                    active[i] = false;
                    continue;
                }
                None => {
                    return Err(Error::NonConvergence {
                        context: "active-set release with no releasable constraint",
                        iterations: iteration,
                    })
                }
            }
        }

        let sol = solve_free_subproblem(couplings, &free, bounds, &active, rho2)?;

        // primal feasibility on the free slice
        let mut worst_violation = 0.0;
        let mut worst_index = None;
        for (k, &i) in free.iter().enumerate() {
            let v = sol.xi_free[k] - bounds[i];
            if v > FEAS_TOL && v > worst_violation {
                worst_violation = v;
                worst_index = Some(i);
            }
        }
        if bland {
            let lowest = free
                .iter()
                .zip(&sol.xi_free)
                .find(|(&i, &x)| x > bounds[i] + FEAS_TOL)
                .map(|(&i, _)| i);
            if let Some(i) = lowest {
                active[i] = true;
                continue;
            }
        } else if let Some(i) = worst_index {
            active[i] = true;
            continue;
        }

        // assemble the candidate and check dual feasibility on the actives
        let mut xi = vec![0.0_f64; dim];
        for i in 0..dim {
            if active[i] {
                xi[i] = bounds[i];
            }
        }
        for (k, &i) in free.iter().enumerate() {
            xi[i] = sol.xi_free[k].max(0.0);
        }
        let h_xi = ham.apply(&xi);
        let mut release = None;
        let mut most_negative = -MULTIPLIER_TOL;
        for i in 0..dim {
            if !active[i] || fixed_zero[i] {
                continue;
            }
            let mu = 2.0 * (sol.lambda * bounds[i] - h_xi[i]);
            if bland {
                if mu < -MULTIPLIER_TOL {
                    release = Some(i);
                    break;
                }
            } else if mu < most_negative {
                most_negative = mu;
                release = Some(i);
            }
        }
        if let Some(i) = release {
            active[i] = false;
            continue;
        }

        return Ok(assemble_solution(block, ham, s, xi, active, sol.lambda));
    }
    Err(Error::NonConvergence {
        context: "active-set iteration cap (cycle diagnostics exhausted)",
        iterations: max_iter,
    })
}

fn pick_release_at_estimate(
    ham: &BlockHamiltonian,
    bounds: &[f64],
    active: &[bool],
    fixed_zero: &[bool],
    bland: bool,
) -> Option<usize> {
    let dim = bounds.len();
    let norm2: f64 = bounds.iter().map(|u| u * u).sum();
    if norm2 <= 0.0 {
        return None;
    }
    let h_u = ham.apply(bounds);
    let rayleigh =
        bounds.iter().zip(&h_u).map(|(a, b)| a * b).sum::<f64>() / norm2;
    let mut best = None;
    let mut best_mu = f64::INFINITY;
    for i in 0..dim {
        if !active[i] || fixed_zero[i] {
            continue;
        }
        let mu = 2.0 * (rayleigh * bounds[i] - h_u[i]);
        if bland {
            return Some(i);
        }
        if mu < best_mu {
            best_mu = mu;
            best = Some(i);
        }
    }
    best
}

fn hash_mask(mask: &[bool]) -> u64 {
    // FNV-1a over the bit pattern
    let mut h = 0xcbf29ce484222325_u64;
    for chunk in mask.chunks(64) {
        let mut word = 0_u64;
        for (b, &v) in chunk.iter().enumerate() {
            if v {
                word |= 1 << b;
            }
        }
        h ^= word;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
