//! Spin-block decomposition of a dephased symmetric probe.
//!
//! A permutation-invariant n-qubit state subjected to uncorrelated dephasing
//! is block diagonal over total-spin sectors j. Each sector is characterized
//! by its probability p_j, its exact multiplicity nu_j, and a (2j+1)-dim
//! block state whose entries follow from closed-form sums of factorial
//! ratios. Everything is evaluated in log space so the construction stays
//! stable well beyond n = 500.

use crate::error::{Error, Result};
use crate::logspace::{LogFactorials, LogSum};
use crate::noise::NoiseModel;
use crate::probes::SymmetricProbe;
use crate::spin::{block_spins, HalfSpin};
use num_bigint::BigUint;
use rayon::prelude::*;
use std::sync::Arc;

/// Blocks with p_j below this are kept for bookkeeping but never optimized.
pub const DEGENERATE_THRESHOLD: f64 = 1e-14;

/// Logs above this cannot be exponentiated into a finite f64.
const MAX_FINITE_LOG: f64 = 709.0;

fn validate_block_labels(n: usize, j: HalfSpin) -> Result<()> {
    let j2 = j.doubled();
    if j2 < 0 || j2 > n as i64 || (j2 - n as i64) % 2 != 0 {
        return Err(Error::Domain(format!(
            "spin j = {j} invalid for n = {n} qubits"
        )));
    }
    Ok(())
}

fn validate_magnetic(j: HalfSpin, m: HalfSpin) -> Result<()> {
    if m.doubled().abs() > j.doubled() || (m.doubled() - j.doubled()) % 2 != 0 {
        return Err(Error::Domain(format!(
            "magnetic number m = {m} invalid for spin j = {j}"
        )));
    }
    Ok(())
}

/// ln D^j_{m',m}, the matrix element of the dephasing channel between
/// normalized spin states, for a table covering at least 2n.
///
/// The element is symmetric in (m', m); the factorial sum runs over all k
/// for which every factorial argument is nonnegative. Returns -inf for
/// elements that vanish identically (r = 0 off the diagonal, or j < J at
/// r = 1).
pub fn log_dephasing_coefficient(
    table: &LogFactorials,
    n: usize,
    j: HalfSpin,
    m_prime: HalfSpin,
    m: HalfSpin,
    r: f64,
) -> Result<f64> {
    validate_block_labels(n, j)?;
    validate_magnetic(j, m)?;
    validate_magnetic(j, m_prime)?;
    let (lo2, hi2) = if m.doubled() >= m_prime.doubled() {
        (m_prime.doubled(), m.doubled())
    } else {
        (m.doubled(), m_prime.doubled())
    };
    let j2 = j.doubled();
    let half = |x: i64| {
        debug_assert!(x >= 0 && x % 2 == 0);
        (x / 2) as usize
    };
    let jm = half(j2 - hi2); // j - m
    let jpm = half(j2 + hi2); // j + m
    let jmp = half(j2 - lo2); // j - m'
    let jpmp = half(j2 + lo2); // j + m'
    let dm = half(hi2 - lo2); // m - m'
    let sectors_below_max = half(n as i64 - j2); // J - j

    if r == 0.0 {
        // fully dephased channel is the identity on populations
        return Ok(if dm == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let ln_r = r.ln();
    let prefactor = if sectors_below_max == 0 {
        dm as f64 * ln_r
    } else if r == 1.0 {
        return Ok(f64::NEG_INFINITY);
    } else {
        sectors_below_max as f64 * (1.0 - r * r).ln() + dm as f64 * ln_r
    };

    let lsq = 0.5
        * (table.ln_factorial(jm)
            + table.ln_factorial(jpm)
            + table.ln_factorial(jmp)
            + table.ln_factorial(jpmp));
    let k_max = jm.min(jpmp);
    let mut acc = LogSum::new();
    for k in 0..=k_max {
        acc.add(
            lsq - table.ln_factorial(jm - k)
                - table.ln_factorial(jpmp - k)
                - table.ln_factorial(dm + k)
                - table.ln_factorial(k)
                + 2.0 * k as f64 * ln_r,
        );
    }
    Ok(prefactor + acc.value())
}

/// D^j_{m',m} in linear scale.
///
/// Errors with an overflow guard when the log magnitude cannot be
/// exponentiated; internal consumers work in log scale and never hit it.
pub fn dephasing_coefficient(
    n: usize,
    j: HalfSpin,
    m_prime: HalfSpin,
    m: HalfSpin,
    noise: NoiseModel,
) -> Result<f64> {
    let table = LogFactorials::new(2 * n + 2);
    let log = log_dephasing_coefficient(&table, n, j, m_prime, m, noise.r())?;
    if log > MAX_FINITE_LOG {
        return Err(Error::OverflowGuard { log_magnitude: log });
    }
    Ok(log.exp())
}

/// Exact multiplicity nu_j = C(n, J-j) (2j+1)/(J+j+1) of the spin-j sector.
pub fn multiplicity(n: usize, j: HalfSpin) -> Result<BigUint> {
    validate_block_labels(n, j)?;
    let k = ((n as i64 - j.doubled()) / 2) as u64;
    let mut binom = BigUint::from(1u32);
    for i in 0..k {
        binom = binom * BigUint::from(n as u64 - i) / BigUint::from(i + 1);
    }
    let numer = binom * BigUint::from((j.doubled() + 1) as u64);
    let denom = BigUint::from(((n as i64 + j.doubled()) / 2 + 1) as u64);
    debug_assert!((&numer % &denom) == BigUint::from(0u32));
    Ok(numer / denom)
}

/// The probe-independent tridiagonal block Hamiltonian H^j.
///
/// Diagonal entries are the constant 2; the off-diagonal couplings
/// a_m = D^j_{m,m+1} / sqrt(D^j_{m,m} D^j_{m+1,m+1}) lie in [0, 1] and
/// depend only on (n, j, r).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockHamiltonian {
    j: HalfSpin,
    couplings: Vec<f64>,
}

impl BlockHamiltonian {
    pub fn j(&self) -> HalfSpin {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.j.dimension()
    }

    /// Off-diagonal couplings a_m for m = -j..j-1, length 2j.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// y = H x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let a = &self.couplings;
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        for i in 0..a.len() {
            y[i] -= a[i] * x[i + 1];
            y[i + 1] -= a[i] * x[i];
        }
        y
    }

    /// <x|H|x>.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut q = 2.0 * x.iter().map(|v| v * v).sum::<f64>();
        for (i, a) in self.couplings.iter().enumerate() {
            q -= 2.0 * a * x[i] * x[i + 1];
        }
        q
    }
}

/// One irreducible spin sector of the dephased probe.
#[derive(Clone, Debug)]
pub struct DephasingBlock {
    j: HalfSpin,
    n: usize,
    r: f64,
    p: f64,
    log_p: f64,
    nu: BigUint,
    diag: Vec<f64>,
    log_diag: Vec<f64>,
    offdiag: Vec<f64>,
    log_amp: Vec<f64>,
    log_norm: f64,
    degenerate: bool,
    state_defined: bool,
    table: Arc<LogFactorials>,
}

impl DephasingBlock {
    pub fn j(&self) -> HalfSpin {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.j.dimension()
    }

    /// Probability p_j of the probe landing in this sector.
    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn log_probability(&self) -> f64 {
        self.log_p
    }

    /// Exact integer multiplicity of the sector.
    pub fn multiplicity(&self) -> &BigUint {
        &self.nu
    }

    /// Populations d_m = rho^j_{m,m}, ascending m, summing to 1.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// ln d_m; tails far below f64 linear range stay meaningful here.
    pub fn log_diag(&self) -> &[f64] {
        &self.log_diag
    }

    /// Nearest-neighbor coherences o_m = rho^j_{m,m+1}, length 2j.
    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// True when p_j < DEGENERATE_THRESHOLD; such blocks are kept for the
    /// probability bookkeeping but carry no weight worth allocating.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// True when the normalized block state exists (p_j > 0 in log scale).
    /// Exponentially small sectors keep a well-conditioned state: the
    /// maximal-spin block stays solvable at any n even though p_J decays
    /// like 2^-n.
    pub fn has_state(&self) -> bool {
        self.state_defined
    }

    /// Dense accessor rho^j_{m',m} for the simulator and oracles.
    pub fn entry(&self, m_prime: HalfSpin, m: HalfSpin) -> Result<f64> {
        if !self.state_defined {
            return Err(Error::DegenerateBlock { j: self.j });
        }
        validate_magnetic(self.j, m)?;
        validate_magnetic(self.j, m_prime)?;
        let ip = self.j.index_of(m_prime);
        let i = self.j.index_of(m);
        let la = self.log_amp[ip] + self.log_amp[i];
        if la == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let ld = log_dephasing_coefficient(&self.table, self.n, self.j, m_prime, m, self.r)?;
        Ok((la + ld - self.log_norm).exp())
    }
}

struct BlockScratch {
    log_diag_d: Vec<f64>,
    log_off_d: Vec<f64>,
}

fn block_coefficients(
    table: &LogFactorials,
    n: usize,
    j: HalfSpin,
    r: f64,
) -> Result<BlockScratch> {
    let dim = j.dimension();
    let ms: Vec<HalfSpin> = j.magnetic_numbers().collect();
    let mut log_diag_d = Vec::with_capacity(dim);
    for &m in &ms {
        log_diag_d.push(log_dephasing_coefficient(table, n, j, m, m, r)?);
    }
    let mut log_off_d = Vec::with_capacity(dim.saturating_sub(1));
    for w in ms.windows(2) {
        log_off_d.push(log_dephasing_coefficient(table, n, j, w[0], w[1], r)?);
    }
    Ok(BlockScratch {
        log_diag_d,
        log_off_d,
    })
}

/// Probability p_j = nu_j sum_m c_m^2 D^j_{m,m} / C(n, J-m) of spin sector j.
pub fn block_probability(
    probe: &SymmetricProbe,
    noise: NoiseModel,
    j: HalfSpin,
) -> Result<f64> {
    let n = probe.n();
    validate_block_labels(n, j)?;
    let table = Arc::new(LogFactorials::new(2 * n + 2));
    let scratch = block_coefficients(&table, n, j, noise.r())?;
    Ok(assemble_block(probe, noise, j, &table, scratch)?.p)
}

fn assemble_block(
    probe: &SymmetricProbe,
    noise: NoiseModel,
    j: HalfSpin,
    table: &Arc<LogFactorials>,
    scratch: BlockScratch,
) -> Result<DephasingBlock> {
    let n = probe.n();
    let total = probe.total_spin();
    let dim = j.dimension();
    let ms: Vec<HalfSpin> = j.magnetic_numbers().collect();

    // log amplitude ln c_m - (1/2) ln C(n, J-m) per in-block index
    let log_amp: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let c = probe.coeffs()[total.index_of(m)];
            if c > 0.0 {
                c.ln() - 0.5 * table.ln_binomial(n, ((n as i64 - m.doubled()) / 2) as usize)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    // t_m = 2 log_amp + ln D_mm; block norm is their log-sum
    let t: Vec<f64> = (0..dim)
        .map(|i| 2.0 * log_amp[i] + scratch.log_diag_d[i])
        .collect();
    let mut acc = LogSum::new();
    for &v in &t {
        acc.add(v);
    }
    let log_norm = acc.value();

    let nu = multiplicity(n, j)?;
    let log_nu = big_log(&nu);
    let log_p = log_nu + log_norm;
    let p = if log_p == f64::NEG_INFINITY {
        0.0
    } else {
        log_p.exp()
    };
    let degenerate = !(p >= DEGENERATE_THRESHOLD);
    let state_defined = log_norm > f64::NEG_INFINITY;

    let (diag, log_diag, offdiag) = if !state_defined {
        (vec![0.0; dim], vec![f64::NEG_INFINITY; dim], vec![0.0; dim.saturating_sub(1)])
    } else {
        let log_diag: Vec<f64> = t.iter().map(|v| v - log_norm).collect();
        let diag: Vec<f64> = log_diag.iter().map(|v| v.exp()).collect();
        let offdiag: Vec<f64> = (0..dim.saturating_sub(1))
            .map(|i| {
                let la = log_amp[i] + log_amp[i + 1];
                if la == f64::NEG_INFINITY {
                    0.0
                } else {
                    (la + scratch.log_off_d[i] - log_norm).exp()
                }
            })
            .collect();
        (diag, log_diag, offdiag)
    };

    Ok(DephasingBlock {
        j,
        n,
        r: noise.r(),
        p,
        log_p,
        nu,
        diag,
        log_diag,
        offdiag,
        log_amp,
        log_norm,
        degenerate,
        state_defined,
        table: Arc::clone(table),
    })
}

fn big_log(value: &BigUint) -> f64 {
    // exact for anything fitting u64/f64; falls back to bit-shifted mantissa
    let bits = value.bits();
    if bits <= 53 {
        let v: u64 = value.try_into().ok().unwrap_or(u64::MAX);
        (v as f64).ln()
    } else {
        let shift = bits - 53;
        let top: BigUint = value >> shift;
        let v: u64 = (&top).try_into().unwrap();
        (v as f64).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Decomposes the dephased probe into all spin sectors, ascending j.
pub fn build_blocks(probe: &SymmetricProbe, noise: NoiseModel) -> Result<Vec<DephasingBlock>> {
    let n = probe.n();
    let table: Arc<LogFactorials> = Arc::new(LogFactorials::new(2 * n + 2));
    let spins: Vec<HalfSpin> = block_spins(n).collect();
    spins
        .into_par_iter()
        .map(|j| {
            let scratch = block_coefficients(&table, n, j, noise.r())?;
            assemble_block(probe, noise, j, &table, scratch)
        })
        .collect()
}

/// H^j for sector j; a pure function of (n, j, r), identical for all probes.
pub fn coupling_matrix(n: usize, j: HalfSpin, noise: NoiseModel) -> Result<BlockHamiltonian> {
    validate_block_labels(n, j)?;
    let table = LogFactorials::new(2 * n + 2);
    let scratch = block_coefficients(&table, n, j, noise.r())?;
    Ok(hamiltonian_from_scratch(j, &scratch))
}

fn hamiltonian_from_scratch(j: HalfSpin, scratch: &BlockScratch) -> BlockHamiltonian {
    let dim = j.dimension();
    let couplings: Vec<f64> = (0..dim.saturating_sub(1))
        .map(|i| {
            let l = scratch.log_off_d[i]
                - 0.5 * (scratch.log_diag_d[i] + scratch.log_diag_d[i + 1]);
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                l.exp()
            }
        })
        .collect();
    BlockHamiltonian { j, couplings }
}

/// Blocks and their Hamiltonians built in one pass over the coefficient table.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub blocks: Vec<DephasingBlock>,
    pub hams: Vec<BlockHamiltonian>,
}

/// Builds the full decomposition, sharing the coefficient table between the
/// block states and the Hamiltonians.
pub fn decompose(probe: &SymmetricProbe, noise: NoiseModel) -> Result<Decomposition> {
    let n = probe.n();
    let table: Arc<LogFactorials> = Arc::new(LogFactorials::new(2 * n + 2));
    let spins: Vec<HalfSpin> = block_spins(n).collect();
    let pairs: Result<Vec<(DephasingBlock, BlockHamiltonian)>> = spins
        .into_par_iter()
        .map(|j| {
            let scratch = block_coefficients(&table, n, j, noise.r())?;
            let ham = hamiltonian_from_scratch(j, &scratch);
            let block = assemble_block(probe, noise, j, &table, scratch)?;
            Ok((block, ham))
        })
        .collect();
    let (blocks, hams) = pairs?.into_iter().unzip();
    Ok(Decomposition { blocks, hams })
}
