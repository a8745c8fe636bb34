//! Small-n ground truth in the 2^n computational basis, plus a first-order
//! semidefinite cross-check of the allocation.
//!
//! Everything here exists to validate the spin-basis pipeline by an
//! independent route: the dephasing channel acts entrywise on dense
//! matrices, uncertainty and success probability reduce to Kronecker-delta
//! sums over bit strings, and an explicitly constructed angular-momentum
//! basis (sequential coupling, one family per multiplicity path) maps block
//! filters to dense measurement seeds.
//!
//! [`symmetrize`] witnesses that restricting to symmetric probes and seeds
//! loses nothing. Probe-ancilla entanglement cannot help either: encoding
//! the probe into a larger system is a channel that can be absorbed into
//! the measurement (a Neumark dilation of some measurement on the probe
//! alone), so it is already covered by the optimization over seeds. That
//! argument is structural and carries no computational content, hence no
//! test.

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::probes::SymmetricProbe;
use crate::spin::HalfSpin;
use crate::spinblocks::{BlockHamiltonian, DephasingBlock};
use nalgebra::{DMatrix, DVector};

/// Dense oracle hard cap: 2^12 x 2^12 entries.
pub const MAX_DENSE_QUBITS: usize = 12;
/// Brute-force uncertainty cap.
pub const MAX_BRUTE_QUBITS: usize = 10;
/// Permutation-average cap (n! terms).
pub const MAX_SYMMETRIZE_QUBITS: usize = 6;

fn qubit_count(dim: usize) -> Result<usize> {
    let n = dim.trailing_zeros() as usize;
    if dim == 0 || dim != 1 << n {
        return Err(Error::Domain(format!("dimension {dim} is not a power of two")));
    }
    Ok(n)
}

/// Applies the dephasing channel to a dense state: entry (b, b') is scaled
/// by r^{hamming(b xor b')}. The map is entrywise, so Hermiticity, trace
/// and positivity are preserved.
pub fn dense_dephase(state: &DMatrix<f64>, noise: NoiseModel) -> Result<DMatrix<f64>> {
    let dim = state.nrows();
    if state.ncols() != dim {
        return Err(Error::Domain("state matrix must be square".into()));
    }
    let n = qubit_count(dim)?;
    if n > MAX_DENSE_QUBITS {
        return Err(Error::Domain(format!(
            "dense oracle capped at {MAX_DENSE_QUBITS} qubits, got {n}"
        )));
    }
    let r = noise.r();
    let mut out = state.clone();
    for b in 0..dim {
        for bp in 0..dim {
            let distance = (b ^ bp).count_ones();
            if distance > 0 {
                out[(b, bp)] *= r.powi(distance as i32);
            }
        }
    }
    Ok(out)
}

/// Dense amplitudes of a symmetric probe: psi_b = c_{J - |b|} / sqrt(C(n, |b|)).
pub fn dense_probe_vector(probe: &SymmetricProbe) -> Result<DVector<f64>> {
    let n = probe.n();
    if n > MAX_DENSE_QUBITS {
        return Err(Error::Domain(format!(
            "dense oracle capped at {MAX_DENSE_QUBITS} qubits, got {n}"
        )));
    }
    let dim = 1usize << n;
    // C(n, k) fits easily at n <= 12
    let mut binom = vec![1.0_f64; n + 1];
    for k in 1..=n {
        binom[k] = binom[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    let coeffs = probe.coeffs();
    let mut psi = DVector::zeros(dim);
    for b in 0..dim {
        let beta = (b as u64).count_ones() as usize;
        // m = J - beta maps to coefficient index n - beta (ascending m)
        psi[b] = coeffs[n - beta] / binom[beta].sqrt();
    }
    Ok(psi)
}

/// Uncertainty and success probability of a seed measurement on the dephased
/// pure probe, by direct bit-string sums:
/// sigma2 = 2 - (2/S) sum_{|b'| = |b|+1} Omega_{b,b'} rho_{b',b} and
/// S = sum_{|b'| = |b|} Omega_{b,b'} rho_{b',b}.
pub fn brute_uncertainty(
    psi: &DVector<f64>,
    omega: &DMatrix<f64>,
    noise: NoiseModel,
) -> Result<(f64, f64)> {
    let dim = psi.len();
    let n = qubit_count(dim)?;
    if n > MAX_BRUTE_QUBITS {
        return Err(Error::Domain(format!(
            "brute-force oracle capped at {MAX_BRUTE_QUBITS} qubits, got {n}"
        )));
    }
    if omega.nrows() != dim || omega.ncols() != dim {
        return Err(Error::Domain("seed dimension mismatch".into()));
    }
    let r = noise.r();
    let mut coherent = 0.0;
    let mut success = 0.0;
    for b in 0..dim {
        let wb = (b as u64).count_ones();
        for bp in 0..dim {
            let wbp = (bp as u64).count_ones();
            // rho_{b',b} generated on the fly
            let rho = r.powi((b ^ bp).count_ones() as i32) * psi[bp] * psi[b];
            if wbp == wb + 1 {
                coherent += omega[(b, bp)] * rho;
            } else if wbp == wb {
                success += omega[(b, bp)] * rho;
            }
        }
    }
    Ok((2.0 - 2.0 * coherent / success, success))
}

/// One multiplicity copy of a spin-j tower: dense vectors for each m,
/// ascending, built by sequential angular-momentum coupling. Families with
/// equal j across different coupling paths are mutually orthogonal.
#[derive(Clone, Debug)]
pub struct SpinFamily {
    pub j: HalfSpin,
    /// Vectors indexed by m = -j..j, each of dimension 2^n.
    pub vectors: Vec<DVector<f64>>,
}

/// Full spin-adapted orthonormal basis of n qubits.
pub fn spin_basis(n: usize) -> Result<Vec<SpinFamily>> {
    if n == 0 || n > MAX_DENSE_QUBITS {
        return Err(Error::Domain(format!(
            "spin basis supported for 1..={MAX_DENSE_QUBITS} qubits, got {n}"
        )));
    }
    // single qubit: bit 0 is m = +1/2
    let mut families = vec![SpinFamily {
        j: HalfSpin::from_doubled(1),
        vectors: vec![
            DVector::from_column_slice(&[0.0, 1.0]), // m = -1/2 is |1>
            DVector::from_column_slice(&[1.0, 0.0]), // m = +1/2 is |0>
        ],
    }];
    for level in 1..n {
        let dim = 1usize << (level + 1);
        let mut next = Vec::new();
        for family in &families {
            let j2 = family.j.doubled();
            // embed |v> (x) |bit>: index = old * 2 + bit
            let up = |v: &DVector<f64>| {
                let mut w = DVector::zeros(dim);
                for (i, &x) in v.iter().enumerate() {
                    w[2 * i] = x;
                }
                w
            };
            let down = |v: &DVector<f64>| {
                let mut w = DVector::zeros(dim);
                for (i, &x) in v.iter().enumerate() {
                    w[2 * i + 1] = x;
                }
                w
            };
            let index_of = |m2: i64| ((m2 + j2) / 2) as usize;

            // j + 1/2 family always exists
            let mut plus_vectors = Vec::new();
            let j2_plus = j2 + 1;
            for m2 in (-j2_plus..=j2_plus).step_by(2) {
                let mut w = DVector::zeros(dim);
                // |j+1/2, m> = sqrt((j+m+1/2)/(2j+1)) |j, m-1/2>|0>
                //            + sqrt((j-m+1/2)/(2j+1)) |j, m+1/2>|1>
                let c_up = ((j2 as f64 + m2 as f64 + 1.0) / (2.0 * (j2 as f64 + 1.0))).max(0.0);
                let c_down = ((j2 as f64 - m2 as f64 + 1.0) / (2.0 * (j2 as f64 + 1.0))).max(0.0);
                if m2 - 1 >= -j2 && m2 - 1 <= j2 {
                    w += up(&family.vectors[index_of(m2 - 1)]) * c_up.sqrt();
                }
                if m2 + 1 >= -j2 && m2 + 1 <= j2 {
                    w += down(&family.vectors[index_of(m2 + 1)]) * c_down.sqrt();
                }
                plus_vectors.push(w);
            }
            next.push(SpinFamily {
                j: HalfSpin::from_doubled(j2_plus),
                vectors: plus_vectors,
            });

            // j - 1/2 family for j > 0
            if j2 >= 1 {
                let mut minus_vectors = Vec::new();
                let j2_minus = j2 - 1;
                for m2 in (-j2_minus..=j2_minus).step_by(2) {
                    let mut w = DVector::zeros(dim);
                    let c_up = ((j2 as f64 - m2 as f64 + 1.0) / (2.0 * (j2 as f64 + 1.0))).max(0.0);
                    let c_down =
                        ((j2 as f64 + m2 as f64 + 1.0) / (2.0 * (j2 as f64 + 1.0))).max(0.0);
                    w -= up(&family.vectors[index_of(m2 - 1)]) * c_up.sqrt();
                    w += down(&family.vectors[index_of(m2 + 1)]) * c_down.sqrt();
                    minus_vectors.push(w);
                }
                next.push(SpinFamily {
                    j: HalfSpin::from_doubled(j2_minus),
                    vectors: minus_vectors,
                });
            }
        }
        families = next;
    }
    Ok(families)
}

/// Builds the dense covariant seed from per-j filter amplitudes:
/// Omega = sum_{j, family} sum_{m, m'} f^j_m f^j_{m'} |j m a><j m' a|.
/// Spins absent from `filters` contribute nothing.
pub fn seed_from_filters(
    basis: &[SpinFamily],
    filters: &[(HalfSpin, Vec<f64>)],
) -> Result<DMatrix<f64>> {
    let dim = basis
        .first()
        .map(|f| f.vectors[0].len())
        .ok_or_else(|| Error::Domain("empty spin basis".into()))?;
    let mut omega = DMatrix::zeros(dim, dim);
    for family in basis {
        let filter = match filters.iter().find(|(j, _)| *j == family.j) {
            Some((_, f)) => f,
            None => continue,
        };
        if filter.len() != family.j.dimension() {
            return Err(Error::Domain("filter length mismatch".into()));
        }
        // chi = sum_m f_m |j, m, family>
        let mut chi = DVector::zeros(dim);
        for (v, &f) in family.vectors.iter().zip(filter) {
            chi += v * f;
        }
        omega += &chi * chi.transpose();
    }
    Ok(omega)
}

/// The canonical (all amplitudes 1) covariant seed.
pub fn canonical_seed(basis: &[SpinFamily]) -> Result<DMatrix<f64>> {
    let spins: Vec<(HalfSpin, Vec<f64>)> = {
        let mut unique: Vec<HalfSpin> = basis.iter().map(|f| f.j).collect();
        unique.sort();
        unique.dedup();
        unique
            .into_iter()
            .map(|j| (j, vec![1.0; j.dimension()]))
            .collect()
    };
    seed_from_filters(basis, &spins)
}

/// Symmetrizes a probe/seed pair without changing its uncertainty or
/// success probability: the probe collapses onto the fully symmetric
/// subspace and the seed is replaced by a permutation-invariant one.
pub fn symmetrize(
    psi: &DVector<f64>,
    omega: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dim = psi.len();
    let n = qubit_count(dim)?;
    if n > MAX_SYMMETRIZE_QUBITS {
        return Err(Error::Domain(format!(
            "permutation average capped at {MAX_SYMMETRIZE_QUBITS} qubits, got {n}"
        )));
    }
    if omega.nrows() != dim || omega.ncols() != dim {
        return Err(Error::Domain("seed dimension mismatch".into()));
    }

    let mut binom = vec![1.0_f64; n + 1];
    for k in 1..=n {
        binom[k] = binom[k - 1] * (n - k + 1) as f64 / k as f64;
    }

    // weight-resolved amplitudes
    let mut weight_norm2 = vec![0.0_f64; n + 1];
    for b in 0..dim {
        weight_norm2[(b as u64).count_ones() as usize] += psi[b] * psi[b];
    }
    let weight_amp: Vec<f64> = weight_norm2.iter().map(|v| v.sqrt()).collect();

    // |phi> = sum_beta sqrt(C(n, beta)) |phi_beta>, phi_beta the normalized
    // weight-beta slice (uniform when the slice is empty)
    let mut phi = DVector::zeros(dim);
    for b in 0..dim {
        let beta = (b as u64).count_ones() as usize;
        let slice = if weight_amp[beta] > 0.0 {
            psi[b] / weight_amp[beta]
        } else {
            1.0 / binom[beta].sqrt()
        };
        phi[b] = binom[beta].sqrt() * slice;
    }

    // Omega_sym = average over qubit permutations of U_pi (phi o Omega) U_pi^T
    let hadamard = DMatrix::from_fn(dim, dim, |b, bp| phi[b] * phi[bp] * omega[(b, bp)]);
    let permutations = all_permutations(n);
    let mut omega_sym = DMatrix::zeros(dim, dim);
    for perm in &permutations {
        // U_pi |b> = |pi(b)>: bit i of the image is bit perm[i] of b
        let mut image = vec![0usize; dim];
        for (b, img) in image.iter_mut().enumerate() {
            let mut out = 0usize;
            for (i, &src) in perm.iter().enumerate() {
                if b >> src & 1 == 1 {
                    out |= 1 << i;
                }
            }
            *img = out;
        }
        for b in 0..dim {
            for bp in 0..dim {
                omega_sym[(image[b], image[bp])] += hadamard[(b, bp)];
            }
        }
    }
    omega_sym /= permutations.len() as f64;

    // psi_sym = sum_beta psi_beta |beta>
    let mut psi_sym = DVector::zeros(dim);
    for b in 0..dim {
        let beta = (b as u64).count_ones() as usize;
        psi_sym[b] = weight_amp[beta] / binom[beta].sqrt();
    }
    Ok((psi_sym, omega_sym))
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut base: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap_permute(&mut base, n, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Result of the semidefinite cross-check.
#[derive(Clone, Copy, Debug)]
pub struct SdpCrossCheck {
    /// Objective of a strictly feasible primal point (upper bound).
    pub feasible_objective: f64,
    /// Certified dual lower bound.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves min tr(H Lambda) over block-diagonal Lambda >= 0 with
/// tr Lambda = 1 and Lambda^j_mm <= p_j d^j_m / S, by ADMM over the blocks,
/// and certifies the result with an explicit dual-feasible point.
///
/// This is an independent route to sigma2(S); it never touches the
/// active-set solver.
pub fn sdp_crosscheck(
    blocks: &[DephasingBlock],
    hams: &[BlockHamiltonian],
    s: f64,
) -> Result<SdpCrossCheck> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidSuccess { s });
    }
    let mut h_mats = Vec::new();
    let mut caps = Vec::new();
    // blocks whose entire trace budget is negligible would only stall the
    // splitting iteration; they are excluded and accounted for exactly in
    // the dual certificate through their spectral floor
    let mut dropped_floor = f64::INFINITY;
    for (b, ham) in blocks.iter().zip(hams) {
        if b.is_degenerate() {
            continue;
        }
        if b.dim() > 40 {
            return Err(Error::Domain(
                "sdp cross-check intended for small instances".into(),
            ));
        }
        let dim = b.dim();
        if b.probability() / s < 1e-9 {
            let diag = vec![2.0; dim];
            let off: Vec<f64> = ham.couplings().iter().map(|a| -a).collect();
            dropped_floor = dropped_floor.min(crate::tridiag::smallest_eigenvalue(&diag, &off));
            continue;
        }
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            h[(i, i)] = 2.0;
            if i + 1 < dim {
                h[(i, i + 1)] = -ham.couplings()[i];
                h[(i + 1, i)] = -ham.couplings()[i];
            }
        }
        h_mats.push(h);
        caps.push(
            b.diag()
                .iter()
                .map(|d| b.probability() * d / s)
                .collect::<Vec<f64>>(),
        );
    }
    let n_blocks = h_mats.len();
    if n_blocks == 0 {
        return Err(Error::Domain("no non-degenerate blocks".into()));
    }

    let mut sigma = 1.0_f64; // ADMM penalty, rebalanced on the fly
    let mut x: Vec<DMatrix<f64>> = Vec::new();
    let mut z: Vec<DMatrix<f64>> = Vec::new();
    let mut y: Vec<DMatrix<f64>> = Vec::new();
    for (k, h) in h_mats.iter().enumerate() {
        let dim = h.nrows();
        // feasible diagonal start
        let total_cap: f64 = caps.iter().flatten().sum();
        let start = DMatrix::from_fn(dim, dim, |i, jj| {
            if i == jj {
                caps[k][i] / total_cap
            } else {
                0.0
            }
        });
        x.push(start.clone());
        z.push(start);
        y.push(DMatrix::zeros(dim, dim));
    }

    let max_iter = 40_000usize;
    let tol = 1e-10;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        // X-update: psd projection of Z - (Y + H)/sigma
        for k in 0..n_blocks {
            let target = &z[k] - (&y[k] + &h_mats[k]) / sigma;
            x[k] = psd_projection(&target);
        }
        // Z-update: off-diagonals copied, diagonals projected onto the
        // capped simplex {sum = 1, d <= cap}
        let mut diag_target = Vec::new();
        for k in 0..n_blocks {
            let v = &x[k] + &y[k] / sigma;
            for i in 0..v.nrows() {
                diag_target.push(v[(i, i)]);
            }
        }
        let flat_caps: Vec<f64> = caps.iter().flatten().copied().collect();
        let diag_new = capped_simplex_projection(&diag_target, &flat_caps);
        let mut offset = 0;
        let mut dual_residual = 0.0_f64;
        for k in 0..n_blocks {
            let v = &x[k] + &y[k] / sigma;
            let mut znew = v.clone();
            for i in 0..v.nrows() {
                znew[(i, i)] = diag_new[offset + i];
            }
            offset += v.nrows();
            dual_residual += (&znew - &z[k]).norm_squared();
            z[k] = znew;
        }
        // Y-update and primal residual
        let mut primal_residual = 0.0_f64;
        for k in 0..n_blocks {
            let gap = &x[k] - &z[k];
            primal_residual += gap.norm_squared();
            y[k] += gap * sigma;
        }
        let primal = primal_residual.sqrt();
        let dual = sigma * dual_residual.sqrt();
        if primal < tol && dual < tol {
            converged = true;
            break;
        }
        // residual balancing keeps badly scaled instances moving
        if iterations % 50 == 0 {
            if primal > 10.0 * dual {
                sigma *= 2.0;
            } else if dual > 10.0 * primal {
                sigma *= 0.5;
            }
        }
    }

    // strictly feasible primal point from Z (diag feasible by construction):
    // clip to the PSD cone, rescale into the caps, then fix the trace
    let mut feas: Vec<DMatrix<f64>> = z.iter().map(psd_projection).collect();
    let flat_caps: Vec<f64> = caps.iter().flatten().copied().collect();
    for (k, f) in feas.iter_mut().enumerate() {
        let mut scale = 1.0_f64;
        for i in 0..f.nrows() {
            if f[(i, i)] > caps[k][i] {
                if caps[k][i] <= 0.0 {
                    scale = 0.0;
                } else {
                    scale = scale.min(caps[k][i] / f[(i, i)]);
                }
            }
        }
        *f *= scale;
    }
    let trace: f64 = feas.iter().map(|f| f.trace()).sum();
    if trace > 1.0 {
        for f in &mut feas {
            *f /= trace;
        }
    } else {
        // distribute leftover trace over remaining diagonal slack
        let mut leftover = 1.0 - trace;
        let mut offset = 0;
        'outer: for (k, f) in feas.iter_mut().enumerate() {
            for i in 0..f.nrows() {
                if leftover <= 0.0 {
                    break 'outer;
                }
                let slack = (flat_caps[offset + i] - f[(i, i)]).max(0.0);
                let add = slack.min(leftover);
                f[(i, i)] += add;
                leftover -= add;
            }
            offset += caps[k].len();
        }
    }
    let feasible_objective: f64 = feas
        .iter()
        .zip(&h_mats)
        .map(|(f, h)| (f.transpose() * h).trace())
        .sum();

    // dual certificate: y* - z . cap with z >= 0 from the converged Y
    let mut c_floor = f64::INFINITY;
    for yk in &y {
        for i in 0..yk.nrows() {
            c_floor = c_floor.min(yk[(i, i)]);
        }
    }
    let mut lower_bound = f64::NEG_INFINITY;
    for c_shift in [c_floor, c_floor - 1e-9, c_floor + 1e-9] {
        let mut bound_y = f64::INFINITY;
        let mut cost = 0.0;
        for (k, yk) in y.iter().enumerate() {
            let dim = yk.nrows();
            let shifted = DMatrix::from_fn(dim, dim, |i, jj| {
                if i == jj {
                    let zv = (yk[(i, i)] - c_shift).max(0.0);
                    h_mats[k][(i, i)] + zv
                } else {
                    h_mats[k][(i, jj)]
                }
            });
            for i in 0..dim {
                cost += (yk[(i, i)] - c_shift).max(0.0) * caps[k][i];
            }
            let eig = shifted.symmetric_eigenvalues();
            bound_y = bound_y.min(eig.min());
        }
        // the multiplier must stay dominated by every omitted block too
        bound_y = bound_y.min(dropped_floor);
        lower_bound = lower_bound.max(bound_y - cost);
    }

    Ok(SdpCrossCheck {
        feasible_objective,
        lower_bound,
        iterations,
        converged,
    })
}

/// Worst deviations found by [`self_check`].
#[derive(Clone, Copy, Debug)]
pub struct OracleSelfCheck {
    /// Spin-basis vs dense-basis (sigma2, S) disagreement.
    pub equivalence_deviation: f64,
    /// Figure-of-merit drift under probe/seed symmetrization.
    pub symmetrization_deviation: f64,
    /// |SDP feasible value - allocation| over a few success probabilities.
    pub sdp_deviation: f64,
}

/// Runs the full oracle battery at small n: the multicopy probe plus
/// `random_probes` random ones against the dense basis, random dense pairs
/// through the symmetrization identity, and the SDP against the allocator.
pub fn self_check(
    n: usize,
    noise: NoiseModel,
    random_probes: usize,
    seed: u64,
) -> Result<OracleSelfCheck> {
    use crate::probes;
    use crate::scavenge;
    use crate::tradeoff::allocate;
    use rand::{Rng, SeedableRng};

    if n > MAX_SYMMETRIZE_QUBITS {
        return Err(Error::Domain(format!(
            "oracle self-check supports n <= {MAX_SYMMETRIZE_QUBITS}, got {n}"
        )));
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let basis = spin_basis(n)?;

    let mut probes_under_test = vec![probes::multicopy(n)?];
    for _ in 0..random_probes {
        let coeffs: Vec<f64> = (0..=n).map(|_| rng.gen::<f64>() + 1e-6).collect();
        probes_under_test.push(SymmetricProbe::normalized(n, coeffs)?);
    }

    let mut equivalence_deviation = 0.0_f64;
    for probe in &probes_under_test {
        let dec = crate::spinblocks::decompose(probe, noise)?;
        for s in [1.0, 0.6] {
            let point = allocate(&dec.blocks, &dec.hams, s)?;
            let filters: Vec<(HalfSpin, Vec<f64>)> = dec
                .blocks
                .iter()
                .filter(|b| !b.is_degenerate())
                .zip(scavenge::protocol_filters(&dec.blocks, &point))
                .map(|(b, f)| (b.j(), f))
                .collect();
            let omega = seed_from_filters(&basis, &filters)?;
            let psi = dense_probe_vector(probe)?;
            let (sigma2, s_dense) = brute_uncertainty(&psi, &omega, noise)?;
            equivalence_deviation = equivalence_deviation
                .max((sigma2 - point.sigma2()).abs())
                .max((s_dense - point.s()).abs());
        }
    }

    let mut symmetrization_deviation = 0.0_f64;
    let dim = 1usize << n;
    for _ in 0..30 {
        let mut psi = DVector::from_fn(dim, |_, _| rng.gen::<f64>() - 0.2);
        psi /= psi.norm();
        let raw = DMatrix::from_fn(dim, dim, |_, _| rng.gen::<f64>() - 0.4);
        let sym = (&raw + raw.transpose()) * 0.5;
        let gram = &sym * sym.transpose();
        let omega = &gram / (gram.symmetric_eigenvalues().max() * 1.0001);
        let (a2, sa) = brute_uncertainty(&psi, &omega, noise)?;
        let (psi_s, omega_s) = symmetrize(&psi, &omega)?;
        let (b2, sb) = brute_uncertainty(&psi_s, &omega_s, noise)?;
        symmetrization_deviation = symmetrization_deviation
            .max((a2 - b2).abs())
            .max((sa - sb).abs());
    }

    let probe = probes::multicopy(n)?;
    let dec = crate::spinblocks::decompose(&probe, noise)?;
    let mut sdp_deviation = 0.0_f64;
    for s in [1.0, 0.6, 0.3] {
        let point = allocate(&dec.blocks, &dec.hams, s)?;
        let check = sdp_crosscheck(&dec.blocks, &dec.hams, s)?;
        sdp_deviation = sdp_deviation.max((check.feasible_objective - point.sigma2()).abs());
    }

    Ok(OracleSelfCheck {
        equivalence_deviation,
        symmetrization_deviation,
        sdp_deviation,
    })
}

fn psd_projection(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let dim = eig.eigenvalues.len();
    let mut out = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let lam = eig.eigenvalues[k];
        if lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += v * v.transpose() * lam;
        }
    }
    out
}

/// Projection of `v` onto {d : sum d = 1, d_i <= cap_i} (no lower bound).
fn capped_simplex_projection(v: &[f64], caps: &[f64]) -> Vec<f64> {
    let project = |mu: f64| -> f64 {
        v.iter()
            .zip(caps)
            .map(|(&vi, &ci)| (vi + mu).min(ci))
            .sum::<f64>()
    };
    let mut lo = -1.0;
    let mut hi = 1.0;
    while project(lo) > 1.0 {
        lo *= 2.0;
        if lo < -1e12 {
            break;
        }
    }
    while project(hi) < 1.0 {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if project(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    v.iter()
        .zip(caps)
        .map(|(&vi, &ci)| (vi + mu).min(ci))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocksolver::unconstrained_minimum;
    use crate::probes;
    use crate::spinblocks::{decompose, multiplicity};
    use crate::tradeoff::{allocate, deterministic_uncertainty};
    use approx::assert_relative_eq;
    use num_bigint::BigUint;

    #[test]
    fn dephase_identity_and_full_limits() {
        let probe = probes::multicopy(3).unwrap();
        let psi = dense_probe_vector(&probe).unwrap();
        let rho = &psi * psi.transpose();
        let same = dense_dephase(&rho, NoiseModel::noiseless()).unwrap();
        assert_relative_eq!((&same - &rho).norm(), 0.0, epsilon = 1e-15);
        let diag = dense_dephase(&rho, NoiseModel::new(0.0).unwrap()).unwrap();
        for b in 0..8 {
            for bp in 0..8 {
                if b != bp {
                    assert_eq!(diag[(b, bp)], 0.0);
                } else {
                    assert_relative_eq!(diag[(b, b)], rho[(b, b)], epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn dephase_scales_by_hamming_distance() {
        let probe = probes::multicopy(2).unwrap();
        let psi = dense_probe_vector(&probe).unwrap();
        let rho = &psi * psi.transpose();
        let noisy = dense_dephase(&rho, NoiseModel::new(0.8).unwrap()).unwrap();
        // (01, 10): distance 2 -> r^2; (00, 11): distance 2 -> r^2; (01, 01): unchanged
        assert_relative_eq!(noisy[(1, 2)], rho[(1, 2)] * 0.64, epsilon = 1e-15);
        assert_relative_eq!(noisy[(0, 3)], rho[(0, 3)] * 0.64, epsilon = 1e-15);
        assert_relative_eq!(noisy[(1, 1)], rho[(1, 1)], epsilon = 1e-15);
        assert_relative_eq!(noisy[(0, 1)], rho[(0, 1)] * 0.8, epsilon = 1e-15);
        // trace and positivity preserved
        assert_relative_eq!(noisy.trace(), 1.0, epsilon = 1e-12);
        let eigs = noisy.symmetric_eigenvalues();
        assert!(eigs.min() >= -1e-12);
    }

    #[test]
    fn single_qubit_canonical_measurement() {
        let probe = probes::multicopy(1).unwrap();
        let psi = dense_probe_vector(&probe).unwrap();
        let basis = spin_basis(1).unwrap();
        let omega = canonical_seed(&basis).unwrap();
        let (sigma2, s) = brute_uncertainty(&psi, &omega, NoiseModel::new(0.8).unwrap()).unwrap();
        assert_relative_eq!(sigma2, 1.2, max_relative = 1e-13);
        assert_relative_eq!(s, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn identity_seed_succeeds_always() {
        let probe = probes::multicopy(3).unwrap();
        let psi = dense_probe_vector(&probe).unwrap();
        let omega = DMatrix::identity(8, 8);
        let (sigma2, s) = brute_uncertainty(&psi, &omega, NoiseModel::new(0.7).unwrap()).unwrap();
        assert_relative_eq!(s, 1.0, max_relative = 1e-13);
        // the identity seed extracts no phase information at all
        assert_relative_eq!(sigma2, 2.0, max_relative = 1e-13);
    }

    #[test]
    fn spin_basis_is_orthonormal_and_counts_multiplicities() {
        for n in [2usize, 3, 4, 5] {
            let basis = spin_basis(n).unwrap();
            let mut all: Vec<&DVector<f64>> = Vec::new();
            for fam in &basis {
                assert_eq!(fam.vectors.len(), fam.j.dimension());
                for v in &fam.vectors {
                    all.push(v);
                }
            }
            assert_eq!(all.len(), 1 << n);
            for (i, v) in all.iter().enumerate() {
                for (k, w) in all.iter().enumerate() {
                    let dot = v.dot(w);
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert_relative_eq!(dot, want, epsilon = 1e-12);
                }
            }
            // family counts match the multiplicity formula
            for j in crate::spin::block_spins(n) {
                let count = basis.iter().filter(|f| f.j == j).count();
                assert_eq!(
                    BigUint::from(count as u64),
                    multiplicity(n, j).unwrap(),
                    "n={n} j={j}"
                );
            }
        }
    }

    #[test]
    fn canonical_seed_reproduces_deterministic_uncertainty() {
        for (n, r) in [(3usize, 0.8), (4, 0.5), (5, 0.95)] {
            let probe = probes::multicopy(n).unwrap();
            let noise = NoiseModel::new(r).unwrap();
            let psi = dense_probe_vector(&probe).unwrap();
            let basis = spin_basis(n).unwrap();
            let omega = canonical_seed(&basis).unwrap();
            let (sigma2, s) = brute_uncertainty(&psi, &omega, noise).unwrap();
            let dec = decompose(&probe, noise).unwrap();
            let det = deterministic_uncertainty(&dec.blocks).unwrap();
            assert_relative_eq!(sigma2, det, epsilon = 1e-10);
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetrize_preserves_figures_of_merit() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
        for n in [2usize, 3] {
            let dim = 1usize << n;
            let noise = NoiseModel::new(0.8).unwrap();
            for _ in 0..10 {
                let mut psi = DVector::from_fn(dim, |_, _| rng.gen::<f64>());
                psi /= psi.norm();
                // random PSD seed scaled under the identity
                let raw = DMatrix::from_fn(dim, dim, |_, _| rng.gen::<f64>() - 0.3);
                let sym = (&raw + raw.transpose()) * 0.5;
                let gram = &sym * sym.transpose();
                let top = gram.symmetric_eigenvalues().max();
                let omega = gram / (top * 1.01);
                let (s2a, sa) = brute_uncertainty(&psi, &omega, noise).unwrap();
                let (psi_s, omega_s) = symmetrize(&psi, &omega).unwrap();
                let (s2b, sb) = brute_uncertainty(&psi_s, &omega_s, noise).unwrap();
                assert_relative_eq!(sa, sb, epsilon = 1e-9);
                assert_relative_eq!(s2a, s2b, epsilon = 1e-9);
                // the symmetrized seed is a legitimate measurement
                let eigs = omega_s.symmetric_eigenvalues();
                assert!(eigs.min() >= -1e-10);
                assert!(eigs.max() <= 1.0 + 1e-10);
                // psi_sym is supported on the symmetric subspace
                let basis = spin_basis(n).unwrap();
                for fam in basis.iter().filter(|f| f.j.doubled() < n as i64) {
                    for v in &fam.vectors {
                        assert_relative_eq!(v.dot(&psi_s), 0.0, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetrize_fixed_point_on_symmetric_pairs() {
        let probe = probes::multicopy(3).unwrap();
        let psi = dense_probe_vector(&probe).unwrap();
        let basis = spin_basis(3).unwrap();
        let omega = canonical_seed(&basis).unwrap() * 0.5;
        let noise = NoiseModel::new(0.6).unwrap();
        let (s2a, sa) = brute_uncertainty(&psi, &omega, noise).unwrap();
        let (psi_s, omega_s) = symmetrize(&psi, &omega).unwrap();
        let (s2b, sb) = brute_uncertainty(&psi_s, &omega_s, noise).unwrap();
        assert_relative_eq!(s2a, s2b, epsilon = 1e-10);
        assert_relative_eq!(sa, sb, epsilon = 1e-10);
        for (a, b) in psi.iter().zip(psi_s.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn sdp_matches_allocation() {
        let probe = probes::multicopy(6).unwrap();
        let noise = NoiseModel::new(0.8).unwrap();
        let dec = decompose(&probe, noise).unwrap();
        for s in [1.0_f64, 0.54, 0.2] {
            let point = allocate(&dec.blocks, &dec.hams, s).unwrap();
            let check = sdp_crosscheck(&dec.blocks, &dec.hams, s).unwrap();
            assert!(check.converged);
            assert!(
                (check.feasible_objective - point.sigma2()).abs() <= 1e-5,
                "S={s}: sdp={} allocate={}",
                check.feasible_objective,
                point.sigma2()
            );
            assert!(point.sigma2() >= check.lower_bound - 1e-5);
            assert!(check.feasible_objective >= check.lower_bound - 1e-7);
        }
    }

    #[test]
    fn sdp_below_plateau_hits_global_minimum() {
        let probe = probes::multicopy(6).unwrap();
        let noise = NoiseModel::new(0.8).unwrap();
        let dec = decompose(&probe, noise).unwrap();
        let floor = dec
            .blocks
            .iter()
            .zip(&dec.hams)
            .filter(|(b, _)| !b.is_degenerate())
            .map(|(_, h)| unconstrained_minimum(h).unwrap().0)
            .fold(f64::INFINITY, f64::min);
        let check = sdp_crosscheck(&dec.blocks, &dec.hams, 0.05).unwrap();
        assert_relative_eq!(check.feasible_objective, floor, epsilon = 1e-6);
    }
}
