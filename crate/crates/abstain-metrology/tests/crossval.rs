//! Cross-module validation: exact numerics against closed-form asymptotics,
//! probe constructions against their advertised performance, and the
//! qualitative large-n features of the noisy tradeoff.

use abstain_metrology::asymptotics;
use abstain_metrology::blocksolver::{
    critical_block_success, unconstrained_minimum,
};
use abstain_metrology::noise::NoiseModel;
use abstain_metrology::probes;
use abstain_metrology::spinblocks::decompose;
use abstain_metrology::tradeoff::{allocate, deterministic_uncertainty, ultimate_postselect};
use nalgebra::DMatrix;

#[test]
fn ultimate_formula_converges_from_above_at_moderate_noise() {
    // Eq.-(19)-style formula vs exact lambda_min(H^J) at r = 0.8: within 5%
    // from n = 200 on, and the deviation shrinks with n
    let r = 0.8;
    let mut last = f64::INFINITY;
    for n in [200usize, 400, 800] {
        let probe = probes::multicopy(n).unwrap();
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        let (exact, _) = unconstrained_minimum(dec.hams.last().unwrap()).unwrap();
        let formula = asymptotics::ultimate_bound(n, r);
        let dev = ((exact - formula) / formula).abs();
        assert!(dev < last, "deviation not decreasing at n = {n}");
        if n >= 200 {
            assert!(dev <= 0.05, "n={n}: dev={dev}");
        }
        last = dev;
    }
}

#[test]
fn finite_abstention_formula_tracks_the_curve() {
    // sigma2 ~ (1 - (r^2/2) S_bar) / (n r^2) within 10% for moderate S_bar
    let n = 50;
    let r = 0.8;
    let probe = probes::multicopy(n).unwrap();
    let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
    for s_bar in [0.1, 0.2, 0.3, 0.4, 0.5] {
        let point = allocate(&dec.blocks, &dec.hams, 1.0 - s_bar).unwrap();
        let approx = asymptotics::finite_s_approx(n, r, 1.0 - s_bar);
        let dev = ((point.sigma2() - approx) / approx).abs();
        assert!(dev <= 0.10, "S_bar={s_bar}: exact={} approx={approx}", point.sigma2());
    }
}

#[test]
fn optimal_probe_beats_multicopy_deterministically() {
    let n = 200;
    let r = 0.8;
    let noise = NoiseModel::new(r).unwrap();
    let dec_opt = decompose(&probes::optimal_gaussian(n, noise).unwrap(), noise).unwrap();
    let dec_cop = decompose(&probes::multicopy(n).unwrap(), noise).unwrap();
    let det_opt = deterministic_uncertainty(&dec_opt.blocks).unwrap();
    let det_cop = deterministic_uncertainty(&dec_cop.blocks).unwrap();
    assert!(
        det_opt <= det_cop,
        "optimal probe worse than multicopy: {det_opt} vs {det_cop}"
    );
    // and lands within 10% of its closed-form deterministic bound
    let bound = asymptotics::optimal_deterministic_bound(n, r);
    let dev = ((det_opt - bound) / bound).abs();
    assert!(dev <= 0.10, "det_opt={det_opt} bound={bound}");
}

#[test]
fn ground_profile_probe_needs_no_in_block_filtering() {
    let n = 100;
    let r = 0.8;
    let noise = NoiseModel::new(r).unwrap();
    let probe = probes::ground_profile_probe(n, noise).unwrap();
    let dec = decompose(&probe, noise).unwrap();
    let top = dec.blocks.last().unwrap();
    let ham = dec.hams.last().unwrap();
    let (_, ground) = unconstrained_minimum(ham).unwrap();
    let s_star = critical_block_success(top, &ground).unwrap();
    assert!(
        (s_star - 1.0).abs() <= 1e-8,
        "expected s_J* = 1 by construction, got {s_star}"
    );
}

#[test]
fn ground_profile_probe_weight_decays_at_documented_rate() {
    // log p_J slope ~ -(log 2 - log(1+r))
    let r = 0.8;
    let noise = NoiseModel::new(r).unwrap();
    let mut points = Vec::new();
    for n in [100usize, 200, 300] {
        let probe = probes::ground_profile_probe(n, noise).unwrap();
        let dec = decompose(&probe, noise).unwrap();
        points.push((n as f64, dec.blocks.last().unwrap().log_probability()));
    }
    let slope = (points[2].1 - points[0].1) / (points[2].0 - points[0].0);
    let want = asymptotics::scaling_exponents(r).max_spin_weight_per_n;
    assert!(
        ((slope - want) / want).abs() <= 0.05,
        "slope {slope} vs {want}"
    );
}

#[test]
fn unlimited_abstention_curve_has_superclassical_transient() {
    // at r = 0.95 the maximal-spin uncertainty drops faster than the
    // standard scaling (local log-log slope below -1) somewhere between
    // n = 50 and n = 500, before settling onto the asymptote
    let r = 0.95;
    let ns = [50usize, 100, 200, 350, 500];
    let mut values = Vec::new();
    for &n in &ns {
        let probe = probes::multicopy(n).unwrap();
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        let (ult, _) = ultimate_postselect(&dec.blocks, &dec.hams).unwrap();
        values.push(ult);
    }
    let mut steepest = 0.0_f64;
    for k in 0..ns.len() - 1 {
        let slope = (values[k + 1].ln() - values[k].ln())
            / ((ns[k + 1] as f64).ln() - (ns[k] as f64).ln());
        steepest = steepest.min(slope);
    }
    assert!(
        steepest < -1.05,
        "no transient steeper than the standard scaling: {steepest}"
    );
    // by n = 500 the exact value sits near (above) the asymptote
    let asym = asymptotics::ultimate_bound(500, r);
    assert!(values[4] >= asym);
    assert!(values[4] / asym <= 1.2);
}

#[test]
fn assembled_block_states_are_positive_semidefinite() {
    for (n, r) in [(6usize, 0.8), (9, 0.5), (12, 0.95)] {
        let probe = probes::multicopy(n).unwrap();
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        for b in dec.blocks.iter().filter(|b| b.has_state()) {
            let dim = b.dim();
            let ms: Vec<_> = b.j().magnetic_numbers().collect();
            let dense = DMatrix::from_fn(dim, dim, |row, col| {
                b.entry(ms[row], ms[col]).unwrap()
            });
            let eigs = dense.symmetric_eigenvalues();
            assert!(
                eigs.min() >= -1e-10,
                "n={n} r={r} j={}: negative eigenvalue {}",
                b.j(),
                eigs.min()
            );
            // trace is the block normalization
            assert!((dense.trace() - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn block_entries_match_dense_projection_entrywise() {
    // build rho densely, project onto the explicit angular-momentum basis,
    // and compare every block entry at 1e-10
    use abstain_metrology::oracle::{dense_probe_vector, spin_basis};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
    for n in 2..=6usize {
        let noise = NoiseModel::new(0.8).unwrap();
        let basis = spin_basis(n).unwrap();
        let mut probes_under_test = vec![probes::multicopy(n).unwrap()];
        let coeffs: Vec<f64> = (0..=n).map(|_| rng.gen::<f64>() + 1e-3).collect();
        probes_under_test
            .push(abstain_metrology::probes::SymmetricProbe::normalized(n, coeffs).unwrap());
        for probe in &probes_under_test {
            let psi = dense_probe_vector(probe).unwrap();
            let rho_pure = &psi * psi.transpose();
            let rho = abstain_metrology::oracle::dense_dephase(&rho_pure, noise).unwrap();
            let dec = decompose(probe, noise).unwrap();
            for b in dec.blocks.iter().filter(|b| b.has_state()) {
                let families: Vec<_> = basis.iter().filter(|f| f.j == b.j()).collect();
                let dim = b.dim();
                // p_j rho^j_{m',m} = sum over multiplicity of <j m' a|rho|j m a>
                let mut projected = vec![vec![0.0_f64; dim]; dim];
                for fam in &families {
                    for row in 0..dim {
                        for col in 0..dim {
                            projected[row][col] +=
                                (fam.vectors[row].transpose() * &rho * &fam.vectors[col])[(0, 0)];
                        }
                    }
                }
                let p_dense: f64 = (0..dim).map(|i| projected[i][i]).sum();
                approx::assert_relative_eq!(p_dense, b.probability(), epsilon = 1e-10);
                let ms: Vec<_> = b.j().magnetic_numbers().collect();
                for row in 0..dim {
                    for col in 0..dim {
                        let want = projected[row][col] / p_dense;
                        let got = b.entry(ms[row], ms[col]).unwrap();
                        assert!(
                            (got - want).abs() <= 1e-10,
                            "n={n} j={} ({row},{col}): {got} vs {want}",
                            b.j()
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn multicopy_block_states_match_coefficient_ratios() {
    // for the multicopy probe, rho^j_{m',m} = D^j_{m',m} / sum_m D^j_{m,m}
    use abstain_metrology::spin::HalfSpin;
    use abstain_metrology::spinblocks::dephasing_coefficient;
    let n = 6;
    let r = 0.8;
    let noise = NoiseModel::new(r).unwrap();
    let probe = probes::multicopy(n).unwrap();
    let dec = decompose(&probe, noise).unwrap();
    for b in &dec.blocks {
        let j = b.j();
        let total: f64 = j
            .magnetic_numbers()
            .map(|m| dephasing_coefficient(n, j, m, m, noise).unwrap())
            .sum();
        let ms: Vec<HalfSpin> = j.magnetic_numbers().collect();
        for (idx, &m) in ms.iter().enumerate() {
            let want = dephasing_coefficient(n, j, m, m, noise).unwrap() / total;
            approx::assert_relative_eq!(b.diag()[idx], want, max_relative = 1e-10);
            if idx + 1 < ms.len() {
                let want_off =
                    dephasing_coefficient(n, j, m, ms[idx + 1], noise).unwrap() / total;
                approx::assert_relative_eq!(b.offdiag()[idx], want_off, max_relative = 1e-10);
            }
        }
    }
}
