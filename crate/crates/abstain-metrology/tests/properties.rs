//! Property tests over random probes: structural invariants that must hold
//! for any valid input, not just the curated examples.

use abstain_metrology::blocksolver::constrained_block_solve;
use abstain_metrology::noise::NoiseModel;
use abstain_metrology::probes::SymmetricProbe;
use abstain_metrology::scavenge;
use abstain_metrology::spinblocks::decompose;
use abstain_metrology::tradeoff::allocate;
use proptest::prelude::*;

fn arbitrary_probe(max_n: usize) -> impl Strategy<Value = SymmetricProbe> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0_f64..1.0, n + 1).prop_filter_map(
            "coefficients must not be all zero",
            move |coeffs| {
                if coeffs.iter().map(|c| c * c).sum::<f64>() > 1e-6 {
                    SymmetricProbe::normalized(n, coeffs).ok()
                } else {
                    None
                }
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn block_probabilities_sum_to_one(probe in arbitrary_probe(14), r_idx in 0usize..4) {
        let r = [0.0, 0.3, 0.8, 1.0][r_idx];
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        let total: f64 = dec.blocks.iter().map(|b| b.probability()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-10, "sum p_j = {total}");
    }

    #[test]
    fn block_states_are_normalized_with_bounded_coherences(
        probe in arbitrary_probe(12),
        r in 0.05_f64..1.0,
    ) {
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        for (b, h) in dec.blocks.iter().zip(&dec.hams) {
            for a in h.couplings() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(a), "coupling {a} out of range");
            }
            if !b.has_state() {
                continue;
            }
            let trace: f64 = b.diag().iter().sum();
            prop_assert!((trace - 1.0).abs() <= 1e-10);
            for (i, o) in b.offdiag().iter().enumerate() {
                prop_assert!(*o >= 0.0);
                prop_assert!(
                    *o <= (b.diag()[i] * b.diag()[i + 1]).sqrt() + 1e-12,
                    "coherence exceeds its Cauchy-Schwarz cap"
                );
            }
        }
    }

    #[test]
    fn solved_profiles_are_feasible_kkt_points(
        probe in arbitrary_probe(10),
        s in 0.05_f64..1.0,
        r in 0.1_f64..1.0,
    ) {
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        for (b, h) in dec.blocks.iter().zip(&dec.hams) {
            if !b.has_state() {
                continue;
            }
            let sol = constrained_block_solve(b, h, s).unwrap();
            let norm2: f64 = sol.xi().iter().map(|x| x * x).sum();
            prop_assert!((norm2 - 1.0).abs() <= 1e-10);
            for (i, &x) in sol.xi().iter().enumerate() {
                prop_assert!(x >= -1e-12);
                prop_assert!(x * x * s <= b.diag()[i] + 1e-10);
            }
            for f in sol.filter() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(f));
            }
            prop_assert!((sol.sigma2() - h.quadratic_form(sol.xi())).abs() <= 1e-10);
        }
    }

    #[test]
    fn allocation_is_consistent_and_filters_complement(
        probe in arbitrary_probe(10),
        s in 0.05_f64..1.0,
        r in 0.1_f64..0.999,
    ) {
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        let point = allocate(&dec.blocks, &dec.hams, s).unwrap();
        prop_assert!((point.s() - s).abs() <= 1e-9);
        // identity sigma2 = sum_j (p_j s_j / S) sigma2_j
        let recomputed: f64 = point
            .entries()
            .iter()
            .map(|e| {
                let p = dec
                    .blocks
                    .iter()
                    .find(|b| b.j() == e.j)
                    .unwrap()
                    .probability();
                p * e.s_j * e.sigma2_j
            })
            .sum::<f64>()
            / point.s();
        prop_assert!((point.sigma2() - recomputed).abs() <= 1e-9);
        // trace preservation of the filter pair
        let filters = scavenge::protocol_filters(&dec.blocks, &point);
        let sols: Vec<_> = point
            .entries()
            .iter()
            .filter_map(|e| e.solution.clone())
            .collect();
        for (sol, fbar) in sols.iter().zip(scavenge::complement_filter(&sols)) {
            for (f, fb) in sol.filter().iter().zip(&fbar) {
                prop_assert!((f * f + fb * fb - 1.0).abs() <= 1e-12);
            }
        }
        let (weight, _) = scavenge::scavenged_variance(&dec.blocks, &point).unwrap();
        prop_assert!((weight - (1.0 - s)).abs() <= 1e-9);
        let _ = filters;
    }

    #[test]
    fn probe_file_round_trip(probe in arbitrary_probe(12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.json");
        abstain_metrology::probes::to_file(&probe, &path).unwrap();
        let loaded = abstain_metrology::probes::from_file(&path).unwrap();
        prop_assert_eq!(loaded.n(), probe.n());
        for (a, b) in loaded.coeffs().iter().zip(probe.coeffs()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
