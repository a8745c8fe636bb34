//! Information left in the discarded branch of the filter.
//!
//! The favorable and unfavorable branches together form a trace-preserving
//! channel: the unfavorable branch carries the complementary filter
//! f_bar^2 = 1 - f^2 and is read out with the same canonical covariant
//! measurement. Near-certain abstention barely disturbs the state, so the
//! scavenged uncertainty approaches the deterministic optimum as S -> 0.

use crate::blocksolver::BlockSolution;
use crate::error::{Error, Result};
use crate::spinblocks::DephasingBlock;
use crate::tradeoff::{deterministic_uncertainty, TradeoffPoint};

/// Complementary filters f_bar_m = sqrt(1 - f_m^2), one vector per solution.
pub fn complement_filter(solutions: &[BlockSolution]) -> Vec<Vec<f64>> {
    solutions
        .iter()
        .map(|sol| {
            sol.filter()
                .iter()
                .map(|f| (1.0 - f * f).max(0.0).sqrt())
                .collect()
        })
        .collect()
}

/// Filters of every non-degenerate block under a tradeoff point, in block
/// order; dropped blocks filter to zero everywhere.
pub fn protocol_filters(blocks: &[DephasingBlock], point: &TradeoffPoint) -> Vec<Vec<f64>> {
    blocks
        .iter()
        .filter(|b| !b.is_degenerate())
        .map(|b| {
            let entry = point.entries().iter().find(|e| e.j == b.j());
            match entry.and_then(|e| e.solution.as_ref()) {
                Some(sol) => sol.filter().to_vec(),
                None => vec![0.0; b.dim()],
            }
        })
        .collect()
}

/// Effective abstention weight and scavenged uncertainty of the unfavorable
/// branch. The uncertainty is `None` when the branch has no weight (S = 1).
pub fn scavenged_variance(
    blocks: &[DephasingBlock],
    point: &TradeoffPoint,
) -> Result<(f64, Option<f64>)> {
    let filters = protocol_filters(blocks, point);
    let mut weight = 0.0;
    let mut coherence = 0.0;
    for (b, f) in blocks.iter().filter(|b| !b.is_degenerate()).zip(&filters) {
        if f.len() != b.dim() {
            return Err(Error::Domain("filter length mismatch".into()));
        }
        let fbar: Vec<f64> = f.iter().map(|v| (1.0 - v * v).max(0.0).sqrt()).collect();
        let p = b.probability();
        weight += p
            * fbar
                .iter()
                .zip(b.diag())
                .map(|(fb, d)| fb * fb * d)
                .sum::<f64>();
        coherence += p
            * b.offdiag()
                .iter()
                .enumerate()
                .map(|(m, o)| fbar[m] * fbar[m + 1] * o)
                .sum::<f64>();
    }
    if weight < 1e-12 {
        return Ok((weight, None));
    }
    Ok((weight, Some(2.0 - 2.0 * coherence / weight)))
}

/// Uncertainty when an estimate is produced on every outcome:
/// sigma2_all = S sigma2(S) + (1-S) sigma2_bar.
pub fn all_outcomes_variance(blocks: &[DephasingBlock], point: &TradeoffPoint) -> Result<f64> {
    let (weight, scavenged) = scavenged_variance(blocks, point)?;
    match scavenged {
        Some(bar) => Ok(point.s() * point.sigma2() + weight * bar),
        None => Ok(point.s() * point.sigma2()),
    }
}

/// Gentle-measurement bound on the scavenged branch.
#[derive(Clone, Copy, Debug)]
pub struct GentleBound {
    /// sigma2_det - sigma2_bar(S)
    pub lhs: f64,
    /// sqrt(2) S
    pub rhs: f64,
    pub holds: bool,
}

/// Checks sigma2_det - sigma2_bar(S) <= sqrt(2) S, where sigma2_det is the
/// optimal deterministic uncertainty of the probe.
pub fn gentle_bound_check(blocks: &[DephasingBlock], point: &TradeoffPoint) -> Result<GentleBound> {
    let det = deterministic_uncertainty(blocks)?;
    let (_, scavenged) = scavenged_variance(blocks, point)?;
    let bar = scavenged.ok_or_else(|| {
        Error::Domain("scavenged branch has no weight at S = 1; bound undefined".into())
    })?;
    let lhs = det - bar;
    let rhs = std::f64::consts::SQRT_2 * point.s();
    Ok(GentleBound {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;
    use crate::probes;
    use crate::spinblocks::decompose;
    use crate::tradeoff::allocate;
    use approx::assert_relative_eq;

    #[test]
    fn complement_squares_to_one() {
        let probe = probes::multicopy(8).unwrap();
        let dec = decompose(&probe, NoiseModel::new(0.8).unwrap()).unwrap();
        let point = allocate(&dec.blocks, &dec.hams, 0.7).unwrap();
        let sols: Vec<_> = point
            .entries()
            .iter()
            .filter_map(|e| e.solution.clone())
            .collect();
        let bars = complement_filter(&sols);
        for (sol, bar) in sols.iter().zip(&bars) {
            for (f, fb) in sol.filter().iter().zip(bar) {
                assert_relative_eq!(f * f + fb * fb, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unfavorable_weight_complements_success() {
        let probe = probes::multicopy(10).unwrap();
        let dec = decompose(&probe, NoiseModel::new(0.8).unwrap()).unwrap();
        for s in [0.9, 0.5, 0.2] {
            let point = allocate(&dec.blocks, &dec.hams, s).unwrap();
            let (weight, bar) = scavenged_variance(&dec.blocks, &point).unwrap();
            assert_relative_eq!(weight, 1.0 - s, epsilon = 1e-9);
            assert!(bar.is_some());
        }
    }

    #[test]
    fn full_success_has_empty_unfavorable_branch() {
        let probe = probes::multicopy(6).unwrap();
        let dec = decompose(&probe, NoiseModel::new(0.8).unwrap()).unwrap();
        let point = allocate(&dec.blocks, &dec.hams, 1.0).unwrap();
        let (weight, bar) = scavenged_variance(&dec.blocks, &point).unwrap();
        assert!(weight < 1e-12);
        assert!(bar.is_none());
        // sigma2_all degenerates to sigma2(1)
        let all = all_outcomes_variance(&dec.blocks, &point).unwrap();
        assert_relative_eq!(all, point.sigma2(), epsilon = 1e-10);
        assert!(gentle_bound_check(&dec.blocks, &point).is_err());
    }

    #[test]
    fn orderings_hold_on_a_grid() {
        let probe = probes::multicopy(10).unwrap();
        let dec = decompose(&probe, NoiseModel::new(0.8).unwrap()).unwrap();
        let det = deterministic_uncertainty(&dec.blocks).unwrap();
        for k in 1..10 {
            let s = k as f64 / 10.0;
            let point = allocate(&dec.blocks, &dec.hams, s).unwrap();
            let (_, bar) = scavenged_variance(&dec.blocks, &point).unwrap();
            let all = all_outcomes_variance(&dec.blocks, &point).unwrap();
            assert!(point.sigma2() <= det + 1e-10, "S={s}");
            assert!(det <= all + 1e-10, "S={s}");
            assert!(bar.unwrap() >= point.sigma2() - 1e-10, "S={s}");
        }
    }

    #[test]
    fn scavenged_approaches_deterministic_at_small_success() {
        let probe = probes::multicopy(10).unwrap();
        let dec = decompose(&probe, NoiseModel::new(0.8).unwrap()).unwrap();
        let det = deterministic_uncertainty(&dec.blocks).unwrap();
        let mut last_gap = f64::INFINITY;
        for s in [0.1, 0.01, 1e-3, 1e-5] {
            let point = allocate(&dec.blocks, &dec.hams, s).unwrap();
            let bound = gentle_bound_check(&dec.blocks, &point).unwrap();
            assert!(bound.holds);
            let (_, bar) = scavenged_variance(&dec.blocks, &point).unwrap();
            let gap = (bar.unwrap() - det).abs();
            assert!(gap <= std::f64::consts::SQRT_2 * s + 1e-9, "S={s} gap={gap}");
            assert!(gap <= last_gap + 1e-12);
            last_gap = gap;
        }
        assert!(last_gap < 1e-4);
    }
}
