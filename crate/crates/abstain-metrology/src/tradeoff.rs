//! Global success-probability allocation across spin blocks.
//!
//! The overall uncertainty at success probability S is
//!
//! ```text
//!     sigma2(S) = min over {s_j}  sum_j (p_j s_j / S) sigma2_j(s_j),
//!                 subject to      sum_j p_j s_j = S
//! ```
//!
//! Writing g_j(s) = s sigma2_j(s), each g_j is convex (it equals the value of
//! the per-block semidefinite relaxation, which is exact here), so the
//! allocation splits into independent one-dimensional problems coupled by a
//! single multiplier. We bisect on the multiplier; each block minimizes
//! g_j(s) - lambda s by golden section over [s_j*, 1], with dropping the
//! block (s_j -> 0) allowed. The residual duality-style gap is evaluated and
//! reported with every point.

use crate::blocksolver::{
    self, constrained_block_solve_warm, deterministic_block_variance, unconstrained_minimum,
    BlockSolution,
};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::probes::SymmetricProbe;
use crate::spin::HalfSpin;
use crate::spinblocks::{decompose, BlockHamiltonian, DephasingBlock};
use rayon::prelude::*;
use std::collections::BTreeMap;

const GOLDEN_S_TOL: f64 = 1e-8;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Per-block share of one tradeoff point.
#[derive(Clone, Debug)]
pub struct BlockAllocation {
    pub j: HalfSpin,
    /// Block success probability; 0 means the block is abstained entirely.
    pub s_j: f64,
    /// Block uncertainty at s_j (the unconstrained minimum when dropped).
    pub sigma2_j: f64,
    /// Full profile when the block participates.
    pub solution: Option<BlockSolution>,
}

/// One point of the tradeoff curve.
#[derive(Clone, Debug)]
pub struct TradeoffPoint {
    s: f64,
    sigma2: f64,
    dual_gap: f64,
    entries: Vec<BlockAllocation>,
}

impl TradeoffPoint {
    /// Global success probability.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Global uncertainty sigma2(S).
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Relative gap between the found point and its Lagrangian lower bound.
    pub fn dual_gap(&self) -> f64 {
        self.dual_gap
    }

    pub fn entries(&self) -> &[BlockAllocation] {
        &self.entries
    }

    /// Map j -> s_j.
    pub fn allocation(&self) -> BTreeMap<HalfSpin, f64> {
        self.entries.iter().map(|e| (e.j, e.s_j)).collect()
    }

    /// Map j -> sigma2_j.
    pub fn per_block_sigma2(&self) -> BTreeMap<HalfSpin, f64> {
        self.entries.iter().map(|e| (e.j, e.sigma2_j)).collect()
    }
}

/// A sampled tradeoff curve for one probe and noise level.
#[derive(Clone, Debug)]
pub struct TradeoffCurve {
    pub probe_n: usize,
    pub r: f64,
    pub points: Vec<TradeoffPoint>,
}

/// Weighted deterministic uncertainty sum_j p_j (2 - 2 sum_m o_m).
pub fn deterministic_uncertainty(blocks: &[DephasingBlock]) -> Result<f64> {
    let mut total = 0.0;
    for b in blocks {
        if b.is_degenerate() {
            continue;
        }
        total += b.probability() * deterministic_block_variance(b)?;
    }
    Ok(total)
}

/// Per-block state reused across multiplier iterations of one allocation.
struct BlockContext<'a> {
    block: &'a DephasingBlock,
    ham: &'a BlockHamiltonian,
    lambda_min: f64,
    ground: Vec<f64>,
    s_star: f64,
    warm: Option<Vec<bool>>,
}

struct InnerSolution {
    s: f64,
    g: f64,
    sigma2: f64,
    solution: Option<BlockSolution>,
    /// min_s g(s) - lambda s, the block's contribution to the dual value
    dual_term: f64,
}

impl<'a> BlockContext<'a> {
    fn new(block: &'a DephasingBlock, ham: &'a BlockHamiltonian) -> Result<Self> {
        let (lambda_min, ground) = unconstrained_minimum(ham)?;
        let s_star = blocksolver::critical_block_success(block, &ground)?;
        Ok(BlockContext {
            block,
            ham,
            lambda_min,
            ground,
            s_star,
            warm: None,
        })
    }

    /// g(s) = s sigma2(s) together with the solved profile.
    fn g(&mut self, s: f64) -> Result<(f64, f64, Option<BlockSolution>)> {
        if s <= self.s_star {
            let sol = blocksolver::unconstrained_block_solution(
                self.block,
                self.ham,
                s,
                &self.ground,
                self.lambda_min,
            );
            return Ok((s * self.lambda_min, self.lambda_min, Some(sol)));
        }
        let sol = blocksolver::constrained_solve_above_critical(
            self.block,
            self.ham,
            s,
            self.warm.as_deref(),
        )?;
        self.warm = Some(sol.coincidence_mask().to_vec());
        Ok((s * sol.sigma2(), sol.sigma2(), Some(sol)))
    }

    /// Minimizes g(s) - lambda s over s in (0, 1], allowing the drop s = 0.
    fn minimize(&mut self, lambda: f64) -> Result<InnerSolution> {
        if lambda <= self.lambda_min {
            // every positive allocation costs at least (lambda_min - lambda) s
            return Ok(InnerSolution {
                s: 0.0,
                g: 0.0,
                sigma2: self.lambda_min,
                solution: None,
                dual_term: 0.0,
            });
        }
        let lo_bound = self.s_star.min(1.0);
        let (mut lo, mut hi) = (lo_bound, 1.0);
        if hi - lo > GOLDEN_S_TOL {
            let mut c = hi - INV_PHI * (hi - lo);
            let mut d = lo + INV_PHI * (hi - lo);
            let mut fc = self.g(c)?.0 - lambda * c;
            let mut fd = self.g(d)?.0 - lambda * d;
            while hi - lo > GOLDEN_S_TOL {
                if fc <= fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - INV_PHI * (hi - lo);
                    fc = self.g(c)?.0 - lambda * c;
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + INV_PHI * (hi - lo);
                    fd = self.g(d)?.0 - lambda * d;
                }
            }
        }
        let mut best_s = 0.5 * (lo + hi);
        if (best_s - lo_bound).abs() <= 2.0 * GOLDEN_S_TOL {
            best_s = lo_bound; // snap onto the flat boundary
        }
        let (mut best_g, mut best_sigma, mut best_sol) = self.g(best_s)?;
        let mut best_phi = best_g - lambda * best_s;
        for cand in [1.0, lo_bound] {
            let (g, sigma, sol) = self.g(cand)?;
            let phi = g - lambda * cand;
            // ties break toward the boundary candidates, in particular the
            // flat region whose allocation the outer loop can trim freely
            if phi <= best_phi + 1e-13 {
                best_phi = phi.min(best_phi);
                best_s = cand;
                best_g = g;
                best_sigma = sigma;
                best_sol = sol;
            }
        }
        if best_phi >= 0.0 {
            return Ok(InnerSolution {
                s: 0.0,
                g: 0.0,
                sigma2: self.lambda_min,
                solution: None,
                dual_term: 0.0,
            });
        }
        Ok(InnerSolution {
            s: best_s,
            g: best_g,
            sigma2: best_sigma,
            solution: best_sol,
            dual_term: best_phi,
        })
    }
}

/// Optimal allocation of global success probability `s_target` across blocks.
pub fn allocate(
    blocks: &[DephasingBlock],
    hams: &[BlockHamiltonian],
    s_target: f64,
) -> Result<TradeoffPoint> {
    if !(s_target > 0.0 && s_target <= 1.0 + 1e-12) {
        return Err(Error::InvalidSuccess { s: s_target });
    }
    let s_target = s_target.min(1.0);
    let mut contexts: Vec<BlockContext> = blocks
        .iter()
        .zip(hams)
        .filter(|(b, _)| !b.is_degenerate())
        .map(|(b, h)| BlockContext::new(b, h))
        .collect::<Result<_>>()?;
    if contexts.is_empty() {
        return Err(Error::Domain("no non-degenerate blocks".into()));
    }

    // deterministic shortcut: everything at s_j = 1
    if s_target >= 1.0 - 1e-12 {
        let mut entries = Vec::with_capacity(contexts.len());
        let mut total_p = 0.0;
        let mut num = 0.0;
        for ctx in &contexts {
            let det = deterministic_block_variance(ctx.block)?;
            let sol = constrained_block_solve_warm(ctx.block, ctx.ham, 1.0, None)?;
            total_p += ctx.block.probability();
            num += ctx.block.probability() * det;
            entries.push(BlockAllocation {
                j: ctx.block.j(),
                s_j: 1.0,
                sigma2_j: det,
                solution: Some(sol),
            });
        }
        return Ok(TradeoffPoint {
            s: total_p,
            sigma2: num / total_p,
            dual_gap: 0.0,
            entries,
        });
    }

    // bisection on the multiplier; realized success is monotone in lambda
    let evaluate = |contexts: &mut Vec<BlockContext>, lambda: f64| -> Result<(f64, Vec<InnerSolution>)> {
        let inner: Result<Vec<InnerSolution>> = contexts
            .par_iter_mut()
            .map(|ctx| ctx.minimize(lambda))
            .collect();
        let inner = inner?;
        let realized = contexts
            .iter()
            .zip(&inner)
            .map(|(c, i)| c.block.probability() * i.s)
            .sum();
        Ok((realized, inner))
    };

    let mut lam_lo = 0.0_f64;
    let mut lam_hi = 4.0_f64;
    for _ in 0..40 {
        let (realized, _) = evaluate(&mut contexts, lam_hi)?;
        if realized >= s_target {
            break;
        }
        lam_hi *= 2.0;
    }
    for _ in 0..90 {
        let mid = 0.5 * (lam_lo + lam_hi);
        let (realized, _) = evaluate(&mut contexts, mid)?;
        if realized >= s_target {
            lam_hi = mid;
        } else {
            lam_lo = mid;
        }
        if lam_hi - lam_lo <= 1e-13 * lam_hi.max(1.0) {
            break;
        }
    }
    let lambda = lam_hi;
    let (_, mut inner) = evaluate(&mut contexts, lambda)?;

    // exact feasibility: absorb the residual in blocks that are flat at the
    // critical multiplier (s in (0, s_j*]), else nudge an interior block
    let realized_s = |contexts: &Vec<BlockContext>, inner: &Vec<InnerSolution>| -> f64 {
        contexts
            .iter()
            .zip(inner)
            .map(|(c, i)| c.block.probability() * i.s)
            .sum()
    };
    let mut residual = realized_s(&contexts, &inner) - s_target;
    if residual > 1e-15 {
        // reduce flat blocks, worst uncertainty first
        let mut order: Vec<usize> = (0..contexts.len())
            .filter(|&k| inner[k].s > 0.0 && inner[k].s <= contexts[k].s_star + 10.0 * GOLDEN_S_TOL)
            .collect();
        order.sort_by(|&a, &b| contexts[b].lambda_min.total_cmp(&contexts[a].lambda_min));
        for k in order {
            if residual <= 1e-15 {
                break;
            }
            let p = contexts[k].block.probability();
            let cut = (residual / p).min(inner[k].s);
            inner[k].s -= cut;
            inner[k].g = inner[k].s * contexts[k].lambda_min;
            if inner[k].s == 0.0 {
                inner[k].solution = None;
            } else {
                let (_, _, sol) = contexts[k].g(inner[k].s)?;
                inner[k].solution = sol;
            }
            residual -= cut * p;
        }
    }
    if residual.abs() > 1e-12 {
        // nudge the largest block with interior allocation
        if let Some(k) = (0..contexts.len())
            .filter(|&k| inner[k].s > 0.0)
            .max_by(|&a, &b| {
                (contexts[a].block.probability())
                    .total_cmp(&contexts[b].block.probability())
            })
        {
            let p = contexts[k].block.probability();
            let new_s = (inner[k].s - residual / p).clamp(1e-12, 1.0);
            let (g, sigma, sol) = contexts[k].g(new_s)?;
            inner[k] = InnerSolution {
                s: new_s,
                g,
                sigma2: sigma,
                solution: sol,
                dual_term: inner[k].dual_term,
            };
        }
    }

    let total_s = realized_s(&contexts, &inner);
    let mut primal = contexts
        .iter()
        .zip(&inner)
        .map(|(c, i)| c.block.probability() * i.g)
        .sum::<f64>()
        / total_s;
    let dual = (contexts
        .iter()
        .zip(&inner)
        .map(|(c, i)| c.block.probability() * i.dual_term)
        .sum::<f64>()
        + lambda * s_target)
        / s_target;
    let mut gap = ((primal - dual) / primal.abs().max(1e-300)).max(0.0);

    // local coordinate search over the two heaviest participating blocks
    if gap > 1e-6 {
        refine_pair(&mut contexts, &mut inner, s_target)?;
        let total_s = realized_s(&contexts, &inner);
        primal = contexts
            .iter()
            .zip(&inner)
            .map(|(c, i)| c.block.probability() * i.g)
            .sum::<f64>()
            / total_s;
        gap = ((primal - dual) / primal.abs().max(1e-300)).max(0.0);
    }

    let entries: Vec<BlockAllocation> = contexts
        .iter()
        .zip(inner)
        .map(|(c, i)| BlockAllocation {
            j: c.block.j(),
            s_j: i.s,
            sigma2_j: i.sigma2,
            solution: i.solution,
        })
        .collect();
    Ok(TradeoffPoint {
        s: total_s,
        sigma2: primal,
        dual_gap: gap,
        entries,
    })
}

/// One pass of pairwise exchange between the two largest participating
/// blocks, holding the total success fixed.
fn refine_pair(
    contexts: &mut [BlockContext],
    inner: &mut [InnerSolution],
    _s_target: f64,
) -> Result<()> {
    let mut heavy: Vec<usize> = (0..contexts.len()).filter(|&k| inner[k].s > 0.0).collect();
    heavy.sort_by(|&a, &b| {
        contexts[b]
            .block
            .probability()
            .total_cmp(&contexts[a].block.probability())
    });
    if heavy.len() < 2 {
        return Ok(());
    }
    let (a, b) = (heavy[0], heavy[1]);
    let (pa, pb) = (
        contexts[a].block.probability(),
        contexts[b].block.probability(),
    );
    let (sa, sb) = (inner[a].s, inner[b].s);
    // transfer t of success from b to a: sa + t/pa, sb - t/pb
    let t_max = ((1.0 - sa) * pa).min(sb * pb);
    let t_min = -((1.0 - sb) * pb).min(sa * pa);
    if t_max - t_min < 1e-12 {
        return Ok(());
    }
    let (mut lo, mut hi) = (t_min, t_max);
    let value_at = |contexts: &mut [BlockContext], t: f64| -> Result<f64> {
        let (ga, ..) = contexts[a].g((sa + t / pa).clamp(0.0, 1.0).max(1e-15))?;
        let (gb, ..) = contexts[b].g((sb - t / pb).clamp(0.0, 1.0).max(1e-15))?;
        Ok(pa * ga + pb * gb)
    };
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = value_at(contexts, c)?;
    let mut fd = value_at(contexts, d)?;
    for _ in 0..80 {
        if hi - lo < 1e-10 {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = value_at(contexts, c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = value_at(contexts, d)?;
        }
    }
    let t = 0.5 * (lo + hi);
    let base = pa * inner[a].g + pb * inner[b].g;
    let candidate = value_at(contexts, t)?;
    if candidate < base - 1e-15 {
        for (k, p, s0, sign) in [(a, pa, sa, 1.0), (b, pb, sb, -1.0)] {
            let s_new = (s0 + sign * t / p).clamp(0.0, 1.0);
            if s_new <= 1e-15 {
                inner[k].s = 0.0;
                inner[k].g = 0.0;
                inner[k].solution = None;
            } else {
                let (g, sigma, sol) = contexts[k].g(s_new)?;
                inner[k].s = s_new;
                inner[k].g = g;
                inner[k].sigma2 = sigma;
                inner[k].solution = sol;
            }
        }
    }
    Ok(())
}

/// Critical success probability S* = sum_j p_j s_j* of the strategy that
/// filters every block to its unconstrained optimum.
///
/// The optimal tradeoff keeps improving below this value by reallocating
/// success onto high-spin blocks; the exact plateau onset of sigma2(S) is
/// the maximal-spin threshold returned by [`ultimate_postselect`].
pub fn critical_success(
    blocks: &[DephasingBlock],
    hams: &[BlockHamiltonian],
) -> Result<f64> {
    let mut total = 0.0;
    for (b, h) in blocks.iter().zip(hams) {
        if b.is_degenerate() {
            continue;
        }
        let (_, ground) = unconstrained_minimum(h)?;
        total += b.probability() * blocksolver::critical_block_success(b, &ground)?;
    }
    Ok(total)
}

/// Ultimate post-selection on the maximal-spin block: returns
/// (lambda_min(H^J), p_J s_J*). Below that success probability the optimal
/// curve is exactly flat.
pub fn ultimate_postselect(
    blocks: &[DephasingBlock],
    hams: &[BlockHamiltonian],
) -> Result<(f64, f64)> {
    let (b, h) = blocks
        .iter()
        .zip(hams)
        .filter(|(b, _)| b.has_state())
        .last()
        .ok_or_else(|| Error::Domain("no block with a defined state".into()))?;
    let (lambda, ground) = unconstrained_minimum(h)?;
    let s_star = blocksolver::critical_block_success(b, &ground)?;
    Ok((lambda, b.probability() * s_star))
}

/// Sweeps the tradeoff curve over a grid of success probabilities, reusing
/// the block decomposition across grid points.
pub fn tradeoff_curve(
    probe: &SymmetricProbe,
    noise: NoiseModel,
    s_grid: &[f64],
) -> Result<TradeoffCurve> {
    for &s in s_grid {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidSuccess { s });
        }
    }
    let dec = decompose(probe, noise)?;
    let mut sorted: Vec<f64> = s_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let points: Result<Vec<TradeoffPoint>> = sorted
        .par_iter()
        .map(|&s| allocate(&dec.blocks, &dec.hams, s))
        .collect();
    Ok(TradeoffCurve {
        probe_n: probe.n(),
        r: noise.r(),
        points: points?,
    })
}
