//! Monte Carlo simulation of the filtered covariant measurement.
//!
//! The joint outcome density factorizes over blocks into trigonometric
//! polynomials of the estimate offset, so sampling is exact: draw a block,
//! decide success from the block filter weight, then rejection-sample the
//! offset under a certified grid envelope. Empirical conditional losses
//! converge to the closed-form sigma2(S) at the usual 1/sqrt(N) rate.

use crate::error::{Error, Result};
use crate::spin::HalfSpin;
use crate::spinblocks::DephasingBlock;
use crate::tradeoff::TradeoffPoint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Periodic loss 4 sin^2((theta - theta_hat)/2).
pub fn periodic_loss(theta: f64, theta_hat: f64) -> f64 {
    let half = 0.5 * (theta - theta_hat);
    4.0 * half.sin() * half.sin()
}

fn wrap_angle(x: f64) -> f64 {
    // into (-pi, pi]
    let mut y = x.rem_euclid(TWO_PI);
    if y > std::f64::consts::PI {
        y -= TWO_PI;
    }
    y
}

/// One run of the protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Success { theta_hat: f64 },
    Abstain,
}

#[derive(Clone, Copy, Debug)]
pub struct EstimationSample {
    pub theta: f64,
    pub block_j: HalfSpin,
    pub outcome: Outcome,
}

struct BlockDensity {
    j: HalfSpin,
    p: f64,
    s: f64,
    /// A_k = sum_m f_m f_{m+k} rho_{m,m+k}, k = 0..dim-1; A_0 = s
    fourier: Vec<f64>,
    envelope: f64,
}

impl BlockDensity {
    /// Conditional density of the offset u = theta_hat - theta given success
    /// in this block.
    fn conditional(&self, u: f64) -> f64 {
        let mut total = self.fourier[0];
        for (k, a) in self.fourier.iter().enumerate().skip(1) {
            total += 2.0 * a * (k as f64 * u).cos();
        }
        total / (TWO_PI * self.s)
    }
}

/// Precomputed outcome density of a solved protocol.
pub struct DensityModel {
    success: f64,
    total_p: f64,
    blocks: Vec<BlockDensity>,
    max_degree: usize,
}

impl DensityModel {
    /// Builds the density of a solved tradeoff point.
    pub fn new(blocks: &[DephasingBlock], point: &TradeoffPoint) -> Result<Self> {
        let filters = crate::scavenge::protocol_filters(blocks, point);
        Self::from_filters(blocks, &filters)
    }

    /// Builds the density of an explicit per-block filter bank (one vector
    /// per non-degenerate block, in block order).
    pub fn from_filters(blocks: &[DephasingBlock], filters: &[Vec<f64>]) -> Result<Self> {
        let mut densities = Vec::new();
        let mut success = 0.0;
        let mut total_p = 0.0;
        let mut max_degree = 0usize;
        let mut filter_iter = filters.iter();
        for b in blocks {
            if b.is_degenerate() {
                continue;
            }
            total_p += b.probability();
            let filter = filter_iter
                .next()
                .ok_or_else(|| Error::Domain("one filter per non-degenerate block required".into()))?;
            if filter.len() != b.dim() {
                return Err(Error::Domain("filter length mismatch".into()));
            }
            let dim = b.dim();
            let ms: Vec<HalfSpin> = b.j().magnetic_numbers().collect();
            let mut fourier = vec![0.0_f64; dim];
            for k in 0..dim {
                let mut acc = 0.0;
                for m in 0..dim - k {
                    if filter[m] == 0.0 || filter[m + k] == 0.0 {
                        continue;
                    }
                    acc += filter[m] * filter[m + k] * b.entry(ms[m], ms[m + k])?;
                }
                fourier[k] = acc;
            }
            let s = fourier[0];
            if s <= 0.0 {
                densities.push(BlockDensity {
                    j: b.j(),
                    p: b.probability(),
                    s: 0.0,
                    fourier,
                    envelope: 0.0,
                });
                continue;
            }
            success += b.probability() * s;
            max_degree = max_degree.max(dim - 1);
            // certified envelope: 1.05 x the maximum over a uniform grid of
            // 4 (2j) + 16 points, checked exactly at every proposal
            let grid_points = 4 * b.j().doubled().max(0) as usize + 16;
            let mut density = BlockDensity {
                j: b.j(),
                p: b.probability(),
                s,
                fourier,
                envelope: 0.0,
            };
            let mut grid_max = 0.0_f64;
            for g in 0..grid_points {
                let u = -std::f64::consts::PI + TWO_PI * g as f64 / grid_points as f64;
                grid_max = grid_max.max(density.conditional(u));
            }
            density.envelope = 1.05 * grid_max;
            densities.push(density);
        }
        Ok(DensityModel {
            success,
            total_p,
            blocks: densities,
            max_degree,
        })
    }

    /// Global success probability sum_j p_j s_j of the modeled protocol.
    pub fn success_probability(&self) -> f64 {
        self.success
    }

    /// Joint density p(theta_hat, succ | theta); covariant, so it depends on
    /// the offset only.
    pub fn density(&self, theta: f64, theta_hat: f64) -> f64 {
        let u = theta_hat - theta;
        let mut total = 0.0;
        for b in &self.blocks {
            if b.s > 0.0 {
                total += b.p * b.s * b.conditional(u);
            }
        }
        total
    }

    /// Draws one protocol run at true phase `theta`.
    pub fn sample<R: Rng>(&self, theta: f64, rng: &mut R) -> Result<EstimationSample> {
        // block draw over p_j (degenerate weight, if any, abstains)
        let x: f64 = rng.gen::<f64>() * self.total_p;
        let mut acc = 0.0;
        let mut chosen = None;
        for b in &self.blocks {
            acc += b.p;
            if x < acc {
                chosen = Some(b);
                break;
            }
        }
        let block = match chosen.or(self.blocks.last()) {
            Some(b) => b,
            None => return Err(Error::Domain("density model has no blocks".into())),
        };
        if block.s <= 0.0 || rng.gen::<f64>() >= block.s {
            return Ok(EstimationSample {
                theta,
                block_j: block.j,
                outcome: Outcome::Abstain,
            });
        }
        // rejection sampling of the offset
        for _ in 0..100_000 {
            let u = -std::f64::consts::PI + TWO_PI * rng.gen::<f64>();
            let q = block.conditional(u);
            if q > block.envelope {
                return Err(Error::EnvelopeViolation {
                    value: q,
                    envelope: block.envelope,
                });
            }
            if rng.gen::<f64>() * block.envelope < q {
                return Ok(EstimationSample {
                    theta,
                    block_j: block.j,
                    outcome: Outcome::Success {
                        theta_hat: wrap_angle(theta + u),
                    },
                });
            }
        }
        Err(Error::NonConvergence {
            context: "rejection sampling",
            iterations: 100_000,
        })
    }
}

/// Convenience one-shot density evaluation.
pub fn outcome_density(
    blocks: &[DephasingBlock],
    point: &TradeoffPoint,
    theta: f64,
    theta_hat: f64,
) -> Result<f64> {
    Ok(DensityModel::new(blocks, point)?.density(theta, theta_hat))
}

/// Single seeded protocol run.
pub fn sample(
    blocks: &[DephasingBlock],
    point: &TradeoffPoint,
    theta: f64,
    seed: u64,
) -> Result<EstimationSample> {
    let model = DensityModel::new(blocks, point)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    model.sample(theta, &mut rng)
}

/// Aggregates of a simulation batch.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimulationStats {
    pub samples: u64,
    pub successes: u64,
    pub loss_sum: f64,
    pub loss_sq_sum: f64,
}

impl SimulationStats {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.samples as f64
    }

    /// Empirical conditional loss over successful runs.
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.successes as f64
    }

    /// Standard error of the conditional loss.
    pub fn std_error(&self) -> f64 {
        let n = self.successes as f64;
        let mean = self.mean_loss();
        ((self.loss_sq_sum / n - mean * mean).max(0.0) / n).sqrt()
    }

    fn merge(mut self, other: SimulationStats) -> SimulationStats {
        self.samples += other.samples;
        self.successes += other.successes;
        self.loss_sum += other.loss_sum;
        self.loss_sq_sum += other.loss_sq_sum;
        self
    }
}

/// SplitMix64 step for deriving independent worker streams from one seed.
fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `samples` protocol draws at true phase `theta`, splitting the work
/// into deterministic per-chunk streams; the aggregate is independent of the
/// worker count.
pub fn simulate_batch(
    model: &DensityModel,
    theta: f64,
    samples: u64,
    seed: u64,
) -> Result<SimulationStats> {
    const CHUNK: u64 = 1 << 16;
    let chunks: Vec<u64> = (0..samples.div_ceil(CHUNK)).collect();
    let partials: Result<Vec<SimulationStats>> = chunks
        .par_iter()
        .map(|&c| {
            let count = CHUNK.min(samples - c * CHUNK);
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, c + 1));
            let mut stats = SimulationStats::default();
            for _ in 0..count {
                let run = model.sample(theta, &mut rng)?;
                stats.samples += 1;
                if let Outcome::Success { theta_hat } = run.outcome {
                    stats.successes += 1;
                    let loss = periodic_loss(theta, theta_hat);
                    stats.loss_sum += loss;
                    stats.loss_sq_sum += loss * loss;
                }
            }
            Ok(stats)
        })
        .collect();
    Ok(partials?
        .into_iter()
        .fold(SimulationStats::default(), SimulationStats::merge))
}

/// Conditional expected loss at true phase theta, by periodic trapezoid
/// quadrature (exact for the trigonometric-polynomial density).
pub fn conditional_loss_quadrature(model: &DensityModel, theta: f64) -> f64 {
    let points = 8 * model.max_degree + 32;
    let mut loss = 0.0;
    for k in 0..points {
        let theta_hat = -std::f64::consts::PI + TWO_PI * k as f64 / points as f64;
        loss += model.density(theta, theta_hat) * periodic_loss(theta, theta_hat);
    }
    loss * TWO_PI / points as f64 / model.success_probability()
}

/// Quadrature success probability at theta (must equal S for every theta).
pub fn success_quadrature(model: &DensityModel, theta: f64) -> f64 {
    let points = 8 * model.max_degree + 32;
    let mut norm = 0.0;
    for k in 0..points {
        let theta_hat = -std::f64::consts::PI + TWO_PI * k as f64 / points as f64;
        norm += model.density(theta, theta_hat);
    }
    norm * TWO_PI / points as f64
}

/// Maximum over the given true phases of the deviation between the
/// quadrature conditional loss and the model sigma2(S); covariance makes it
/// vanish.
pub fn worst_case_check(
    blocks: &[DephasingBlock],
    point: &TradeoffPoint,
    thetas: &[f64],
) -> Result<f64> {
    let model = DensityModel::new(blocks, point)?;
    let mut worst = 0.0_f64;
    for &theta in thetas {
        let dev = (conditional_loss_quadrature(&model, theta) - point.sigma2()).abs();
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;
    use crate::probes;
    use crate::spinblocks::decompose;
    use crate::tradeoff::allocate;
    use approx::assert_relative_eq;

    fn solved(n: usize, r: f64, s: f64) -> (Vec<DephasingBlock>, TradeoffPoint) {
        let probe = probes::multicopy(n).unwrap();
        let dec = decompose(&probe, NoiseModel::new(r).unwrap()).unwrap();
        let point = allocate(&dec.blocks, &dec.hams, s).unwrap();
        (dec.blocks, point)
    }

    #[test]
    fn single_qubit_density_is_shifted_cosine() {
        // f = 1, n = 1, r = 0.8: p(theta_hat, succ | theta) = (1 + 0.8 cos(u)) / 2pi
        let (blocks, point) = solved(1, 0.8, 1.0);
        let model = DensityModel::new(&blocks, &point).unwrap();
        for u in [-2.0_f64, -0.4, 0.0, 1.1, 3.0] {
            let want = (1.0 + 0.8 * u.cos()) / TWO_PI;
            assert_relative_eq!(model.density(0.3, 0.3 + u), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn density_is_covariant() {
        let (blocks, point) = solved(6, 0.8, 0.6);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let base = model.density(0.2, 1.0);
        for shift in [0.5, -1.3, 2.2] {
            assert_relative_eq!(
                model.density(0.2 + shift, 1.0 + shift),
                base,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn density_normalizes_to_success_probability() {
        let (blocks, point) = solved(6, 0.8, 0.6);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let s_quad = success_quadrature(&model, 0.7);
        assert_relative_eq!(s_quad, point.s(), epsilon = 1e-6);
        assert_relative_eq!(model.success_probability(), point.s(), epsilon = 1e-9);
    }

    #[test]
    fn quadrature_loss_matches_closed_form() {
        let (blocks, point) = solved(6, 0.8, 0.6);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let loss = conditional_loss_quadrature(&model, 0.0);
        assert_relative_eq!(loss, point.sigma2(), epsilon = 1e-6);
    }

    #[test]
    fn worst_case_deviation_vanishes() {
        let (blocks, point) = solved(6, 0.8, 0.6);
        let worst = worst_case_check(&blocks, &point, &[0.0, 1.0, -2.5]).unwrap();
        assert!(worst <= 1e-8, "worst-case deviation {worst}");
    }

    #[test]
    fn all_zero_filter_always_abstains() {
        let (blocks, _) = solved(4, 0.8, 0.4);
        let zeros: Vec<Vec<f64>> = blocks
            .iter()
            .filter(|b| !b.is_degenerate())
            .map(|b| vec![0.0; b.dim()])
            .collect();
        let model = DensityModel::from_filters(&blocks, &zeros).unwrap();
        assert_eq!(model.success_probability(), 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..500 {
            let run = model.sample(0.0, &mut rng).unwrap();
            assert_eq!(run.outcome, Outcome::Abstain);
        }
    }

    #[test]
    fn sampling_reproducible_for_fixed_seed() {
        let (blocks, point) = solved(4, 0.8, 0.6);
        let a = sample(&blocks, &point, 0.3, 42).unwrap();
        let b = sample(&blocks, &point, 0.3, 42).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.block_j, b.block_j);
    }

    #[test]
    fn batch_independent_of_chunking_layout() {
        let (blocks, point) = solved(4, 0.8, 0.6);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let s1 = simulate_batch(&model, 0.1, 40_000, 9).unwrap();
        let s2 = simulate_batch(&model, 0.1, 40_000, 9).unwrap();
        assert_eq!(s1.loss_sum, s2.loss_sum);
        assert_eq!(s1.successes, s2.successes);
    }

    #[test]
    fn single_qubit_empirical_loss_matches_deterministic_value() {
        let (blocks, point) = solved(1, 0.8, 1.0);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let stats = simulate_batch(&model, 0.4, 200_000, 11).unwrap();
        // sigma2_det = 2 - r = 1.2
        assert!(
            (stats.mean_loss() - 1.2).abs() <= 3.0 * stats.std_error(),
            "mean {} vs 1.2 (se {})",
            stats.mean_loss(),
            stats.std_error()
        );
    }

    #[test]
    fn estimator_converges_at_root_n_rate() {
        let (blocks, point) = solved(6, 0.8, 0.6);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let mut last_se = f64::INFINITY;
        for samples in [10_000_u64, 100_000, 1_000_000] {
            let stats = simulate_batch(&model, 0.9, samples, 314).unwrap();
            let dev = (stats.mean_loss() - point.sigma2()).abs();
            assert!(
                dev <= 4.0 * stats.std_error(),
                "N={samples}: dev {dev} vs se {}",
                stats.std_error()
            );
            // standard error shrinks roughly like 1/sqrt(10) per decade
            assert!(stats.std_error() < last_se);
            last_se = stats.std_error();
        }
    }

    #[test]
    fn empirical_conditional_loss_matches_model() {
        let (blocks, point) = solved(6, 0.8, 0.6);
        let model = DensityModel::new(&blocks, &point).unwrap();
        let stats = simulate_batch(&model, -1.2, 300_000, 5).unwrap();
        assert!(
            (stats.mean_loss() - point.sigma2()).abs() <= 3.0 * stats.std_error(),
            "mean {} vs {} (se {})",
            stats.mean_loss(),
            point.sigma2(),
            stats.std_error()
        );
        assert!((stats.success_rate() - point.s()).abs() <= 4.0 * (point.s() / 300_000.0_f64).sqrt());
    }
}
