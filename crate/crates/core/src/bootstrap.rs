//! Gaussian-multiplier bootstrap of the grid maximum.
//!
//! Draw `b` uses standard-normal weights from a ChaCha8 stream seeded by
//! `master_seed` and positioned on stream `b`, so every draw is a pure
//! function of `(master_seed, b)` and results do not depend on how draws are
//! scheduled.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::StudentizedEvaluation;

pub const MIN_DRAWS: usize = 100;
pub const DEFAULT_DRAWS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub draws: usize,
    pub alpha: f64,
    pub master_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { draws: DEFAULT_DRAWS, alpha: 0.05, master_seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < MIN_DRAWS {
            return Err(Error::param("draws", alloc::format!("need at least {MIN_DRAWS}, got {}", self.draws)));
        }
        check_alpha(self.alpha)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", alloc::format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// 1-based rank `⌈(1−α)B⌉` of the order statistic used as critical value.
pub fn quantile_rank(alpha: f64, draws: usize) -> usize {
    let target = (1.0 - alpha) * draws as f64;
    // absorb rounding in (1 − α)·B, e.g. 0.95 · 200000
    let k = libm::ceil(target - 1e-9 * target.max(1.0)) as usize;
    k.clamp(1, draws)
}

/// Sorted bootstrap maxima `max_j |T̂*(x_j)|`, one per draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub maxima: Vec<f64>,
}

impl BootstrapDraws {
    pub fn from_unsorted(mut maxima: Vec<f64>) -> Self {
        maxima.sort_by(f64::total_cmp);
        Self { maxima }
    }

    /// Smallest `t` with empirical conditional probability `P*(max <= t) >= 1 − α`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        self.maxima[quantile_rank(alpha, self.maxima.len()) - 1]
    }
}

/// Runs independent bootstrap draws and returns their results in draw-index
/// order.
pub trait DrawExecutor {
    fn map_draws<T, F>(&self, draws: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs draws one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl DrawExecutor for Sequential {
    fn map_draws<T, F>(&self, draws: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..draws).map(f).collect()
    }
}

/// Generator for draw `b`.
pub fn weight_stream(master_seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(draw);
    rng
}

/// The `n` standard-normal multipliers of draw `b`.
pub fn draw_weights(master_seed: u64, draw: u64, n: usize) -> Vec<f64> {
    let mut rng = weight_stream(master_seed, draw);
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `T̂*(x_j) = (n σ̂(x_j))⁻¹ Σ_i w_i (ψ(X_i, x_j) − f̂(x_j))` for each location.
pub fn bootstrap_draw(evaluation: &StudentizedEvaluation, weights: &[f64]) -> Result<Vec<f64>> {
    let n = evaluation.n();
    if weights.len() != n {
        return Err(Error::LengthMismatch { context: "bootstrap weights", expected: n, got: weights.len() });
    }
    let nf = n as f64;
    Ok((0..evaluation.p())
        .map(|j| {
            let center = evaluation.fhat[j];
            let sum: f64 = evaluation.psi_column(j).iter().zip(weights).map(|(&v, &w)| w * (v - center)).sum();
            sum / (nf * evaluation.sigma_hat[j])
        })
        .collect())
}

// max_j |Σ_i w_i c_ij| over the columns of a location-major matrix
fn column_max(scaled: &[f64], n: usize, weights: &[f64]) -> f64 {
    scaled.chunks_exact(n).map(|col| col.iter().zip(weights).map(|(c, w)| c * w).sum::<f64>().abs()).fold(0.0, f64::max)
}

/// Bootstrap maxima for every draw, sorted.
pub fn bootstrap_maxima<E: DrawExecutor>(
    evaluation: &StudentizedEvaluation,
    draws: usize,
    master_seed: u64,
    executor: &E,
) -> BootstrapDraws {
    let n = evaluation.n();
    let scaled = evaluation.scaled_centered();
    let maxima = executor.map_draws(draws, |b| {
        let w = draw_weights(master_seed, b as u64, n);
        column_max(&scaled, n, &w)
    });
    BootstrapDraws::from_unsorted(maxima)
}

/// Critical value `ĉ*_{1−α}`: the `⌈(1−α)B⌉`-th smallest bootstrap maximum.
pub fn critical_value<E: DrawExecutor>(
    evaluation: &StudentizedEvaluation,
    config: &BootstrapConfig,
    executor: &E,
) -> Result<(f64, BootstrapDraws)> {
    config.validate()?;
    let draws = bootstrap_maxima(evaluation, config.draws, config.master_seed, executor);
    Ok((draws.quantile(config.alpha), draws))
}

/// Critical values over a subset of the locations and over all of them,
/// computed from the same weight vectors. Per draw the subset maximum cannot
/// exceed the full maximum, hence `c_coarse <= c_fine`.
pub fn critical_value_nested<E: DrawExecutor>(
    evaluation_fine: &StudentizedEvaluation,
    coarse_indices: &[usize],
    config: &BootstrapConfig,
    executor: &E,
) -> Result<(f64, f64)> {
    config.validate()?;
    let p = evaluation_fine.p();
    if coarse_indices.is_empty() {
        return Err(Error::NotASubset("empty index set".into()));
    }
    let mut seen = alloc::vec![false; p];
    for &j in coarse_indices {
        if j >= p || seen[j] {
            return Err(Error::NotASubset(alloc::format!("index {j} is out of range or repeated (p = {p})")));
        }
        seen[j] = true;
    }
    let n = evaluation_fine.n();
    let scaled = evaluation_fine.scaled_centered();
    let pairs = executor.map_draws(config.draws, |b| {
        let w = draw_weights(config.master_seed, b as u64, n);
        let per_point: Vec<f64> =
            scaled.chunks_exact(n).map(|col| col.iter().zip(&w).map(|(c, w)| c * w).sum::<f64>().abs()).collect();
        let fine = per_point.iter().copied().fold(0.0, f64::max);
        let coarse = coarse_indices.iter().map(|&j| per_point[j]).fold(0.0, f64::max);
        (coarse, fine)
    });
    let (coarse, fine): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let coarse = BootstrapDraws::from_unsorted(coarse).quantile(config.alpha);
    let fine = BootstrapDraws::from_unsorted(fine).quantile(config.alpha);
    Ok((coarse, fine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kde::{evaluate_on_grid, KdeStatistic, LinearStatistic, Sample};
    use crate::kernels::{kernel_constants, KernelId};
    use std::vec;

    fn eval(values: Vec<f64>, grid: &[f64], h: f64) -> StudentizedEvaluation {
        let s = Sample::new(values).unwrap();
        let k = KdeStatistic::new(kernel_constants(KernelId::Gaussian).unwrap(), h).unwrap();
        evaluate_on_grid(&s, &k, grid).unwrap()
    }

    fn spread(n: usize) -> Vec<f64> {
        (0..n).map(|i| libm::sin(i as f64 * 1.7) * 2.0 + (i % 7) as f64 * 0.1).collect()
    }

    #[test]
    fn constant_weights_annihilate() {
        let e = eval(spread(30), &[-0.5, 0.0, 0.5], 0.4);
        let t = bootstrap_draw(&e, &[2.5; 30]).unwrap();
        assert!(t.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_point_hand_value() {
        // ψ − f̂ = ±(a − b)/2, σ̂ = |a − b| / (2√2), so w = (1, −1) gives √2 sign(a − b)
        let e = eval(vec![0.0, 1.0], &[0.2], 1.0);
        let col = e.psi_column(0);
        let (a, b) = (col[0], col[1]);
        let t = bootstrap_draw(&e, &[1.0, -1.0]).unwrap();
        assert!((t[0] - core::f64::consts::SQRT_2 * (a - b).signum()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let e = eval(spread(10), &[0.0], 0.5);
        assert!(matches!(bootstrap_draw(&e, &[1.0; 9]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn unit_conditional_variance() {
        let e = eval(spread(40), &[0.3], 0.5);
        let m = 100_000;
        let mut s2 = 0.0;
        for b in 0..m {
            let t = bootstrap_draw(&e, &draw_weights(7, b, 40)).unwrap()[0];
            s2 += t * t;
        }
        let var = s2 / m as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn quantile_is_order_statistic() {
        let e = eval(spread(60), &[-1.0, 0.0, 1.0], 0.5);
        let cfg = BootstrapConfig { draws: 999, alpha: 0.1, master_seed: 3 };
        let (c, d) = critical_value(&e, &cfg, &Sequential).unwrap();
        let below = d.maxima.iter().filter(|&&m| m <= c).count();
        assert!(below * 10 >= 9 * 999);
        let k = quantile_rank(0.1, 999);
        let prev = d.maxima[k - 2];
        let below_prev = d.maxima.iter().filter(|&&m| m <= prev).count();
        assert!(below_prev * 10 < 9 * 999);
    }

    #[test]
    fn rank_absorbs_rounding() {
        assert_eq!(quantile_rank(0.05, 200_000), 190_000);
        assert_eq!(quantile_rank(0.5, 200_000), 100_000);
        assert_eq!(quantile_rank(0.1, 999), 900);
        assert_eq!(quantile_rank(0.999, 100), 1);
    }

    #[test]
    fn config_validation() {
        let e = eval(spread(10), &[0.0], 0.5);
        let bad = BootstrapConfig { draws: 10, ..Default::default() };
        assert!(critical_value(&e, &bad, &Sequential).is_err());
        let bad = BootstrapConfig { alpha: 1.0, ..Default::default() };
        assert!(critical_value(&e, &bad, &Sequential).is_err());
    }

    #[test]
    fn reproducible_and_monotone_in_alpha() {
        let e = eval(spread(50), &[-0.5, 0.0, 0.5, 1.0], 0.4);
        let cfg = BootstrapConfig { draws: 500, alpha: 0.05, master_seed: 11 };
        let (c1, d1) = critical_value(&e, &cfg, &Sequential).unwrap();
        let (c2, d2) = critical_value(&e, &cfg, &Sequential).unwrap();
        assert_eq!(c1.to_bits(), c2.to_bits());
        assert_eq!(d1, d2);
        let mut prev = f64::INFINITY;
        for a in [0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
            let q = d1.quantile(a);
            assert!(q <= prev);
            prev = q;
        }
    }

    struct Affine(KdeStatistic, f64, f64);

    impl LinearStatistic for Affine {
        fn psi(&self, o: f64, x: f64) -> f64 {
            self.1 * self.0.psi(o, x) + self.2
        }
        fn bandwidth(&self) -> f64 {
            self.0.bandwidth()
        }
    }

    #[test]
    fn affine_invariance_of_draws() {
        let s = Sample::new(spread(25)).unwrap();
        let k = KdeStatistic::new(kernel_constants(KernelId::Gaussian).unwrap(), 0.6).unwrap();
        let grid = [-0.4, 0.1, 0.9];
        let e0 = evaluate_on_grid(&s, &k, &grid).unwrap();
        let e1 = evaluate_on_grid(&s, &Affine(k, 3.5, -2.0), &grid).unwrap();
        let w = draw_weights(5, 0, 25);
        let t0 = bootstrap_draw(&e0, &w).unwrap();
        let t1 = bootstrap_draw(&e1, &w).unwrap();
        for (a, b) in t0.iter().zip(&t1) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn nested_examples() {
        let e = eval(spread(40), &[-0.5, 0.5], 0.4);
        let cfg = BootstrapConfig { draws: 300, alpha: 0.05, master_seed: 1 };
        let (c, f) = critical_value_nested(&e, &[0, 1], &cfg, &Sequential).unwrap();
        assert_eq!(c, f);
        let (full, _) = critical_value(&e, &cfg, &Sequential).unwrap();
        assert_eq!(full, f);
        for seed in 0..10 {
            let cfg = BootstrapConfig { master_seed: seed, ..cfg };
            let (c, f) = critical_value_nested(&e, &[1], &cfg, &Sequential).unwrap();
            assert!(c <= f);
        }
        assert!(critical_value_nested(&e, &[2], &cfg, &Sequential).is_err());
        assert!(critical_value_nested(&e, &[0, 0], &cfg, &Sequential).is_err());
    }
}
