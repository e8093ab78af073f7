//! Linear statistics, the kernel density estimator and the studentized
//! process on a grid.

use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// Estimated variances below this (density² units) are treated as zero: the
/// summands carry no information at that location and the studentized
/// statistic is undefined there.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// An i.i.d. sample of real observations, `n >= 2`, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let finite = values.iter().filter(|v| v.is_finite()).count();
        if values.len() < 2 || finite != values.len() {
            return Err(Error::InvalidSample { required: 2, got: finite });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted copy of the observations.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// An estimator of the form `n⁻¹ Σ ψ_h(X_i, x)`.
pub trait LinearStatistic {
    fn psi(&self, observation: f64, x: f64) -> f64;

    fn bandwidth(&self) -> f64;
}

/// `ψ_h(X, x) = h⁻¹ K((X - x) / h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeStatistic {
    pub kernel: Kernel,
    h: f64,
}

impl KdeStatistic {
    pub fn new(kernel: Kernel, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::param("bandwidth", "must be positive and finite"));
        }
        Ok(Self { kernel, h: bandwidth })
    }
}

impl LinearStatistic for KdeStatistic {
    #[inline]
    fn psi(&self, observation: f64, x: f64) -> f64 {
        self.kernel.eval0((observation - x) / self.h) / self.h
    }

    fn bandwidth(&self) -> f64 {
        self.h
    }
}

pub fn kde_at<S: LinearStatistic>(sample: &Sample, statistic: &S, x: f64) -> f64 {
    let v = sample.values();
    v.iter().map(|&xi| statistic.psi(xi, x)).sum::<f64>() / v.len() as f64
}

/// Result of the variance estimator at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceEstimate {
    Positive(f64),
    /// Below [`VARIANCE_FLOOR`]; carries the computed value.
    Degenerate(f64),
}

impl VarianceEstimate {
    pub fn value(self) -> f64 {
        match self {
            VarianceEstimate::Positive(v) | VarianceEstimate::Degenerate(v) => v,
        }
    }

    pub fn is_degenerate(self) -> bool {
        matches!(self, VarianceEstimate::Degenerate(_))
    }
}

// Two-pass form of n⁻¹[n⁻¹Σψ² − (n⁻¹Σψ)²]; algebraically identical and
// immune to cancellation.
fn mean_and_variance(psi: &[f64]) -> (f64, f64) {
    let n = psi.len() as f64;
    let mean = psi.iter().sum::<f64>() / n;
    let ss: f64 = psi.iter().map(|&p| (p - mean) * (p - mean)).sum();
    (mean, ss / (n * n))
}

/// `σ̂²_n(x) = n⁻¹ [n⁻¹ Σ ψ² − (n⁻¹ Σ ψ)²]`.
pub fn variance_hat_at<S: LinearStatistic>(sample: &Sample, statistic: &S, x: f64) -> VarianceEstimate {
    let psi: Vec<f64> = sample.values().iter().map(|&xi| statistic.psi(xi, x)).collect();
    let (_, var) = mean_and_variance(&psi);
    if var < VARIANCE_FLOOR {
        VarianceEstimate::Degenerate(var)
    } else {
        VarianceEstimate::Positive(var)
    }
}

/// `f̂`, `σ̂` and the full `ψ(X_i, x_j)` array at every grid location.
///
/// `psi` is stored location-major: the `n` values for location `j` are
/// contiguous, which is the access pattern of the bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentizedEvaluation {
    pub locations: Vec<f64>,
    pub fhat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    #[serde(skip)]
    psi: Vec<f64>,
    n: usize,
}

impl StudentizedEvaluation {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.locations.len()
    }

    /// `ψ(X_i, x_j)` for all `i` at location `j`.
    pub fn psi_column(&self, j: usize) -> &[f64] {
        &self.psi[j * self.n..(j + 1) * self.n]
    }

    /// `(ψ(X_i, x_j) − f̂(x_j)) / (n σ̂(x_j))`, location-major. A weight
    /// vector dotted with column `j` gives the bootstrap statistic at `x_j`.
    pub fn scaled_centered(&self) -> Vec<f64> {
        let n = self.n as f64;
        let mut out = Vec::with_capacity(self.psi.len());
        for j in 0..self.p() {
            let scale = 1.0 / (n * self.sigma_hat[j]);
            let center = self.fhat[j];
            out.extend(self.psi_column(j).iter().map(|&v| (v - center) * scale));
        }
        out
    }

    /// Keeps only the given locations (in the given order).
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let p = self.p();
        if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
            return Err(Error::NotASubset(alloc::format!("index {bad} out of range for {p} locations")));
        }
        let mut psi = Vec::with_capacity(indices.len() * self.n);
        for &j in indices {
            psi.extend_from_slice(self.psi_column(j));
        }
        Ok(Self {
            locations: indices.iter().map(|&j| self.locations[j]).collect(),
            fhat: indices.iter().map(|&j| self.fhat[j]).collect(),
            sigma_hat: indices.iter().map(|&j| self.sigma_hat[j]).collect(),
            psi,
            n: self.n,
        })
    }
}

/// Evaluates the estimator and its variance at each location. Fails on the
/// first location whose variance estimate falls below [`VARIANCE_FLOOR`].
pub fn evaluate_on_grid<S: LinearStatistic>(
    sample: &Sample,
    statistic: &S,
    locations: &[f64],
) -> Result<StudentizedEvaluation> {
    let values = sample.values();
    let n = values.len();
    let mut psi = Vec::with_capacity(n * locations.len());
    let mut fhat = Vec::with_capacity(locations.len());
    let mut sigma_hat = Vec::with_capacity(locations.len());
    for &x in locations {
        if !x.is_finite() {
            return Err(Error::param("grid location", "must be finite"));
        }
        let start = psi.len();
        psi.extend(values.iter().map(|&xi| statistic.psi(xi, x)));
        let (mean, var) = mean_and_variance(&psi[start..]);
        if var < VARIANCE_FLOOR {
            return Err(Error::DegenerateVariance { x, variance: var });
        }
        fhat.push(mean);
        sigma_hat.push(libm::sqrt(var));
    }
    Ok(StudentizedEvaluation { locations: locations.to_vec(), fhat, sigma_hat, psi, n })
}

/// `max_j |f̂(x_j) − E f̂(x_j)| / σ̂(x_j)` for caller-supplied targets.
pub fn studentized_sup(evaluation: &StudentizedEvaluation, targets: &[f64]) -> Result<f64> {
    if targets.len() != evaluation.p() {
        return Err(Error::LengthMismatch {
            context: "studentized_sup targets",
            expected: evaluation.p(),
            got: targets.len(),
        });
    }
    Ok(evaluation
        .fhat
        .iter()
        .zip(&evaluation.sigma_hat)
        .zip(targets)
        .map(|((f, s), t)| (f - t).abs() / s)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_constants, KernelId};
    use crate::numeric::integrate;
    use proptest::prelude::*;
    use std::vec;

    fn gaussian(h: f64) -> KdeStatistic {
        KdeStatistic::new(kernel_constants(KernelId::Gaussian).unwrap(), h).unwrap()
    }

    fn phi(u: f64) -> f64 {
        (-0.5 * u * u).exp() / (2.0 * core::f64::consts::PI).sqrt()
    }

    // Straight double loop over Eq.-style definitions, no shared helpers.
    fn brute(values: &[f64], h: f64, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = values.len() as f64;
        let mut f = vec![];
        let mut s = vec![];
        for &x in grid {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for &xi in values {
                let k = phi((xi - x) / h) / h;
                m1 += k;
                m2 += k * k;
            }
            m1 /= n;
            m2 /= n;
            f.push(m1);
            s.push(((m2 - m1 * m1) / n).sqrt());
        }
        (f, s)
    }

    #[test]
    fn kde_point_examples() {
        let g = gaussian(1.0);
        let s = Sample::new(vec![0.0, 0.0]).unwrap();
        assert!((kde_at(&s, &g, 0.0) - 0.398942).abs() < 1e-6);
        let s = Sample::new(vec![-1.0, 1.0]).unwrap();
        assert!((kde_at(&s, &g, 0.0) - 0.241971).abs() < 1e-6);

        let t = KdeStatistic::new(kernel_constants(KernelId::Triweight).unwrap(), 1.0).unwrap();
        let s = Sample::new(vec![-0.3, 0.4, 2.0]).unwrap();
        assert_eq!(kde_at(&s, &t, 3.0 + 1e-9), 0.0);
    }

    #[test]
    fn variance_examples() {
        let g = gaussian(1.0);
        let s = Sample::new(vec![0.7, 0.7, 0.7]).unwrap();
        assert!(variance_hat_at(&s, &g, 0.1).is_degenerate());
        let s = Sample::new(vec![-1.0, 1.0]).unwrap();
        let v = variance_hat_at(&s, &g, 0.0);
        assert!(v.is_degenerate() && v.value().abs() < 1e-18);
        let s = Sample::new(vec![0.0, 1.0]).unwrap();
        let v = variance_hat_at(&s, &g, 0.0);
        assert!(!v.is_degenerate());
        assert!((v.value() - 0.00308).abs() < 5e-6, "{}", v.value());
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new(vec![1.0]).is_err());
        assert!(Sample::new(vec![1.0, f64::NAN]).is_err());
        assert!(KdeStatistic::new(kernel_constants(KernelId::Gaussian).unwrap(), 0.0).is_err());
    }

    #[test]
    fn grid_evaluation_matches_brute_force() {
        let values: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let s = Sample::new(values.clone()).unwrap();
        let grid = [0.25, 0.5, 0.75];
        let e = evaluate_on_grid(&s, &gaussian(0.3), &grid).unwrap();
        let (f, sd) = brute(&values, 0.3, &grid);
        for j in 0..3 {
            assert!((e.fhat[j] - f[j]).abs() < 1e-12);
            assert!((e.sigma_hat[j] - sd[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_grid_point_is_named() {
        let s = Sample::new(vec![0.5, 0.5]).unwrap();
        match evaluate_on_grid(&s, &gaussian(1.0), &[0.0, 1.0]) {
            Err(Error::DegenerateVariance { x, .. }) => assert_eq!(x, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn studentized_sup_examples() {
        let s = Sample::new(vec![0.0, 0.4, 1.1, -0.3]).unwrap();
        let e = evaluate_on_grid(&s, &gaussian(0.5), &[0.0, 0.5]).unwrap();
        assert_eq!(studentized_sup(&e, &e.fhat.clone()).unwrap(), 0.0);
        let e1 = e.restrict(&[1]).unwrap();
        let target = [e1.fhat[0] - e1.sigma_hat[0]];
        assert!((studentized_sup(&e1, &target).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(studentized_sup(&e, &[0.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn kde_integrates_to_one() {
        let s = Sample::new(vec![-1.2, 0.1, 0.3, 2.5, 2.6]).unwrap();
        let g = gaussian(0.4);
        let v = integrate(|x| kde_at(&s, &g, x), -1.2 - 4.0, 2.6 + 4.0, 1e-12, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-3);
    }

    fn pseudo(seed: u64, n: usize) -> Vec<f64> {
        // small LCG; deterministic spread of points
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            })
            .collect()
    }

    proptest! {
        #[test]
        fn conditional_variance_identity(seed in any::<u64>(), n in 5usize..200, h in 0.05f64..2.0, p in 1usize..20) {
            let s = Sample::new(pseudo(seed, n)).unwrap();
            let grid: Vec<f64> = (0..p).map(|j| -1.5 + 3.0 * j as f64 / p as f64).collect();
            let g = gaussian(h);
            if let Ok(e) = evaluate_on_grid(&s, &g, &grid) {
                let nf = n as f64;
                for j in 0..p {
                    let ss: f64 = e.psi_column(j).iter().map(|v| (v - e.fhat[j]).powi(2)).sum();
                    let ratio = ss / (nf * nf * e.sigma_hat[j].powi(2));
                    prop_assert!((ratio - 1.0).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn translation_equivariance(seed in any::<u64>(), c in -50.0f64..50.0, h in 0.1f64..1.0) {
            let v = pseudo(seed, 40);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let grid = [-0.5, 0.0, 0.7];
            let grid_s: Vec<f64> = grid.iter().map(|x| x + c).collect();
            let g = gaussian(h);
            let a = evaluate_on_grid(&Sample::new(v).unwrap(), &g, &grid).unwrap();
            let b = evaluate_on_grid(&Sample::new(shifted).unwrap(), &g, &grid_s).unwrap();
            for j in 0..3 {
                prop_assert!((a.fhat[j] - b.fhat[j]).abs() < 1e-12);
                prop_assert!((a.sigma_hat[j] - b.sigma_hat[j]).abs() < 1e-12);
            }
        }
    }
}
