//! End-to-end band construction: plug-ins, constants, grid, studentized
//! evaluation, bootstrap critical value, band.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{check_alpha, critical_value, BootstrapConfig, BootstrapDraws, DrawExecutor};
use crate::error::{Error, Result};
use crate::grid::{
    build_grid, compute_r, constants_for_grid, default_epsilon, plugin_extrema, simple_grid_rule, solve_mesh,
    ConstantsReport, Grid, MeshInputs, MeshOutcome,
};
use crate::kde::{evaluate_on_grid, KdeStatistic, Sample};
use crate::kernels::{kernel_constants, KernelId};
use crate::numeric::{quantile_sorted, sample_sd};

/// Warn when `B_n² log⁵(n p) / n` exceeds this.
pub const HIGH_DIM_WARNING_THRESHOLD: f64 = 0.5;
/// Default region: these sample quantiles.
pub const DEFAULT_REGION_QUANTILES: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Silverman's rule of thumb.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum GridRule {
    /// Largest mesh satisfying the mesh condition.
    #[default]
    Mesh,
    /// `δ = c_Δ n^{−1/4−γ} h^{3/4}`.
    Simple {
        c_delta: f64,
        gamma: f64,
    },
    Explicit {
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRequest {
    pub sample: Sample,
    /// Defaults to the 5% and 95% sample quantiles.
    pub region: Option<(f64, f64)>,
    pub kernel: KernelId,
    pub bandwidth: Bandwidth,
    pub rule: GridRule,
    /// Defaults to [`default_epsilon`].
    pub epsilon: Option<f64>,
    /// Histogram bins for the density plug-ins; Freedman–Diaconis if unset.
    pub bins: Option<usize>,
    pub bootstrap: BootstrapConfig,
}

impl BandRequest {
    pub fn new(sample: Sample) -> Self {
        Self {
            sample,
            region: None,
            kernel: KernelId::default(),
            bandwidth: Bandwidth::Auto,
            rule: GridRule::Mesh,
            epsilon: None,
            bins: None,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

/// `f̂(x_j) ± ĉ* σ̂(x_j)` on the grid. Values between grid points are not
/// covered by the inference statement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformBand {
    pub kernel: KernelId,
    pub bandwidth: f64,
    pub alpha: f64,
    pub draws: usize,
    pub master_seed: u64,
    pub c_hat: f64,
    pub grid: Grid,
    pub center: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub half_width: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constants: ConstantsReport,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub bootstrap: BootstrapDraws,
}

/// `h = 1.06 min(sd, IQR/1.34) n^{−1/5}`.
pub fn auto_bandwidth(sample: &Sample) -> Result<f64> {
    let sorted = sample.sorted();
    let sd = sample_sd(&sorted);
    if !(sd > 0.0) {
        return Err(Error::ZeroDispersion);
    }
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(1.06 * spread * libm::pow(sample.len() as f64, -0.2))
}

pub fn default_region(sample: &Sample) -> Result<(f64, f64)> {
    let sorted = sample.sorted();
    let lo = quantile_sorted(&sorted, DEFAULT_REGION_QUANTILES.0);
    let hi = quantile_sorted(&sorted, DEFAULT_REGION_QUANTILES.1);
    if !(lo < hi) {
        return Err(Error::ZeroDispersion);
    }
    Ok((lo, hi))
}

/// The constants and grid a request leads to, without the bootstrap.
pub fn design_grid(request: &BandRequest) -> Result<(Grid, ConstantsReport, f64, Vec<String>)> {
    check_alpha(request.bootstrap.alpha)?;
    let kernel = kernel_constants(request.kernel)?;
    let n = request.sample.len();
    let h = match request.bandwidth {
        Bandwidth::Auto => auto_bandwidth(&request.sample)?,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::param("bandwidth", alloc::format!("must be positive, got {h}"))),
    };
    let (lower, upper) = match request.region {
        Some(r) => r,
        None => default_region(&request.sample)?,
    };
    let extrema = plugin_extrema(&request.sample, lower, upper, request.bins)?;
    let eps = request.epsilon.unwrap_or_else(|| default_epsilon(n, h));
    let inputs = MeshInputs { kernel: &kernel, h, n, lower, upper, extrema, eps };

    let mut warnings = Vec::new();
    let (grid, constants) = match request.rule {
        GridRule::Mesh => {
            let (grid, constants) = solve_mesh(&inputs)?;
            // re-check rather than trust the solver
            let lhs = 0.5 * constants.l_tilde * grid.max_gap;
            let r = compute_r(constants.b_n, n, grid.p() as f64);
            if !(lhs <= r) {
                return Err(Error::MeshConditionViolated { lhs, r });
            }
            (grid, constants)
        }
        GridRule::Simple { c_delta, gamma } => {
            let grid = simple_grid_rule(n, h, lower, upper, c_delta, gamma)?;
            let constants = constants_for_grid(&inputs, &grid)?;
            (grid, constants)
        }
        GridRule::Explicit { delta } => {
            let grid = build_grid(lower, upper, delta)?;
            let constants = constants_for_grid(&inputs, &grid)?;
            (grid, constants)
        }
    };
    if constants.outcome == MeshOutcome::ConstraintSlack {
        warnings.push(String::from("constraint slack: the two-point grid already satisfies the mesh condition"));
    }
    if !constants.indicator_ok {
        warnings.push(alloc::format!(
            "mesh condition not met: L_tilde * max_gap / 2 = {} > r = {}",
            constants.between_grid_fluctuation(),
            constants.r
        ));
    }
    if constants.high_dim_ratio > HIGH_DIM_WARNING_THRESHOLD {
        warnings.push(alloc::format!(
            "B_n^2 log^5(n p) / n = {:.3} exceeds {HIGH_DIM_WARNING_THRESHOLD}; the grid-level Gaussian approximation may be inaccurate",
            constants.high_dim_ratio
        ));
    }
    Ok((grid, constants, h, warnings))
}

pub fn build_band<E: DrawExecutor>(request: &BandRequest, executor: &E) -> Result<UniformBand> {
    let (grid, constants, h, warnings) = design_grid(request)?;
    let kernel = kernel_constants(request.kernel)?;
    let statistic = KdeStatistic::new(kernel, h)?;
    let evaluation = evaluate_on_grid(&request.sample, &statistic, &grid.points)?;
    let (c_hat, bootstrap) = critical_value(&evaluation, &request.bootstrap, executor)?;
    let half_width: Vec<f64> = evaluation.sigma_hat.iter().map(|s| c_hat * s).collect();
    let lower = evaluation.fhat.iter().zip(&half_width).map(|(c, w)| c - w).collect();
    let upper = evaluation.fhat.iter().zip(&half_width).map(|(c, w)| c + w).collect();
    Ok(UniformBand {
        kernel: request.kernel,
        bandwidth: h,
        alpha: request.bootstrap.alpha,
        draws: request.bootstrap.draws,
        master_seed: request.bootstrap.master_seed,
        c_hat,
        grid,
        center: evaluation.fhat,
        sigma_hat: evaluation.sigma_hat,
        half_width,
        lower,
        upper,
        constants,
        warnings,
        bootstrap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::Sequential;
    use std::vec;

    fn normalish(n: usize) -> Vec<f64> {
        // deterministic quantiles of N(0,1) via a rational approximation of
        // the probit, shuffled by a fixed stride
        let probit = |p: f64| {
            let t = libm::sqrt(-2.0 * libm::log(p.min(1.0 - p)));
            let z = t
                - (2.515517 + 0.802853 * t + 0.010328 * t * t)
                    / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
            if p < 0.5 {
                -z
            } else {
                z
            }
        };
        (0..n).map(|i| probit(((i * 7919) % n) as f64 / n as f64 + 0.5 / n as f64)).collect()
    }

    #[test]
    fn auto_bandwidth_examples() {
        let s = Sample::new(normalish(1024)).unwrap();
        let h = auto_bandwidth(&s).unwrap();
        let sorted = s.sorted();
        let sd = sample_sd(&sorted);
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        assert!((h - 1.06 * sd.min(iqr / 1.34) * 0.25).abs() < 1e-12);

        let scaled = Sample::new(s.values().iter().map(|v| 3.0 * v).collect()).unwrap();
        assert!((auto_bandwidth(&scaled).unwrap() - 3.0 * h).abs() < 1e-12);
        assert_eq!(auto_bandwidth(&Sample::new(vec![2.0; 10]).unwrap()), Err(Error::ZeroDispersion));
    }

    #[test]
    fn band_structure_and_symmetry() {
        let mut req = BandRequest::new(Sample::new(normalish(2000)).unwrap());
        req.region = Some((-1.0, 1.0));
        req.bootstrap = BootstrapConfig { draws: 500, alpha: 0.05, master_seed: 9 };
        let band = build_band(&req, &Sequential).unwrap();
        assert!(band.constants.indicator_ok);
        assert!(band.grid.p() >= 2 && band.grid.p() <= 1_000_000);
        for j in 0..band.grid.p() {
            assert!(band.half_width[j] > 0.0);
            assert_eq!(band.half_width[j], band.c_hat * band.sigma_hat[j]);
        }
        assert!(0.5 * band.constants.l_tilde * band.grid.max_gap <= band.constants.r);
        let again = build_band(&req, &Sequential).unwrap();
        assert_eq!(band, again);
    }

    #[test]
    fn bands_nest_in_alpha() {
        let mut req = BandRequest::new(Sample::new(normalish(500)).unwrap());
        req.bootstrap = BootstrapConfig { draws: 400, alpha: 0.05, master_seed: 2 };
        let wide = build_band(&req, &Sequential).unwrap();
        req.bootstrap.alpha = 0.5;
        let narrow = build_band(&req, &Sequential).unwrap();
        for j in 0..wide.grid.p() {
            assert!(narrow.lower[j] >= wide.lower[j] && narrow.upper[j] <= wide.upper[j]);
        }
    }

    #[test]
    fn other_rules_report_the_condition() {
        let mut req = BandRequest::new(Sample::new(normalish(800)).unwrap());
        req.region = Some((-1.0, 1.0));
        req.bootstrap.draws = 200;
        req.rule = GridRule::Explicit { delta: 1.0 };
        let band = build_band(&req, &Sequential).unwrap();
        assert_eq!(band.grid.p(), 3);
        assert_eq!(band.constants.outcome, MeshOutcome::External);
        req.rule = GridRule::Simple { c_delta: 0.5, gamma: 0.01 };
        let band = build_band(&req, &Sequential).unwrap();
        assert!(band.constants.indicator_ok);
    }

    #[test]
    fn rejects_bad_requests() {
        let mut req = BandRequest::new(Sample::new(normalish(100)).unwrap());
        req.bootstrap.alpha = 0.0;
        assert!(build_band(&req, &Sequential).is_err());
        let mut req = BandRequest::new(Sample::new(normalish(100)).unwrap());
        req.region = Some((1.0, -1.0));
        assert!(build_band(&req, &Sequential).is_err());
        let mut req = BandRequest::new(Sample::new(normalish(100)).unwrap());
        req.region = Some((50.0, 60.0));
        assert!(matches!(build_band(&req, &Sequential), Err(Error::InsufficientData { .. })));
    }
}
