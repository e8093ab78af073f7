//! Monte Carlo coverage experiments on known densities.
//!
//! The coverage target is `E[f̂_h(x)]`, computed by quadrature, not `f(x)`:
//! a replication is a hit when `|f̂(x) − E f̂(x)| / σ̂(x) <= ĉ*` at every
//! point of the selection grid refined `oversample` times, which stands in
//! for the supremum over the whole region.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uniband_core::numeric::integrate_pieces;
use uniband_core::{
    build_band, evaluate_on_grid, kernel_constants, studentized_sup, BandRequest, Bandwidth, BootstrapConfig,
    Error as CoreError, GridRule, KdeStatistic, Kernel, KernelId, Sample, Sequential, UniformBand,
};

use crate::error::AppError;

pub const MIN_REPLICATIONS: usize = 100;
pub const MIN_OVERSAMPLE: usize = 4;
pub const DEFAULT_OVERSAMPLE: usize = 10;
/// Abort when more than this fraction of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.02;
const TARGET_ABS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    StdNormal,
    /// `0.5 N(−1, 0.25) + 0.5 N(1, 0.25)` (variances 0.25).
    NormalMixture,
    /// Beta(2, 2) on `[0, 1]`.
    Beta22,
}

impl FromStr for Dgp {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, AppError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stdnormal" => Ok(Dgp::StdNormal),
            "normalmixture" | "mixture" => Ok(Dgp::NormalMixture),
            "beta22" => Ok(Dgp::Beta22),
            other => Err(AppError::Usage(format!("unknown dgp `{other}` (stdnormal | normalmixture | beta22)"))),
        }
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dgp::StdNormal => "stdnormal",
            Dgp::NormalMixture => "normalmixture",
            Dgp::Beta22 => "beta22",
        })
    }
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

impl Dgp {
    pub fn density(self, x: f64) -> f64 {
        match self {
            Dgp::StdNormal => normal_pdf(x, 0.0, 1.0),
            Dgp::NormalMixture => 0.5 * normal_pdf(x, -1.0, 0.5) + 0.5 * normal_pdf(x, 1.0, 0.5),
            Dgp::Beta22 => {
                if (0.0..=1.0).contains(&x) {
                    6.0 * x * (1.0 - x)
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed support, if bounded.
    pub fn support(self) -> Option<(f64, f64)> {
        match self {
            Dgp::Beta22 => Some((0.0, 1.0)),
            _ => None,
        }
    }

    /// A region on which the density is bounded away from zero.
    pub fn default_region(self) -> (f64, f64) {
        match self {
            Dgp::StdNormal => (-1.0, 1.0),
            Dgp::NormalMixture => (-1.5, 1.5),
            Dgp::Beta22 => (0.1, 0.9),
        }
    }

    pub fn sample<R: Rng>(self, rng: &mut R, n: usize) -> Vec<f64> {
        match self {
            Dgp::StdNormal => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            Dgp::NormalMixture => {
                let left = Normal::new(-1.0, 0.5).expect("valid normal");
                let right = Normal::new(1.0, 0.5).expect("valid normal");
                (0..n).map(|_| if rng.random::<bool>() { right.sample(rng) } else { left.sample(rng) }).collect()
            }
            Dgp::Beta22 => {
                let beta = Beta::new(2.0, 2.0).expect("valid beta");
                (0..n).map(|_| beta.sample(rng)).collect()
            }
        }
    }

    // ∫ K(u)^power f(x + u h) du over the kernel support, split wherever the
    // integrand has a kink
    fn kernel_moment(self, kernel: &Kernel, h: f64, x: f64, power: i32) -> Result<f64, CoreError> {
        let s = kernel.support_radius();
        let mut cuts: Vec<f64> = kernel.breakpoints().to_vec();
        if let Some((a, b)) = self.support() {
            cuts.push((a - x) / h);
            cuts.push((b - x) / h);
        }
        integrate_pieces(|u| kernel.eval0(u).powi(power) * self.density(x + u * h), -s, s, &cuts, TARGET_ABS_TOL, 0.0)
    }
}

/// `E f̂_h(x) = ∫ h⁻¹ K((t − x)/h) f(t) dt = ∫ K(u) f(x + u h) du`.
pub fn expected_fhat(dgp: Dgp, kernel: &Kernel, h: f64, x: f64) -> Result<f64, CoreError> {
    dgp.kernel_moment(kernel, h, x, 1)
}

/// `Var[K_h(x)] = h⁻¹ ∫ K²(u) f(x + u h) du − (E K_h(x))²`.
pub fn kernel_variance(dgp: Dgp, kernel: &Kernel, h: f64, x: f64) -> Result<f64, CoreError> {
    let m2 = dgp.kernel_moment(kernel, h, x, 2)? / h;
    let m1 = dgp.kernel_moment(kernel, h, x, 1)?;
    Ok(m2 - m1 * m1)
}

/// `σ_n(x) = (n⁻¹ Var[K_h(x)])^{1/2}`.
pub fn true_sigma(dgp: Dgp, kernel: &Kernel, h: f64, n: usize, x: f64) -> Result<f64, CoreError> {
    Ok((kernel_variance(dgp, kernel, h, x)? / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub dgp: Dgp,
    pub n: usize,
    pub alpha: f64,
    pub kernel: KernelId,
    pub bandwidth: Bandwidth,
    pub rule: GridRule,
    /// Defaults to the DGP's own region.
    pub region: Option<(f64, f64)>,
    pub epsilon: Option<f64>,
    pub bins: Option<usize>,
    pub replications: usize,
    pub draws: usize,
    pub oversample: usize,
    pub seed: u64,
}

impl CoverageConfig {
    pub fn new(dgp: Dgp, n: usize, alpha: f64) -> Self {
        Self {
            dgp,
            n,
            alpha,
            kernel: KernelId::Gaussian,
            bandwidth: Bandwidth::Auto,
            rule: GridRule::Mesh,
            region: None,
            epsilon: None,
            bins: None,
            replications: 500,
            draws: 1000,
            oversample: DEFAULT_OVERSAMPLE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.replications < MIN_REPLICATIONS {
            return Err(AppError::Usage(format!("reps must be at least {MIN_REPLICATIONS}")));
        }
        if self.oversample < MIN_OVERSAMPLE {
            return Err(AppError::Usage(format!("oversample must be at least {MIN_OVERSAMPLE}")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AppError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    fn region(&self) -> (f64, f64) {
        self.region.unwrap_or_else(|| self.dgp.default_region())
    }
}

/// One replication: the sample and its band.
#[derive(Debug, Clone)]
pub struct Replication {
    pub index: usize,
    pub sample: Sample,
    pub band: UniformBand,
}

/// Sample and bootstrap streams of replication `r` depend only on
/// `(seed, r)`.
pub fn replicate(cfg: &CoverageConfig, index: usize) -> Result<Replication, CoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let master_seed: u64 = rng.random();
    let sample = Sample::new(cfg.dgp.sample(&mut rng, cfg.n))?;
    let request = BandRequest {
        sample: sample.clone(),
        region: Some(cfg.region()),
        kernel: cfg.kernel,
        bandwidth: cfg.bandwidth,
        rule: cfg.rule,
        epsilon: cfg.epsilon,
        bins: cfg.bins,
        bootstrap: BootstrapConfig { draws: cfg.draws, alpha: cfg.alpha, master_seed },
    };
    let band = build_band(&request, &Sequential)?;
    Ok(Replication { index, sample, band })
}

/// `max |f̂ − E f̂| / σ̂` over the band's grid refined `factor` times.
pub fn sup_proxy(dgp: Dgp, rep: &Replication, factor: usize) -> Result<f64, CoreError> {
    let kernel = kernel_constants(rep.band.kernel)?;
    let h = rep.band.bandwidth;
    let fine = rep.band.grid.refine(factor)?;
    let statistic = KdeStatistic::new(kernel, h)?;
    let evaluation = evaluate_on_grid(&rep.sample, &statistic, &fine.points)?;
    let targets = fine.points.iter().map(|&x| expected_fhat(dgp, &kernel, h, x)).collect::<Result<Vec<_>, _>>()?;
    studentized_sup(&evaluation, &targets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub hit: bool,
    pub sup_proxy: f64,
    pub c_hat: f64,
    pub p: usize,
    pub delta: f64,
    pub bandwidth: f64,
    pub b_n: f64,
    pub l_tilde: f64,
    pub r: f64,
    pub eps_n: f64,
}

fn run_one(cfg: &CoverageConfig, index: usize) -> Result<ReplicationOutcome, CoreError> {
    let rep = replicate(cfg, index)?;
    let sup = sup_proxy(cfg.dgp, &rep, cfg.oversample)?;
    let c = &rep.band.constants;
    Ok(ReplicationOutcome {
        index,
        hit: sup <= rep.band.c_hat,
        sup_proxy: sup,
        c_hat: rep.band.c_hat,
        p: rep.band.grid.p(),
        delta: rep.band.grid.delta,
        bandwidth: rep.band.bandwidth,
        b_n: c.b_n,
        l_tilde: c.l_tilde,
        r: c.r,
        eps_n: c.eps_n,
    })
}

/// Averages of per-replication design constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub dgp: Dgp,
    pub n: usize,
    pub kernel: KernelId,
    pub rule: GridRule,
    pub region: [f64; 2],
    pub draws: usize,
    pub seed: u64,
    pub mean_bandwidth: f64,
    pub mean_p: f64,
    pub p_min: usize,
    pub p_max: usize,
    pub mean_b_n: f64,
    pub mean_l_tilde: f64,
    pub mean_r: f64,
    pub mean_eps_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub evaluated: usize,
    pub failures: usize,
    pub hits: usize,
    pub coverage_hat: f64,
    pub binomial_se: f64,
    pub nominal: f64,
    pub alpha: f64,
    pub oversample_factor: usize,
    pub config: ConfigEcho,
    #[serde(skip)]
    pub trace: Vec<ReplicationOutcome>,
}

impl CoverageReport {
    /// Whether `coverage_hat` lies within `k` binomial standard errors of the
    /// nominal level.
    pub fn within_se(&self, k: f64) -> bool {
        (self.coverage_hat - self.nominal).abs() <= k * self.binomial_se
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    s / c.max(1) as f64
}

/// Runs the replications on the current rayon pool and merges them in index
/// order.
pub fn coverage_run(cfg: &CoverageConfig) -> Result<CoverageReport, AppError> {
    cfg.validate()?;
    let results: Vec<Result<ReplicationOutcome, CoreError>> =
        (0..cfg.replications).into_par_iter().map(|r| run_one(cfg, r)).collect();
    let mut trace = Vec::with_capacity(results.len());
    let mut failures = 0;
    let mut last_error = None;
    for res in results {
        match res {
            Ok(o) => trace.push(o),
            Err(e) => {
                failures += 1;
                last_error = Some(e);
            }
        }
    }
    if let Some(last) = last_error {
        if failures as f64 > MAX_FAILURE_RATE * cfg.replications as f64 {
            return Err(AppError::TooManyFailures { failures, replications: cfg.replications, last });
        }
    }
    let evaluated = trace.len();
    let hits = trace.iter().filter(|o| o.hit).count();
    let coverage_hat = hits as f64 / evaluated as f64;
    let (lo, hi) = cfg.region();
    let config = ConfigEcho {
        dgp: cfg.dgp,
        n: cfg.n,
        kernel: cfg.kernel,
        rule: cfg.rule,
        region: [lo, hi],
        draws: cfg.draws,
        seed: cfg.seed,
        mean_bandwidth: mean(trace.iter().map(|o| o.bandwidth)),
        mean_p: mean(trace.iter().map(|o| o.p as f64)),
        p_min: trace.iter().map(|o| o.p).min().unwrap_or(0),
        p_max: trace.iter().map(|o| o.p).max().unwrap_or(0),
        mean_b_n: mean(trace.iter().map(|o| o.b_n)),
        mean_l_tilde: mean(trace.iter().map(|o| o.l_tilde)),
        mean_r: mean(trace.iter().map(|o| o.r)),
        mean_eps_n: mean(trace.iter().map(|o| o.eps_n)),
    };
    Ok(CoverageReport {
        replications: cfg.replications,
        evaluated,
        failures,
        hits,
        coverage_hat,
        binomial_se: (coverage_hat * (1.0 - coverage_hat) / evaluated as f64).sqrt(),
        nominal: 1.0 - cfg.alpha,
        alpha: cfg.alpha,
        oversample_factor: cfg.oversample,
        config,
        trace,
    })
}

/// Hit counts of the same replications at several oversampling factors.
pub fn oversample_sensitivity(cfg: &CoverageConfig, factors: &[usize]) -> Result<Vec<(usize, usize)>, AppError> {
    let per_rep: Vec<Result<Vec<bool>, CoreError>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let rep = replicate(cfg, r)?;
            factors.iter().map(|&k| Ok(sup_proxy(cfg.dgp, &rep, k)? <= rep.band.c_hat)).collect()
        })
        .collect();
    let mut hits = vec![0usize; factors.len()];
    for res in per_rep {
        for (h, hit) in hits.iter_mut().zip(res?) {
            *h += hit as usize;
        }
    }
    Ok(factors.iter().copied().zip(hits).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> Kernel {
        kernel_constants(KernelId::Gaussian).unwrap()
    }

    #[test]
    fn densities_integrate_to_one() {
        for dgp in [Dgp::StdNormal, Dgp::NormalMixture, Dgp::Beta22] {
            let (a, b) = dgp.support().unwrap_or((-15.0, 15.0));
            let v = integrate_pieces(|x| dgp.density(x), a, b, &[-1.0, 0.0, 1.0], 1e-12, 0.0).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "{dgp}: {v}");
            let (lo, hi) = dgp.default_region();
            for i in 0..=100 {
                assert!(dgp.density(lo + (hi - lo) * i as f64 / 100.0) > 0.0);
            }
        }
    }

    #[test]
    fn expected_fhat_closed_forms() {
        let k = gauss();
        // N(0,1) convolved with N(0,h²) is N(0, 1+h²)
        let v = expected_fhat(Dgp::StdNormal, &k, 1.0, 0.0).unwrap();
        assert!((v - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-10);
        let v = expected_fhat(Dgp::StdNormal, &k, 0.5, 0.0).unwrap();
        assert!((v - normal_pdf(0.0, 0.0, 1.25f64.sqrt())).abs() < 1e-10);
        assert!((v - 0.35682).abs() < 1e-5);
    }

    #[test]
    fn small_bandwidth_recovers_density() {
        let k = gauss();
        for dgp in [Dgp::StdNormal, Dgp::NormalMixture, Dgp::Beta22] {
            let (lo, hi) = dgp.default_region();
            let x = 0.5 * (lo + hi) + 0.1 * (hi - lo);
            let v = expected_fhat(dgp, &k, 0.001, x).unwrap();
            assert!((v / dgp.density(x) - 1.0).abs() < 0.01, "{dgp}");
        }
    }

    #[test]
    fn sigma_properties() {
        let k = gauss();
        let s1 = true_sigma(Dgp::StdNormal, &k, 0.3, 100, 0.4).unwrap();
        let s4 = true_sigma(Dgp::StdNormal, &k, 0.3, 400, 0.4).unwrap();
        assert!((s4 - 0.5 * s1).abs() < 1e-15 * s1);
        let sm = true_sigma(Dgp::StdNormal, &k, 0.3, 100, -0.4).unwrap();
        assert!((sm - s1).abs() < 1e-12 * s1);
        let h = 0.01;
        let v = h * kernel_variance(Dgp::StdNormal, &k, h, 0.0).unwrap();
        assert!((v / 0.112540 - 1.0).abs() < 0.05);
    }

    // midpoint Riemann sums with 10⁶ cells as an independent check
    #[test]
    fn targets_match_riemann_sums() {
        let k = gauss();
        for (dgp, x, h) in [(Dgp::StdNormal, 0.3, 0.2), (Dgp::NormalMixture, -0.7, 0.25), (Dgp::Beta22, 0.8, 0.1)] {
            let (a, b) = (-12.0, 12.0);
            let m = 1_000_000;
            let du = (b - a) / m as f64;
            let (mut e1, mut e2) = (0.0, 0.0);
            for i in 0..m {
                let u = a + (i as f64 + 0.5) * du;
                let kv = k.eval0(u);
                let f = dgp.density(x + u * h);
                e1 += kv * f * du;
                e2 += kv * kv * f * du / h;
            }
            let got1 = expected_fhat(dgp, &k, h, x).unwrap();
            let got_var = kernel_variance(dgp, &k, h, x).unwrap();
            assert!((got1 - e1).abs() < 1e-6, "{dgp}");
            assert!((got_var - (e2 - e1 * e1)).abs() < 1e-6 * (1.0 + got_var), "{dgp}");
        }
    }

    #[test]
    fn replication_streams_are_pure() {
        let mut cfg = CoverageConfig::new(Dgp::StdNormal, 300, 0.1);
        cfg.draws = 200;
        cfg.seed = 5;
        let a = replicate(&cfg, 3).unwrap();
        let b = replicate(&cfg, 3).unwrap();
        assert_eq!(a.sample, b.sample);
        assert_eq!(a.band, b.band);
        let c = replicate(&cfg, 4).unwrap();
        assert_ne!(a.sample, c.sample);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CoverageConfig::new(Dgp::StdNormal, 100, 0.1);
        cfg.replications = 10;
        assert!(coverage_run(&cfg).is_err());
        let mut cfg = CoverageConfig::new(Dgp::StdNormal, 100, 0.1);
        cfg.oversample = 2;
        assert!(coverage_run(&cfg).is_err());
        assert!("unknown".parse::<Dgp>().is_err());
        assert_eq!("beta22".parse::<Dgp>().unwrap(), Dgp::Beta22);
    }
}
