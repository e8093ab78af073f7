//! Evaluation grids and the mesh-selection rule.
//!
//! The grid must be fine enough that between-grid fluctuations of the
//! studentized process stay below the tolerance `r` of the high-dimensional
//! Gaussian approximation: `L̃ Δ / 2 <= r(δ)`, with
//!
//! * `r(δ) = 2 (B_n² log³(n p(δ)) / n)^{1/4}`,
//! * `L̃ = 2 sup σ_n⁻¹ A_1(ε/2)`, a high-probability slope bound,
//! * `B_n` the ψ₁ / fourth-moment envelope of the normalized summands.
//!
//! Unknown population quantities (`sup f`, `inf f`, `sup σ_n⁻¹`) are replaced
//! by histogram plug-ins.

use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kde::Sample;
use crate::kernels::Kernel;
use crate::numeric::{bisect_increasing, quantile_sorted};

pub const MIN_PLUGIN_POINTS: usize = 20;
pub const MIN_BINS: usize = 8;
pub const MAX_BINS: usize = 256;
/// Lower bracket of the mesh solver, relative to the region width.
pub const DELTA_FLOOR_REL: f64 = 1e-8;
pub const BISECTION_REL_TOL: f64 = 1e-10;
/// Upper limit of [`default_epsilon`].
pub const EPSILON_CAP: f64 = 0.1;

/// Equispaced evaluation points `x̲ = x_1 < ... < x_p = x̄`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub lower: f64,
    pub upper: f64,
    /// Nominal mesh `δ`; always `>= max_gap`.
    pub delta: f64,
    pub max_gap: f64,
    pub points: Vec<f64>,
}

impl Grid {
    pub fn p(&self) -> usize {
        self.points.len()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `p` points with both endpoints exact and equal spacing in between.
    pub fn uniform(lower: f64, upper: f64, p: usize) -> Result<Self> {
        check_region(lower, upper)?;
        if p < 2 {
            return Err(Error::param("p", "a grid needs at least two points"));
        }
        let step = (upper - lower) / (p - 1) as f64;
        let mut points: Vec<f64> = (0..p - 1).map(|j| lower + step * j as f64).collect();
        points.push(upper);
        Ok(Self::from_points(lower, upper, step, points))
    }

    fn from_points(lower: f64, upper: f64, delta: f64, points: Vec<f64>) -> Self {
        let max_gap = points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        // rounding in the point positions can push a gap an ulp past δ
        Self { lower, upper, delta: delta.max(max_gap), max_gap, points }
    }

    /// Indices of this grid's points inside a grid refined `factor` times
    /// by [`Grid::refine`].
    pub fn refined_indices(&self, factor: usize) -> Vec<usize> {
        (0..self.p()).map(|j| j * factor).collect()
    }

    /// Inserts `factor - 1` equispaced points inside every gap. The original
    /// points are kept exactly.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("factor", "must be positive"));
        }
        let mut points = Vec::with_capacity((self.p() - 1) * factor + 1);
        for w in self.points.windows(2) {
            let step = (w[1] - w[0]) / factor as f64;
            points.push(w[0]);
            points.extend((1..factor).map(|k| w[0] + step * k as f64));
        }
        points.push(self.upper);
        Ok(Self::from_points(self.lower, self.upper, self.delta / factor as f64, points))
    }
}

fn check_region(lower: f64, upper: f64) -> Result<()> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(Error::param("region", alloc::format!("need finite lower < upper, got [{lower}, {upper}]")));
    }
    Ok(())
}

/// `x_j = x̲ + (j−1)δ` for `j < p`, `x_p = x̄`, `p = ⌊(x̄−x̲)/δ⌋ + 2`.
///
/// When `δ` divides the width exactly the formula repeats `x̄`; the duplicate
/// is dropped so every gap is positive.
pub fn build_grid(lower: f64, upper: f64, delta: f64) -> Result<Grid> {
    check_region(lower, upper)?;
    let width = upper - lower;
    if !(delta > 0.0 && delta <= width) {
        return Err(Error::param("delta", alloc::format!("need 0 < delta <= {width}, got {delta}")));
    }
    let p = libm::floor(width / delta) as usize + 2;
    let mut points: Vec<f64> = (0..p - 1).map(|j| lower + delta * j as f64).collect();
    while points.last().is_some_and(|&x| x >= upper) {
        points.pop();
    }
    points.push(upper);
    Ok(Grid::from_points(lower, upper, delta, points))
}

/// Histogram plug-ins for `sup f` and `inf f` over the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PluginDensityExtrema {
    pub f_max_hat: f64,
    pub f_min_hat: f64,
    /// Zero when the extrema were supplied directly.
    pub bin_count: usize,
}

impl PluginDensityExtrema {
    /// Known or assumed extrema, bypassing the histogram.
    pub fn given(f_min: f64, f_max: f64) -> Result<Self> {
        if !(f_min > 0.0 && f_min.is_finite() && f_max.is_finite() && f_max >= f_min) {
            return Err(Error::param("fmin/fmax", alloc::format!("need 0 < fmin <= fmax, got {f_min}, {f_max}")));
        }
        Ok(Self { f_max_hat: f_max, f_min_hat: f_min, bin_count: 0 })
    }
}

/// Lower bound for `f_min_hat`: one percent of the uniform density on the
/// region.
pub fn min_density_floor(width: f64) -> f64 {
    0.01 / width
}

/// Freedman–Diaconis bin count for the in-region data, clipped to
/// `[MIN_BINS, MAX_BINS]`.
fn fd_bins(sorted_in_region: &[f64], width: f64) -> usize {
    let m = sorted_in_region.len() as f64;
    let iqr = quantile_sorted(sorted_in_region, 0.75) - quantile_sorted(sorted_in_region, 0.25);
    let bin_width = 2.0 * iqr / libm::cbrt(m);
    if !(bin_width > 0.0) {
        return MIN_BINS;
    }
    (libm::ceil(width / bin_width) as usize).clamp(MIN_BINS, MAX_BINS)
}

/// Histogram of the sample over `[lower, upper]`, normalized by the full
/// sample size so bar heights estimate `f` itself.
pub fn plugin_extrema(sample: &Sample, lower: f64, upper: f64, bins: Option<usize>) -> Result<PluginDensityExtrema> {
    check_region(lower, upper)?;
    let width = upper - lower;
    let mut inside: Vec<f64> = sample.values().iter().copied().filter(|&x| x >= lower && x <= upper).collect();
    if inside.len() < MIN_PLUGIN_POINTS {
        return Err(Error::InsufficientData { required: MIN_PLUGIN_POINTS, got: inside.len() });
    }
    inside.sort_by(f64::total_cmp);
    let bin_count = match bins {
        Some(0) => return Err(Error::param("bins", "must be positive")),
        Some(b) => b,
        None => fd_bins(&inside, width),
    };
    let bin_width = width / bin_count as f64;
    let mut counts = alloc::vec![0usize; bin_count];
    for &x in &inside {
        let k = (libm::floor((x - lower) / bin_width) as usize).min(bin_count - 1);
        counts[k] += 1;
    }
    let scale = 1.0 / (sample.len() as f64 * bin_width);
    let max = counts.iter().copied().max().unwrap_or(0) as f64 * scale;
    let min = counts.iter().copied().min().unwrap_or(0) as f64 * scale;
    let f_min_hat = min.max(min_density_floor(width));
    Ok(PluginDensityExtrema { f_max_hat: max.max(f_min_hat), f_min_hat, bin_count })
}

/// Both envelope bounds and their combination `B_n = max(B_ψ, B_4, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeBounds {
    /// Plug-in `inf Var[K_h(x)] ≈ h⁻¹ inf f ∫K²`.
    pub var_min: f64,
    pub b_psi: f64,
    pub b_4: f64,
    pub b_n: f64,
}

pub fn envelope_bounds(kernel: &Kernel, h: f64, extrema: &PluginDensityExtrema) -> EnvelopeBounds {
    let var_min = extrema.f_min_hat * kernel.int_k2 / h;
    let b_psi = 2.0 * kernel.sup_k0 / (core::f64::consts::LN_2 * h * libm::sqrt(var_min));
    let b_4 = libm::sqrt(16.0 * extrema.f_max_hat * kernel.int_k4 / (h * h * h * var_min * var_min));
    EnvelopeBounds { var_min, b_psi, b_4, b_n: b_psi.max(b_4).max(1.0) }
}

/// `B_n = max(B_ψ, B_4, 1)`; the maximum over grid points is realized by the
/// plug-in minimum variance.
pub fn compute_bn(kernel: &Kernel, h: f64, extrema: &PluginDensityExtrema) -> f64 {
    envelope_bounds(kernel, h, extrema).b_n
}

/// Bernstein-type terms of the slope bound at a given probability level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinTerms {
    pub eps: f64,
    pub m_n: u64,
    /// `log(2 m_n / ε)`
    pub log_term: f64,
    pub m0: f64,
    pub m1: f64,
    pub v0: f64,
    pub v1: f64,
    pub a0: f64,
    pub a1: f64,
}

/// `m_n = ⌊√n h^{−3/2} |X|⌋ + 2`.
pub fn m_n(n: usize, h: f64, width: f64) -> u64 {
    libm::floor(libm::sqrt(n as f64) * libm::pow(h, -1.5) * width) as u64 + 2
}

pub fn compute_a(kernel: &Kernel, h: f64, n: usize, width: f64, f_max_hat: f64, eps: f64) -> Result<BernsteinTerms> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("epsilon", alloc::format!("must lie in (0, 1), got {eps}")));
    }
    if n < 2 || !(h > 0.0) || !(width > 0.0) {
        return Err(Error::param("n/h/width", "need n >= 2, h > 0, width > 0"));
    }
    let nf = n as f64;
    let m_n = m_n(n, h, width);
    let t = libm::log(2.0 * m_n as f64 / eps);
    let m0 = 2.0 * kernel.sup_k0 / h;
    let v0 = f_max_hat * kernel.int_k2 / h;
    let m1 = 2.0 * kernel.sup_k1 / (h * h);
    let v1 = f_max_hat * kernel.int_k1_sq / (h * h * h);
    let root_n = libm::sqrt(nf);
    let a0 = libm::sqrt(2.0 * v0 * t / nf) + m0 * t / (3.0 * nf) + kernel.sup_k1 / (root_n * libm::sqrt(h));
    let a1 = libm::sqrt(2.0 * v1 * t / nf) + m1 * t / (3.0 * nf) + kernel.sup_k2 / (root_n * libm::pow(h, 1.5));
    Ok(BernsteinTerms { eps, m_n, log_term: t, m0, m1, v0, v1, a0, a1 })
}

/// Plug-in `sup σ_n⁻¹ ≈ (n h / (∫K² inf f))^{1/2}`.
pub fn sigma_inv_sup(kernel: &Kernel, h: f64, n: usize, extrema: &PluginDensityExtrema) -> f64 {
    libm::sqrt(n as f64 * h / (kernel.int_k2 * extrema.f_min_hat))
}

/// `L̃ = 2 sup σ_n⁻¹ A_1(ε/2)`; `a1_half_eps` must already be evaluated at
/// `ε/2`.
pub fn compute_l_tilde(kernel: &Kernel, h: f64, n: usize, extrema: &PluginDensityExtrema, a1_half_eps: f64) -> f64 {
    2.0 * sigma_inv_sup(kernel, h, n, extrema) * a1_half_eps
}

/// `r = 2 (B_n² log³(n p) / n)^{1/4}`. `p` is real so the continuous proxy
/// `|X|/δ` can be passed.
pub fn compute_r(b_n: f64, n: usize, p: f64) -> f64 {
    let nf = n as f64;
    let l = libm::log(nf * p);
    2.0 * libm::pow(b_n * b_n * l * l * l / nf, 0.25)
}

/// `ρ_n = (B_n² log⁵(n p) / n)^{1/4}`.
pub fn compute_rho(b_n: f64, n: usize, p: f64) -> f64 {
    libm::pow(high_dim_ratio(b_n, n, p), 0.25)
}

/// `B_n² log⁵(n p) / n`; must be small for the grid-level bootstrap
/// approximation to be accurate.
pub fn high_dim_ratio(b_n: f64, n: usize, p: f64) -> f64 {
    let nf = n as f64;
    let l = libm::log(nf * p);
    b_n * b_n * l * l * l * l * l / nf
}

/// `ε_n = min(0.1, (n h)^{−1/4} / log n)`.
pub fn default_epsilon(n: usize, h: f64) -> f64 {
    let nf = n as f64;
    (libm::pow(nf * h, -0.25) / libm::log(nf)).min(EPSILON_CAP)
}

/// Order-based mesh `δ = c_Δ n^{−1/4−γ} h^{3/4}`, clipped to the region
/// width.
pub fn simple_grid_rule(n: usize, h: f64, lower: f64, upper: f64, c_delta: f64, gamma: f64) -> Result<Grid> {
    if !(c_delta > 0.0 && c_delta < 1.0) {
        return Err(Error::param("c_delta", alloc::format!("must lie in (0, 1), got {c_delta}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", alloc::format!("must be positive, got {gamma}")));
    }
    if n < 2 || !(h > 0.0) {
        return Err(Error::param("n/h", "need n >= 2 and h > 0"));
    }
    check_region(lower, upper)?;
    let delta = simple_rule_delta(n, h, c_delta, gamma).min(upper - lower);
    build_grid(lower, upper, delta)
}

pub fn simple_rule_delta(n: usize, h: f64, c_delta: f64, gamma: f64) -> f64 {
    c_delta * libm::pow(n as f64, -0.25 - gamma) * libm::pow(h, 0.75)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshOutcome {
    /// The mesh solver found the largest admissible mesh.
    Solved,
    /// Even the two-point grid satisfies the mesh condition.
    ConstraintSlack,
    /// The grid was chosen by another rule; the condition is only checked.
    External,
}

/// Every constant behind the grid choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub n: usize,
    pub bandwidth: f64,
    pub region: [f64; 2],
    pub f_max_hat: f64,
    pub f_min_hat: f64,
    pub bin_count: usize,
    pub var_min: f64,
    pub b_psi: f64,
    pub b_4: f64,
    pub b_n: f64,
    pub eps_n: f64,
    /// `A_0`, `A_1` and friends at `ε_n / 2`.
    pub bernstein: BernsteinTerms,
    pub sigma_inv_sup: f64,
    pub l_tilde: f64,
    /// Plug-in magnitude of the `∂σ_n` term that `L̃` drops, using the
    /// `(n h)^{1/2}` scale of `sup σ_n⁻² |∂σ_n|` with unit constant.
    pub l_second_term: f64,
    /// `L̃` plus the dropped term.
    pub l_full: f64,
    /// Continuous-proxy root of the mesh equation, when the solver ran.
    pub delta_tilde: Option<f64>,
    pub delta: f64,
    pub max_gap: f64,
    pub p: usize,
    /// `r` at the integer grid size `p`.
    pub r: f64,
    pub rho_n: f64,
    pub high_dim_ratio: f64,
    pub indicator_ok: bool,
    pub outcome: MeshOutcome,
}

impl ConstantsReport {
    pub fn width(&self) -> f64 {
        self.region[1] - self.region[0]
    }

    /// `r(δ)` with the integer grid size `p(δ) = ⌊|X|/δ⌋ + 2`.
    pub fn r_of_delta(&self, delta: f64) -> f64 {
        let p = libm::floor(self.width() / delta) + 2.0;
        compute_r(self.b_n, self.n, p)
    }

    /// `g(δ) = δ L̃ / 2 − r̃(δ)` with the proxy `p̃ = |X|/δ`; increasing in δ.
    pub fn proxy_objective(&self, delta: f64) -> f64 {
        mesh_objective(self.l_tilde, self.b_n, self.n, self.width(), delta)
    }

    /// `L̃ Δ / 2`, the left side of the mesh condition.
    pub fn between_grid_fluctuation(&self) -> f64 {
        0.5 * self.l_tilde * self.max_gap
    }
}

pub fn mesh_objective(l_tilde: f64, b_n: f64, n: usize, width: f64, delta: f64) -> f64 {
    0.5 * delta * l_tilde - compute_r(b_n, n, width / delta)
}

/// Inputs of the mesh rule besides the grid itself.
#[derive(Debug, Clone, Copy)]
pub struct MeshInputs<'a> {
    pub kernel: &'a Kernel,
    pub h: f64,
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub extrema: PluginDensityExtrema,
    pub eps: f64,
}

struct MeshConstants {
    env: EnvelopeBounds,
    bernstein: BernsteinTerms,
    sigma_inv_sup: f64,
    l_tilde: f64,
    l_second_term: f64,
}

fn mesh_constants(inp: &MeshInputs<'_>) -> Result<MeshConstants> {
    check_region(inp.lower, inp.upper)?;
    if !(inp.h > 0.0 && inp.h.is_finite()) {
        return Err(Error::param("bandwidth", "must be positive and finite"));
    }
    let width = inp.upper - inp.lower;
    let env = envelope_bounds(inp.kernel, inp.h, &inp.extrema);
    let bernstein = compute_a(inp.kernel, inp.h, inp.n, width, inp.extrema.f_max_hat, 0.5 * inp.eps)?;
    let sigma_inv_sup = sigma_inv_sup(inp.kernel, inp.h, inp.n, &inp.extrema);
    let l_tilde = compute_l_tilde(inp.kernel, inp.h, inp.n, &inp.extrema, bernstein.a1);
    let l_second_term = 2.0 * libm::sqrt(inp.n as f64 * inp.h) * bernstein.a0;
    Ok(MeshConstants { env, bernstein, sigma_inv_sup, l_tilde, l_second_term })
}

fn assemble(
    inp: &MeshInputs<'_>,
    c: MeshConstants,
    grid: &Grid,
    delta_tilde: Option<f64>,
    outcome: MeshOutcome,
) -> ConstantsReport {
    let p = grid.p();
    let r = compute_r(c.env.b_n, inp.n, p as f64);
    ConstantsReport {
        n: inp.n,
        bandwidth: inp.h,
        region: [inp.lower, inp.upper],
        f_max_hat: inp.extrema.f_max_hat,
        f_min_hat: inp.extrema.f_min_hat,
        bin_count: inp.extrema.bin_count,
        var_min: c.env.var_min,
        b_psi: c.env.b_psi,
        b_4: c.env.b_4,
        b_n: c.env.b_n,
        eps_n: inp.eps,
        bernstein: c.bernstein,
        sigma_inv_sup: c.sigma_inv_sup,
        l_tilde: c.l_tilde,
        l_second_term: c.l_second_term,
        l_full: c.l_tilde + c.l_second_term,
        delta_tilde,
        delta: grid.delta,
        max_gap: grid.max_gap,
        p,
        r,
        rho_n: compute_rho(c.env.b_n, inp.n, p as f64),
        high_dim_ratio: high_dim_ratio(c.env.b_n, inp.n, p as f64),
        indicator_ok: 0.5 * c.l_tilde * grid.max_gap <= r,
        outcome,
    }
}

/// Constants for a grid chosen by some other rule; `indicator_ok` reports
/// whether that grid happens to satisfy the mesh condition.
pub fn constants_for_grid(inp: &MeshInputs<'_>, grid: &Grid) -> Result<ConstantsReport> {
    let c = mesh_constants(inp)?;
    Ok(assemble(inp, c, grid, None, MeshOutcome::External))
}

/// Largest mesh with `δ L̃/2 <= r̃(δ)`, found by bisection on the continuous
/// proxy and then rounded to `p̂ = ⌈|X|/δ̃⌉ + 2` points, `δ̂ = |X|/(p̂−1)`.
///
/// The returned report always has `indicator_ok == true`, re-checked with `r`
/// at the integer `p̂`.
pub fn solve_mesh(inp: &MeshInputs<'_>) -> Result<(Grid, ConstantsReport)> {
    let c = mesh_constants(inp)?;
    let width = inp.upper - inp.lower;
    let g = |delta: f64| mesh_objective(c.l_tilde, c.env.b_n, inp.n, width, delta);

    if g(width) <= 0.0 {
        let grid = Grid::uniform(inp.lower, inp.upper, 2)?;
        let report = assemble(inp, c, &grid, Some(width), MeshOutcome::ConstraintSlack);
        return finish(grid, report);
    }
    let floor = DELTA_FLOOR_REL * width;
    if g(floor) > 0.0 {
        return Err(Error::InfeasibleMesh {
            l_tilde: c.l_tilde,
            r: compute_r(c.env.b_n, inp.n, width / floor),
            delta_floor: floor,
        });
    }
    let (delta_tilde, _) = bisect_increasing(g, floor, width, BISECTION_REL_TOL);
    let p_hat = libm::ceil(width / delta_tilde) as usize + 2;
    let grid = Grid::uniform(inp.lower, inp.upper, p_hat)?;
    let report = assemble(inp, c, &grid, Some(delta_tilde), MeshOutcome::Solved);
    finish(grid, report)
}

fn finish(grid: Grid, report: ConstantsReport) -> Result<(Grid, ConstantsReport)> {
    if !report.indicator_ok {
        return Err(Error::MeshConditionViolated { lhs: report.between_grid_fluctuation(), r: report.r });
    }
    Ok((grid, report))
}
