//! Uniform confidence bands for kernel density estimators on a finite grid.
//!
//! The crate is `no_std` (it needs `alloc`). It covers the whole statistical
//! pipeline: kernels and their constants, the studentized KDE process on a
//! grid, the mesh-selection rule that makes the grid fine enough for the
//! discretization error to be dominated, the Gaussian-multiplier bootstrap
//! and band assembly. IO, parallel execution and the CLI live in the
//! `uniband` crate.
//!
//! The band targets `E[f̂_h(x)]`, not `f(x)`; no bias correction is applied.

#![no_std]
// `!(a < b)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod band;
pub mod bootstrap;
pub mod error;
pub mod grid;
pub mod kde;
pub mod kernels;
pub mod numeric;

pub use band::{
    auto_bandwidth, build_band, default_region, design_grid, BandRequest, Bandwidth, GridRule, UniformBand,
};
pub use bootstrap::{
    bootstrap_draw, critical_value, critical_value_nested, BootstrapConfig, BootstrapDraws, DrawExecutor, Sequential,
};
pub use error::{Error, Result};
pub use grid::{
    build_grid, compute_a, compute_bn, compute_l_tilde, compute_r, compute_rho, constants_for_grid, default_epsilon,
    envelope_bounds, plugin_extrema, simple_grid_rule, solve_mesh, BernsteinTerms, ConstantsReport, EnvelopeBounds,
    Grid, MeshInputs, MeshOutcome, PluginDensityExtrema,
};
pub use kde::{
    evaluate_on_grid, kde_at, studentized_sup, variance_hat_at, KdeStatistic, LinearStatistic, Sample,
    StudentizedEvaluation, VarianceEstimate, VARIANCE_FLOOR,
};
pub use kernels::{kernel_constants, Kernel, KernelId};
