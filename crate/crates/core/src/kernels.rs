//! Smoothing kernels and the scalar constants the grid-design formulas use.
//!
//! Only twice continuously differentiable kernels are offered. Epanechnikov
//! and biweight have discontinuous second (or first) derivatives at the edge
//! of their support and cannot be used to bound the local slope of the
//! studentized process, so they are not available.

use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{integrate_pieces, maximize};

/// The Gaussian integrals are taken over `|u| <= 12`; the tail mass beyond is
/// below 1e-30.
pub const GAUSSIAN_TRUNCATION: f64 = 12.0;

const TRIWEIGHT_NORM: f64 = 35.0 / 32.0;
const QUAD_ABS_TOL: f64 = 1e-15;
const QUAD_REL_TOL: f64 = 1e-13;
const SUP_SCAN_POINTS: usize = 4001;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    #[default]
    Gaussian,
    Triweight,
}

impl KernelId {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelId::Gaussian => "gaussian",
            KernelId::Triweight => "triweight",
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelId::Gaussian),
            "triweight" => Ok(KernelId::Triweight),
            other => Err(Error::UnsupportedKernel(other.to_string())),
        }
    }
}

/// A kernel together with its suprema and integrals.
///
/// Constants are computed once by quadrature and scanning when the kernel is
/// built; the struct is immutable afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kernel {
    pub id: KernelId,
    /// `sup |K|`
    pub sup_k0: f64,
    /// `sup |K'|`
    pub sup_k1: f64,
    /// `sup |K''|`
    pub sup_k2: f64,
    /// `∫ K²`
    pub int_k2: f64,
    /// `∫ |u| K²`
    pub int_abs_u_k2: f64,
    /// `∫ K⁴`
    pub int_k4: f64,
    /// `∫ |K'|`
    pub int_abs_k1: f64,
    /// `∫ (K')²`
    pub int_k1_sq: f64,
    /// `∫ |K''|`
    pub int_abs_k2d: f64,
}

fn gaussian0(u: f64) -> f64 {
    libm::exp(-0.5 * u * u) / libm::sqrt(2.0 * PI)
}

impl Kernel {
    pub fn new(id: KernelId) -> Result<Self> {
        kernel_constants(id)
    }

    /// The kernel vanishes outside `[-s, s]` (for the Gaussian this is the
    /// quadrature truncation).
    pub fn support_radius(&self) -> f64 {
        match self.id {
            KernelId::Gaussian => GAUSSIAN_TRUNCATION,
            KernelId::Triweight => 1.0,
        }
    }

    /// Points where the kernel or one of its first two derivatives has a
    /// zero or a kink; used as quadrature breakpoints.
    pub fn breakpoints(&self) -> &'static [f64] {
        match self.id {
            // zeros of u and u² - 1
            KernelId::Gaussian => &[-1.0, 0.0, 1.0],
            // zeros of u, 1 - 5u² and the support edges
            KernelId::Triweight => &[-1.0, -0.447_213_595_499_958, 0.0, 0.447_213_595_499_958, 1.0],
        }
    }

    #[inline]
    pub fn eval0(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Gaussian => gaussian0(u),
            KernelId::Triweight => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - u * u;
                    TRIWEIGHT_NORM * s * s * s
                }
            }
        }
    }

    #[inline]
    pub fn eval1(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Gaussian => -u * gaussian0(u),
            KernelId::Triweight => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - u * u;
                    -6.0 * TRIWEIGHT_NORM * u * s * s
                }
            }
        }
    }

    #[inline]
    pub fn eval2(&self, u: f64) -> f64 {
        match self.id {
            KernelId::Gaussian => (u * u - 1.0) * gaussian0(u),
            KernelId::Triweight => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    -6.0 * TRIWEIGHT_NORM * (1.0 - u * u) * (1.0 - 5.0 * u * u)
                }
            }
        }
    }

    fn integral<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let s = self.support_radius();
        integrate_pieces(f, -s, s, self.breakpoints(), QUAD_ABS_TOL, QUAD_REL_TOL)
    }

    fn sup<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        // All shipped kernels attain their suprema well inside |u| <= 4.
        let s = self.support_radius().min(4.0);
        maximize(f, -s, s, SUP_SCAN_POINTS).1
    }
}

/// Builds a kernel and computes all of its constants numerically.
pub fn kernel_constants(id: KernelId) -> Result<Kernel> {
    let mut k = Kernel {
        id,
        sup_k0: 0.0,
        sup_k1: 0.0,
        sup_k2: 0.0,
        int_k2: 0.0,
        int_abs_u_k2: 0.0,
        int_k4: 0.0,
        int_abs_k1: 0.0,
        int_k1_sq: 0.0,
        int_abs_k2d: 0.0,
    };
    k.sup_k0 = k.sup(|u| k.eval0(u).abs());
    k.sup_k1 = k.sup(|u| k.eval1(u).abs());
    k.sup_k2 = k.sup(|u| k.eval2(u).abs());
    k.int_k2 = k.integral(|u| {
        let v = k.eval0(u);
        v * v
    })?;
    k.int_abs_u_k2 = k.integral(|u| {
        let v = k.eval0(u);
        u.abs() * v * v
    })?;
    k.int_k4 = k.integral(|u| {
        let v = k.eval0(u);
        let v2 = v * v;
        v2 * v2
    })?;
    k.int_abs_k1 = k.integral(|u| k.eval1(u).abs())?;
    k.int_k1_sq = k.integral(|u| {
        let v = k.eval1(u);
        v * v
    })?;
    k.int_abs_k2d = k.integral(|u| k.eval2(u).abs())?;
    Ok(k)
}
