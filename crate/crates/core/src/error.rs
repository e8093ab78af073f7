use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported kernel `{0}` (expected `gaussian` or `triweight`)")]
    UnsupportedKernel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample needs at least {required} finite observations, got {got}")]
    InvalidSample { required: usize, got: usize },

    #[error("degenerate variance {variance:e} at x = {x}")]
    DegenerateVariance { x: f64, variance: f64 },

    #[error("only {got} observations inside the region, need at least {required}")]
    InsufficientData { required: usize, got: usize },

    #[error("no admissible mesh above {delta_floor:e}: L_tilde = {l_tilde}, r = {r}")]
    InfeasibleMesh { l_tilde: f64, r: f64, delta_floor: f64 },

    #[error("mesh condition violated: L_tilde * max_gap / 2 = {lhs} > r = {r}")]
    MeshConditionViolated { lhs: f64, r: f64 },

    #[error("length mismatch in {context}: expected {expected}, got {got}")]
    LengthMismatch { context: &'static str, expected: usize, got: usize },

    #[error("index set is not a subset of the grid: {0}")]
    NotASubset(String),

    #[error("quadrature did not converge on [{a}, {b}]: error estimate {error:e}")]
    QuadratureDiverged { a: f64, b: f64, error: f64 },

    #[error("zero dispersion in sample")]
    ZeroDispersion,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
