//! The `uniband` command line.
//!
//! ```text
//! uniband band     --input x.csv [--output band.json] [--csv band.csv] [--maxima maxima.csv]
//! uniband grid     (--input x.csv | --n N --fmin A --fmax B --bandwidth H --region a,b)
//! uniband coverage --dgp stdnormal --n 2000 --reps 500 --draws 1000 --seed 42 [--trace t.csv]
//! uniband diagnose (same inputs as grid)
//! ```
//!
//! Exit status: 0 success, 2 input error, 3 infeasible mesh, 4 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use uniband_core::grid::m_n;
use uniband_core::{
    build_band, build_grid, constants_for_grid, default_epsilon, design_grid, kernel_constants, simple_grid_rule,
    solve_mesh, BandRequest, Bandwidth, BootstrapConfig, ConstantsReport, Grid, GridRule, KernelId, MeshInputs,
    PluginDensityExtrema, Sample,
};

use crate::error::AppError;
use crate::io::{read_sample_csv, write_band_csv, write_json, write_maxima_csv, write_text, write_trace_csv};
use crate::parallel::{with_threads, Rayon};
use crate::sim::{coverage_run, CoverageConfig, Dgp, DEFAULT_OVERSAMPLE};

#[derive(Debug, Parser)]
#[command(name = "uniband", version, about = "Uniform confidence bands for kernel density estimators")]
pub struct Cli {
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true, env = "UNIBAND_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a band from a one-column CSV sample.
    Band(BandArgs),
    /// Report the mesh-rule constants and the selected grid.
    Grid(GridArgs),
    /// Monte Carlo coverage experiment on a known density.
    Coverage(CoverageArgs),
    /// Print every grid constant next to its formula.
    Diagnose(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    Mesh,
    Simple,
    Explicit,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel: KernelId,

    /// `auto` (Silverman) or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_bandwidth)]
    pub bandwidth: Bandwidth,

    /// `a,b`; defaults to the 5% and 95% sample quantiles.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_region)]
    pub region: Option<(f64, f64)>,

    #[arg(long, value_enum, default_value = "mesh")]
    pub rule: RuleName,

    /// `c_Δ` of the simple rule.
    #[arg(long, default_value_t = 0.5)]
    pub c_delta: f64,

    /// `γ` of the simple rule.
    #[arg(long, default_value_t = 0.01)]
    pub gamma: f64,

    /// Mesh of the explicit rule.
    #[arg(long)]
    pub delta: Option<f64>,

    /// Overrides `ε_n = min(0.1, (n h)^{-1/4} / log n)`.
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// Histogram bins for the density plug-ins.
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long, default_value_t = 2000)]
    pub draws: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// JSON destination; stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Plot-ready `x,center,lower,upper,sigma_hat` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Sorted bootstrap maxima.
    #[arg(long)]
    pub maxima: Option<PathBuf>,

    #[command(flatten)]
    pub design: DesignArgs,

    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, conflicts_with_all = ["n", "fmin", "fmax"])]
    pub input: Option<PathBuf>,

    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Sample size, for formula mode without data.
    #[arg(long, requires_all = ["fmin", "fmax"])]
    pub n: Option<usize>,

    #[arg(long, requires = "n")]
    pub fmin: Option<f64>,

    #[arg(long, requires = "n")]
    pub fmax: Option<f64>,

    #[command(flatten)]
    pub design: DesignArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CoverageArgs {
    #[arg(long, value_parser = parse_dgp)]
    pub dgp: Dgp,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 500)]
    pub reps: usize,

    #[arg(long, default_value_t = DEFAULT_OVERSAMPLE)]
    pub oversample: usize,

    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Per-replication CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    #[command(flatten)]
    pub design: DesignArgs,

    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
}

fn parse_kernel(s: &str) -> Result<KernelId, String> {
    s.parse::<KernelId>().map_err(|e| e.to_string())
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Auto);
    }
    match s.trim().parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
    }
}

fn parse_region(s: &str) -> Result<(f64, f64), String> {
    let err = || format!("expected `a,b` with a < b, got `{s}`");
    let (a, b) = s.split_once(',').ok_or_else(err)?;
    let a: f64 = a.trim().parse().map_err(|_| err())?;
    let b: f64 = b.trim().parse().map_err(|_| err())?;
    if a < b && a.is_finite() && b.is_finite() {
        Ok((a, b))
    } else {
        Err(err())
    }
}

fn parse_dgp(s: &str) -> Result<Dgp, String> {
    s.parse::<Dgp>().map_err(|e| e.to_string())
}

impl DesignArgs {
    fn rule(&self) -> Result<GridRule, AppError> {
        match self.rule {
            RuleName::Mesh => Ok(GridRule::Mesh),
            RuleName::Simple => Ok(GridRule::Simple { c_delta: self.c_delta, gamma: self.gamma }),
            RuleName::Explicit => match self.delta {
                Some(delta) => Ok(GridRule::Explicit { delta }),
                None => Err(AppError::Usage("--rule explicit needs --delta".into())),
            },
        }
    }

    fn request(&self, sample: Sample, bootstrap: BootstrapConfig) -> Result<BandRequest, AppError> {
        Ok(BandRequest {
            sample,
            region: self.region,
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            rule: self.rule()?,
            epsilon: self.epsilon,
            bins: self.bins,
            bootstrap,
        })
    }
}

impl BootstrapArgs {
    fn config(&self) -> BootstrapConfig {
        BootstrapConfig { draws: self.draws, alpha: self.alpha, master_seed: self.seed }
    }
}

/// Output of `grid`: the constants report, plus the grid itself.
#[derive(Debug, Serialize)]
pub struct GridReport {
    #[serde(flatten)]
    pub constants: ConstantsReport,
    pub m_n: u64,
    pub points: Vec<f64>,
    pub warnings: Vec<String>,
}

fn grid_report(args: &GridArgs) -> Result<GridReport, AppError> {
    let design = &args.design;
    let (grid, constants, warnings) = match (&args.input, args.n) {
        (Some(path), _) => {
            let sample = read_sample_csv(path)?;
            let request = design.request(sample, BootstrapConfig::default())?;
            let (grid, constants, _, warnings) = design_grid(&request)?;
            (grid, constants, warnings)
        }
        (None, Some(n)) => formula_mode(design, n, args.fmin.unwrap_or(f64::NAN), args.fmax.unwrap_or(f64::NAN))?,
        (None, None) => return Err(AppError::Usage("give --input, or --n with --fmin and --fmax".into())),
    };
    let m_n = m_n(constants.n, constants.bandwidth, constants.width());
    Ok(GridReport { constants, m_n, points: grid.points, warnings })
}

// all grid constants from plug-in scalars alone
fn formula_mode(
    design: &DesignArgs,
    n: usize,
    f_min: f64,
    f_max: f64,
) -> Result<(Grid, ConstantsReport, Vec<String>), AppError> {
    let h = match design.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => return Err(AppError::Usage("formula mode needs a numeric --bandwidth".into())),
    };
    let (lower, upper) = design.region.ok_or_else(|| AppError::Usage("formula mode needs --region".into()))?;
    let kernel = kernel_constants(design.kernel)?;
    let extrema = PluginDensityExtrema::given(f_min, f_max)?;
    let eps = design.epsilon.unwrap_or_else(|| default_epsilon(n, h));
    let inputs = MeshInputs { kernel: &kernel, h, n, lower, upper, extrema, eps };
    let (grid, constants) = match design.rule()? {
        GridRule::Mesh => solve_mesh(&inputs)?,
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
    let mut warnings = Vec::new();
    if !constants.indicator_ok {
        warnings.push(format!(
            "mesh condition not met: L_tilde * max_gap / 2 = {} > r = {}",
            constants.between_grid_fluctuation(),
            constants.r
        ));
    }
    Ok((grid, constants, warnings))
}

/// One line per constant: name, value, formula.
pub fn diagnose_text(report: &GridReport) -> String {
    let c = &report.constants;
    let b = &c.bernstein;
    let rows: Vec<(&str, String, &str)> = vec![
        ("n", c.n.to_string(), "sample size"),
        ("h", fmt(c.bandwidth), "bandwidth"),
        ("region", format!("[{}, {}]", fmt(c.region[0]), fmt(c.region[1])), "X = [a, b], |X| = b - a"),
        ("f_max_hat", fmt(c.f_max_hat), "max histogram height on X"),
        ("f_min_hat", fmt(c.f_min_hat), "max(min histogram height on X, 0.01/|X|)"),
        ("bins", c.bin_count.to_string(), "histogram bins on X"),
        ("var_min", fmt(c.var_min), "h^-1 f_min ∫K²"),
        ("B_psi", fmt(c.b_psi), "2 sup|K| / (log 2 · h var_min^(1/2))"),
        ("B_4", fmt(c.b_4), "(16 f_max ∫K⁴ / (h³ var_min²))^(1/2)"),
        ("B_n", fmt(c.b_n), "max(B_psi, B_4, 1)"),
        ("eps_n", fmt(c.eps_n), "min(0.1, (n h)^(-1/4) / log n) unless overridden"),
        ("m_n", b.m_n.to_string(), "floor(n^(1/2) h^(-3/2) |X|) + 2"),
        ("t", fmt(b.log_term), "log(2 m_n / ε), ε = eps_n / 2"),
        ("M0", fmt(b.m0), "2 sup|K| / h"),
        ("M1", fmt(b.m1), "2 sup|K'| / h²"),
        ("v0", fmt(b.v0), "f_max ∫K² / h"),
        ("v1", fmt(b.v1), "f_max ∫K'² / h³"),
        ("A0", fmt(b.a0), "(2 v0 t / n)^(1/2) + M0 t / (3 n) + sup|K'| (n h)^(-1/2)"),
        ("A1", fmt(b.a1), "(2 v1 t / n)^(1/2) + M1 t / (3 n) + sup|K''| n^(-1/2) h^(-3/2)"),
        ("sigma_inv_sup", fmt(c.sigma_inv_sup), "(n h / (f_min ∫K²))^(1/2)"),
        ("L_tilde", fmt(c.l_tilde), "2 (n h / (∫K² f_min))^(1/2) A1(ε/2)"),
        ("L_second_term", fmt(c.l_second_term), "2 (n h)^(1/2) A0(ε/2), reported only"),
        ("delta_tilde", c.delta_tilde.map_or("-".into(), fmt), "root of δ L_tilde / 2 = r(|X|/δ)"),
        ("delta", fmt(c.delta), "selected mesh"),
        ("max_gap", fmt(c.max_gap), "largest spacing of the grid"),
        ("p", c.p.to_string(), "grid size"),
        ("r", fmt(c.r), "2 (B_n² log³(n p) / n)^(1/4)"),
        ("rho_n", fmt(c.rho_n), "(B_n² log⁵(n p) / n)^(1/4)"),
        ("high_dim_ratio", fmt(c.high_dim_ratio), "B_n² log⁵(n p) / n"),
        ("indicator_ok", c.indicator_ok.to_string(), "L_tilde max_gap / 2 <= r"),
        (
            "outcome",
            serde_json::to_value(c.outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            "solved | constraint_slack | external",
        ),
    ];
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let vwidth = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, value, formula) in rows {
        let _ = writeln!(out, "{name:<width$}  {value:>vwidth$}  {formula}");
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

fn run_band(args: &BandArgs) -> Result<(), AppError> {
    let sample = read_sample_csv(&args.input)?;
    let request = args.design.request(sample, args.bootstrap.config())?;
    let band = build_band(&request, &Rayon)?;
    if let Some(path) = &args.csv {
        write_band_csv(&band, path)?;
    }
    if let Some(path) = &args.maxima {
        write_maxima_csv(&band.bootstrap, path)?;
    }
    for w in &band.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&band, args.output.as_deref())
}

fn run_coverage(args: &CoverageArgs) -> Result<(), AppError> {
    let cfg = CoverageConfig {
        dgp: args.dgp,
        n: args.n,
        alpha: args.bootstrap.alpha,
        kernel: args.design.kernel,
        bandwidth: args.design.bandwidth,
        rule: args.design.rule()?,
        region: args.design.region,
        epsilon: args.design.epsilon,
        bins: args.design.bins,
        replications: args.reps,
        draws: args.bootstrap.draws,
        oversample: args.oversample,
        seed: args.bootstrap.seed,
    };
    let report = coverage_run(&cfg)?;
    if report.failures > 0 {
        eprintln!("warning: {} replications failed and were excluded", report.failures);
    }
    if let Some(path) = &args.trace {
        write_trace_csv(&report.trace, path)?;
    }
    write_json(&report, args.output.as_deref())
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    let threads = cli.threads;
    with_threads(threads, move || match &cli.command {
        Command::Band(args) => run_band(args),
        Command::Grid(args) => write_json(&grid_report(args)?, args.output.as_deref()),
        Command::Diagnose(args) => write_text(&diagnose_text(&grid_report(args)?), args.output.as_deref()),
        Command::Coverage(args) => run_coverage(args),
    })?
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::error::EXIT_INPUT } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
