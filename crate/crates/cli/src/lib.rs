//! `apw` command-line front end: operator spec files, commands, reports.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 evidence of a
//! singular operator, 3 tolerance failure.

pub mod error;
pub mod report;
pub mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use apw_core::invert::{
    certify_invertibility, direct_coefficient, extract_coefficient_bohr, invert, invert_fibers_on_torus,
    verify_inverse, Certificate, Diagnostics, FiberConfig, InvertOptions, MethodChoice, ResidualReport, VerifyConfig,
};
use apw_core::signal::smooth_bumps;
use apw_core::{ApwOperator, Complex64, SampledFunction};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

pub use error::{CliError, EXIT_OK, EXIT_SINGULAR, EXIT_TOLERANCE, EXIT_USAGE};
use spec::{FiberOverrides, OperatorSpec};

#[derive(Debug, Parser)]
#[command(name = "apw", version, about = "Almost-periodic integral operators: build, compose, apply, certify, invert, verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a spec, print its norm breakdown, optionally write the canonical form.
    Build {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the product A∘B.
    Compose {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an operator to a signal and write the result as CSV.
    Apply {
        op: PathBuf,
        signal: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fiber singular-value sweep; exit 2 on evidence of singularity.
    Certify {
        op: PathBuf,
        #[command(flatten)]
        fiber: FiberArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Invert, verify, and write the report bundle.
    Invert {
        op: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        /// Neumann tail target and fiber window-stability tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        fiber: FiberArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "apw-out")]
        out_dir: PathBuf,
    },
    /// Residuals of a candidate inverse; exit 3 when above tolerance.
    Verify {
        op: PathBuf,
        inverse: PathBuf,
        /// Tolerance on the algebraic residuals.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Neumann,
    Fiber,
    Auto,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FiberArgs {
    /// Fiber window radius R (labels |a_i| ≤ R).
    #[arg(long)]
    pub window: Option<usize>,
    /// Odd ξ sample count per axis.
    #[arg(long)]
    pub xi_count: Option<usize>,
    /// Torus grid size for the extraction check; must exceed 2R.
    #[arg(long)]
    pub torus_n: Option<usize>,
}

impl FiberArgs {
    fn overrides(&self) -> FiberOverrides {
        FiberOverrides { window: self.window, xi_count: self.xi_count, torus_n: self.torus_n, ..Default::default() }
    }
}

/// Signal files for `apply`, on the operator's working grid.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    /// The `index`-th seeded smooth bump.
    Bump {
        seed: u64,
        #[serde(default)]
        index: usize,
    },
    /// Explicit samples, row-major over the grid with `d` components each.
    Samples { re: Vec<f64>, im: Vec<f64> },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn fiber_config(spec: &OperatorSpec, flags: &FiberOverrides) -> FiberConfig {
    let mut config = FiberConfig::default();
    if let Some(o) = &spec.fiber {
        o.apply(&mut config);
    }
    flags.apply(&mut config);
    config
}

fn load(path: &Path) -> Result<(OperatorSpec, ApwOperator), CliError> {
    let spec = OperatorSpec::read(path)?;
    let op = spec.to_operator()?;
    Ok((spec, op))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io { path: "<stdout>".into(), message: e.to_string() }
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Build { spec, out: target } => cmd_build(spec, target.as_deref(), out),
        Command::Compose { a, b, out: target } => cmd_compose(a, b, target, out),
        Command::Apply { op, signal, out: target } => cmd_apply(op, signal, target, out),
        Command::Certify { op, fiber, out_dir } => cmd_certify(op, fiber, out_dir.as_deref(), out),
        Command::Invert { op, method, tol, fiber, seed, out_dir } => {
            cmd_invert(op, *method, *tol, fiber, *seed, out_dir, out)
        }
        Command::Verify { op, inverse, tol, seed, out_dir } => {
            cmd_verify(op, inverse, *tol, *seed, out_dir.as_deref(), out)
        }
    }
}

fn cmd_build(path: &Path, target: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let (spec, op) = load(path)?;
    let norm = op.norm();
    writeln!(out, "unit {:e}", norm.unit).map_err(io_err)?;
    for (label, v) in &norm.per_label {
        writeln!(out, "label {label} {v:e}").map_err(io_err)?;
    }
    writeln!(out, "total {:e}", norm.total).map_err(io_err)?;
    writeln!(out, "slack {:e}", norm.slack).map_err(io_err)?;
    if let Some(t) = target {
        OperatorSpec::from_operator(&op, spec.fiber.clone())?.write(t)?;
    }
    Ok(EXIT_OK)
}

fn cmd_compose(a: &Path, b: &Path, target: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let (_, opa) = load(a)?;
    let (_, opb) = load(b)?;
    let product = opa.compose(&opb)?;
    OperatorSpec::from_operator(&product, None)?.write(target)?;
    writeln!(out, "total {:e}", product.apw_norm()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn read_signal(path: &Path, op: &ApwOperator) -> Result<SampledFunction, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec: SignalSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    match spec {
        SignalSpec::Bump { seed, index } => {
            let mut all = smooth_bumps(op.grid(), op.dim(), seed, index + 1)?;
            Ok(all.pop().expect("index + 1 signals"))
        }
        SignalSpec::Samples { re, im } => {
            if re.len() != im.len() {
                return Err(CliError::Validation(format!("re has {} values but im has {}", re.len(), im.len())));
            }
            let values = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            Ok(SampledFunction::new(op.grid().clone(), op.dim(), values)?)
        }
    }
}

fn cmd_apply(op_path: &Path, signal: &Path, target: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let (_, op) = load(op_path)?;
    let u = read_signal(signal, &op)?;
    let v = op.apply(&u)?;
    let mut w = csv::Writer::from_path(target).map_err(|e| CliError::io(target, e))?;
    let c = v.grid().dim();
    let mut header: Vec<String> = if c == 1 { vec!["x".into()] } else { (1..=c).map(|k| format!("x{k}")).collect() };
    for k in 1..=v.dim() {
        if v.dim() == 1 {
            header.extend(["re".to_string(), "im".to_string()]);
        } else {
            header.extend([format!("re{k}"), format!("im{k}")]);
        }
    }
    w.write_record(&header).map_err(|e| CliError::io(target, e))?;
    for (i, p) in v.grid().points().iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
        for z in v.sample(i) {
            rec.push(format!("{:e}", z.re));
            rec.push(format!("{:e}", z.im));
        }
        w.write_record(&rec).map_err(|e| CliError::io(target, e))?;
    }
    w.flush().map_err(|e| CliError::io(target, e))?;
    writeln!(out, "wrote {} samples to {}", v.grid().len(), target.display()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn certificate_exit(cert: &Certificate) -> i32 {
    if cert.passed() && cert.max_condition <= cert.condition_cap {
        EXIT_OK
    } else {
        EXIT_SINGULAR
    }
}

fn cmd_certify(path: &Path, fiber: &FiberArgs, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let (spec, op) = load(path)?;
    let config = fiber_config(&spec, &fiber.overrides());
    let cert = certify_invertibility(&op, &config)?;
    let text = cert.to_string();
    write!(out, "{text}").map_err(io_err)?;
    if let Some(dir) = out_dir {
        report::write(dir, report::CERTIFICATE_FILE, &text)?;
    }
    Ok(certificate_exit(&cert))
}

/// Largest gap between torus-averaged and directly read fiber
/// coefficients at `ξ = 0`, over the default window.
fn bohr_check(op: &ApwOperator, torus_n: Option<usize>) -> Result<(usize, usize, f64), CliError> {
    let radius = spec::default_window(op);
    let n = torus_n.unwrap_or(2 * radius + 2);
    let xi = vec![0.0; op.grid().dim()];
    let fibers = invert_fibers_on_torus(op, &xi, radius, n)?;
    let mut worst: f64 = 0.0;
    for label in &fibers.labels {
        let a = extract_coefficient_bohr(&fibers, label)?;
        let b = direct_coefficient(op, &xi, radius, label)?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).norm());
        }
    }
    Ok((radius, n, worst))
}

fn residual_summary(rep: &ResidualReport, out: &mut dyn Write) -> Result<(), CliError> {
    for (kind, p, v) in rep.rows() {
        let name = if p.is_empty() { kind.to_string() } else { format!("{kind}_p{p}") };
        writeln!(out, "{name} {v:e}").map_err(io_err)?;
    }
    writeln!(out, "passed {}", rep.passed()).map_err(io_err)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_invert(
    path: &Path,
    method: MethodArg,
    tol: Option<f64>,
    fiber: &FiberArgs,
    seed: u64,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let started = Instant::now();
    let (spec, op) = load(path)?;
    let mut options = InvertOptions { fiber: fiber_config(&spec, &fiber.overrides()), ..InvertOptions::default() };
    options.method = match method {
        MethodArg::Neumann => MethodChoice::Neumann,
        MethodArg::Fiber => MethodChoice::Fiber,
        MethodArg::Auto => MethodChoice::Auto,
    };
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
        }
        options.tol = t;
        options.fiber.tol = t;
    }

    let cert = certify_invertibility(&op, &options.fiber)?;
    let cert_text = cert.to_string();
    if certificate_exit(&cert) != EXIT_OK {
        report::write(out_dir, report::CERTIFICATE_FILE, &cert_text)?;
        write!(out, "{cert_text}").map_err(io_err)?;
        return Ok(EXIT_SINGULAR);
    }

    let result = invert(&op, &options)?;
    let verify_cfg = VerifyConfig { seed, ..VerifyConfig::default() };
    let residuals = verify_inverse(&op, &result.inverse, &verify_cfg)?;
    let (bohr_radius, bohr_n, bohr_gap) = bohr_check(&op, options.fiber.torus_n)?;

    let inverse_spec = OperatorSpec::from_operator(&result.inverse, None)?;
    report::write(out_dir, report::INVERSE_FILE, &inverse_spec.to_text())?;
    report::write(out_dir, report::DECAY_FILE, &report::decay_csv(&result.decay))?;
    report::write(out_dir, report::RESIDUAL_FILE, &report::residual_csv(&residuals))?;
    let mut cert_full = format!("method: {}\n", result.method);
    if let Diagnostics::Neumann(d) = &result.diagnostics {
        cert_full.push_str(&format!(
            "neumann: q = {:e} < 1, so lambda + N is invertible; {} terms, tail bound {:e}\n",
            d.q, d.terms, d.tail_bound
        ));
    }
    cert_full.push_str(&cert_text);
    report::write(out_dir, report::CERTIFICATE_FILE, &cert_full)?;

    let diagnostics = match &result.diagnostics {
        Diagnostics::Neumann(d) => json!({"q": d.q, "terms": d.terms, "tail_bound": d.tail_bound}),
        Diagnostics::Fiber(d) => json!({
            "window_radius": d.window_radius,
            "compared_radius": d.compared_radius,
            "window_drift": d.drift,
            "mass_drift": d.mass_drift,
            "xi_shape": d.xi_shape,
        }),
    };
    let tails: Vec<_> = op
        .terms()
        .iter()
        .map(|(l, k)| json!({"label": l.to_string(), "tail_bound": k.tail_bound()}))
        .collect();
    let metadata = json!({
        "tool": "apw",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "invert",
        "input": path.display().to_string(),
        "method": result.method.name(),
        "config": {
            "method": format!("{method:?}").to_lowercase(),
            "tol": options.tol,
            "window": options.fiber.window_radius,
            "xi_count": options.fiber.xi_count,
            "torus_n": options.fiber.torus_n,
            "condition_cap": options.fiber.condition_cap,
            "window_tol": options.fiber.tol,
        },
        "seed": seed,
        "neumann_ratio": op.neumann_ratio(),
        "apw_norm": op.apw_norm(),
        "inverse_apw_norm": result.inverse.apw_norm(),
        "inverse_slack": result.inverse.slack(),
        "diagnostics": diagnostics,
        "certificate": {
            "verdict": cert.verdict.name(),
            "min_singular_value": cert.min_sigma,
            "max_condition": cert.max_condition,
        },
        "bohr_check": {"window_radius": bohr_radius, "torus_n": bohr_n, "max_gap": bohr_gap},
        "kernel_tail_bounds": tails,
        "residuals_passed": residuals.passed(),
        "warnings": result.warnings(),
        "threads": rayon::current_num_threads(),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let meta_text = serde_json::to_string_pretty(&metadata).expect("metadata serializes") + "\n";
    report::write(out_dir, report::METADATA_FILE, &meta_text)?;

    writeln!(out, "method {}", result.method).map_err(io_err)?;
    writeln!(out, "mu {} {}", result.mu().re, result.mu().im).map_err(io_err)?;
    writeln!(out, "inverse_norm {:e}", result.inverse.apw_norm()).map_err(io_err)?;
    for w in result.warnings() {
        writeln!(out, "warning: {w}").map_err(io_err)?;
    }
    residual_summary(&residuals, out)?;
    writeln!(out, "reports written to {}", out_dir.display()).map_err(io_err)?;
    Ok(if residuals.passed() { EXIT_OK } else { EXIT_TOLERANCE })
}

fn cmd_verify(
    op_path: &Path,
    inverse: &Path,
    tol: Option<f64>,
    seed: u64,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let (_, op) = load(op_path)?;
    let (_, inv) = load(inverse)?;
    let mut cfg = VerifyConfig { seed, ..VerifyConfig::default() };
    if let Some(t) = tol {
        cfg.algebraic_tol = t;
    }
    let rep = verify_inverse(&op, &inv, &cfg)?;
    residual_summary(&rep, out)?;
    if let Some(dir) = out_dir {
        report::write(dir, report::RESIDUAL_FILE, &report::residual_csv(&rep))?;
    }
    Ok(if rep.passed() { EXIT_OK } else { EXIT_TOLERANCE })
}
