//! Command-line front end. Every subcommand writes a CSV block: `# key=value`
//! header lines (parameters, version, residuals, a `rerun=` line that reproduces
//! the file), then a column line and the rows.
//!
//! Exit codes: 0 success, 1 usage or parameter error, 2 numerical tolerance
//! failure, 3 truncation failure.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::analytic::{
    damped_marginal_conditional, damped_marginal_star, linear_grid, marginal_conditional,
    marginal_pure_cat, photon_stats, photon_stats_displaced, pseudo_cat_marginal, q_function,
    Grid1D, InjectionPhase,
};
use crate::dissipation::{born_correction_kerr_frame_from_state, correlation_closed_form, TauQuad};
use crate::model::{
    cat_condition_residual, conditional_cat_kappa, conditional_cat_time, e_of, f_of, parity_measurement_result,
    parse_time, thermal_dim, z_from_n_th, ScaledParams,
};
use crate::oracle::{
    exact_unitary_apply, lindblad_integrate, lindblad_integrate_kerr_frame, mirror_dim_for,
    project_mirror_quadrature, Blocks, JointState, KerrToLab, LindbladOptions,
};
use crate::specfun::QuadSpec;
use crate::states::{coherent_vector, default_field_dim, thermal_density, Basis};
use crate::{Error, Result};

/// Default output directory when `--out` is absent; without it output goes to stdout.
pub const OUT_DIR_ENV: &str = "OPTOCAT_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "optocat", version, about = "Cavity cat states coupled to a moving mirror", args_override_self = true)]
pub struct Cli {
    /// Flat JSON object of flag values (keys are flag names); command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Quadrature marginal at t* = 2 pi m1 with and without photon loss.
    MarginalStar(MarginalStarArgs),
    /// Quadrature marginal conditioned on a mirror reading y at t'.
    MarginalCond(MarginalCondArgs),
    /// Joint Husimi function on a grid of field amplitudes.
    Qfunc(QfuncArgs),
    /// Photon-number distribution after injecting a reference field.
    PhotonStats(PhotonStatsArgs),
    /// Photon-number / mirror-momentum correlation coefficient.
    Correlation(CorrelationArgs),
    /// Quadrature marginal of the pseudo-cat (no mirror measurement).
    PseudoMarginal(PseudoArgs),
    /// Cat-formation times for a coupling.
    CatTimes(CatTimesArgs),
    /// Closed forms against the brute-force joint solver.
    OracleCompare(OracleArgs),
    /// Runs a plan file of subcommands in parallel.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct FieldArgs {
    /// |alpha0| (default sqrt 7).
    #[arg(long)]
    pub alpha0_mag: Option<f64>,
    /// |alpha0|^2; alternative to --alpha0-mag.
    #[arg(long)]
    pub alpha0_sq: Option<f64>,
    #[arg(long, default_value_t = FRAC_PI_2, allow_hyphen_values = true)]
    pub alpha0_arg: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ThermalArgs {
    /// Mean thermal phonon number.
    #[arg(long)]
    pub n_th: Option<f64>,
    /// Boltzmann factor z = n_th / (1 + n_th).
    #[arg(long)]
    pub z: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub x_step: Option<f64>,
    /// Series cut-off (default: from the Poisson weights).
    #[arg(long)]
    pub p_max: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output file; defaults to $OPTOCAT_OUT_DIR/<command>.csv, else stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct MarginalStarArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    /// t* = 2 pi m1.
    #[arg(long, default_value_t = 1)]
    pub t_star_multiple: u32,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct MarginalCondArgs {
    /// Default: the smallest coupling with E(t') = pi/2.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub thermal: ThermalArgs,
    /// Measurement time t', e.g. 1.5xpi.
    #[arg(long, default_value = "1.5xpi")]
    pub t: String,
    /// Mirror reading.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub y: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct QfuncArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub thermal: ThermalArgs,
    #[arg(long, default_value = "1x2pi")]
    pub t: String,
    /// Mirror coherent amplitude beta (real part).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta_re: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta_im: f64,
    /// Half-width of the square field-amplitude grid (default |alpha0| + 2).
    #[arg(long)]
    pub extent: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    /// Series truncation (default from |alpha0|^2 and z).
    #[arg(long)]
    pub trunc: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    In,
    Out,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum InjectionModel {
    /// alpha_r added to both cat amplitudes.
    Additive,
    /// Displacement operator D(alpha_r) applied to the pseudo-cat.
    Displaced,
}

#[derive(Args, Debug, Clone)]
pub struct PhotonStatsArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub thermal: ThermalArgs,
    #[arg(long, default_value = "0.84x2pi")]
    pub t: String,
    #[arg(long, value_enum, default_value_t = PhaseArg::In)]
    pub phase: PhaseArg,
    #[arg(long, value_enum, default_value_t = InjectionModel::Additive)]
    pub model: InjectionModel,
    /// Largest photon number (default 4|alpha0|^2 + 16|alpha0| + 10).
    #[arg(long)]
    pub n_max: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CorrelationArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub thermal: ThermalArgs,
    /// Time, or the start of a time grid when --t-max is given.
    #[arg(long, default_value = "0.84x2pi")]
    pub t: String,
    #[arg(long)]
    pub t_max: Option<String>,
    #[arg(long, default_value = "0.01x2pi")]
    pub t_step: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PseudoArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub thermal: ThermalArgs,
    #[arg(long, default_value = "0.84x2pi")]
    pub t: String,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CatTimesArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    /// Largest m1 (disentangling times) and m (conditional times) listed.
    #[arg(long, default_value_t = 4)]
    pub m_max: u32,
    /// Residual below which a disentangling time counts as a cat time.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha0_sq: f64,
    #[arg(long, default_value_t = FRAC_PI_2, allow_hyphen_values = true)]
    pub alpha0_arg: f64,
    #[command(flatten)]
    pub thermal: ThermalArgs,
    #[arg(long, default_value = "1xpi")]
    pub t: String,
    /// Mirror reading for the projected marginal.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub y: f64,
    #[arg(long)]
    pub field_dim: Option<usize>,
    /// Lab-frame mirror dimension (default: large enough for the largest displacement).
    #[arg(long)]
    pub mirror_dim: Option<usize>,
    /// Pass threshold for the undamped comparisons.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// One job per line: `<name> <subcommand> [flags...]`; `#` starts a comment.
    #[arg(long)]
    pub plan: PathBuf,
    /// Directory for `<name>.csv` (default $OPTOCAT_OUT_DIR, else the current directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// CSV produced by one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    /// Resolved flags; `rerun=` is built from these.
    pub params: Vec<(String, String)>,
    /// Derived diagnostics (residuals, truncation data).
    pub info: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Set when a tolerance check failed; the report is still written.
    pub failed: Option<String>,
}

impl Report {
    fn new(command: &'static str) -> Self {
        Self { command, params: vec![], info: vec![], columns: vec![], rows: vec![], failed: None }
    }

    fn param(&mut self, k: &str, v: impl Into<String>) {
        self.params.push((k.to_string(), v.into()));
    }

    fn info(&mut self, k: &str, v: impl Into<String>) {
        self.info.push((k.to_string(), v.into()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# optocat {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command={}", self.command);
        for (k, v) in self.params.iter().chain(self.info.iter()) {
            let _ = writeln!(s, "# {k}={v}");
        }
        let _ = writeln!(s, "# rerun={}", self.rerun_args().join(" "));
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }

    /// Arguments (after the program name) that regenerate this report.
    pub fn rerun_args(&self) -> Vec<String> {
        let mut a = vec![self.command.to_string()];
        for (k, v) in &self.params {
            a.push(format!("--{k}"));
            a.push(v.clone());
        }
        a
    }
}

/// Shortest text that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Disentangled { .. } | Error::Io(_) => 1,
        Error::Truncation { .. } => 3,
        Error::Quadrature { .. }
        | Error::Overflow(_)
        | Error::StepConvergence { .. }
        | Error::Degenerate(_)
        | Error::Domain(_) => 2,
    }
}

pub fn run() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    run_from(&argv)
}

/// Parses `argv` (program name first), runs the command and writes its output.
pub fn run_from(argv: &[String]) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Sweep(a) => run_sweep(&a),
        cmd => {
            let out = output_target(&cmd);
            match execute(&cmd) {
                Ok(rep) => finish(&rep, out.as_deref()),
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
    }
}

fn finish(rep: &Report, out: Option<&Path>) -> i32 {
    let text = rep.render();
    match out {
        Some(p) => {
            if let Err(e) = write_atomic(p, &text) {
                eprintln!("error: writing {}: {e}", p.display());
                return 1;
            }
        }
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            // a closed pipe (e.g. `| head`) is not an error of the run
            if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    eprintln!("error: writing stdout: {e}");
                    return 1;
                }
            }
        }
    }
    match &rep.failed {
        Some(msg) => {
            eprintln!("tolerance check failed: {msg}");
            2
        }
        None => 0,
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)
}

fn output_target(cmd: &Command) -> Option<PathBuf> {
    let (out, name) = match cmd {
        Command::MarginalStar(a) => (&a.out, "marginal-star"),
        Command::MarginalCond(a) => (&a.out, "marginal-cond"),
        Command::Qfunc(a) => (&a.out, "qfunc"),
        Command::PhotonStats(a) => (&a.out, "photon-stats"),
        Command::Correlation(a) => (&a.out, "correlation"),
        Command::PseudoMarginal(a) => (&a.out, "pseudo-marginal"),
        Command::CatTimes(a) => (&a.out, "cat-times"),
        Command::OracleCompare(a) => (&a.out, "oracle-compare"),
        Command::Sweep(_) => return None,
    };
    out.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{name}.csv"))))
}

/// Replaces `--config FILE` by the file's key/value pairs, placed right after the
/// subcommand so later command-line flags override them.
fn expand_config(argv: &[String]) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--config" {
            let p = argv.get(i + 1).ok_or_else(|| Error::InvalidParameter("--config needs a file".into()))?;
            path = Some(p.clone());
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a.clone());
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path)?;
    let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("config {path}: {e}")))?;
    let mut flags = Vec::new();
    for (k, v) in obj {
        let key = format!("--{}", k.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => flags.push(key),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Number(n) => {
                flags.push(key);
                flags.push(n.to_string());
            }
            serde_json::Value::String(s) => {
                flags.push(key);
                flags.push(s);
            }
            other => return invalid_cfg(&path, &k, &other),
        }
    }
    // program name, then the subcommand (first token not starting with '-')
    let pos = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 2).unwrap_or(rest.len());
    let mut out: Vec<String> = rest[..pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&rest[pos..]);
    Ok(out)
}

fn invalid_cfg<T>(path: &str, key: &str, v: &serde_json::Value) -> Result<T> {
    Err(Error::InvalidParameter(format!("config {path}: value of `{key}` must be a scalar, got {v}")))
}

/// Runs one non-sweep command and returns its report.
pub fn execute(cmd: &Command) -> Result<Report> {
    match cmd {
        Command::MarginalStar(a) => marginal_star_cmd(a),
        Command::MarginalCond(a) => marginal_cond_cmd(a),
        Command::Qfunc(a) => qfunc_cmd(a),
        Command::PhotonStats(a) => photon_stats_cmd(a),
        Command::Correlation(a) => correlation_cmd(a),
        Command::PseudoMarginal(a) => pseudo_cmd(a),
        Command::CatTimes(a) => cat_times_cmd(a),
        Command::OracleCompare(a) => oracle_cmd(a),
        Command::Sweep(_) => Err(Error::InvalidParameter("sweep plans cannot nest".into())),
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

fn resolve_alpha0(f: &FieldArgs) -> Result<(f64, C64)> {
    let mag = match (f.alpha0_mag, f.alpha0_sq) {
        (Some(m), Some(s)) => {
            if (m * m - s).abs() > 1e-9 * s.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "--alpha0-mag {m} and --alpha0-sq {s} disagree"
                )));
            }
            m
        }
        (Some(m), None) => m,
        (None, Some(s)) => {
            if !(s >= 0.0) {
                return Err(Error::InvalidParameter(format!("--alpha0-sq must be nonnegative, got {s}")));
            }
            s.sqrt()
        }
        (None, None) => 7f64.sqrt(),
    };
    finite("alpha0-mag", mag)?;
    finite("alpha0-arg", f.alpha0_arg)?;
    if mag < 0.0 {
        return Err(Error::InvalidParameter(format!("|alpha0| must be nonnegative, got {mag}")));
    }
    Ok((mag, C64::from_polar(mag, f.alpha0_arg)))
}

fn push_alpha0(rep: &mut Report, mag: f64, arg: f64) {
    rep.param("alpha0-mag", fmt_f64(mag));
    rep.param("alpha0-arg", fmt_f64(arg));
}

/// z from --z / --n-th; both must agree within 1e-9 when given.
fn resolve_z(th: &ThermalArgs) -> Result<f64> {
    let z = match (th.z, th.n_th) {
        (Some(z), Some(n)) => {
            let zn = z_from_n_th(n)?;
            if (z - zn).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("--z {z} and --n-th {n} (z = {zn}) disagree")));
            }
            z
        }
        (Some(z), None) => z,
        (None, Some(n)) => z_from_n_th(finite("n-th", n)?)?,
        (None, None) => 0.0,
    };
    finite("z", z)?;
    if !(0.0..1.0).contains(&z) {
        return Err(Error::InvalidParameter(format!("z must lie in [0, 1), got {z}")));
    }
    Ok(z)
}

fn push_z(rep: &mut Report, z: f64) {
    rep.param("z", fmt_f64(z));
    rep.info("n_th", fmt_f64(z / (1.0 - z)));
}

fn check_kappa(k: f64) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be positive and finite, got {k}")));
    }
    Ok(k)
}

fn check_gamma(g: f64) -> Result<f64> {
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be nonnegative and finite, got {g}")));
    }
    Ok(g)
}

/// Grid bounds; defaults to [-(|alpha0|+4), |alpha0|+4] in steps of 0.01.
fn resolve_grid(rep: &mut Report, g: &GridArgs, mag: f64) -> Result<Vec<f64>> {
    let xm = mag + 4.0;
    let (lo, hi, step) = (g.x_min.unwrap_or(-xm), g.x_max.unwrap_or(xm), g.x_step.unwrap_or(0.01));
    for (n, v) in [("x-min", lo), ("x-max", hi), ("x-step", step)] {
        finite(n, v)?;
    }
    rep.param("x-min", fmt_f64(lo));
    rep.param("x-max", fmt_f64(hi));
    rep.param("x-step", fmt_f64(step));
    if let Some(p) = g.p_max {
        rep.param("p-max", p.to_string());
    }
    linear_grid(lo, hi, step)
}

fn grid_info(rep: &mut Report, g: &Grid1D) {
    rep.info("p_max_used", g.meta.p_max.to_string());
    rep.info("condition_residual", fmt_f64(g.meta.condition_residual));
    rep.info("validity", fmt_f64(g.meta.validity));
    rep.info("imag_residue", fmt_f64(g.meta.imag_residue));
    rep.info("min_raw", fmt_f64(g.meta.min_raw));
    rep.info("total", fmt_f64(g.total()));
}

fn two_column_rows(rep: &mut Report, damped: &Grid1D, undamped: &Grid1D) {
    rep.columns = vec!["x".into(), "value".into(), "value_gamma0".into()];
    rep.rows = damped
        .abscissae
        .iter()
        .zip(damped.values.iter().zip(undamped.values.iter()))
        .map(|(x, (v, v0))| vec![fmt_f64(*x), fmt_f64(*v), fmt_f64(*v0)])
        .collect();
}

fn time_param(rep: &mut Report, token: &str) -> Result<f64> {
    let t = parse_time(token)?;
    rep.param("t", token.trim().to_string());
    rep.info("t_value", fmt_f64(t));
    Ok(t)
}

fn marginal_star_cmd(a: &MarginalStarArgs) -> Result<Report> {
    let mut rep = Report::new("marginal-star");
    let kappa = check_kappa(a.kappa)?;
    let gamma = check_gamma(a.gamma)?;
    let (mag, alpha0) = resolve_alpha0(&a.field)?;
    if a.t_star_multiple == 0 {
        return Err(Error::InvalidParameter("--t-star-multiple must be at least 1".into()));
    }
    rep.param("kappa", fmt_f64(kappa));
    rep.param("gamma", fmt_f64(gamma));
    push_alpha0(&mut rep, mag, a.field.alpha0_arg);
    rep.param("t-star-multiple", a.t_star_multiple.to_string());
    let t = 2.0 * PI * a.t_star_multiple as f64;
    rep.info("t_value", fmt_f64(t));
    rep.info("e_residual", fmt_f64(cat_condition_residual(t, kappa)));
    rep.info("f_value", fmt_f64(f_of(t, kappa)));
    let x = resolve_grid(&mut rep, &a.grid, mag)?;
    let damped = damped_marginal_star(alpha0, t, kappa, gamma, &x, a.grid.p_max)?;
    let undamped = damped_marginal_star(alpha0, t, kappa, 0.0, &x, a.grid.p_max)?;
    grid_info(&mut rep, &damped);
    rep.info("total_gamma0", fmt_f64(undamped.total()));
    two_column_rows(&mut rep, &damped, &undamped);
    Ok(rep)
}

fn marginal_cond_cmd(a: &MarginalCondArgs) -> Result<Report> {
    let mut rep = Report::new("marginal-cond");
    let t = parse_time(&a.t)?;
    let kappa = check_kappa(match a.kappa {
        Some(k) => k,
        None => conditional_cat_kappa(t, 0)?,
    })?;
    let gamma = check_gamma(a.gamma)?;
    let (mag, alpha0) = resolve_alpha0(&a.field)?;
    let z = resolve_z(&a.thermal)?;
    let y = finite("y", a.y)?;
    rep.param("kappa", fmt_f64(kappa));
    rep.param("gamma", fmt_f64(gamma));
    push_alpha0(&mut rep, mag, a.field.alpha0_arg);
    push_z(&mut rep, z);
    time_param(&mut rep, &a.t)?;
    rep.param("y", fmt_f64(y));
    rep.info("e_residual", fmt_f64(cat_condition_residual(t, kappa)));
    rep.info("f_value", fmt_f64(f_of(t, kappa)));
    let x = resolve_grid(&mut rep, &a.grid, mag)?;
    let damped = damped_marginal_conditional(alpha0, t, kappa, gamma, y, z, &x, a.grid.p_max)?;
    let undamped = damped_marginal_conditional(alpha0, t, kappa, 0.0, y, z, &x, a.grid.p_max)?;
    grid_info(&mut rep, &damped);
    rep.info("total_gamma0", fmt_f64(undamped.total()));
    two_column_rows(&mut rep, &damped, &undamped);
    Ok(rep)
}

fn pseudo_cmd(a: &PseudoArgs) -> Result<Report> {
    let mut rep = Report::new("pseudo-marginal");
    let kappa = check_kappa(a.kappa)?;
    let gamma = check_gamma(a.gamma)?;
    let (mag, alpha0) = resolve_alpha0(&a.field)?;
    let z = resolve_z(&a.thermal)?;
    rep.param("kappa", fmt_f64(kappa));
    rep.param("gamma", fmt_f64(gamma));
    push_alpha0(&mut rep, mag, a.field.alpha0_arg);
    push_z(&mut rep, z);
    let t = time_param(&mut rep, &a.t)?;
    rep.info("e_residual", fmt_f64(cat_condition_residual(t, kappa)));
    rep.info("f_value", fmt_f64(f_of(t, kappa)));
    let x = resolve_grid(&mut rep, &a.grid, mag)?;
    let damped = pseudo_cat_marginal(alpha0, t, kappa, gamma, z, &x, a.grid.p_max)?;
    let undamped = pseudo_cat_marginal(alpha0, t, kappa, 0.0, z, &x, a.grid.p_max)?;
    grid_info(&mut rep, &damped);
    rep.info("total_gamma0", fmt_f64(undamped.total()));
    two_column_rows(&mut rep, &damped, &undamped);
    Ok(rep)
}

fn qfunc_cmd(a: &QfuncArgs) -> Result<Report> {
    let mut rep = Report::new("qfunc");
    let kappa = check_kappa(a.kappa)?;
    let (mag, alpha0) = resolve_alpha0(&a.field)?;
    let z = resolve_z(&a.thermal)?;
    let beta = C64::new(finite("beta-re", a.beta_re)?, finite("beta-im", a.beta_im)?);
    let extent = finite("extent", a.extent.unwrap_or(mag + 2.0))?;
    let step = finite("step", a.step)?;
    rep.param("kappa", fmt_f64(kappa));
    push_alpha0(&mut rep, mag, a.field.alpha0_arg);
    push_z(&mut rep, z);
    let t = time_param(&mut rep, &a.t)?;
    rep.param("beta-re", fmt_f64(beta.re));
    rep.param("beta-im", fmt_f64(beta.im));
    rep.param("extent", fmt_f64(extent));
    rep.param("step", fmt_f64(step));
    let trunc = a.trunc.unwrap_or_else(|| {
        let reach = (mag + extent).powi(2) + (beta.norm() + 2.0 * kappa * (mag + extent).powi(2)).powi(2);
        default_field_dim(reach).max(thermal_dim(z, 1e-14)) + 10
    });
    rep.param("trunc", trunc.to_string());
    rep.info("e_residual", fmt_f64(cat_condition_residual(t, kappa)));
    let params = ScaledParams::new(kappa, 0.0, z, alpha0)?;
    let axis = linear_grid(-extent, extent, step)?;
    let points: Vec<(f64, f64)> = axis.iter().flat_map(|&re| axis.iter().map(move |&im| (re, im))).collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&(re, im)| q_function(C64::new(re, im), beta, t, &params, trunc))
        .collect::<Result<_>>()?;
    let cell = step * step;
    rep.info("sum_times_cell", fmt_f64(values.iter().sum::<f64>() * cell));
    rep.columns = vec!["re_alpha".into(), "im_alpha".into(), "value".into()];
    rep.rows = points
        .iter()
        .zip(values.iter())
        .map(|(&(re, im), v)| vec![fmt_f64(re), fmt_f64(im), fmt_f64(*v)])
        .collect();
    Ok(rep)
}

fn photon_stats_cmd(a: &PhotonStatsArgs) -> Result<Report> {
    let mut rep = Report::new("photon-stats");
    let kappa = check_kappa(a.kappa)?;
    let (mag, alpha0) = resolve_alpha0(&a.field)?;
    let z = resolve_z(&a.thermal)?;
    rep.param("kappa", fmt_f64(kappa));
    push_alpha0(&mut rep, mag, a.field.alpha0_arg);
    push_z(&mut rep, z);
    let t = time_param(&mut rep, &a.t)?;
    let phase = match a.phase {
        PhaseArg::In => InjectionPhase::In,
        PhaseArg::Out => InjectionPhase::Out,
    };
    rep.param("phase", if phase == InjectionPhase::In { "in" } else { "out" });
    rep.param("model", if a.model == InjectionModel::Additive { "additive" } else { "displaced" });
    let mu = mag * mag;
    let n_max = a.n_max.unwrap_or((4.0 * mu + 16.0 * mag + 10.0).ceil() as usize);
    rep.param("n-max", n_max.to_string());
    rep.info("e_residual", fmt_f64(cat_condition_residual(t, kappa)));
    let g = match a.model {
        InjectionModel::Additive => photon_stats(alpha0, t, kappa, z, phase, n_max, QuadSpec::default())?,
        InjectionModel::Displaced => photon_stats_displaced(alpha0, t, kappa, z, phase, n_max, QuadSpec::default())?,
    };
    rep.info("total", fmt_f64(g.total()));
    rep.columns = vec!["n".into(), "value".into()];
    rep.rows = g
        .values
        .iter()
        .enumerate()
        .map(|(n, v)| vec![n.to_string(), fmt_f64(*v)])
        .collect();
    Ok(rep)
}

/// The two correlation values quoted for t = 0.84 * 2 pi, kappa = 0.5, |alpha0|^2 = 7.
fn quoted_correlation(t: f64, kappa: f64, mu: f64, gamma: f64, n_th: f64) -> Option<f64> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    if !(close(t, 0.84 * 2.0 * PI) && close(kappa, 0.5) && close(mu, 7.0)) {
        return None;
    }
    if close(gamma, 0.0) && close(n_th, 0.0) {
        Some(0.85)
    } else if close(gamma, 1e-2) && close(n_th, 2.0) {
        Some(0.55)
    } else {
        None
    }
}

fn correlation_cmd(a: &CorrelationArgs) -> Result<Report> {
    let mut rep = Report::new("correlation");
    let kappa = check_kappa(a.kappa)?;
    let gamma = check_gamma(a.gamma)?;
    let (mag, alpha0) = resolve_alpha0(&a.field)?;
    let z = resolve_z(&a.thermal)?;
    let n_th = z / (1.0 - z);
    rep.param("kappa", fmt_f64(kappa));
    rep.param("gamma", fmt_f64(gamma));
    push_alpha0(&mut rep, mag, a.field.alpha0_arg);
    push_z(&mut rep, z);
    let t0 = time_param(&mut rep, &a.t)?;
    let times = match &a.t_max {
        Some(tm) => {
            let t1 = parse_time(tm)?;
            let dt = parse_time(&a.t_step)?;
            rep.param("t-max", tm.trim().to_string());
            rep.param("t-step", a.t_step.trim().to_string());
            linear_grid(t0, t1, dt)?
        }
        None => vec![t0],
    };
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        values.push(correlation_closed_form(alpha0, t, kappa, gamma, n_th)?);
    }
    if times.len() == 1 {
        match quoted_correlation(times[0], kappa, mag * mag, gamma, n_th) {
            Some(q) => {
                rep.info("quoted", fmt_f64(q));
                rep.info("residual", fmt_f64(values[0] - q));
            }
            None => rep.info("quoted", "none"),
        }
    }
    rep.columns = vec!["t".into(), "value".into()];
    rep.rows = times.iter().zip(values.iter()).map(|(t, v)| vec![fmt_f64(*t), fmt_f64(*v)]).collect();
    Ok(rep)
}

fn cat_times_cmd(a: &CatTimesArgs) -> Result<Report> {
    let mut rep = Report::new("cat-times");
    let kappa = check_kappa(a.kappa)?;
    let tol = finite("tol", a.tol)?;
    rep.param("kappa", fmt_f64(kappa));
    rep.param("m-max", a.m_max.to_string());
    rep.param("tol", fmt_f64(tol));
    rep.columns = ["kind", "m1", "m", "t", "t_over_pi", "e", "f", "residual", "cat", "y_parity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    // disentangling times t* = 2 pi m1: cats when E(t*) = pi/2 (mod 2 pi)
    for m1 in 1..=a.m_max.max(1) {
        let t = 2.0 * PI * m1 as f64;
        let e = e_of(t, kappa);
        let res = cat_condition_residual(t, kappa);
        let m = ((e - FRAC_PI_2) / (2.0 * PI)).round() as i64;
        rep.rows.push(vec![
            "star".into(),
            m1.to_string(),
            m.to_string(),
            fmt_f64(t),
            fmt_f64(t / PI),
            fmt_f64(e),
            fmt_f64(f_of(t, kappa)),
            fmt_f64(res),
            (res <= tol).to_string(),
            "".into(),
        ]);
    }
    // conditional times: E(t') = pi/2 + 2 pi m
    for m in 0..=a.m_max {
        let t = conditional_cat_time(kappa, m)?;
        let f = f_of(t, kappa);
        let k_exact = conditional_cat_kappa(t, m)?;
        // E is flat near t = 2 pi m1, so a root there is only located to ~eps^(1/3)
        // and is the disentangling time itself, not a conditional one
        let entangled = f.abs() > 1e-4 * 2.0 * kappa;
        let y = if entangled {
            parity_measurement_result(t, kappa).map(fmt_f64).unwrap_or_default()
        } else {
            String::new()
        };
        rep.rows.push(vec![
            "conditional".into(),
            "".into(),
            m.to_string(),
            fmt_f64(t),
            fmt_f64(t / PI),
            fmt_f64(e_of(t, kappa)),
            fmt_f64(f),
            fmt_f64((k_exact - kappa).abs()),
            entangled.to_string(),
            y,
        ]);
    }
    rep.info("residual_meaning", "star: |E - pi/2 mod 2pi|; conditional: |kappa(t', m) - kappa|");
    Ok(rep)
}

fn oracle_cmd(a: &OracleArgs) -> Result<Report> {
    let mut rep = Report::new("oracle-compare");
    let kappa = check_kappa(a.kappa)?;
    let gamma = check_gamma(a.gamma)?;
    let z = resolve_z(&a.thermal)?;
    if !(a.alpha0_sq >= 0.0) || !a.alpha0_sq.is_finite() {
        return Err(Error::InvalidParameter(format!("--alpha0-sq must be nonnegative, got {}", a.alpha0_sq)));
    }
    let alpha0 = C64::from_polar(a.alpha0_sq.sqrt(), finite("alpha0-arg", a.alpha0_arg)?);
    let y = finite("y", a.y)?;
    let tol = finite("tol", a.tol)?;
    rep.param("kappa", fmt_f64(kappa));
    rep.param("gamma", fmt_f64(gamma));
    rep.param("alpha0-sq", fmt_f64(a.alpha0_sq));
    rep.param("alpha0-arg", fmt_f64(a.alpha0_arg));
    push_z(&mut rep, z);
    let t = time_param(&mut rep, &a.t)?;
    rep.param("y", fmt_f64(y));
    let df = a.field_dim.unwrap_or_else(|| default_field_dim(a.alpha0_sq));
    let dm = a.mirror_dim.unwrap_or_else(|| mirror_dim_for(df, kappa, t, z));
    rep.param("field-dim", df.to_string());
    rep.param("mirror-dim", dm.to_string());
    rep.param("tol", fmt_f64(tol));
    rep.columns = vec!["quantity".into(), "value".into()];
    let mut failures = Vec::new();

    // undamped: exact propagator vs RK4, both on a pure joint vector when z = 0
    let field = coherent_vector(alpha0, df)?;
    let init = if z == 0.0 {
        let mut vac = ndarray::Array1::<C64>::zeros(dm);
        vac[0] = C64::new(1.0, 0.0);
        JointState::Pure(field.kron(&crate::states::FockVector::new(vac, Basis::Mirror(dm))?)?)
    } else {
        JointState::Mixed(field.projector().kron(&thermal_density(z, dm)?))
    };
    let exact = exact_unitary_apply(&init, t, kappa, true)?;
    let integrated = lindblad_integrate(&init, t, kappa, 0.0, &LindbladOptions::default())?;
    let d_unitary = exact.sup_distance(&integrated.state);
    rep.rows.push(vec!["unitary_vs_rk4".into(), fmt_f64(d_unitary)]);
    rep.rows.push(vec!["rk4_steps".into(), integrated.steps.to_string()]);
    if d_unitary > tol {
        failures.push(format!("exact vs integrated {d_unitary:e} > {tol:e}"));
    }

    // marginal of the projected oracle state against the closed form, at cat times
    let f = f_of(t, kappa);
    if cat_condition_residual(t, kappa) < 1e-9 {
        let proj = project_mirror_quadrature(&exact, y, t)?;
        let rho = proj.field.to_density();
        let x = linear_grid(-(alpha0.norm() + 4.0), alpha0.norm() + 4.0, 0.01)?;
        let closed = if f.abs() < 1e-12 {
            marginal_pure_cat(alpha0, &x)
        } else {
            marginal_conditional(alpha0, t, kappa, y, &x)?
        };
        let d = x
            .iter()
            .zip(closed.values.iter())
            .map(|(&xi, v)| (rho.quadrature_density(xi) - v).abs())
            .fold(0.0, f64::max);
        rep.rows.push(vec!["marginal_vs_projected".into(), fmt_f64(d)]);
        rep.rows.push(vec!["reading_density".into(), fmt_f64(proj.density)]);
        if d > tol {
            failures.push(format!("closed-form marginal vs projected oracle {d:e} > {tol:e}"));
        }
    } else {
        rep.info("marginal_vs_projected", "skipped: E(t) is not pi/2 mod 2pi");
    }

    // damped: Kerr-frame integration vs first-order Born, lab-frame sup-norm
    if gamma > 0.0 {
        let dk = thermal_dim(z, 1e-12) + 14;
        rep.info("kerr_mirror_dim", dk.to_string());
        let rho0 = coherent_vector(alpha0, df)?.projector().kron(&thermal_density(z, dk)?);
        let (r_num, info) = lindblad_integrate_kerr_frame(&rho0, t, kappa, gamma, &LindbladOptions::default())?;
        let (r0, rg) = born_correction_kerr_frame_from_state(&rho0, t, kappa, gamma, &TauQuad::default())?;
        let mut diff = Blocks::zeros(df, dk);
        for (i, d) in diff.data.iter_mut().enumerate() {
            *d = &r_num.r.data[i] - &r0.data[i] - &rg.data[i];
        }
        let map = KerrToLab::new(t, kappa, df, dk, dm.max(dk))?;
        let dev = map.lab_sup_norm(&diff)?;
        rep.rows.push(vec!["lindblad_vs_born".into(), fmt_f64(dev)]);
        rep.rows.push(vec!["kerr_rk4_steps".into(), info.steps.to_string()]);
        rep.info("validity", fmt_f64(gamma * a.alpha0_sq * t));
    }
    if !failures.is_empty() {
        rep.failed = Some(failures.join("; "));
    }
    Ok(rep)
}

/// Parsed plan line.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub name: String,
    pub args: Vec<String>,
}

pub fn parse_plan(text: &str) -> Result<Vec<Job>> {
    let mut jobs: Vec<Job> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace().map(str::to_string);
        let name = tok.next().unwrap_or_default();
        let args: Vec<String> = tok.collect();
        if args.is_empty() {
            return Err(Error::InvalidParameter(format!("plan line {}: no subcommand", i + 1)));
        }
        if name.contains('/') || name.starts_with('.') {
            return Err(Error::InvalidParameter(format!("plan line {}: bad job name `{name}`", i + 1)));
        }
        if jobs.iter().any(|j| j.name == name) {
            return Err(Error::InvalidParameter(format!("plan line {}: duplicate job `{name}`", i + 1)));
        }
        jobs.push(Job { name, args });
    }
    Ok(jobs)
}

fn run_job(job: &Job, dir: &Path) -> (i32, String) {
    let mut argv = vec!["optocat".to_string()];
    argv.extend(job.args.iter().cloned());
    let cmd = match Cli::try_parse_from(&argv) {
        Ok(c) => c.command,
        Err(e) => return (1, format!("{}: {}", job.name, e.to_string().lines().next().unwrap_or(""))),
    };
    if matches!(cmd, Command::Sweep(_)) {
        return (1, format!("{}: sweep plans cannot nest", job.name));
    }
    match execute(&cmd) {
        Ok(rep) => {
            let path = dir.join(format!("{}.csv", job.name));
            if let Err(e) = write_atomic(&path, &rep.render()) {
                return (1, format!("{}: writing {}: {e}", job.name, path.display()));
            }
            match rep.failed {
                Some(m) => (2, format!("{}: tolerance check failed: {m}", job.name)),
                None => (0, format!("{}: ok", job.name)),
            }
        }
        Err(e) => (exit_code(&e), format!("{}: {e}", job.name)),
    }
}

fn run_sweep(a: &SweepArgs) -> i32 {
    let text = match fs::read_to_string(&a.plan) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", a.plan.display());
            return 1;
        }
    };
    let jobs = match parse_plan(&text) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let dir = a
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let results: Vec<(i32, String)> = jobs.par_iter().map(|j| run_job(j, &dir)).collect();
    let mut worst = 0;
    for (code, msg) in results {
        eprintln!("{msg}");
        worst = worst.max(code);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn report(s: &str) -> Report {
        let cli = Cli::try_parse_from(argv(s)).unwrap();
        execute(&cli.command).unwrap()
    }

    fn header(text: &str, key: &str) -> Option<String> {
        let pre = format!("# {key}=");
        text.lines().find_map(|l| l.strip_prefix(&pre).map(str::to_string))
    }

    #[test]
    fn correlation_quoted_case() {
        let r = report("optocat correlation --kappa 0.5 --alpha0-sq 7 --gamma 0 --n-th 0 --t 0.84x2pi");
        let text = r.render();
        let v: f64 = r.rows[0][1].parse().unwrap();
        assert!((v - 0.8331).abs() < 1e-3, "{v}");
        assert_eq!(header(&text, "quoted").as_deref(), Some("0.85"));
        let res: f64 = header(&text, "residual").unwrap().parse().unwrap();
        assert!((res - (v - 0.85)).abs() < 1e-15);
    }

    #[test]
    fn cat_times_lists_two_pi() {
        let r = report("optocat cat-times --kappa 0.5");
        let star = &r.rows[0];
        assert_eq!(star[0], "star");
        assert_eq!(star[1], "1");
        assert_eq!(star[2], "0");
        let res: f64 = star[7].parse().unwrap();
        assert!(res < 1e-12);
        assert_eq!(star[8], "true");
        let cond: Vec<_> = r.rows.iter().filter(|r| r[0] == "conditional").collect();
        assert_eq!(cond.len(), 5);
        // at kappa = 1/2 every conditional root sits on a disentangling time
        assert!(cond.iter().all(|c| c[8] == "false"));
        for c in cond {
            let res: f64 = c[7].parse().unwrap();
            assert!(res < 1e-9, "{res}");
        }
    }

    #[test]
    fn rerun_reproduces_bytes() {
        let r = report("optocat marginal-star --gamma 0.02 --x-min -1 --x-max 1 --x-step 0.05");
        let text = r.render();
        let rerun = header(&text, "rerun").unwrap();
        let mut a = vec!["optocat".to_string()];
        a.extend(rerun.split_whitespace().map(str::to_string));
        let again = execute(&Cli::try_parse_from(a).unwrap().command).unwrap().render();
        assert_eq!(text, again);
    }

    #[test]
    fn z_and_n_th_must_agree() {
        let cli = Cli::try_parse_from(argv("optocat marginal-cond --z 0.5 --n-th 1.0")).unwrap();
        assert!(execute(&cli.command).is_ok());
        let cli = Cli::try_parse_from(argv("optocat marginal-cond --z 0.5 --n-th 2.0")).unwrap();
        let e = execute(&cli.command).unwrap_err();
        assert_eq!(exit_code(&e), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_from(&argv("optocat marginal-star --bogus 1")), 1);
        assert_eq!(run_from(&argv("optocat --help")), 0);
        let dir = std::env::temp_dir().join(format!("optocat-cli-{}", std::process::id()));
        let out = dir.join("m.csv");
        let s = format!("optocat marginal-star --x-step 0.5 --p-max 3 --out {}", out.display());
        assert_eq!(run_from(&argv(&s)), 3);
        let s = format!("optocat marginal-star --kappa -1 --out {}", out.display());
        assert_eq!(run_from(&argv(&s)), 1);
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = std::env::temp_dir().join(format!("optocat-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("c.json");
        fs::write(&cfg, r#"{"kappa": 0.4, "gamma": 0.01, "alpha0_sq": 7}"#).unwrap();
        let a = argv(&format!("optocat correlation --config {} --kappa 0.5", cfg.display()));
        let expanded = expand_config(&a).unwrap();
        let cli = Cli::try_parse_from(&expanded).unwrap();
        let Command::Correlation(c) = cli.command else { panic!() };
        assert_eq!(c.kappa, 0.5);
        assert_eq!(c.gamma, 0.01);
        assert_eq!(c.field.alpha0_sq, Some(7.0));
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn plan_parsing() {
        let jobs = parse_plan("# header\na correlation --gamma 0\n\nb cat-times # trailing\n").unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[1].args, vec!["cat-times".to_string()]);
        assert!(parse_plan("a\n").is_err());
        assert!(parse_plan("a cat-times\na cat-times\n").is_err());
        assert!(parse_plan("../x cat-times\n").is_err());
    }

    #[test]
    fn sweep_writes_each_job() {
        let dir = std::env::temp_dir().join(format!("optocat-sweep-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let plan = dir.join("plan.txt");
        fs::write(&plan, "c0 correlation --gamma 0\nc1 correlation --gamma 0.01 --n-th 2\nk cat-times\n").unwrap();
        let s = format!("optocat sweep --plan {} --out-dir {}", plan.display(), dir.display());
        assert_eq!(run_from(&argv(&s)), 0);
        for n in ["c0", "c1", "k"] {
            let text = fs::read_to_string(dir.join(format!("{n}.csv"))).unwrap();
            assert!(text.starts_with("# optocat "));
        }
        let first = fs::read_to_string(dir.join("c1.csv")).unwrap();
        assert_eq!(run_from(&argv(&s)), 0);
        assert_eq!(first, fs::read_to_string(dir.join("c1.csv")).unwrap());
        let _ = fs::remove_dir_all(dir);
    }
}
