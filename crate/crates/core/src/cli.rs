//! The `blowuplab` command line: construct, verify, simulate, report.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 usage (bad flags, bad time
//! range, missing inputs, unwritable output), 3 construction failure,
//! 4 solver failure.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coefficients::{default_radii, ellipticity_scan, DEFAULT_MARGIN, DEFAULT_SEED};
use crate::error::Error;
use crate::estimates::{measure, profile_estimate_audit};
use crate::evolution::{
    blowup_metrics, parabolic_convergence, solve_cartesian_2d, solve_radial, spacetime_points, SelfSimilarSolution,
    SolverConfig, SolverMode, PARABOLIC_KAPPAS,
};
use crate::jet::Jet;
use crate::liouville::liouville_suite;
use crate::params::{ConstructionParams, Variant, DEFAULT_QUAD_TOL, DEFAULT_R0};
use crate::profiles::RadialProfiles;
use crate::quasilinear::{consistency_check, consistency_radii, QuasilinearExample, DEFAULT_GAMMA_SAMPLES};
use crate::report::{Check, Section};
use crate::verify::{
    decay_audit, default_points, error_section, max_principle_probe, phi_prime_root, refined_log_radii,
    residual_convergence, StationarySystem, DEFAULT_STEPS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "BLOWUPLAB_THREADS";

pub const SECTIONS: [&str; 7] = [
    "estimates",
    "ellipticity",
    "residual_convergence",
    "decay",
    "max_principle",
    "quasilinear_consistency",
    "liouville_witness",
];

#[derive(Parser, Debug)]
#[command(name = "blowuplab", version, about = "Blowup counterexamples for elliptic and parabolic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Export the radial profiles (and Gamma for the quasilinear variant).
    Construct(ConstructArgs),
    /// Run the verification suites and write a JSON report.
    Verify(VerifyArgs),
    /// Evolve the self-similar solution and fit blowup rates.
    Simulate(SimulateArgs),
    /// Merge JSON reports into one text summary.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    #[arg(long, value_enum, default_value = "bounded")]
    pub variant: Variant,
    #[arg(long, default_value_t = DEFAULT_R0)]
    pub r0: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long = "quad-tol", default_value_t = DEFAULT_QUAD_TOL)]
    pub quad_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ConstructArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Samples per profile.
    #[arg(long = "nr", default_value_t = 2048)]
    pub n_r: usize,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated subset of the sections.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "radial")]
    pub mode: SolverMode,
    #[arg(long = "t-start", default_value_t = -1.0, allow_hyphen_values = true)]
    pub t_start: f64,
    #[arg(long = "t-end", default_value_t = -1e-2, allow_hyphen_values = true)]
    pub t_end: f64,
    #[arg(long = "nr", default_value_t = 4096)]
    pub n_r: usize,
    #[arg(long = "nx", default_value_t = 256)]
    pub n_x: usize,
    #[arg(long = "ny")]
    pub n_y: Option<usize>,
    /// Time levels per decade of `-t`; 400 radial, 100 Cartesian by default.
    #[arg(long = "steps-per-decade")]
    pub steps_per_decade: Option<usize>,
    #[arg(long, default_value_t = 9)]
    pub snapshots: usize,
    /// Parabolic residual sample points (0 skips the check).
    #[arg(long = "parabolic-points", default_value_t = 1000)]
    pub parabolic_points: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// JSON reports, or directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Also write the summary here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub variant: Variant,
    pub r0: f64,
    pub epsilon: f64,
    pub quad_tol: f64,
    pub seed: u64,
    pub settings: Value,
    pub version: String,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunManifest {
    fn new(command: &str, params: &ConstructionParams, seed: u64, settings: Value) -> Self {
        Self {
            command: command.into(),
            variant: params.variant,
            r0: params.r0,
            epsilon: params.epsilon,
            quad_tol: params.quad_tol,
            seed,
            settings,
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0.0,
        }
    }

    /// The manifest without timestamps, as canonical JSON.
    pub fn key(&self) -> String {
        let mut m = self.clone();
        m.started_unix = 0.0;
        m.finished_unix = 0.0;
        serde_json::to_string(&m).unwrap_or_default()
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Report written by `verify` and `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub passed: bool,
    pub sections: Vec<Section>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn construction(e: Error) -> Self {
        match e {
            Error::InvalidParams(m) => Self::usage(m),
            e => Self { code: EXIT_CONSTRUCTION, message: e.to_string() },
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args`, caps the thread pool and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.message);
        return e.code;
    }
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| CliError::usage(format!("{THREADS_ENV}={v} is not a count")))?;
    if n == 0 {
        return Err(CliError::usage(format!("{THREADS_ENV} must be positive")));
    }
    // a second call in one process (tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(command: &Command) -> CliResult<i32> {
    match command {
        Command::Construct(a) => cmd_construct(a).map(|_| EXIT_OK),
        Command::Verify(a) => cmd_verify(a).map(|r| if r.passed { EXIT_OK } else { EXIT_VERIFICATION }),
        Command::Simulate(a) => cmd_simulate(a).map(|_| EXIT_OK),
        Command::Report(a) => cmd_report(a).map(|_| EXIT_OK),
    }
}

fn params(c: &CommonArgs) -> CliResult<ConstructionParams> {
    ConstructionParams::new(c.variant, c.r0)
        .and_then(|p| p.with_quad_tol(c.quad_tol))
        .map_err(CliError::construction)
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(dir: &Path, name: &str, manifest: &mut RunManifest) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    manifest.outputs.push(name.into());
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::io(&path, e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> CliResult<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn finish(dir: &Path, mut manifest: RunManifest) -> CliResult<RunManifest> {
    manifest.outputs.push("manifest.json".into());
    manifest.finished_unix = now();
    write_json(dir, "manifest.json", &manifest)?;
    Ok(manifest)
}

#[derive(Serialize)]
struct ProfileRow {
    r: f64,
    value: f64,
    derivative: f64,
}

fn write_profile(
    dir: &Path,
    name: &str,
    radii: &[f64],
    eval: impl Fn(f64) -> (f64, f64),
    manifest: &mut RunManifest,
) -> CliResult<()> {
    let file = create_file(dir, name, manifest)?;
    let mut w = csv::Writer::from_writer(file);
    for &r in radii {
        let (value, derivative) = eval(r);
        w.serialize(ProfileRow { r, value, derivative }).map_err(|e| CliError::io(&dir.join(name), e))?;
    }
    w.flush().map_err(|e| CliError::io(&dir.join(name), e))
}

/// Profile samples: log-spaced on `[1e-3, 10 r0]`, four-fold on the windows.
pub fn construct_radii(r0: f64, n: usize) -> Vec<f64> {
    refined_log_radii(1e-3, 10.0 * r0, r0, 2.0 * r0 + 1.0, n, 4.0)
}

fn export_profiles(dir: &Path, p: &RadialProfiles, radii: &[f64], manifest: &mut RunManifest) -> CliResult<()> {
    write_profile(dir, "phi.csv", radii, |r| (p.phi(r, 0), p.phi(r, 1)), manifest)?;
    write_profile(dir, "f.csv", radii, |r| (p.f(r, 0), p.f(r, 1)), manifest)?;
    write_profile(dir, "h.csv", radii, |r| (p.h(r, 0), p.h(r, 1)), manifest)?;
    write_profile(
        dir,
        "deficit.csv",
        radii,
        |r| {
            let e = p.deficit_jet(Jet::variable(r));
            (e.value(), e.deriv(1))
        },
        manifest,
    )?;
    write_profile(dir, "eta.csv", radii, |r| (p.eta(r), p.eta_deriv(r, 1)), manifest)
}

fn profile_summary(p: &RadialProfiles) -> Value {
    let (a, b) = p.phi_window();
    json!({
        "epsilon": p.epsilon,
        "phi_window": [a, b],
        "f_window": p.f_window(),
        "h_window": p.h_window(),
        "deficit_support": p.deficit_support(),
        "f_plateau": p.f_plateau,
        "eta_tail": p.eta_tail(),
        "phi_prime_root": phi_prime_root(p, a, b).ok(),
        "constants": measure(p),
    })
}

pub fn cmd_construct(a: &ConstructArgs) -> CliResult<RunManifest> {
    let params = params(&a.common)?;
    if a.n_r < 16 {
        return Err(CliError::usage("--nr must be at least 16"));
    }
    let dir = &a.common.out;
    let mut manifest = RunManifest::new("construct", &params, a.common.seed, json!({ "n_r": a.n_r }));
    let radii = construct_radii(params.r0, a.n_r);
    let summary = match params.variant {
        Variant::Bounded | Variant::Unbounded => {
            let p = RadialProfiles::new(&params).map_err(CliError::construction)?;
            create_out(dir)?;
            export_profiles(dir, &p, &radii, &mut manifest)?;
            json!({ "primary": profile_summary(&p) })
        }
        Variant::Quasilinear => {
            let ex = QuasilinearExample::build(&params, DEFAULT_GAMMA_SAMPLES).map_err(CliError::construction)?;
            create_out(dir)?;
            export_profiles(dir, &ex.pair.primary, &radii, &mut manifest)?;
            let file = create_file(dir, "gamma.csv", &mut manifest)?;
            let mut w = csv::Writer::from_writer(file);
            let io = |e| CliError::io(&dir.join("gamma.csv"), e);
            w.write_record(["r", "phi", "phi_tilde"]).map_err(io)?;
            for (r, pt) in ex.gamma.r.iter().zip(&ex.gamma.points) {
                w.serialize((r, pt[0], pt[1])).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::io(&dir.join("gamma.csv"), e))?;
            json!({
                "primary": profile_summary(&ex.pair.primary),
                "tilde": profile_summary(&ex.pair.tilde),
                "gamma": {
                    "samples": ex.gamma.r.len(),
                    "branch_gap": ex.gamma.branch_gap,
                    "reach": ex.gamma.reach,
                    "rho": ex.gamma.rho,
                    "diagonal_gap": ex.gamma.diagonal_gap,
                },
                "delta_bar": ex.delta_bar,
            })
        }
    };
    manifest.outputs.push("summary.json".into());
    let summary = json!({ "manifest": manifest, "summary": summary });
    write_json(dir, "summary.json", &summary)?;
    finish(dir, manifest)
}

fn verify_sections(only: &[String]) -> CliResult<Vec<&'static str>> {
    if only.is_empty() {
        return Ok(SECTIONS.to_vec());
    }
    for s in only {
        if !SECTIONS.contains(&s.as_str()) {
            return Err(CliError::usage(format!("unknown section {s}; expected one of {}", SECTIONS.join(","))));
        }
    }
    Ok(SECTIONS.iter().copied().filter(|s| only.iter().any(|o| o == s)).collect())
}

/// Runs the selected suites against `variant`. The quasilinear variant is
/// audited through its primary family; `quasilinear_consistency` always uses
/// the quasilinear construction at the same `r0`.
pub fn cmd_verify(a: &VerifyArgs) -> CliResult<RunReport> {
    let params = params(&a.common)?;
    let wanted = verify_sections(&a.only)?;
    let seed = a.common.seed;
    let needs_quasi = params.variant == Variant::Quasilinear || wanted.contains(&"quasilinear_consistency");
    let quasi = if needs_quasi {
        let mut qp = ConstructionParams::quasilinear(params.r0).map_err(CliError::construction)?;
        qp.quad_tol = params.quad_tol;
        match QuasilinearExample::build(&qp, DEFAULT_GAMMA_SAMPLES) {
            Err(e) if params.variant == Variant::Quasilinear => return Err(CliError::construction(e)),
            built => Some(built),
        }
    } else {
        None
    };
    let linear = match params.variant {
        Variant::Quasilinear => None,
        _ => Some(RadialProfiles::new(&params).map_err(CliError::construction)?),
    };
    let p: &RadialProfiles = match (&linear, &quasi) {
        (Some(p), _) => p,
        (None, Some(Ok(ex))) => &ex.pair.primary,
        (None, _) => unreachable!("the quasilinear variant always builds its example"),
    };
    let dir = &a.common.out;
    create_out(dir)?;
    let mut manifest = RunManifest::new("verify", &params, seed, json!({ "only": wanted }));
    let mut sections = Vec::new();
    for name in &wanted {
        let section = match *name {
            "estimates" => profile_estimate_audit(p),
            "ellipticity" => ellipticity_scan(p, &default_radii(params.r0), DEFAULT_MARGIN, seed, 8).to_section(),
            "residual_convergence" => {
                let report = match &quasi {
                    Some(Ok(ex)) if params.variant == Variant::Quasilinear => {
                        crate::quasilinear::paired_residual(&ex.pair)
                    }
                    _ => {
                        let (radii, angles) = default_points(p);
                        residual_convergence(&StationarySystem::single(p), &radii, &angles, &DEFAULT_STEPS)
                    }
                };
                report.map_or_else(|e| error_section(name, &e), |r| r.to_section())
            }
            "decay" => decay_audit(p).to_section(),
            "max_principle" => {
                max_principle_probe(p).map_or_else(|e| error_section(name, &e), |m| m.to_section(p))
            }
            "quasilinear_consistency" => match &quasi {
                Some(Ok(ex)) => consistency_check(ex, &consistency_radii(params.r0, 4096), 8, 10_000, seed).to_section(),
                Some(Err(e)) => error_section(name, e),
                None => unreachable!("built above when selected"),
            },
            "liouville_witness" => match liouville_suite(p) {
                Ok(suite) => {
                    let file = create_file(dir, "liouville_energy.csv", &mut manifest)?;
                    suite.energy.write_csv(file).map_err(|e| CliError::io(&dir.join("liouville_energy.csv"), e))?;
                    suite.to_section()
                }
                Err(e) => error_section(name, &e),
            },
            _ => unreachable!("validated against SECTIONS"),
        };
        sections.push(section);
    }
    manifest.outputs.push("report.json".into());
    let manifest = finish(dir, manifest)?;
    let report = RunReport { passed: sections.iter().all(|s| s.passed), manifest, sections };
    write_json(dir, "report.json", &report)?;
    Ok(report)
}

fn solver_error(e: Error) -> CliError {
    match e {
        Error::InvalidParams(_) | Error::TimeDomain(_) => CliError::usage(e.to_string()),
        e => CliError { code: EXIT_SOLVER, message: e.to_string() },
    }
}

pub fn simulate_config(a: &SimulateArgs) -> SolverConfig {
    let base = match a.mode {
        SolverMode::Radial => SolverConfig::radial(a.t_start, a.t_end, a.n_r),
        SolverMode::Cart2d => SolverConfig::cart2d(a.t_start, a.t_end, a.n_x),
    };
    SolverConfig {
        n_r: a.n_r,
        n_x: a.n_x,
        n_y: a.n_y.unwrap_or(a.n_x),
        steps_per_decade: a.steps_per_decade.unwrap_or(base.steps_per_decade),
        snapshots: a.snapshots,
        ..base
    }
}

/// Cross-validation bounds for the Cartesian run.
pub const AGREEMENT_TOL: f64 = 2e-2;
pub const LEAKAGE_TOL: f64 = 1e-3;

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<RunReport> {
    let params = params(&a.common)?;
    if params.variant == Variant::Quasilinear {
        return Err(CliError::usage("simulate supports the bounded and unbounded variants"));
    }
    let cfg = simulate_config(a);
    cfg.validate(params.r0).map_err(solver_error)?;
    let sol = SelfSimilarSolution::linear(&params).map_err(CliError::construction)?;
    let tr = match cfg.mode {
        SolverMode::Radial => solve_radial(&sol, &cfg),
        SolverMode::Cart2d => solve_cartesian_2d(&sol, &cfg),
    }
    .map_err(solver_error)?;

    let dir = &a.common.out;
    create_out(dir)?;
    let mut manifest = RunManifest::new(
        "simulate",
        &params,
        a.common.seed,
        json!({ "solver": cfg, "parabolic_points": a.parabolic_points }),
    );
    let file = create_file(dir, "series.csv", &mut manifest)?;
    tr.write_series_csv(file).map_err(|e| CliError::io(&dir.join("series.csv"), e))?;
    let file = create_file(dir, "snapshots.csv", &mut manifest)?;
    tr.write_snapshots_csv(file).map_err(|e| CliError::io(&dir.join("snapshots.csv"), e))?;

    let blowup = match blowup_metrics(&tr) {
        Ok(b) => b.to_section(),
        Err(Error::InsufficientSpan { decades, needed }) => {
            let mut s = Section::new("blowup");
            s.push(Check::at_least("decades", decades, needed).with_note("too short for a rate fit"));
            s
        }
        Err(e) => error_section("blowup", &e),
    };
    let mut sections = vec![blowup];
    let mut fidelity = Section::new("fidelity");
    fidelity.push(Check::at_most("max_rel_error", tr.max_rel_error, 1e-3));
    sections.push(fidelity);
    if let Some(cv) = &tr.cross_validation {
        let mut s = Section::new("cross_validation");
        s.push(Check::at_most("agreement", cv.agreement, AGREEMENT_TOL));
        s.push(Check::at_most("leakage", cv.leakage, LEAKAGE_TOL));
        s.push(Check::flag("exact_error", true, cv.exact_error));
        sections.push(s.with_data(serde_json::to_value(cv).unwrap_or_default()));
    }
    if a.parabolic_points > 0 {
        let peak = tr.profile_peak.max(params.r0);
        let points = spacetime_points(a.parabolic_points, 5.0 * peak, a.common.seed);
        sections.push(
            parabolic_convergence(&sol, &points, &PARABOLIC_KAPPAS)
                .map_or_else(|e| error_section("parabolic_residual_linear", &e), |r| r.to_section()),
        );
    }
    manifest.outputs.push("blowup.json".into());
    let manifest = finish(dir, manifest)?;
    let report = RunReport { passed: sections.iter().all(|s| s.passed), manifest, sections };
    write_json(dir, "blowup.json", &report)?;
    Ok(report)
}

fn collect_json(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "manifest.json"))
                .collect();
            found.sort();
            files.extend(found);
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(CliError::usage(format!("{}: no such file or directory", input.display())));
        }
    }
    Ok(files)
}

/// One merged entry of the summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryEntry {
    pub source: PathBuf,
    pub manifest: RunManifest,
    pub sections: Vec<(String, bool, usize, usize)>,
}

/// Reads reports, dropping repeats of an already seen manifest.
pub fn merge_reports(inputs: &[PathBuf]) -> CliResult<(Vec<SummaryEntry>, Vec<String>)> {
    let files = collect_json(inputs)?;
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::io(&path, e))?;
        let Some(manifest) = value.get("manifest").cloned().and_then(|m| serde_json::from_value::<RunManifest>(m).ok())
        else {
            warnings.push(format!("{}: no manifest, skipped", path.display()));
            continue;
        };
        if let Some(first) = seen.get(&manifest.key()) {
            warnings.push(format!("{}: duplicate of {}, skipped", path.display(), first.display()));
            continue;
        }
        seen.insert(manifest.key(), path.clone());
        let sections = value
            .get("sections")
            .and_then(Value::as_array)
            .map(|v| {
                v.iter()
                    .map(|s| {
                        let checks = s.get("checks").and_then(Value::as_array).map_or(&[][..], |c| c.as_slice());
                        let ok = checks.iter().filter(|c| c.get("passed") == Some(&Value::Bool(true))).count();
                        (
                            s.get("name").and_then(Value::as_str).unwrap_or("?").to_string(),
                            s.get("passed") == Some(&Value::Bool(true)),
                            ok,
                            checks.len(),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default();
        entries.push(SummaryEntry { source: path, manifest, sections });
    }
    if entries.is_empty() {
        return Err(CliError::usage("no reports found in the inputs"));
    }
    Ok((entries, warnings))
}

pub fn render_summary(entries: &[SummaryEntry]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<10} {:<12} {:>8}  {:<28} {:<6} {:>7}\n", "command", "variant", "r0", "section", "status", "checks"));
    for e in entries {
        let m = &e.manifest;
        if e.sections.is_empty() {
            out.push_str(&format!("{:<10} {:<12} {:>8}  {:<28} {:<6} {:>7}\n", m.command, m.variant.as_str(), m.r0, "-", "-", "-"));
        }
        for (name, passed, ok, total) in &e.sections {
            out.push_str(&format!(
                "{:<10} {:<12} {:>8}  {:<28} {:<6} {:>7}\n",
                m.command,
                m.variant.as_str(),
                m.r0,
                name,
                if *passed { "PASS" } else { "FAIL" },
                format!("{ok}/{total}"),
            ));
        }
    }
    out
}

pub fn cmd_report(a: &ReportArgs) -> CliResult<String> {
    let (entries, warnings) = merge_reports(&a.inputs)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let text = render_summary(&entries);
    print!("{text}");
    if let Some(path) = &a.out {
        fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_section_is_usage_error() {
        assert_eq!(verify_sections(&["nope".into()]).unwrap_err().code, EXIT_USAGE);
        assert_eq!(verify_sections(&["decay".into(), "estimates".into()]).unwrap(), vec!["estimates", "decay"]);
    }

    #[test]
    fn manifest_key_ignores_timestamps() {
        let p = ConstructionParams::bounded(50.0).unwrap();
        let a = RunManifest::new("verify", &p, 1, json!({}));
        let mut b = a.clone();
        b.started_unix += 10.0;
        b.finished_unix = 99.0;
        assert_eq!(a.key(), b.key());
        b.seed = 2;
        assert_ne!(a.key(), b.key());
    }

    #[test]
    fn negative_times_parse() {
        let cli = Cli::try_parse_from(["blowuplab", "simulate", "--t-start", "-2", "--t-end", "-0.5"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        assert_eq!((a.t_start, a.t_end), (-2.0, -0.5));
        assert_eq!(simulate_config(&a).steps_per_decade, 400);
    }

    #[test]
    fn r0_below_minimum_is_usage_error() {
        let c = CommonArgs { variant: Variant::Bounded, r0: 5.0, out: "x".into(), seed: 0, quad_tol: 1e-12 };
        assert_eq!(params(&c).unwrap_err().code, EXIT_USAGE);
    }
}
