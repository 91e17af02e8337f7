//! `nse-lab`: field generation, norms, decomposition, small-data solves,
//! inequality verification and regularity probes from the command line.

mod parse;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use nse_lab::decomposition::decompose;
use nse_lab::generators::{
    curl_lift, gaussian_truncation_warning, gen_bump, gen_divfree_random, gen_gaussian, gen_translated_bump, gen_windowed_random,
    Spectrum,
};
use nse_lab::io::{read_field, write_field};
use nse_lab::lab::{
    explore_spacetime_boundary, verify_bilinear, verify_ckn, verify_heat_decay, verify_leray_weighted, verify_oseen_decay,
    verify_riesz_mixed, verify_riesz_weighted, verify_spacetime_heat, CKNParams, FamilyContext, RatioReport, DEFAULT_NUS,
};
use nse_lab::norms::{bracket_norm, box_weighted_norm, caloric_besov_norm, mixed_norm, ExponentTriple, MixedNormSpec};
use nse_lab::picard::{read_trajectory_dir, solve_small_data, write_trajectory_dir, Snapshots, SolverConfig, TimeGrid, Trajectory};
use nse_lab::probe::{
    cylinder_dissipations, frame_shift, paraboloid_predict, r_ladder, regularity_scan, sbar_compute, segment_dissipation,
    weighted_energy_ledger, CylinderSpec, SegmentSpec, Smallness, UniversalConstants,
};
use nse_lab::quadrature::log_space;
use nse_lab::spectral::relative_divergence;
use nse_lab::{BoxGrid, SphereSpec, SphericalGrid};

use parse::{rational, real, vec3, vec4, Rat};

#[derive(Parser)]
#[command(name = "nse-lab", version, about = "Weighted mixed norms, small-data Navier-Stokes solves and regularity probes")]
struct Cli {
    /// Omit timestamps and timings from JSON reports.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Size of the worker pool.
    #[arg(long, global = true, env = "NSE_LAB_THREADS")]
    threads: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a field on the box and write it as an NSF1 file.
    Gen(GenArgs),
    /// Evaluate a norm of a stored field; the value is printed on standard output.
    Norm(NormArgs),
    /// Split a divergence-free datum into its small-scale and large-scale parts.
    Decompose(DecomposeArgs),
    /// Solve the small-data mild problem by Picard iteration.
    Solve(SolveArgs),
    /// Sweep an inequality ratio over a test family.
    Verify(VerifyArgs),
    /// Local energy probes on stored trajectories.
    Probe {
        #[command(subcommand)]
        probe: ProbeCommand,
    },
    /// Aggregate JSON reports into one summary.
    Report(ReportArgs),
}

#[derive(Args, Serialize, Clone, Copy)]
struct GridArgs {
    /// Points per axis.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Box half-width L, the box being [-L, L)^3.
    #[arg(long = "L", visible_alias = "half-width", default_value_t = 16.0, value_parser = real)]
    half_width: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<BoxGrid, CliError> {
        Ok(BoxGrid::new(self.n, self.half_width)?)
    }
}

#[derive(Args, Serialize, Clone, Copy, Default)]
struct SphereArgs {
    /// Polar nodes of the angular rule (twice as many azimuths).
    #[arg(long)]
    n_theta: Option<usize>,
    /// Outer radius of the ball; defaults to L - h.
    #[arg(long, value_parser = real)]
    rho_max: Option<f64>,
}

impl SphereArgs {
    fn spec(&self, g: &BoxGrid) -> SphereSpec {
        let mut s = SphereSpec::for_box(g);
        if let Some(n) = self.n_theta {
            s = s.with_angular(n);
        }
        if let Some(r) = self.rho_max {
            s = s.with_rho_max(r);
        }
        s
    }

    fn build(&self, g: &BoxGrid) -> Result<(SphereSpec, SphericalGrid), CliError> {
        let s = self.spec(g);
        let sg = s.build()?;
        Ok((s, sg))
    }
}

#[derive(Args, Serialize, Clone, Copy, Default)]
struct ConstantArgs {
    #[arg(long, value_parser = real)]
    eps_star: Option<f64>,
    /// Defaults to 1/(90 Z^2).
    #[arg(long, value_parser = real)]
    delta: Option<f64>,
    #[arg(long = "M", value_parser = real)]
    m: Option<f64>,
    #[arg(long = "Z", value_parser = real)]
    z: Option<f64>,
    #[arg(long, value_parser = real)]
    eps0: Option<f64>,
    #[arg(long, value_parser = real)]
    eps1: Option<f64>,
    #[arg(long, value_parser = real)]
    c1: Option<f64>,
}

impl ConstantArgs {
    fn resolve(&self) -> UniversalConstants {
        let d = UniversalConstants::default();
        UniversalConstants {
            eps_star: self.eps_star.unwrap_or(d.eps_star),
            delta: self.delta.or(d.delta),
            m: self.m.unwrap_or(d.m),
            z: self.z.unwrap_or(d.z),
            eps0: self.eps0.unwrap_or(d.eps0),
            eps1: self.eps1.unwrap_or(d.eps1),
            c1: self.c1.unwrap_or(d.c1),
        }
        .resolved()
    }
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum GenKind {
    Gaussian,
    Bump,
    TranslatedBump,
    Random,
    WindowedRandom,
}

#[derive(Args, Serialize)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[command(flatten)]
    grid: GridArgs,
    /// Gaussian variance parameter s in exp(-|x - x0|^2 / (4s)).
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    s: f64,
    /// Center of the Gaussian or bump.
    #[arg(long, default_value = "0,0,0", value_parser = vec3)]
    center: [f64; 3],
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    radius: f64,
    /// Translation length K of the translated bump.
    #[arg(long, default_value_t = 0.0, value_parser = real)]
    k: f64,
    /// Translation direction, normalized.
    #[arg(long, default_value = "1,0,0", value_parser = vec3)]
    xi: [f64; 3],
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectral width of the random fields.
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    k0: f64,
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    amplitude: f64,
    /// Window half-width of the windowed random field.
    #[arg(long, default_value_t = 4.0, value_parser = real)]
    window: f64,
    /// Lift a scalar profile to the divergence-free field curl(f, 0, 0).
    #[arg(long)]
    vector: bool,
    /// Multiply the result by this factor.
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum NormKind {
    /// |x|^beta-weighted L^p_{|x|} L^{p~}_theta on the ball.
    Mixed,
    /// |x|^beta-weighted L^p over the whole box.
    Box,
    /// The bracket [u0]_{p~}.
    Bracket,
    /// sup_t t^{(1-3/q)/2} |e^{t Laplacian} u0|_{L^q}.
    Besov,
}

#[derive(Args, Serialize)]
struct NormArgs {
    #[arg(value_enum)]
    kind: NormKind,
    #[arg(long)]
    field: PathBuf,
    #[arg(long, default_value_t = 2.0, value_parser = real)]
    p: f64,
    #[arg(long, default_value_t = 4.0, value_parser = real)]
    ptilde: f64,
    #[arg(long, default_value_t = -0.5, value_parser = real, allow_hyphen_values = true)]
    beta: f64,
    /// Lebesgue exponent of the caloric norm.
    #[arg(long, default_value_t = 4.0, value_parser = real)]
    q: f64,
    /// Caloric sup over log-spaced times in [t-min, t-max].
    #[arg(long, default_value_t = 1e-3, value_parser = real)]
    t_min: f64,
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    t_max: f64,
    #[arg(long, default_value_t = 16)]
    t_count: usize,
    #[command(flatten)]
    sphere: SphereArgs,
}

#[derive(Args, Serialize)]
struct DecomposeArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long, default_value_t = 3.0, value_parser = real)]
    ptilde: f64,
    #[command(flatten)]
    sphere: SphereArgs,
    /// Write w0.nsf and v0.nsf here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    tmax: f64,
    #[arg(long, default_value_t = 32)]
    steps: usize,
    /// Grade the time nodes as t_max (i/steps)^power instead of uniformly.
    #[arg(long, value_parser = real)]
    graded: Option<f64>,
    #[arg(long, default_value_t = 4.0, value_parser = real)]
    q: f64,
    #[arg(long, default_value_t = 8.0, value_parser = real)]
    r: f64,
    #[arg(long, default_value_t = 1e-10, value_parser = real)]
    tol: f64,
    #[arg(long, default_value_t = 40)]
    max_iters: usize,
    /// Data norm exponents p, p~, beta; use --no-data-norm to skip it.
    #[arg(long, default_value = "2,4,-0.5", value_parser = vec3, allow_hyphen_values = true)]
    data_norm: [f64; 3],
    #[arg(long)]
    no_data_norm: bool,
    #[arg(long)]
    no_residual: bool,
    /// Write the trajectory, one NSF1 file per node plus manifest.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum InequalityId {
    Ckn,
    Heat,
    Oseen,
    Spacetime,
    SpacetimeBoundary,
    Bilinear,
    RieszMixed,
    RieszWeighted,
    Leray,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum FamilyKind {
    Standard,
    Mollifiers,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    id: InequalityId,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    sphere: SphereArgs,
    #[arg(long, value_enum, default_value_t = FamilyKind::Standard)]
    family: FamilyKind,
    /// Mollifier radii.
    #[arg(long, value_delimiter = ',', value_parser = real, default_value = "1,2,4")]
    radii: Vec<f64>,
    /// Multiply every member by this factor.
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    scale: f64,
    /// Repeat on a grid with this many points per axis and report the variation.
    #[arg(long)]
    stability_n: Option<usize>,
    #[arg(long, value_parser = rational, allow_hyphen_values = true)]
    r: Option<Rat>,
    #[arg(long, value_parser = rational, allow_hyphen_values = true)]
    a: Option<Rat>,
    #[arg(long, value_parser = rational, allow_hyphen_values = true)]
    gamma: Option<Rat>,
    #[arg(long, value_parser = rational, allow_hyphen_values = true)]
    alpha: Option<Rat>,
    #[arg(long, value_parser = rational, allow_hyphen_values = true)]
    beta: Option<Rat>,
    #[arg(long, value_parser = rational)]
    p: Option<Rat>,
    #[arg(long, value_parser = rational)]
    ptilde: Option<Rat>,
    #[arg(long, value_parser = rational)]
    q: Option<Rat>,
    #[arg(long, value_parser = rational)]
    qtilde: Option<Rat>,
    /// Derivative multi-index of the decay estimates.
    #[arg(long, default_value = "0,0,0", value_parser = parse::eta)]
    eta: [u32; 3],
    /// Weight parameters nu of sigma_nu = (|x|^2 + nu)^{1/2}.
    #[arg(long, value_delimiter = ',', value_parser = real)]
    nus: Option<Vec<f64>>,
    /// Times of the decay sweeps.
    #[arg(long, value_delimiter = ',', value_parser = real)]
    times: Option<Vec<f64>>,
    #[arg(long, value_parser = real)]
    tmax: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = real)]
    graded: Option<f64>,
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Q*_r cylinder dissipation (1/r) integral of |grad u|^2 over a radius ladder at each point.
    Cylinder(CylinderArgs),
    /// Smallness hypotheses of a datum and the predicted regular paraboloid.
    Paraboloid(ParaboloidArgs),
    /// Singular dissipation along a segment and the stopping time s-bar.
    Segment(SegmentArgs),
    /// Weighted energy ledger of the xi-frame parts v and w with the Gronwall bound.
    Ledger(LedgerArgs),
}

#[derive(Args, Serialize)]
struct CylinderArgs {
    /// Trajectory directory written by `solve`.
    #[arg(long)]
    traj: PathBuf,
    /// Probe point t,x,y,z; repeatable.
    #[arg(long = "point", value_parser = vec4, required = true, allow_hyphen_values = true)]
    points: Vec<[f64; 4]>,
    /// Radii; defaults to r0, r0/2, ... down to 4h.
    #[arg(long, value_delimiter = ',', value_parser = real)]
    radii: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    r0: f64,
    #[command(flatten)]
    constants: ConstantArgs,
}

#[derive(Args, Serialize)]
struct ParaboloidArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long, default_value_t = 3.0, value_parser = real)]
    ptilde: f64,
    #[command(flatten)]
    sphere: SphereArgs,
    #[command(flatten)]
    constants: ConstantArgs,
}

#[derive(Args, Serialize, Clone, Copy)]
struct SegmentArgsCore {
    /// Segment length T.
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    tmax: f64,
    #[arg(long, default_value = "0,0,0", value_parser = vec3, allow_hyphen_values = true)]
    xi: [f64; 3],
    /// Window parameter M of the stopping time.
    #[arg(long = "window-m", default_value_t = 2.0, value_parser = real)]
    window_m: f64,
}

impl SegmentArgsCore {
    fn spec(&self) -> SegmentSpec {
        SegmentSpec { t_max: self.tmax, xi: self.xi, m: self.window_m }
    }
}

#[derive(Args, Serialize)]
struct SegmentArgs {
    #[arg(long)]
    traj: PathBuf,
    #[command(flatten)]
    segment: SegmentArgsCore,
    #[command(flatten)]
    sphere: SphereArgs,
}

#[derive(Args, Serialize)]
struct LedgerArgs {
    /// Trajectory of the large-scale part v.
    #[arg(long)]
    traj_v: PathBuf,
    /// Trajectory of the small-scale part w.
    #[arg(long)]
    traj_w: PathBuf,
    #[command(flatten)]
    segment: SegmentArgsCore,
    #[arg(long, value_delimiter = ',', value_parser = real, default_value = "0.001,0.01,0.1,1")]
    nus: Vec<f64>,
    /// theta1 eps and theta2 eps of the decomposed datum, for the smallness checks.
    #[arg(long, value_parser = real)]
    theta1_eps: Option<f64>,
    #[arg(long, value_parser = real)]
    theta2_eps: Option<f64>,
    /// Write the time series as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    sphere: SphereArgs,
    #[command(flatten)]
    constants: ConstantArgs,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

enum CliError {
    Validation(String),
    Lib(nse_lab::Error),
}

impl From<nse_lab::Error> for CliError {
    fn from(e: nse_lab::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Validation(msg.into()))
}

/// The command's resolved configuration and its result.
struct Outcome {
    config: Value,
    result: Value,
    /// Printed on standard output in place of the JSON when no --report path is given.
    plain: Option<String>,
}

fn outcome(config: impl Serialize, result: impl Serialize) -> Result<Outcome, CliError> {
    Ok(Outcome { config: serde_json::to_value(config)?, result: serde_json::to_value(result)?, plain: None })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            if let nse_lab::Error::NonContraction { report, .. } = &e {
                if let Ok(s) = serde_json::to_string_pretty(report) {
                    emit(&s);
                }
            }
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return invalid("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let start = Instant::now();
    let (name, out) = match &cli.command {
        Command::Gen(a) => ("gen", run_gen(a)?),
        Command::Norm(a) => ("norm", run_norm(a)?),
        Command::Decompose(a) => ("decompose", run_decompose(a)?),
        Command::Solve(a) => ("solve", run_solve(a)?),
        Command::Verify(a) => ("verify", run_verify(a)?),
        Command::Probe { probe } => match probe {
            ProbeCommand::Cylinder(a) => ("probe cylinder", run_cylinder(a)?),
            ProbeCommand::Paraboloid(a) => ("probe paraboloid", run_paraboloid(a)?),
            ProbeCommand::Segment(a) => ("probe segment", run_segment(a)?),
            ProbeCommand::Ledger(a) => ("probe ledger", run_ledger(a)?),
        },
        Command::Report(a) => ("report", run_report(a)?),
    };
    let mut doc = json!({
        "tool": "nse-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "config": out.config,
        "result": out.result,
    });
    if !cli.deterministic {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        doc["timestamp_unix"] = json!(now);
        doc["elapsed_s"] = json!(start.elapsed().as_secs_f64());
        doc["threads"] = json!(rayon::current_num_threads());
    }
    let text = serde_json::to_string_pretty(&doc)?;
    match (&cli.report, out.plain) {
        (Some(path), plain) => {
            fs::write(path, text + "\n")?;
            if let Some(p) = plain {
                emit(&p);
            }
        }
        (None, Some(p)) => emit(&p),
        (None, None) => emit(&text),
    }
    Ok(())
}

/// Print a line, ignoring a closed pipe.
fn emit(s: &str) {
    let _ = writeln!(std::io::stdout(), "{s}");
}

fn run_gen(a: &GenArgs) -> Result<Outcome, CliError> {
    let g = a.grid.grid()?;
    let spectrum = Spectrum::Gaussian { k0: a.k0, amplitude: a.amplitude };
    let mut warnings = Vec::new();
    let base = match a.kind {
        GenKind::Gaussian => {
            warnings.extend(gaussian_truncation_warning(&g, a.s, a.center));
            gen_gaussian(g, a.s, a.center)?
        }
        GenKind::Bump => gen_bump(g, a.radius, a.center)?,
        GenKind::TranslatedBump => gen_translated_bump(g, a.k, a.xi)?,
        GenKind::Random => gen_divfree_random(g, a.seed, spectrum)?,
        GenKind::WindowedRandom => gen_windowed_random(g, a.seed, spectrum, a.window)?,
    };
    let f = match (a.vector, base.components()) {
        (true, 1) => curl_lift(&base)?,
        (true, _) => return invalid(format!("--vector lifts scalar profiles; {:?} fields are already vector-valued", a.kind)),
        (false, _) => base,
    }
    .scale(a.scale);
    write_field(&a.out, &f)?;
    let divergence = if f.components() == 3 { Some(relative_divergence(&f)?) } else { None };
    let result = json!({
        "path": a.out,
        "components": f.components(),
        "max_abs": f.max_abs()?,
        "l2": f.norm_lp(2.0)?,
        "relative_divergence": divergence,
        "warnings": warnings,
    });
    outcome(a, result)
}

fn run_norm(a: &NormArgs) -> Result<Outcome, CliError> {
    let f = read_field(&a.field)?;
    let g = *f.grid();
    let (spec, sg) = a.sphere.build(&g)?;
    let (value, detail) = match a.kind {
        NormKind::Mixed => (mixed_norm(&f, &sg, MixedNormSpec::new(a.p, a.ptilde, a.beta)?)?, Value::Null),
        NormKind::Box => (box_weighted_norm(&f, a.beta, a.p)?, Value::Null),
        NormKind::Bracket => {
            let b = bracket_norm(&f, &sg, a.ptilde)?;
            (b.bracket, serde_json::to_value(&b)?)
        }
        NormKind::Besov => {
            if !(a.t_min > 0.0 && a.t_min < a.t_max && a.t_count >= 2) {
                return invalid("caloric norm needs 0 < t-min < t-max and t-count >= 2");
            }
            (caloric_besov_norm(&f, a.q, &log_space(a.t_min, a.t_max, a.t_count))?, Value::Null)
        }
    };
    let config = json!({"args": a, "grid": {"n": g.n(), "half_width": g.half_width()}, "sphere": spec});
    Ok(Outcome {
        config,
        result: json!({"value": value, "detail": detail}),
        plain: Some(format!("{value}")),
    })
}

fn run_decompose(a: &DecomposeArgs) -> Result<Outcome, CliError> {
    let f = read_field(&a.field)?;
    let g = *f.grid();
    let (spec, sg) = a.sphere.build(&g)?;
    let d = decompose(&f, a.ptilde, &sg)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        for (name, part) in [("w0.nsf", &d.w0), ("v0.nsf", &d.v0)] {
            if let Some(p) = part {
                write_field(&dir.join(name), p)?;
            }
        }
    }
    outcome(json!({"args": a, "sphere": spec}), &d)
}

fn time_grid(tmax: f64, steps: usize, graded: Option<f64>) -> Result<TimeGrid, CliError> {
    Ok(match graded {
        Some(power) => TimeGrid::graded(tmax, steps, power)?,
        None => TimeGrid::uniform(tmax, steps)?,
    })
}

fn run_solve(a: &SolveArgs) -> Result<Outcome, CliError> {
    let u0 = read_field(&a.field)?;
    let times = time_grid(a.tmax, a.steps, a.graded)?;
    let [p, pt, beta] = a.data_norm;
    let cfg = SolverConfig {
        q: a.q,
        r: a.r,
        tol: a.tol,
        max_iters: a.max_iters,
        data_spec: if a.no_data_norm { None } else { Some(MixedNormSpec::new(p, pt, beta)?) },
        check_residual: !a.no_residual,
    };
    let sol = solve_small_data(&u0, &times, &cfg)?;
    if let Some(dir) = &a.out_dir {
        write_trajectory_dir(dir, &sol.trajectory, Some(&sol.ledger), Some(&sol.report))?;
    }
    let result = json!({
        "report": sol.report,
        "ledger": sol.ledger,
        "empirical_c_bar": sol.empirical_c_bar,
    });
    outcome(json!({"args": a, "solver": cfg, "times": times.nodes()}), result)
}

/// Exponents of one verification, resolved from the flags and the defaults of its inequality.
#[derive(Serialize)]
struct VerifyConfig {
    id: InequalityId,
    grid: GridArgs,
    sphere: SphereSpec,
    family: FamilyKind,
    radii: Option<Vec<f64>>,
    scale: f64,
    stability_n: Option<usize>,
    exponents: BTreeMap<&'static str, Rat>,
    eta: Option<[u32; 3]>,
    nus: Option<Vec<f64>>,
    times: Option<Vec<f64>>,
}

fn rat(p: i64, q: i64) -> Rat {
    Rat(num_rational::Rational64::new(p, q))
}

fn run_verify(a: &VerifyArgs) -> Result<Outcome, CliError> {
    use InequalityId::*;
    let g = a.grid.grid()?;
    let (spec, sg) = a.sphere.build(&g)?;
    let family = |g: BoxGrid, sg: SphericalGrid| -> Result<FamilyContext, CliError> {
        let ctx = match a.family {
            FamilyKind::Standard => FamilyContext::standard(g)?,
            FamilyKind::Mollifiers => FamilyContext::mollifiers(g, &a.radii)?,
        };
        Ok(ctx.with_scale(a.scale).with_sphere(sg))
    };
    let pick = |v: Option<Rat>, d: Rat| v.unwrap_or(d);
    let mut ex: BTreeMap<&'static str, Rat> = BTreeMap::new();
    let (mut eta, mut nus, mut times) = (None, None, None);
    let default_nus = || a.nus.clone().unwrap_or_else(|| DEFAULT_NUS.to_vec());
    match a.id {
        Ckn => {
            for (k, v) in [("r", a.r), ("a", a.a), ("gamma", a.gamma), ("alpha", a.alpha), ("beta", a.beta)] {
                match v {
                    Some(v) => ex.insert(k, v),
                    None => return invalid(format!("verify ckn needs --{k}")),
                };
            }
            nus = Some(default_nus());
        }
        Heat | Oseen | Spacetime | SpacetimeBoundary => {
            ex.insert("alpha", pick(a.alpha, rat(-1, 2)));
            ex.insert("p", pick(a.p, rat(2, 1)));
            ex.insert("ptilde", pick(a.ptilde, rat(4, 1)));
            ex.insert("beta", pick(a.beta, rat(0, 1)));
            ex.insert("q", pick(a.q, rat(4, 1)));
            ex.insert("qtilde", pick(a.qtilde, rat(4, 1)));
            if matches!(a.id, Heat | Oseen) {
                eta = Some(a.eta);
                times = Some(a.times.clone().unwrap_or_else(|| log_space(0.1, 1.0, 6)));
            } else {
                ex.insert("r", pick(a.r, rat(8, 1)));
            }
        }
        Bilinear => {
            ex.insert("q", pick(a.q, rat(4, 1)));
            ex.insert("r", pick(a.r, rat(8, 1)));
        }
        RieszMixed => {
            ex.insert("p", pick(a.p, rat(2, 1)));
            ex.insert("ptilde", pick(a.ptilde, rat(4, 1)));
        }
        RieszWeighted => {
            ex.insert("p", pick(a.p, rat(2, 1)));
            ex.insert("beta", pick(a.beta, rat(-1, 2)));
            nus = Some(default_nus());
        }
        Leray => {
            ex.insert("p", pick(a.p, rat(2, 1)));
            ex.insert("ptilde", pick(a.ptilde, rat(4, 1)));
            ex.insert("beta", pick(a.beta, rat(-1, 2)));
        }
    }
    let grid_times = match a.id {
        Spacetime | SpacetimeBoundary => Some(time_grid(a.tmax.unwrap_or(4.0), a.steps.unwrap_or(24), Some(a.graded.unwrap_or(2.0)))?),
        Bilinear => Some(time_grid(a.tmax.unwrap_or(1.0), a.steps.unwrap_or(4), Some(a.graded.unwrap_or(2.0)))?),
        _ => None,
    };
    if let Some(tg) = &grid_times {
        times = Some(tg.nodes().to_vec());
    }
    let x = |k: &str| ex[k].f64();
    let ckn = (a.id == Ckn).then(|| CKNParams::new(ex["r"].0, ex["a"].0, ex["gamma"].0, ex["alpha"].0, ex["beta"].0));
    let sweep = |ctx: &FamilyContext| -> Result<RatioReport, CliError> {
        let tri = |a: &str, p: &str, pt: &str| ExponentTriple::new(x(a), x(p), x(pt));
        let nus = nus.as_deref().unwrap_or(&[]);
        let ts = times.as_deref().unwrap_or(&[]);
        let tg = grid_times.as_ref();
        Ok(match a.id {
            Ckn => verify_ckn(ckn.as_ref().expect("ckn params"), nus, ctx)?,
            Heat => verify_heat_decay(tri("alpha", "p", "ptilde"), tri("beta", "q", "qtilde"), a.eta, ctx, ts)?,
            Oseen => verify_oseen_decay(tri("alpha", "p", "ptilde"), tri("beta", "q", "qtilde"), a.eta, ctx, ts)?,
            Spacetime => verify_spacetime_heat(tri("alpha", "p", "ptilde"), tri("beta", "q", "qtilde"), x("r"), ctx, tg.expect("time grid"))?,
            SpacetimeBoundary => {
                explore_spacetime_boundary(tri("alpha", "p", "ptilde"), tri("beta", "q", "qtilde"), x("r"), ctx, tg.expect("time grid"))?
            }
            Bilinear => verify_bilinear(x("q"), x("r"), ctx, tg.expect("time grid"))?,
            RieszMixed => verify_riesz_mixed(x("p"), x("ptilde"), ctx)?,
            RieszWeighted => verify_riesz_weighted(x("p"), x("beta"), nus, ctx)?,
            Leray => verify_leray_weighted(MixedNormSpec::new(x("p"), x("ptilde"), x("beta"))?, ctx)?,
        })
    };
    let admissibility = ckn.map(|c| c.conditions());
    if let Some(c) = &ckn {
        c.check()?;
    }
    let mut report = sweep(&family(g, sg)?)?;
    if let Some(n) = a.stability_n {
        let fg = BoxGrid::new(n, a.grid.half_width)?;
        let fsg = a.sphere.build(&fg)?.1;
        report = report.with_stability(&sweep(&family(fg, fsg)?)?);
    }
    let config = VerifyConfig {
        id: a.id,
        grid: a.grid,
        sphere: spec,
        family: a.family,
        radii: matches!(a.family, FamilyKind::Mollifiers).then(|| a.radii.clone()),
        scale: a.scale,
        stability_n: a.stability_n,
        exponents: ex,
        eta,
        nus,
        times,
    };
    let mut result = serde_json::to_value(&report)?;
    if let Some(conds) = admissibility {
        result["admissibility"] = json!({"admissible": true, "conditions": conds});
    }
    outcome(config, result)
}

fn load_traj(dir: &Path) -> Result<Trajectory, CliError> {
    Ok(read_trajectory_dir(dir)?)
}

fn run_cylinder(a: &CylinderArgs) -> Result<Outcome, CliError> {
    let traj = load_traj(&a.traj)?;
    let h = traj.box_grid().spacing();
    let radii = a.radii.clone().unwrap_or_else(|| r_ladder(a.r0, h));
    if radii.is_empty() {
        return invalid(format!("no radius at or above 4h = {}", 4.0 * h));
    }
    let consts = a.constants.resolve();
    let points: Vec<(f64, [f64; 3])> = a.points.iter().map(|p| (p[0], [p[1], p[2], p[3]])).collect();
    let scan = regularity_scan(&traj, &points, &radii, &consts)?;
    let plain: Vec<CylinderSpec> = scan
        .points
        .iter()
        .flat_map(|s| s.radii.iter().map(move |&r| CylinderSpec { t: s.t, x: s.x, r, shifted: false }))
        .filter(|c| c.window().0 >= traj.times().nodes()[0])
        .collect();
    let values = cylinder_dissipations(&traj, &plain)?;
    let unshifted: Vec<Value> = plain.iter().zip(values).map(|(c, v)| json!({"t": c.t, "x": c.x, "r": c.r, "value": v})).collect();
    outcome(json!({"args": a, "radii": radii, "constants": consts}), json!({"scan": scan, "unshifted": unshifted}))
}

fn run_paraboloid(a: &ParaboloidArgs) -> Result<Outcome, CliError> {
    let f = read_field(&a.field)?;
    let (spec, sg) = a.sphere.build(f.grid())?;
    let consts = a.constants.resolve();
    let (_, report) = paraboloid_predict(&f, a.ptilde, &consts, &sg)?;
    outcome(json!({"args": a, "sphere": spec, "constants": consts}), report)
}

fn run_segment(a: &SegmentArgs) -> Result<Outcome, CliError> {
    let traj = load_traj(&a.traj)?;
    let seg = a.segment.spec();
    seg.validate()?;
    let (spec, sg) = a.sphere.build(&traj.box_grid())?;
    let dissipation = segment_dissipation(&traj, seg.t_max, seg.xi, None)?;
    let sbar = sbar_compute(&frame_shift(&traj, seg.xi)?, &seg, &sg)?;
    outcome(json!({"args": a, "sphere": spec}), json!({"segment_dissipation": dissipation, "stopping_time": sbar}))
}

fn run_ledger(a: &LedgerArgs) -> Result<Outcome, CliError> {
    let (v, w) = (load_traj(&a.traj_v)?, load_traj(&a.traj_w)?);
    let seg = a.segment.spec();
    let (spec, sg) = a.sphere.build(&v.box_grid())?;
    let consts = a.constants.resolve();
    let smallness = match (a.theta1_eps, a.theta2_eps) {
        (Some(theta1_eps), Some(theta2_eps)) => Some(Smallness { theta1_eps, theta2_eps }),
        (None, None) => None,
        _ => return invalid("--theta1-eps and --theta2-eps go together"),
    };
    let (vs, ws) = (frame_shift(&v, seg.xi)?, frame_shift(&w, seg.xi)?);
    let (ledger, gronwall) = weighted_energy_ledger(&vs, &ws, &seg, &a.nus, &consts, smallness, &sg)?;
    if let Some(path) = &a.csv {
        fs::write(path, ledger.to_csv())?;
    }
    outcome(json!({"args": a, "sphere": spec, "constants": consts}), json!({"ledger": ledger, "gronwall": gronwall}))
}

/// One line of the aggregate: the command, its status and the headline numbers.
fn summarize(doc: &Value) -> Value {
    let r = &doc["result"];
    let mut s = json!({"command": doc["command"]});
    for key in ["inequality_id", "max_ratio", "value", "epsilon", "predicted"] {
        if !r[key].is_null() {
            s[key] = r[key].clone();
        }
    }
    if let Some(st) = r.get("stability").filter(|v| !v.is_null()) {
        s["stable"] = st["stable"].clone();
    }
    if let Some(rep) = r.get("report") {
        s["converged"] = rep["converged"].clone();
        s["residual"] = rep["residual"].clone();
    }
    if let Some(sb) = r.get("stopping_time") {
        s["sbar"] = sb["sbar"].clone();
    }
    if let Some(g) = r.get("gronwall") {
        s["gronwall_holds"] = g["holds"].clone();
    }
    s
}

fn run_report(a: &ReportArgs) -> Result<Outcome, CliError> {
    let mut entries = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for path in &a.inputs {
        let text = fs::read_to_string(path)?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if doc["tool"] != "nse-lab" {
            return invalid(format!("{} is not an nse-lab report", path.display()));
        }
        *counts.entry(doc["command"].as_str().unwrap_or("?").to_string()).or_default() += 1;
        entries.push(json!({"file": path, "summary": summarize(&doc), "document": doc}));
    }
    outcome(a, json!({"count": entries.len(), "commands": counts, "reports": entries}))
}
