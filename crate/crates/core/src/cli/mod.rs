//! Command-line front end.
//!
//! Exit codes: 0 success, 1 certification FAIL (witness written when one
//! exists), 2 input error, 3 overflow.

mod campaign;
mod solve;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::certify::{
    check_assumption, check_exit_bound, check_omega, run_assertion_example, AssertionExample, BackendKind, CertifyError,
    CheckSetup, ExitBound, Verdict, Verifier, Witness,
};
use crate::fixedpoint::{FxError, FxFormat, FxValue, RoundingMode};
use crate::mpc::{self, MpcConfig, MpcError, Preset};
use crate::pgm::PgmError;
use crate::qp::{self, ProblemFile, QpError};
use crate::rational::{parse_rat, to_exact_decimal, to_sci, Rat};

pub use campaign::{run_campaign, BoundRow, CampaignOptions, CampaignResult, Tolerances};
pub use solve::{check_run, run_solve, GuaranteeCheck, GuaranteeMode, SolveOptions, SolveReport};

/// Reference constants of the three-mass-spring case study.
pub const REFERENCE_L: f64 = 4.9645;
pub const REFERENCE_SIGMA: f64 = 0.3532;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("certification failed: {0}")]
    Fail(String),
    #[error("certification failed: {0}")]
    FailWitness(String, Box<Witness>),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("overflow during a PGM step")]
    OverflowWitness(Box<Witness>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Fail(_) | CliError::FailWitness(..) => 1,
            CliError::Input(_) => 2,
            CliError::Overflow(_) | CliError::OverflowWitness(_) => 3,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            CliError::FailWitness(_, w) | CliError::OverflowWitness(w) => Some(w),
            _ => None,
        }
    }
}

impl From<FxError> for CliError {
    fn from(e: FxError) -> Self {
        match e {
            FxError::Overflow { .. } => CliError::Overflow(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<QpError> for CliError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Fx(e) => e.into(),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        match e {
            PgmError::Fx(e) => e.into(),
            PgmError::Qp(e) => e.into(),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<MpcError> for CliError {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::Fx(e) => e.into(),
            MpcError::Qp(e) => e.into(),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Overflow(w) => CliError::OverflowWitness(w),
            CertifyError::Fx(e) => e.into(),
            CertifyError::Qp(e) => e.into(),
            CertifyError::Pgm(e) => e.into(),
            e @ (CertifyError::BackendInconclusive { .. } | CertifyError::NoPassingBound(_)) => {
                CliError::Fail(e.to_string())
            }
            e @ CertifyError::SearchSpaceTooLarge { .. } => {
                CliError::Input(format!("{e}; raise --cap, thin c with --c-stride, or use --backend analytic"))
            }
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fxcert", version, about = "Certify fixed-point proximal gradient solvers for box-constrained QPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Condense an MPC problem and write a problem file.
    MpcBuild(MpcBuildArgs),
    /// Derive the error bounds and write a certificate.
    Certify(CertifyArgs),
    /// Run fixed-point PGM on one instance and check it against a certificate.
    Solve(SolveArgs),
    /// Tight inner-product error bound for a 20-element vector in (8.8).
    Example6(Example6Args),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    ThreeMassSpring,
    Scalar,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum BackendArg {
    Exhaustive,
    Falsify,
    Analytic,
}

#[derive(Debug, Args)]
pub struct MpcBuildArgs {
    /// JSON MPC config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Solver format `p.q` (overrides the config).
    #[arg(long)]
    pub format: Option<FxFormat>,
    #[arg(long)]
    pub rounding: Option<RoundingMode>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Problem file.
    #[arg(long)]
    pub problem: PathBuf,
    /// Solver format `p.q` (overrides the problem file).
    #[arg(long)]
    pub format: Option<FxFormat>,
    #[arg(long)]
    pub rounding: Option<RoundingMode>,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub backend: BackendArg,
    /// Largest search space the exhaustive backend will enumerate.
    #[arg(long, default_value_t = 1u64 << 32)]
    pub cap: u64,
    /// Keep every k-th value of each c coordinate (exhaustive); > 1 never PASSes.
    #[arg(long, default_value_t = 1)]
    pub c_stride: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples for the falsify backend.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Bisection tolerances on squared bounds.
    #[arg(long)]
    pub tol_omega: Option<String>,
    #[arg(long)]
    pub tol_eps: Option<String>,
    #[arg(long)]
    pub tol_delta: Option<String>,
    #[arg(long)]
    pub tol_theta: Option<String>,
    /// Exit tolerance on d̂² (rounded down to the solver grid); chosen automatically when absent.
    #[arg(long)]
    pub eps_hat: Option<String>,
    /// Only bisect Ω.
    #[arg(long)]
    pub omega_only: bool,
    /// Bisect ω instead of using Ω in its place.
    #[arg(long)]
    pub bisect_omega_small: bool,
    /// Check a given Ω instead of bisecting.
    #[arg(long)]
    pub omega: Option<String>,
    /// Check a given ε (needs --eps-hat).
    #[arg(long)]
    pub eps: Option<String>,
    /// Check a given δ (needs --eps-hat).
    #[arg(long)]
    pub delta: Option<String>,
    /// Check a given Θ (needs --eps-hat).
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub certificate: PathBuf,
    /// Linear term, comma separated; the midpoint of the family range when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// Start point, comma separated; the problem's x0 or the point nearest 0.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Override the certified iteration limit.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Example6Args {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_value(flag: &str, s: &str) -> Result<Rat, CliError> {
    parse_rat(s).map_err(|e| CliError::Input(format!("--{flag}: {e}")))
}

fn parse_opt(flag: &str, s: &Option<String>) -> Result<Option<Rat>, CliError> {
    s.as_deref().map(|v| parse_value(flag, v)).transpose()
}

pub(crate) fn parse_list(flag: &str, s: &str) -> Result<Vec<Rat>, CliError> {
    s.split(',').map(|v| parse_value(flag, v.trim())).collect()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn json_text(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}

pub fn cmd_mpc_build(args: &MpcBuildArgs) -> Result<mpc::MpcBuild, CliError> {
    let mut config = match (&args.config, args.preset) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::Input(format!("config file {} not found", path.display())));
            }
            MpcConfig::load(path)?
        }
        (None, Some(PresetArg::ThreeMassSpring)) => MpcConfig::three_mass_spring(),
        (None, Some(PresetArg::Scalar)) => MpcConfig::scalar(),
        (None, None) => return Err(CliError::Input("need --config or --preset".into())),
    };
    if let Some(f) = args.format {
        config.format = f.to_string();
    }
    if let Some(r) = args.rounding {
        config.rounding = r;
    }
    let built = mpc::build(&config)?;
    let file = built.problem_file()?;
    std::fs::create_dir_all(&args.out)?;
    file.save(&args.out.join("problem.json"))?;
    write_file(&args.out, "mpc_config.json", &config.to_json())?;
    let l_q = crate::rational::to_f64(&built.quantized.l_smooth);
    let s_q = crate::rational::to_f64(&built.quantized.sigma);
    let mut report = serde_json::json!({
        "n": built.condensed.n(),
        "L": built.exact_l,
        "sigma": built.exact_sigma,
        "L_quantized": l_q,
        "sigma_quantized": s_q,
        "c_min": built.c_min.iter().map(crate::rational::to_f64).collect::<Vec<_>>(),
        "c_max": built.c_max.iter().map(crate::rational::to_f64).collect::<Vec<_>>(),
    });
    println!("condensed QP: n = {}", built.condensed.n());
    println!("L = {:.6}, sigma = {:.6} (stored Q: {:.6}, {:.6})", built.exact_l, built.exact_sigma, l_q, s_q);
    if config.model.preset == Some(Preset::ThreeMassSpring) {
        let matches = reference_match(built.exact_l, built.exact_sigma);
        println!(
            "reference L = {REFERENCE_L}, sigma = {REFERENCE_SIGMA}: {}",
            if matches { "match" } else { "no match" }
        );
        report["reference"] = serde_json::json!({ "L": REFERENCE_L, "sigma": REFERENCE_SIGMA, "match": matches });
    }
    write_file(&args.out, "mpc_report.json", &json_text(&report))?;
    Ok(built)
}

/// Agreement to the four printed decimals of the reference constants.
pub fn reference_match(l: f64, sigma: f64) -> bool {
    (l - REFERENCE_L).abs() <= 5e-5 && (sigma - REFERENCE_SIGMA).abs() <= 5e-5
}

/// Loads a problem and builds the verifier and constants for it.
pub fn prepare(
    problem: &ProblemFile,
    format: Option<FxFormat>,
    rounding: Option<RoundingMode>,
    backend: BackendKind,
) -> Result<(Verifier, qp::Constants), CliError> {
    let fam = problem.family()?;
    let solver = problem.solver()?;
    let fmt = format.unwrap_or(solver.fmt);
    let mode = rounding.unwrap_or(solver.mode);
    let constants = qp::constants(&fam, fmt)?;
    let setup = CheckSetup::new(fam, fmt, mode, constants.tau)?;
    Ok((Verifier::new(setup, backend), constants))
}

fn backend_of(args: &CertifyArgs) -> BackendKind {
    match args.backend {
        BackendArg::Exhaustive => BackendKind::Exhaustive {
            cap: args.cap,
            c_stride: args.c_stride.max(1),
        },
        BackendArg::Falsify => BackendKind::RandomFalsify {
            samples: args.samples,
            seed: args.seed,
        },
        BackendArg::Analytic => BackendKind::AnalyticBound,
    }
}

fn eps_hat_value(v: &Verifier, s: &str) -> Result<FxValue, CliError> {
    let e = parse_value("eps-hat", s)?;
    let fx = FxValue::quantize(&e, v.setup().fmt, RoundingMode::Floor)?;
    if fx.raw() < 1 {
        return Err(CliError::Input(format!("--eps-hat {s} is below one ulp of {}", v.setup().fmt)));
    }
    Ok(fx)
}

/// Outcome of a certify invocation.
#[derive(Debug)]
pub enum CertifyOutput {
    Campaign(Box<CampaignResult>),
    Checks(Vec<(String, Verdict)>),
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<CertifyOutput, CliError> {
    if !args.problem.exists() {
        return Err(CliError::Input(format!("problem file {} not found", args.problem.display())));
    }
    let problem = ProblemFile::load(&args.problem)?;
    let (v, constants) = prepare(&problem, args.format, args.rounding, backend_of(args))?;
    let eps_hat = args.eps_hat.as_deref().map(|s| eps_hat_value(&v, s)).transpose()?;

    let checks = [&args.omega, &args.eps, &args.delta, &args.theta];
    if checks.iter().any(|c| c.is_some()) {
        return run_checks(args, &v, eps_hat).map(CertifyOutput::Checks);
    }

    let opts = CampaignOptions {
        tol: Tolerances {
            omega: parse_opt("tol-omega", &args.tol_omega)?,
            eps: parse_opt("tol-eps", &args.tol_eps)?,
            delta: parse_opt("tol-delta", &args.tol_delta)?,
            theta: parse_opt("tol-theta", &args.tol_theta)?,
        },
        eps_hat,
        omega_only: args.omega_only,
        omega_small: args.bisect_omega_small,
    };
    for t in [&opts.tol.omega, &opts.tol.eps, &opts.tol.delta, &opts.tol.theta].into_iter().flatten() {
        if t <= &Rat::from_integer(0.into()) {
            return Err(CliError::Input("tolerances must be positive".into()));
        }
    }
    let result = run_campaign(&v, &constants, &opts)?;
    write_file(&args.out, "report.txt", &result.report_text())?;
    write_file(&args.out, "report.json", &json_text(&result.report_json()))?;
    write_file(&args.out, "timings.json", &json_text(&result.timings_json()))?;
    if let Some(c) = &result.certificate {
        c.save(&args.out.join("certificate.json"))?;
    }
    print!("{}", result.report_text());
    Ok(CertifyOutput::Campaign(Box::new(result)))
}

fn run_checks(args: &CertifyArgs, v: &Verifier, eps_hat: Option<FxValue>) -> Result<Vec<(String, Verdict)>, CliError> {
    let sq = |flag: &str, s: &Option<String>| -> Result<Option<Rat>, CliError> {
        Ok(parse_opt(flag, s)?.map(|x| &x * &x))
    };
    let need_eps = || eps_hat.ok_or_else(|| CliError::Input("checking ε, δ or Θ needs --eps-hat".into()));
    let mut out = Vec::new();
    if let Some(t) = sq("omega", &args.omega)? {
        out.push(("Omega".to_string(), check_omega(v, &t)?));
    }
    if let Some(t) = sq("eps", &args.eps)? {
        out.push(("eps".to_string(), check_assumption(v, need_eps()?, &t)?));
    }
    if let Some(t) = sq("delta", &args.delta)? {
        out.push(("delta".to_string(), check_exit_bound(v, need_eps()?, ExitBound::Delta, &t)?));
    }
    if let Some(t) = sq("theta", &args.theta)? {
        out.push(("Theta".to_string(), check_exit_bound(v, need_eps()?, ExitBound::Theta, &t)?));
    }
    for (name, verdict) in &out {
        println!("{name:<6} {}", verdict.kind);
    }
    if let Some((name, verdict)) = out.iter().find(|(_, v)| v.is_fail()) {
        let w = verdict.witness.clone().expect("FAIL carries a witness");
        return Err(CliError::FailWitness(format!("{name} check failed"), w));
    }
    Ok(out)
}

pub fn cmd_example6(args: &Example6Args) -> Result<crate::certify::AssertionReport, CliError> {
    let report = run_assertion_example(&AssertionExample::default())?;
    let exact = |r: &Rat| to_exact_decimal(r).unwrap_or_else(|| to_sci(r, 12));
    println!("verdict            {}", report.verdict);
    println!("grid values        {}", report.grid_values);
    println!("tight bound        {}", exact(&report.tight_bound));
    println!("theoretical bound  {}", exact(&report.theoretical_bound));
    println!("improvement        {:.2}%", report.improvement_percent_f64());
    println!("witness            a_i = {} ({})", report.witness, exact(&report.witness.to_rat()));
    println!("witness error      {}", exact(&report.witness_err));
    if let Some(dir) = &args.out {
        let json = serde_json::json!({
            "verdict": report.verdict,
            "tight_bound": exact(&report.tight_bound),
            "theoretical_bound": exact(&report.theoretical_bound),
            "improvement_percent": format!("{:.2}", report.improvement_percent_f64()),
            "witness": report.witness,
            "witness_err": exact(&report.witness_err),
        });
        write_file(dir, "example6.json", &json_text(&json))?;
    }
    Ok(report)
}

fn out_dir(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::MpcBuild(a) => Some(&a.out),
        Command::Certify(a) => Some(&a.out),
        Command::Solve(a) => Some(&a.out),
        Command::Example6(a) => a.out.as_deref(),
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::MpcBuild(a) => cmd_mpc_build(a).map(drop),
        Command::Certify(a) => cmd_certify(a).map(drop),
        Command::Solve(a) => run_solve(&SolveOptions::from_args(a)?).map(drop),
        Command::Example6(a) => cmd_example6(a).map(drop),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            if let (Some(w), Some(dir)) = (e.witness(), out_dir(&cli.command)) {
                match write_file(dir, "witness.json", &(w.to_json() + "\n")) {
                    Ok(p) => eprintln!("witness written to {}", p.display()),
                    Err(we) => eprintln!("could not write witness: {we}"),
                }
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
