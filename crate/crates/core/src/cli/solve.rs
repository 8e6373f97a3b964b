//! Fixed-point solve of one instance, checked against a certificate.

use std::path::PathBuf;

use num_traits::Zero;
use serde::Serialize;

use crate::fixedpoint::{FxValue, RoundingMode, Tracked, TrackedVector};
use crate::guarantee::Certificate;
use crate::linalg;
use crate::pgm::{pgm_fixed, solve_reference, ExitReason, FixedStepper, PgmTrace, ReferenceSolution, Retention};
use crate::qp::{BoxQP, ProblemFamily, ProblemFile};
use crate::rational::{int, to_sci, Exact, Rat};

use super::{parse_list, write_file, CliError, SolveArgs};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub problem: PathBuf,
    pub certificate: PathBuf,
    pub c: Option<Vec<Rat>>,
    pub x0: Option<Vec<Rat>>,
    pub k_max: Option<usize>,
    pub out: Option<PathBuf>,
}

impl SolveOptions {
    pub fn from_args(a: &SolveArgs) -> Result<Self, CliError> {
        Ok(Self {
            problem: a.problem.clone(),
            certificate: a.certificate.clone(),
            c: a.c.as_deref().map(|s| parse_list("c", s)).transpose()?,
            x0: a.x0.as_deref().map(|s| parse_list("x0", s)).transpose()?,
            k_max: a.k_max,
            out: Some(a.out.clone()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuaranteeMode {
    /// Tolerance exit: distance `ω + δT` and gap from the exit bounds.
    Exit,
    /// Certified `k_max` reached: distance `ε/2`.
    Kmax,
    /// `k_max` overridden below the certified value: nothing is claimed.
    Uncovered,
}

/// Exact errors of one run and the certified bounds they must respect.
#[derive(Debug, Clone, Serialize)]
pub struct GuaranteeCheck {
    pub mode: GuaranteeMode,
    pub dist_sq: Exact,
    pub fgap: Exact,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist_bound: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fgap_bound: Option<Exact>,
    /// `None` when uncovered.
    pub within: Option<bool>,
}

/// Compares the output of a run with the certified bounds.
pub fn check_run(
    qp: &BoxQP,
    reference: &ReferenceSolution,
    trace: &PgmTrace,
    cert: &Certificate,
    k_max: usize,
) -> GuaranteeCheck {
    let out = trace.output_values();
    let dist_sq = linalg::norm_sq(&linalg::sub_vec(&out, &reference.x));
    let fgap = qp.f_value(&out) - &reference.f;
    let (mode, bounds) = match trace.exit {
        ExitReason::ToleranceHit => (
            GuaranteeMode::Exit,
            Some((cert.dist_exit.0.clone(), cert.fgap_exit.0.clone())),
        ),
        ExitReason::KmaxHit if k_max as u64 >= cert.k_max => (
            GuaranteeMode::Kmax,
            Some((cert.dist_kmax.0.clone(), cert.fgap_kmax.0.clone())),
        ),
        ExitReason::KmaxHit => (GuaranteeMode::Uncovered, None),
    };
    let within = bounds.as_ref().map(|(d, f)| dist_sq <= d * d && &fgap <= f);
    GuaranteeCheck {
        mode,
        dist_sq: Exact(dist_sq),
        fgap: Exact(fgap),
        dist_bound: bounds.as_ref().map(|(d, _)| Exact(d.clone())),
        fgap_bound: bounds.map(|(_, f)| Exact(f)),
        within,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub exit: &'static str,
    pub k: usize,
    pub k_max: usize,
    pub certified_k_max: u64,
    pub x0: Vec<i64>,
    pub output: Vec<i64>,
    pub x_star: Vec<String>,
    pub check: GuaranteeCheck,
}

fn pick_c(fam: &ProblemFamily, given: Option<&[Rat]>) -> Result<Vec<Rat>, CliError> {
    let fmt = fam.fmt;
    let raw = |x: &Rat| FxValue::quantize(x, fmt, RoundingMode::Floor).map(FxValue::to_rat);
    match given {
        Some(c) if c.len() != fam.n() => Err(CliError::Input(format!("--c needs {} entries", fam.n()))),
        Some(c) => Ok(c.iter().map(raw).collect::<Result<_, _>>()?),
        None => Ok(fam
            .c_min
            .iter()
            .zip(&fam.c_max)
            .map(|(a, b)| raw(&((a + b) / int(2))))
            .collect::<Result<_, _>>()?),
    }
}

/// Feasible start in the solver format: the given point, or the box point nearest 0.
fn start_point(stepper: &FixedStepper, qp: &BoxQP, given: Option<&[Rat]>, file_x0: Option<&[i64]>) -> Result<TrackedVector, CliError> {
    let fmt = stepper.fmt();
    if let Some(x) = given {
        if x.len() != qp.n() {
            return Err(CliError::Input(format!("--x0 needs {} entries", qp.n())));
        }
        let items = x
            .iter()
            .map(|v| FxValue::quantize(v, fmt, RoundingMode::Floor).map(Tracked::exact))
            .collect::<Result<_, _>>()?;
        return Ok(TrackedVector::new(fmt, items)?);
    }
    if let Some(raw) = file_x0 {
        return Ok(TrackedVector::from_raw(fmt, raw)?);
    }
    let items = (0..qp.n())
        .map(|i| {
            let z = Rat::zero();
            let v = z.max(qp.l()[i].clone()).min(qp.u()[i].clone());
            FxValue::quantize(&v, fmt, RoundingMode::Floor).map(Tracked::exact)
        })
        .collect::<Result<_, _>>()?;
    Ok(TrackedVector::new(fmt, items)?)
}

pub fn run_solve(opts: &SolveOptions) -> Result<SolveReport, CliError> {
    for p in [&opts.problem, &opts.certificate] {
        if !p.exists() {
            return Err(CliError::Input(format!("{} not found", p.display())));
        }
    }
    let problem = ProblemFile::load(&opts.problem)?;
    let cert = Certificate::load(&opts.certificate).map_err(|e| CliError::Input(format!("certificate: {e}")))?;
    let fam = problem.family()?;
    if cert.inputs.data_format != fam.fmt {
        return Err(CliError::Input("certificate and problem use different data formats".into()));
    }
    let eps_hat = cert
        .inputs
        .eps_hat
        .ok_or_else(|| CliError::Input("certificate carries no exit tolerance".into()))?;
    let c = pick_c(&fam, opts.c.as_deref())?;
    let qp = fam.realize(0, c, fam.l_min.clone(), fam.u_max.clone())?;
    let stepper = FixedStepper::new(&qp, cert.inputs.format, cert.inputs.rounding, cert.inputs.tau)?;
    let x0 = start_point(&stepper, &qp, opts.x0.as_deref(), problem.x0.as_deref())?;
    let k_max = opts.k_max.unwrap_or(cert.k_max as usize);
    let trace = pgm_fixed(&stepper, &x0, eps_hat, k_max, Retention::Full)?;
    let reference = solve_reference(&qp, 1e-13)?;
    let check = check_run(&qp, &reference, &trace, &cert, k_max);
    let report = SolveReport {
        exit: match trace.exit {
            ExitReason::ToleranceHit => "tolerance",
            ExitReason::KmaxHit => "k-max",
        },
        k: trace.k,
        k_max,
        certified_k_max: cert.k_max,
        x0: x0.raws(),
        output: trace.output.raws(),
        x_star: reference.x.iter().map(|v| to_sci(v, 12)).collect(),
        check,
    };
    if let Some(dir) = &opts.out {
        write_file(dir, "trace.csv", &trace.to_csv())?;
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write_file(dir, "solve_report.json", &text)?;
    }
    println!("exit {} after k = {} (k_max = {})", report.exit, report.k, k_max);
    println!(
        "|x - x*|^2 = {}, f - f* = {}",
        to_sci(&report.check.dist_sq.0, 5),
        to_sci(&report.check.fgap.0, 5)
    );
    match report.check.within {
        Some(true) => println!("within certificate"),
        Some(false) => {
            return Err(CliError::Fail(format!(
                "run violates the certified bounds ({:?} mode)",
                report.check.mode
            )))
        }
        None => println!("k_max below the certified value: no guarantee applies"),
    }
    Ok(report)
}
