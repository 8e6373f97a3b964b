//! Certification campaign: bisect every bound, pick `ε̂`, check overflow and
//! assemble the certificate.

use std::fmt::Write as _;
use std::time::Instant;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::certify::{
    bisect_bound, validate_integer_bits, BackendKind, BisectOutcome, BoundQuery, CertifyError, QueryKind, Verdict,
    VerdictKind, Verifier,
};
use crate::fixedpoint::{FxValue, RoundingMode};
use crate::guarantee::{
    assemble_certificate, bound_d, min_epsilon, Certificate, CertificateInputs, GuaranteeError, Provenance,
};
use crate::qp::Constants;
use crate::rational::{int, pow2, sqrt_lower, sqrt_upper, to_exact_decimal, to_ratio_string, to_sci, Exact, Rat};

use super::CliError;

/// Growth attempts for the automatic `ε̂`.
const EPS_HAT_ATTEMPTS: usize = 24;

#[derive(Debug, Clone, Default)]
pub struct Tolerances {
    pub omega: Option<Rat>,
    pub eps: Option<Rat>,
    pub delta: Option<Rat>,
    pub theta: Option<Rat>,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    /// Tolerances on squared values; `2^{-2q-16}` when absent.
    pub tol: Tolerances,
    pub eps_hat: Option<FxValue>,
    /// Stop after `Ω`.
    pub omega_only: bool,
    /// Bisect `ω` instead of substituting `Ω`.
    pub omega_small: bool,
}

/// One bisected bound.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub name: &'static str,
    pub kind: QueryKind,
    /// The bound itself (square root of the passing squared threshold,
    /// rounded in the sound direction).
    pub value: Rat,
    pub outcome: BisectOutcome,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub backend: BackendKind,
    pub constants: Constants,
    pub eps_hat: Option<FxValue>,
    pub eps_hat_attempts: usize,
    pub rows: Vec<BoundRow>,
    pub overflow: Option<VerdictKind>,
    pub certificate: Option<Certificate>,
    pub total_secs: f64,
}

fn ceil_to_grid(x: &Rat, v: &Verifier) -> Result<FxValue, CliError> {
    let fmt = v.setup().fmt;
    let floor = FxValue::quantize(&-x, fmt, RoundingMode::Floor).map_err(|e| CliError::Overflow(e.to_string()))?;
    FxValue::from_raw((-floor.raw()).max(1), fmt).map_err(|e| CliError::Overflow(e.to_string()))
}

fn bits(v: &Verifier) -> u32 {
    2 * v.setup().fmt.q() + 16
}

fn default_tol(v: &Verifier) -> Rat {
    Rat::new(1.into(), pow2(2 * v.setup().fmt.q() + 16))
}

fn run_bound(
    v: &Verifier,
    name: &'static str,
    kind: QueryKind,
    eps_hat: Option<FxValue>,
    init: Rat,
    tol: Option<&Rat>,
) -> Result<BoundRow, CliError> {
    let tol = tol.cloned().unwrap_or_else(|| default_tol(v));
    let query = BoundQuery::new(kind, Rat::zero(), eps_hat);
    let outcome = bisect_bound(v, &query, init, tol)?;
    Ok(BoundRow {
        name,
        kind,
        value: outcome.bound(bits(v)),
        outcome,
    })
}

fn analytic_init(v: &Verifier, kind: QueryKind, eps_hat: Option<FxValue>) -> Rat {
    let e = eps_hat.map(FxValue::to_rat);
    v.analytic().bound(kind, e.as_ref()).unwrap_or_else(|| v.setup().fmt.ulp())
}

/// Runs the full campaign against a verifier whose setup uses `constants.tau`.
pub fn run_campaign(v: &Verifier, constants: &Constants, opts: &CampaignOptions) -> Result<CampaignResult, CliError> {
    let started = Instant::now();
    if matches!(v.backend(), BackendKind::RandomFalsify { .. }) {
        return Err(CliError::Input(
            "the falsify backend can only refute explicit thresholds; pass --omega/--eps/--delta/--theta or use another backend"
                .into(),
        ));
    }
    let fmt = v.setup().fmt;
    let n = v.setup().family.n();
    let tau = constants.tau.to_rat();
    let sigma = &constants.sigma;
    let mut rows = Vec::new();

    let omega = run_bound(
        v,
        "Omega",
        QueryKind::OmegaSq,
        None,
        analytic_init(v, QueryKind::OmegaSq, None),
        opts.tol.omega.as_ref(),
    )?;
    let omega_val = omega.value.clone();
    rows.push(omega);
    if opts.omega_only {
        return Ok(CampaignResult {
            backend: v.backend(),
            constants: constants.clone(),
            eps_hat: None,
            eps_hat_attempts: 0,
            rows,
            overflow: None,
            certificate: None,
            total_secs: started.elapsed().as_secs_f64(),
        });
    }

    // x* and every start lie in [l_min, u_max]
    let d = bound_d(&v.setup().family, &[v.setup().family.l_min.clone()]);
    let eps_cap = sqrt_lower(&(&d * int(4)), bits(v));
    let min_eps = min_epsilon(&tau, sigma, &omega_val);

    // ε̂ large enough that the certified ε clears 4Ω/(τσ)
    let mut target = if min_eps.is_positive() {
        &min_eps * int(2)
    } else {
        sqrt_upper(&fmt.ulp(), bits(v))
    };
    let slack = fmt.ulp() * int(2 * n as i64);
    let mut attempts = 0;
    let (eps_hat, eps_row) = loop {
        attempts += 1;
        let eps_hat = match opts.eps_hat {
            Some(e) => e,
            None => {
                let t = &target + &omega_val * int(2);
                ceil_to_grid(&(&t * &t + &slack), v)?
            }
        };
        let init = eps_hat.to_rat();
        let mut row = run_bound(v, "eps", QueryKind::AssumptionEps, Some(eps_hat), init, opts.tol.eps.as_ref())?;
        if row.value > eps_cap {
            // any smaller ε is also certified; ε ≤ 2√D keeps k_max meaningful
            row.value = eps_cap.clone();
        }
        let ok = &row.value * &tau * sigma > &omega_val * int(4);
        if ok || opts.eps_hat.is_some() || attempts >= EPS_HAT_ATTEMPTS || eps_hat.to_rat() > &d * int(4) {
            break (eps_hat, row);
        }
        target *= int(2);
    };
    let eps_val = eps_row.value.clone();
    rows.push(eps_row);

    let delta = run_bound(
        v,
        "delta",
        QueryKind::DeltaSq,
        Some(eps_hat),
        analytic_init(v, QueryKind::DeltaSq, Some(eps_hat)),
        opts.tol.delta.as_ref(),
    )?;
    let omega_small = if opts.omega_small {
        Some(run_bound(
            v,
            "omega",
            QueryKind::OmegaSmallSq,
            Some(eps_hat),
            analytic_init(v, QueryKind::OmegaSmallSq, Some(eps_hat)),
            opts.tol.omega.as_ref(),
        )?)
    } else {
        None
    };
    let theta = run_bound(
        v,
        "Theta",
        QueryKind::ThetaSq,
        Some(eps_hat),
        analytic_init(v, QueryKind::ThetaSq, Some(eps_hat)),
        opts.tol.theta.as_ref(),
    )?;
    let (delta_val, theta_val) = (delta.value.clone(), theta.value.clone());
    let omega_small_val = omega_small.as_ref().map(|r| r.value.clone());
    rows.push(delta);
    rows.extend(omega_small);
    rows.push(theta);

    let overflow = match validate_integer_bits(v, eps_hat) {
        Ok(Verdict { kind, .. }) => kind,
        Err(CertifyError::Overflow(w)) => return Err(CliError::OverflowWitness(w)),
        Err(e) => return Err(e.into()),
    };
    if overflow == VerdictKind::Fail {
        return Err(CliError::Overflow("overflow check failed".into()));
    }

    let mut notes = vec!["D bounds the squared distance from any start in the box to x*".to_string()];
    if overflow == VerdictKind::Unknown {
        notes.push("absence of overflow not proven by this backend".into());
    }
    if attempts > 1 {
        notes.push(format!("eps_hat chosen automatically after {attempts} attempts"));
    }
    let inputs = CertificateInputs {
        format: fmt,
        data_format: v.setup().family.fmt,
        rounding: v.setup().mode,
        tau: constants.tau,
        l_smooth: Exact(constants.l_smooth.clone()),
        sigma: Exact(sigma.clone()),
        omega: Exact(omega_val),
        eps: Exact(eps_val),
        eps_hat: Some(eps_hat),
        delta: Exact(delta_val),
        omega_small: omega_small_val.map(Exact),
        theta: Exact(theta_val),
        d: Exact(d),
        d_inferred: false,
        q_set_size: v.setup().family.q_set.len(),
    };
    let provenance = rows.iter().map(|r| provenance(v, r)).collect();
    let certificate = match assemble_certificate(inputs, provenance, notes) {
        Ok(c) => c,
        Err(GuaranteeError::PreconditionViolated { what, .. }) => {
            return Err(CliError::Fail(format!(
                "{what}; increase the fractional bits q or request a larger eps (--eps-hat)"
            )))
        }
        Err(e) => return Err(CliError::Fail(e.to_string())),
    };
    Ok(CampaignResult {
        backend: v.backend(),
        constants: constants.clone(),
        eps_hat: Some(eps_hat),
        eps_hat_attempts: attempts,
        rows,
        overflow: Some(overflow),
        certificate: Some(certificate),
        total_secs: started.elapsed().as_secs_f64(),
    })
}

fn provenance(v: &Verifier, r: &BoundRow) -> Provenance {
    let note = match v.backend() {
        BackendKind::Exhaustive { c_stride, .. } if c_stride > 1 => Some(format!("c grid thinned by stride {c_stride}")),
        BackendKind::AnalyticBound => Some("closed-form worst case, not tight".into()),
        _ => None,
    };
    Provenance {
        bound: r.name.into(),
        backend: v.backend().label().into(),
        passes: r.outcome.stats.passes,
        fails: r.outcome.stats.fails,
        tol: Some(Exact(r.outcome.tol.clone())),
        tight: r.outcome.tight,
        note,
    }
}

#[derive(Debug, Serialize)]
struct RowJson {
    bound: &'static str,
    value: Exact,
    value_sci: String,
    squared: Exact,
    tol: String,
    passes: usize,
    fails: usize,
    unknowns: usize,
    tight: bool,
}

#[derive(Debug, Serialize)]
struct TimingRow {
    bound: &'static str,
    calls: usize,
    avg_secs: f64,
    total_secs: f64,
}

impl CampaignResult {
    /// Machine-readable report, free of timings.
    pub fn report_json(&self) -> serde_json::Value {
        let rows: Vec<RowJson> = self
            .rows
            .iter()
            .map(|r| RowJson {
                bound: r.name,
                value_sci: to_sci(&r.value, 6),
                value: Exact(r.value.clone()),
                squared: Exact(r.outcome.pass_sq.clone()),
                tol: to_ratio_string(&r.outcome.tol),
                passes: r.outcome.stats.passes,
                fails: r.outcome.stats.fails,
                unknowns: r.outcome.stats.unknowns,
                tight: r.outcome.tight,
            })
            .collect();
        serde_json::json!({
            "backend": self.backend,
            "tau": self.constants.tau,
            "L": Exact(self.constants.l_smooth.clone()),
            "sigma": Exact(self.constants.sigma.clone()),
            "eps_hat": self.eps_hat,
            "eps_hat_attempts": self.eps_hat_attempts,
            "overflow": self.overflow,
            "rows": rows,
            "k_max": self.certificate.as_ref().map(|c| c.k_max),
            "k_exact": self.certificate.as_ref().map(|c| c.k_exact),
        })
    }

    pub fn timings_json(&self) -> serde_json::Value {
        let rows: Vec<TimingRow> = self
            .rows
            .iter()
            .map(|r| {
                let s = &r.outcome.stats;
                TimingRow {
                    bound: r.name,
                    calls: s.calls(),
                    avg_secs: if s.calls() > 0 { s.call_secs.iter().sum::<f64>() / s.calls() as f64 } else { 0.0 },
                    total_secs: s.total_secs,
                }
            })
            .collect();
        serde_json::json!({ "rows": rows, "total_secs": self.total_secs })
    }

    /// Human-readable table in the layout `Bound b | Value | b² | Tol. | # P/F | Avg. time | Total time`.
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<7} {:>13} {:>13} {:>10} {:>10} {:>14} {:>15}",
            "Bound b", "Value", "b^2", "Tol.", "# P/F[/U]", "Avg. time [s]", "Total time [s]"
        );
        for r in &self.rows {
            let st = &r.outcome.stats;
            let avg = if st.calls() > 0 { st.call_secs.iter().sum::<f64>() / st.calls() as f64 } else { 0.0 };
            let _ = writeln!(
                s,
                "{:<7} {:>13} {:>13} {:>10} {:>10} {:>14.3e} {:>15.3}",
                r.name,
                to_sci(&r.value, 4),
                to_sci(&r.outcome.pass_sq, 4),
                to_sci(&r.outcome.tol, 1),
                if st.unknowns > 0 { format!("{}/{}", st.pass_fail(), st.unknowns) } else { st.pass_fail() },
                avg,
                st.total_secs
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "backend       {}", self.backend.label());
        let _ = writeln!(
            s,
            "tau           {} = {}",
            self.constants.tau,
            to_exact_decimal(&self.constants.tau.to_rat()).unwrap_or_default()
        );
        let _ = writeln!(s, "L, sigma      {}, {}", to_sci(&self.constants.l_smooth, 6), to_sci(&self.constants.sigma, 6));
        if let Some(e) = self.eps_hat {
            let _ = writeln!(s, "eps_hat       {} = {}", e, to_sci(&e.to_rat(), 6));
        }
        if let Some(o) = self.overflow {
            let _ = writeln!(s, "overflow      {}", if o == VerdictKind::Pass { "none".to_string() } else { o.to_string() });
        }
        if let Some(c) = &self.certificate {
            let _ = writeln!(s, "4Omega/(ts)   {}", to_sci(&c.min_eps.0, 5));
            let _ = writeln!(s, "C             {}", to_sci(&c.c.0, 8));
            let _ = writeln!(s, "k_max         {}", c.k_max);
            let _ = writeln!(s, "k_exact       {}", c.k_exact);
            let _ = writeln!(s, "dist exit     {}", to_sci(&c.dist_exit.0, 5));
            let _ = writeln!(s, "f gap exit    {}", to_sci(&c.fgap_exit.0, 5));
            let _ = writeln!(s, "dist k_max    {}", to_sci(&c.dist_kmax.0, 5));
            let _ = writeln!(s, "f gap k_max   {}", to_sci(&c.fgap_kmax.0, 5));
        }
        let _ = writeln!(s, "total time    {:.3} s", self.total_secs);
        s
    }
}
