//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero on any failure not listed in `KNOWN_FAILURES`.

use std::process::ExitCode;
use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fxcert::certify::{run_assertion_example, AssertionExample, BackendKind, CheckSetup, QueryKind, Verifier};
use fxcert::cli::{prepare, reference_match, run_campaign, check_run, CampaignOptions, Tolerances, REFERENCE_L, REFERENCE_SIGMA};
use fxcert::fixedpoint::{FxError, FxFormat, FxValue, RoundingMode, Tracked, TrackedVector};
use fxcert::guarantee::{assemble_certificate, Certificate, CertificateInputs};
use fxcert::linalg::{self, RatMat};
use fxcert::mpc::{self, MpcConfig};
use fxcert::pgm::{composite_map, pgm_exact, pgm_fixed, solve_reference, FixedStepper, Retention};
use fxcert::qp::{self, BoxQP, ProblemFamily, ProblemFile};
use fxcert::rational::{dyadic, int, parse_rat, pow2, to_f64, to_sci, Exact, Rat};

/// Sub-checks that fail for reasons recorded in the decisions ledger.
/// Criterion 2: the stated inputs give 4Ω/(τσ) = 9.6198e-5, three printed
/// ulps from the expected 9.6195e-5; the other sub-checks must still pass.
const KNOWN_FAILURES: &[(u32, &str)] = &[(2, "min_eps")];

#[derive(Default)]
struct Report {
    failures: Vec<(&'static str, String)>,
    notes: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &'static str, ok: bool, detail: impl Into<String>) {
        let detail = detail.into();
        if ok {
            self.notes.push(detail);
        } else {
            self.failures.push((name, detail));
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn r(s: &str) -> Rat {
    parse_rat(s).unwrap()
}

fn fmt(p: u32, q: u32) -> FxFormat {
    FxFormat::new(p, q).unwrap()
}

// ---------------------------------------------------------------- 1

fn criterion1(rep: &mut Report) {
    let started = Instant::now();
    let out = run_assertion_example(&AssertionExample::default()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    rep.check(
        "tight",
        out.tight_bound == r("0.069580078125"),
        format!("tight = {}", Exact(out.tight_bound.clone()).decimal()),
    );
    rep.check(
        "theoretical",
        out.theoretical_bound == r("0.078125"),
        format!("theoretical = {}", Exact(out.theoretical_bound.clone()).decimal()),
    );
    let pct = format!("{:.2}", out.improvement_percent_f64());
    rep.check("improvement", pct == "12.28", format!("improvement = {pct}%"));
    rep.check("grid", out.grid_values == 65, format!("{} values x 20 elements", out.grid_values));
    rep.check("runtime", secs < 1.0, format!("{secs:.3}s"));
}

// ---------------------------------------------------------------- 2

fn reference_inputs() -> CertificateInputs {
    let f21 = fmt(10, 21);
    let l = r("4.9645");
    CertificateInputs {
        format: f21,
        data_format: f21,
        rounding: RoundingMode::Floor,
        tau: qp::step_size(&l, f21).unwrap(),
        l_smooth: Exact(l),
        sigma: Exact(r("0.3532")),
        omega: Exact(r("1.711e-6")),
        eps: Exact(r("6.8949e-4")),
        eps_hat: None,
        delta: Exact(r("1.383e-3")),
        omega_small: None,
        theta: Exact(r("1.381e-3")),
        d: Exact(int(1)),
        d_inferred: true,
        q_set_size: 1,
    }
}

fn criterion2(rep: &mut Report) {
    let started = Instant::now();
    let inputs = reference_inputs();
    let tau_raw = inputs.tau.raw();
    let cert = assemble_certificate(inputs, vec![], vec![]).unwrap();
    let secs = started.elapsed().as_secs_f64();
    rep.check("tau", tau_raw == 422429, format!("tau raw = {tau_raw}"));
    // ±1 ulp of the 5-digit mantissa
    let printed = to_sci(&cert.min_eps.0, 5);
    let value: f64 = printed.parse().unwrap();
    rep.check(
        "min_eps",
        (value - 9.6195e-5).abs() <= 1.0e-9 * 1.000001,
        format!("4Omega/(tau sigma) = {printed} (expected 9.6195e-5)"),
    );
    rep.check("k_max", cert.k_max == 250, format!("k_max = {}", cert.k_max));
    rep.check("k_exact", cert.k_exact == 217, format!("k_exact = {}", cert.k_exact));
    let dist = to_f64(&cert.dist_exit.0);
    rep.check("dist_exit", (dist - 0.0389).abs() <= 5e-4, format!("dist_exit = {dist:.6}"));
    let fgap = to_f64(&cert.fgap_exit.0);
    rep.check("fgap_exit", (fgap - 2.7165e-4).abs() <= 5e-7, format!("fgap_exit = {fgap:.5e}"));
    rep.check("runtime", secs < 1.0, format!("{secs:.3}s"));
}

// ---------------------------------------------------------------- 3, 6

/// Reduced configuration: n = 2, singleton Q, 33 c values per coordinate.
fn reduced_problem(q: u32) -> ProblemFile {
    let text = format!(
        r#"{{"format":{{"p":3,"q":{q},"p_prime":2,"q_prime":4,"rounding":"floor"}},"n":2,
           "Q":[24,4,4,16],"c_min":[-16,-16],"c_max":[16,16],"l":[-8,-8],"u":[8,8]}}"#
    );
    serde_json::from_str(&text).unwrap()
}

struct Instance {
    q: u32,
    verifier: Verifier,
    certificate: Certificate,
}

fn criterion3(rep: &mut Report, instances: &mut Vec<Instance>) {
    let tol = Rat::new(1.into(), pow2(40));
    let bound = r("1e-12");
    for q in [6, 8] {
        let started = Instant::now();
        let problem = reduced_problem(q);
        let (v, constants) = prepare(&problem, None, None, BackendKind::exhaustive(1 << 32)).unwrap();
        let opts = CampaignOptions {
            tol: Tolerances {
                omega: Some(tol.clone()),
                eps: Some(tol.clone()),
                delta: Some(tol.clone()),
                theta: Some(tol.clone()),
            },
            eps_hat: None,
            omega_only: false,
            omega_small: true,
        };
        let result = match run_campaign(&v, &constants, &opts) {
            Ok(res) => res,
            Err(e) => {
                rep.check("campaign", false, format!("q = {q}: {e}"));
                continue;
            }
        };
        let secs = started.elapsed().as_secs_f64();
        let mut worst = Rat::zero();
        for row in &result.rows {
            let eps_hat = if row.kind.needs_eps_hat() { result.eps_hat } else { None };
            match v.extremum(row.kind, eps_hat).unwrap() {
                Some(ext) => {
                    let gap = (&row.outcome.pass_sq - &ext).abs();
                    rep.check(
                        "bisection",
                        gap <= bound,
                        format!("q = {q} {}: |bisected^2 - max^2| = {}", row.name, to_sci(&gap, 2)),
                    );
                    worst = worst.max(gap);
                }
                None => rep.check("bisection", false, format!("q = {q} {}: no extremum", row.name)),
            }
        }
        rep.check("runtime", secs < 300.0, format!("q = {q}: {secs:.1}s, worst gap {}", to_sci(&worst, 2)));
        if let Some(certificate) = result.certificate {
            instances.push(Instance {
                q,
                verifier: v,
                certificate,
            });
        }
    }
}

fn random_grid(rng: &mut ChaCha8Rng, lo: &Rat, hi: &Rat, q: u32) -> Rat {
    let scale = Rat::from_integer(pow2(q));
    let a: i64 = (lo * &scale).ceil().to_integer().try_into().unwrap();
    let b: i64 = (hi * &scale).floor().to_integer().try_into().unwrap();
    dyadic(rng.gen_range(a..=b), q)
}

fn criterion6(rep: &mut Report, instances: &[Instance]) {
    if instances.len() != 2 {
        rep.check("instances", false, "criterion 3 produced no certificates");
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for inst in instances {
        let setup = inst.verifier.setup();
        let fam = &setup.family;
        let cert = &inst.certificate;
        let eps_hat = cert.inputs.eps_hat.unwrap();
        let (mut exits, mut kmax, mut violations) = (0, 0, 0);
        for _ in 0..50 {
            let c = (0..fam.n())
                .map(|i| random_grid(&mut rng, &fam.c_min[i], &fam.c_max[i], fam.fmt.q()))
                .collect();
            let qp = fam.realize(0, c, fam.l_min.clone(), fam.u_max.clone()).unwrap();
            let stepper = FixedStepper::new(&qp, setup.fmt, setup.mode, cert.inputs.tau).unwrap();
            let raw: Vec<i64> = (0..qp.n())
                .map(|i| {
                    let v = random_grid(&mut rng, &qp.l()[i], &qp.u()[i], setup.fmt.q());
                    FxValue::quantize(&v, setup.fmt, RoundingMode::Floor).unwrap().raw()
                })
                .collect();
            let x0 = TrackedVector::from_raw(setup.fmt, &raw).unwrap();
            let trace = pgm_fixed(&stepper, &x0, eps_hat, cert.k_max as usize, Retention::ExitOnly).unwrap();
            let reference = solve_reference(&qp, 1e-13).unwrap();
            let check = check_run(&qp, &reference, &trace, cert, cert.k_max as usize);
            match trace.exit {
                fxcert::pgm::ExitReason::ToleranceHit => exits += 1,
                fxcert::pgm::ExitReason::KmaxHit => kmax += 1,
            }
            if check.within != Some(true) {
                violations += 1;
            }
        }
        rep.check(
            "soundness",
            violations == 0,
            format!("q = {}: {exits} tolerance exits, {kmax} k_max exits, {violations} violations", inst.q),
        );
    }
}

// ---------------------------------------------------------------- 4

/// Register of the reference evaluator: exact value on the grid, its
/// format and the error-free counterpart.
#[derive(Clone)]
struct OReg {
    val: Rat,
    p: u32,
    q: u32,
    shadow: Rat,
}

fn o_fits(v: &Rat, p: u32) -> bool {
    v.abs() < Rat::from_integer(pow2(p))
}

fn o_round(x: &Rat, q: u32, mode: RoundingMode) -> Rat {
    let scale = Rat::from_integer(pow2(q));
    let s = x * &scale;
    let i = match mode {
        RoundingMode::Floor => s.floor(),
        RoundingMode::TowardZero => {
            if s.is_negative() {
                -((-s).floor())
            } else {
                s.floor()
            }
        }
        RoundingMode::Nearest => (s + Rat::new(1.into(), 2.into())).floor(),
    };
    i / scale
}

enum Op {
    Load(FxFormat, i64),
    Add(usize, usize),
    Sub(usize, usize),
    Neg(usize),
    Mul(usize, usize, RoundingMode),
    Min(usize, usize),
    Max(usize, usize),
    Clamp(usize, i64, i64),
    Convert(usize, FxFormat, RoundingMode),
    Dot(Vec<usize>, Vec<usize>, RoundingMode),
}

const MODES: [RoundingMode; 3] = [RoundingMode::Floor, RoundingMode::TowardZero, RoundingMode::Nearest];

fn random_raw(rng: &mut ChaCha8Rng, f: FxFormat) -> i64 {
    let lim = (1i64 << (f.p() + f.q())) - 1;
    if rng.gen_bool(0.2) {
        // near the edge of the range
        let s = if rng.gen_bool(0.5) { 1 } else { -1 };
        s * (lim - rng.gen_range(0..=lim.min(3)))
    } else {
        rng.gen_range(-lim..=lim)
    }
}

fn random_program(rng: &mut ChaCha8Rng) -> (Vec<FxFormat>, Vec<Op>) {
    let formats: Vec<FxFormat> = (0..rng.gen_range(1..=3))
        .map(|_| fmt(rng.gen_range(1..=6), rng.gen_range(0..=12)))
        .collect();
    let len = rng.gen_range(1..=50);
    let mut reg_fmt: Vec<FxFormat> = Vec::new();
    let mut ops = Vec::new();
    while ops.len() < len {
        if reg_fmt.is_empty() || rng.gen_bool(0.2) {
            let f = formats[rng.gen_range(0..formats.len())];
            ops.push(Op::Load(f, random_raw(rng, f)));
            reg_fmt.push(f);
            continue;
        }
        let i = rng.gen_range(0..reg_fmt.len());
        let f = reg_fmt[i];
        let same: Vec<usize> = (0..reg_fmt.len()).filter(|&j| reg_fmt[j] == f).collect();
        let j = same[rng.gen_range(0..same.len())];
        let mode = MODES[rng.gen_range(0..3)];
        let (op, out) = match rng.gen_range(0..9) {
            0 => (Op::Add(i, j), f),
            1 => (Op::Sub(i, j), f),
            2 => (Op::Neg(i), f),
            3 => (Op::Mul(i, j, mode), f),
            4 => (Op::Min(i, j), f),
            5 => (Op::Max(i, j), f),
            6 => {
                let (a, b) = (random_raw(rng, f), random_raw(rng, f));
                (Op::Clamp(i, a.min(b), a.max(b)), f)
            }
            7 => {
                let to = formats[rng.gen_range(0..formats.len())];
                (Op::Convert(i, to, mode), to)
            }
            _ => {
                let k = rng.gen_range(1..=4);
                let pick = |rng: &mut ChaCha8Rng| (0..k).map(|_| same[rng.gen_range(0..same.len())]).collect();
                (Op::Dot(pick(rng), pick(rng), mode), f)
            }
        };
        ops.push(op);
        reg_fmt.push(out);
    }
    (formats, ops)
}

/// Library result of one op; `None` when an operand was never produced.
fn lib_eval(regs: &[Option<Tracked>], op: &Op) -> Option<Result<Tracked, FxError>> {
    let g = |i: usize| regs[i].as_ref();
    Some(match op {
        Op::Load(f, raw) => FxValue::from_raw(*raw, *f).map(Tracked::exact),
        Op::Add(i, j) => g(*i)?.add(g(*j)?),
        Op::Sub(i, j) => g(*i)?.sub(g(*j)?),
        Op::Neg(i) => Ok(g(*i)?.neg()),
        Op::Mul(i, j, m) => g(*i)?.mul(g(*j)?, *m),
        Op::Min(i, j) => g(*i)?.min(g(*j)?),
        Op::Max(i, j) => g(*i)?.max(g(*j)?),
        Op::Clamp(i, lo, hi) => {
            let x = g(*i)?;
            x.clamp(FxValue::from_raw(*lo, x.fmt()).unwrap(), FxValue::from_raw(*hi, x.fmt()).unwrap())
        }
        Op::Convert(i, to, m) => {
            let x = g(*i)?;
            x.fx().convert(*to, *m).map(|fx| Tracked::with_shadow(fx, x.shadow().clone()))
        }
        Op::Dot(a, b, m) => {
            let vec = |ix: &[usize]| -> Option<TrackedVector> {
                let items: Option<Vec<Tracked>> = ix.iter().map(|&i| g(i).cloned()).collect();
                let items = items?;
                Some(TrackedVector::new(items[0].fmt(), items).unwrap())
            };
            vec(a)?.dot(&vec(b)?, *m)
        }
    })
}

/// Reference result of one op; `Err(())` is an out-of-range value.
fn oracle_eval(regs: &[Option<OReg>], op: &Op) -> Option<Result<OReg, ()>> {
    let g = |i: usize| regs[i].as_ref();
    let checked = |val: Rat, p: u32, q: u32, shadow: Rat| {
        if o_fits(&val, p) {
            Ok(OReg { val, p, q, shadow })
        } else {
            Err(())
        }
    };
    Some(match op {
        Op::Load(f, raw) => {
            let v = Rat::new((*raw).into(), pow2(f.q()));
            checked(v.clone(), f.p(), f.q(), v)
        }
        Op::Add(i, j) => {
            let (a, b) = (g(*i)?, g(*j)?);
            checked(&a.val + &b.val, a.p, a.q, &a.shadow + &b.shadow)
        }
        Op::Sub(i, j) => {
            let (a, b) = (g(*i)?, g(*j)?);
            checked(&a.val - &b.val, a.p, a.q, &a.shadow - &b.shadow)
        }
        Op::Neg(i) => {
            let a = g(*i)?;
            checked(-&a.val, a.p, a.q, -&a.shadow)
        }
        Op::Mul(i, j, m) => {
            let (a, b) = (g(*i)?, g(*j)?);
            checked(o_round(&(&a.val * &b.val), a.q, *m), a.p, a.q, &a.shadow * &b.shadow)
        }
        Op::Min(i, j) | Op::Max(i, j) => {
            let (a, b) = (g(*i)?, g(*j)?);
            let lo = matches!(op, Op::Min(..));
            let val = if (a.val <= b.val) == lo { a.val.clone() } else { b.val.clone() };
            let shadow = if (a.shadow <= b.shadow) == lo { a.shadow.clone() } else { b.shadow.clone() };
            checked(val, a.p, a.q, shadow)
        }
        Op::Clamp(i, lo, hi) => {
            let a = g(*i)?;
            let lo = Rat::new((*lo).into(), pow2(a.q));
            let hi = Rat::new((*hi).into(), pow2(a.q));
            let clamp = |x: &Rat| {
                if *x < lo {
                    lo.clone()
                } else if *x > hi {
                    hi.clone()
                } else {
                    x.clone()
                }
            };
            checked(clamp(&a.val), a.p, a.q, clamp(&a.shadow))
        }
        Op::Convert(i, to, m) => {
            let a = g(*i)?;
            checked(o_round(&a.val, to.q(), *m), to.p(), to.q(), a.shadow.clone())
        }
        Op::Dot(ia, ib, m) => {
            let pairs: Vec<(&OReg, &OReg)> = ia.iter().zip(ib).map(|(&i, &j)| Some((g(i)?, g(j)?))).collect::<Option<_>>()?;
            let (p, q) = (pairs[0].0.p, pairs[0].0.q);
            let mut acc = Rat::zero();
            let mut shadow = Rat::zero();
            for (a, b) in pairs {
                let prod = o_round(&(&a.val * &b.val), q, *m);
                if !o_fits(&prod, p) {
                    return Some(Err(()));
                }
                acc += prod;
                if !o_fits(&acc, p) {
                    return Some(Err(()));
                }
                shadow += &a.shadow * &b.shadow;
            }
            checked(acc, p, q, shadow)
        }
    })
}

fn criterion4(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut ops_run, mut overflows, mut mismatches) = (0usize, 0usize, Vec::new());
    for prog in 0..1000 {
        let (_, ops) = random_program(&mut rng);
        let mut lib: Vec<Option<Tracked>> = Vec::new();
        let mut ora: Vec<Option<OReg>> = Vec::new();
        for (k, op) in ops.iter().enumerate() {
            let l = lib_eval(&lib, op);
            let o = oracle_eval(&ora, op);
            ops_run += 1;
            let agree = match (&l, &o) {
                (None, None) => true,
                (Some(Ok(t)), Some(Ok(e))) => {
                    t.value() == e.val && t.fmt().p() == e.p && t.fmt().q() == e.q && *t.shadow() == e.shadow
                }
                (Some(Err(FxError::Overflow { .. })), Some(Err(()))) => {
                    overflows += 1;
                    true
                }
                _ => false,
            };
            if !agree && mismatches.len() < 5 {
                mismatches.push(format!("program {prog} op {k}"));
            }
            lib.push(l.and_then(Result::ok));
            ora.push(o.and_then(Result::ok));
        }
    }
    rep.check(
        "oracle",
        mismatches.is_empty(),
        format!("{ops_run} ops, {overflows} overflows, mismatches: {mismatches:?}"),
    );
    rep.check("coverage", overflows > 0, "overflow paths exercised");
}

// ---------------------------------------------------------------- 5

fn random_qp(rng: &mut ChaCha8Rng) -> BoxQP {
    let n = rng.gen_range(1..=6);
    let data = fmt(8, 4);
    let m: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-4..=4)).collect()).collect();
    let shift = rng.gen_range(2..=16);
    let q: RatMat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: i64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                    // MᵀM/16 + shift/16 · I
                    dyadic(s + if i == j { shift } else { 0 }, 4)
                })
                .collect()
        })
        .collect();
    let c = (0..n).map(|_| dyadic(rng.gen_range(-64..=64), 4)).collect();
    let l = (0..n).map(|_| dyadic(rng.gen_range(-32..=-1), 4)).collect();
    let u = (0..n).map(|_| dyadic(rng.gen_range(1..=32), 4)).collect();
    BoxQP::new(q, c, l, u, data).unwrap()
}

fn shifted(q: &RatMat, s: &Rat, sign: i64) -> RatMat {
    (0..q.len())
        .map(|i| {
            (0..q.len())
                .map(|j| {
                    let d = if i == j { s.clone() } else { Rat::zero() };
                    if sign > 0 {
                        &q[i][j] - d
                    } else {
                        d - &q[i][j]
                    }
                })
                .collect()
        })
        .collect()
}

/// `‖x − T_τ(x)‖² ≤ 4‖x − x*‖²` on the `2^-12` grid in integers: data at
/// scale `2^4`, `τ` at `2^12`, the step at `2^28`.
struct StepBound {
    q: Vec<Vec<i128>>,
    c: Vec<i128>,
    l: Vec<i128>,
    u: Vec<i128>,
    tau: i128,
    xs_num: Vec<BigInt>,
    xs_den: BigInt,
}

impl StepBound {
    fn new(qp: &BoxQP, tau: &FxValue, xs: &[Rat]) -> Self {
        let raw = |v: &Rat| -> i128 { (v * Rat::from_integer(pow2(4))).to_integer().try_into().unwrap() };
        let xs_den = xs.iter().fold(BigInt::one(), |d, v| d.lcm(v.denom()));
        Self {
            q: qp.q().iter().map(|row| row.iter().map(raw).collect()).collect(),
            c: qp.c().iter().map(raw).collect(),
            l: qp.l().iter().map(|v| raw(v) << 24).collect(),
            u: qp.u().iter().map(|v| raw(v) << 24).collect(),
            tau: tau.raw() as i128,
            xs_num: xs.iter().map(|v| v.numer() * (&xs_den / v.denom())).collect(),
            xs_den,
        }
    }

    /// Returns `‖x − T_τ(x)‖²` at scale `2^56` and whether the inequality holds.
    fn check(&self, x: &[i128]) -> (i128, bool) {
        let mut lhs = 0i128;
        let mut rhs = BigInt::zero();
        for i in 0..x.len() {
            let g: i128 = self.q[i].iter().zip(x).map(|(a, b)| a * b).sum::<i128>() + (self.c[i] << 12);
            let t = ((x[i] << 16) - self.tau * g).clamp(self.l[i], self.u[i]);
            let d = (x[i] << 16) - t;
            lhs += d * d;
            let e = BigInt::from(x[i]) * &self.xs_den - &self.xs_num[i] * BigInt::from(1 << 12);
            rhs += &e * &e;
        }
        let ok = BigInt::from(lhs) * &self.xs_den * &self.xs_den <= rhs * BigInt::from(1u64 << 34);
        (lhs, ok)
    }
}

fn criterion5(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let solver = fmt(8, 12);
    let (mut rate_fail, mut step_fail, mut sub_fail, mut setup_fail) = (0, 0, 0, 0);
    let (mut rate_checks, mut sub_checks) = (0usize, 0usize);
    for _ in 0..200 {
        let qp = random_qp(&mut rng);
        let n = qp.n();
        let (sigma, l) = qp::sound_extrema(qp.q()).unwrap();
        // the constants must bracket the spectrum exactly
        if !sigma.is_positive()
            || !qp::is_positive_definite(&shifted(qp.q(), &sigma, 1))
            || !qp::is_positive_definite(&shifted(qp.q(), &l, -1))
        {
            setup_fail += 1;
            continue;
        }
        let tau_fx = qp::step_size(&l, solver).unwrap();
        let tau = tau_fx.to_rat();
        let reference = solve_reference(&qp, 1e-13).unwrap();
        let (xs, fs) = (&reference.x, &reference.f);
        let x0: Vec<Rat> = (0..n).map(|i| random_grid(&mut rng, &qp.l()[i], &qp.u()[i], 4)).collect();

        let rate = Rat::one() - &tau * &sigma;
        let d0 = linalg::norm_sq(&linalg::sub_vec(&x0, xs));
        let mut pow = Rat::one();
        for (k, x) in pgm_exact(&qp, &tau, &x0, 20).iter().enumerate() {
            let dk = linalg::norm_sq(&linalg::sub_vec(x, xs));
            rate_checks += 1;
            if dk > &pow * &d0 {
                rate_fail += 1;
            }
            if k >= 1 && qp.f_value(x) - fs > &pow * &d0 / (&tau * int(2)) {
                rate_fail += 1;
            }
            pow *= &rate;
        }

        let bound = StepBound::new(&qp, &tau_fx, xs);
        for k in 0..10_000 {
            let x: Vec<i128> = (0..n)
                .map(|i| {
                    let v = random_grid(&mut rng, &qp.l()[i], &qp.u()[i], 12);
                    (v * Rat::from_integer(pow2(12))).to_integer().try_into().unwrap()
                })
                .collect();
            let (lhs, ok) = bound.check(&x);
            if k < 100 {
                // the integer evaluation must agree with the exact map
                let xr: Vec<Rat> = x.iter().map(|&v| dyadic(v as i64, 12)).collect();
                let t = composite_map(&qp, &tau, &xr);
                if linalg::norm_sq(&linalg::sub_vec(&xr, &t)) != dyadic(lhs as i64, 56) {
                    step_fail += 1;
                }
            }
            if !ok {
                step_fail += 1;
            }
        }

        let stepper = FixedStepper::new(&qp, solver, MODES[rng.gen_range(0..3)], tau_fx).unwrap();
        let raw: Vec<i64> = x0
            .iter()
            .map(|v| FxValue::quantize(v, solver, RoundingMode::Floor).unwrap().raw())
            .collect();
        let mut x = TrackedVector::from_raw(solver, &raw).unwrap();
        for _ in 0..30 {
            let step = stepper.step(&x).unwrap();
            let (xr, gr, nr) = (step.x.raws(), step.g.raws(), step.next.raws());
            for i in 0..n {
                let v = xr[i] - nr[i] - gr[i];
                let (lo, hi) = (stepper.lower()[i].raw(), stepper.upper()[i].raw());
                let ok = if nr[i] == hi {
                    v >= 0
                } else if nr[i] == lo {
                    v <= 0
                } else {
                    v == 0
                };
                sub_checks += 1;
                if !ok {
                    sub_fail += 1;
                }
            }
            x = step.next;
        }
    }
    rep.check("setup", setup_fail == 0, format!("{setup_fail} instances with unverified L/sigma"));
    rep.check(
        "contraction",
        rate_fail == 0,
        format!("{rate_checks} iterates, {rate_fail} violations of the contraction bounds"),
    );
    rep.check("step_bound", step_fail == 0, format!("2e6 points, {step_fail} violations"));
    rep.check("subgradient", sub_fail == 0, format!("{sub_checks} components, {sub_fail} sign violations"));
}

// ---------------------------------------------------------------- 7

fn criterion7(rep: &mut Report) {
    let config = MpcConfig::three_mass_spring();
    let b = mpc::build(&config).unwrap();
    let n = b.condensed.n();
    let q = &b.condensed.q;
    rep.check("dimension", n == 4, format!("n = {n}"));
    rep.check(
        "pd",
        linalg::is_symmetric(q) && qp::is_positive_definite(q),
        "condensed Q symmetric and positive definite",
    );
    let fq = &b.quantized.family.q_set[0];
    rep.check(
        "quantized_pd",
        linalg::is_symmetric(fq) && qp::is_positive_definite(fq),
        "quantized Q symmetric and positive definite",
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let theta_len = b.condensed.gain[0].len();
    let mut mismatches = 0;
    for _ in 0..100 {
        let rnd = |rng: &mut ChaCha8Rng| Rat::new(rng.gen_range(-1000..=1000).into(), rng.gen_range(1..=97).into());
        let z: Vec<Rat> = (0..n).map(|_| rnd(&mut rng)).collect();
        let theta: Vec<Rat> = (0..theta_len).map(|_| rnd(&mut rng)).collect();
        if b.condensed.objective(&z, &theta) != mpc::rollout_cost(&b.model, &b.params, &z, &theta) {
            mismatches += 1;
        }
    }
    rep.check("rollout", mismatches == 0, format!("100 inputs, {mismatches} mismatches"));
    let verdict = if reference_match(b.exact_l, b.exact_sigma) {
        "match"
    } else {
        "no match"
    };
    rep.note(format!(
        "L = {:.6}, sigma = {:.6} vs reference ({REFERENCE_L}, {REFERENCE_SIGMA}): {verdict}",
        b.exact_l, b.exact_sigma
    ));
}

// ---------------------------------------------------------------- 8

fn criterion8(rep: &mut Report) {
    let data = fmt(2, 2);
    let q: RatMat = vec![vec![r("1.5"), r("0.25")], vec![r("0.25"), r("1")]];
    let fam = ProblemFamily::new(
        vec![q],
        vec![r("-0.5"), r("-0.5")],
        vec![r("0.5"), r("0.5")],
        vec![r("-1"), r("-1")],
        vec![r("-1"), r("-1")],
        vec![r("1"), r("1")],
        vec![r("1"), r("1")],
        data,
    )
    .unwrap();
    let (l, _) = qp::family_constants(&fam).unwrap();
    // one step size on the coarsest grid keeps the exact map fixed across q
    let tau = qp::step_size(&l, fmt(3, 4)).unwrap();
    let mut prev: Option<Rat> = None;
    let mut values = Vec::new();
    let mut ok = true;
    for q in [4, 6, 8] {
        let setup = CheckSetup::new(fam.clone(), fmt(3, q), RoundingMode::Floor, tau).unwrap();
        let v = Verifier::new(setup, BackendKind::exhaustive(1 << 32));
        let omega = v.extremum(QueryKind::OmegaSq, None).unwrap().unwrap();
        if let Some(p) = &prev {
            ok &= omega <= *p;
        }
        values.push(format!("q={q}: {}", to_sci(&omega, 4)));
        prev = Some(omega);
    }
    rep.check("monotone", ok, format!("Omega^2 {}", values.join(", ")));
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let mut instances = Vec::new();
    let mut unexpected = 0;
    let names = [
        "inner-product bound example",
        "certificate arithmetic",
        "bisection equals exhaustive extrema",
        "oracle equivalence",
        "PGM property suite",
        "end-to-end soundness",
        "MPC pipeline",
        "Omega monotonicity",
    ];
    for (idx, name) in names.iter().enumerate() {
        let n = idx as u32 + 1;
        let started = Instant::now();
        let mut rep = Report::default();
        match n {
            1 => criterion1(&mut rep),
            2 => criterion2(&mut rep),
            3 => criterion3(&mut rep, &mut instances),
            4 => criterion4(&mut rep),
            5 => criterion5(&mut rep),
            6 => criterion6(&mut rep, &instances),
            7 => criterion7(&mut rep),
            _ => criterion8(&mut rep),
        }
        let secs = started.elapsed().as_secs_f64();
        let status = if rep.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {status} [{secs:.2}s]");
        for (check, detail) in &rep.failures {
            let known = KNOWN_FAILURES.contains(&(n, *check));
            if !known {
                unexpected += 1;
            }
            println!("    failed {check}: {detail}{}", if known { " (known, see notes)" } else { "" });
        }
        for note in &rep.notes {
            println!("    {note}");
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}
