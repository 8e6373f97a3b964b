//! Exact and fixed-point proximal gradient iterations for [`BoxQP`].

use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::fixedpoint::{FxError, FxFormat, FxMatrix, FxValue, RoundingMode, Tracked, TrackedVector};
use crate::linalg::{self, RatMat};
use crate::qp::{self, BoxQP, QpError};
use crate::rational::{to_exact_decimal, to_ratio_string, Rat};

#[derive(Debug, Error)]
pub enum PgmError {
    #[error(transparent)]
    Fx(#[from] FxError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("data of format {data} cannot be held exactly in solver format {solver}")]
    Precision { data: FxFormat, solver: FxFormat },
    #[error("initial point is not a feasible grid point")]
    InfeasibleStart,
    #[error("reference solve did not converge in {0} iterations")]
    IterationLimit(usize),
}

/// Componentwise `min(u, max(l, v))`.
fn project(v: Rat, l: &Rat, u: &Rat) -> Rat {
    if &v < l {
        l.clone()
    } else if &v > u {
        u.clone()
    } else {
        v
    }
}

/// `T_τ(x) = min(u, max(l, x − τ∇f(x)))`, exactly.
pub fn composite_map(qp: &BoxQP, tau: &Rat, x: &[Rat]) -> Vec<Rat> {
    qp.grad(x)
        .into_iter()
        .zip(x)
        .zip(qp.l().iter().zip(qp.u()))
        .map(|((g, xi), (l, u))| project(xi - tau * g, l, u))
        .collect()
}

/// `k` exact iterations; returns `x^0, …, x^k`.
pub fn pgm_exact(qp: &BoxQP, tau: &Rat, x0: &[Rat], k: usize) -> Vec<Vec<Rat>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(x0.to_vec());
    for _ in 0..k {
        let next = composite_map(qp, tau, out.last().unwrap());
        out.push(next);
    }
    out
}

/// A realization loaded into the solver precision, ready for fixed-point
/// steps.
#[derive(Debug, Clone)]
pub struct FixedStepper {
    fmt: FxFormat,
    mode: RoundingMode,
    tau: Tracked,
    q: FxMatrix,
    c: Vec<Tracked>,
    l: Vec<FxValue>,
    u: Vec<FxValue>,
}

/// Result of one fixed-point step from `x̂^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedStep {
    /// `x̂^k` with its error dropped (the step's input).
    pub x: TrackedVector,
    /// `ĝ_τ(x̂^k)`; its shadow is `τ∇f(x̂^k)`.
    pub g: TrackedVector,
    /// `x̂^{k+1}`; its shadow is `T_τ(x̂^k)`.
    pub next: TrackedVector,
}

impl FixedStepper {
    pub fn new(qp: &BoxQP, fmt: FxFormat, mode: RoundingMode, tau: FxValue) -> Result<Self, PgmError> {
        if fmt.q() < qp.fmt().q() || fmt.p() < qp.fmt().p() {
            return Err(PgmError::Precision {
                data: qp.fmt(),
                solver: fmt,
            });
        }
        let load = |v: &Rat| FxValue::quantize(v, fmt, RoundingMode::Floor);
        let n = qp.n();
        let q = FxMatrix::new(
            n,
            n,
            qp.q().iter().flatten().map(load).collect::<Result<_, _>>()?,
        )?;
        let c = qp.c().iter().map(|v| load(v).map(Tracked::exact)).collect::<Result<_, _>>()?;
        let l = qp.l().iter().map(load).collect::<Result<_, _>>()?;
        let u = qp.u().iter().map(load).collect::<Result<_, _>>()?;
        let tau = Tracked::exact(tau.convert(fmt, RoundingMode::Floor)?);
        Ok(Self {
            fmt,
            mode,
            tau,
            q,
            c,
            l,
            u,
        })
    }

    pub fn fmt(&self) -> FxFormat {
        self.fmt
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    pub fn lower(&self) -> &[FxValue] {
        &self.l
    }

    pub fn upper(&self) -> &[FxValue] {
        &self.u
    }

    /// `ĝ_τ(x̂)`: per-row fixed-point dot `Q_i·x̂`, exact `+ c_i`, then one
    /// rounded multiplication by `τ`.
    pub fn gradient_step(&self, x: &TrackedVector) -> Result<TrackedVector, FxError> {
        let qx = self.q.matvec(x, self.mode)?;
        let g = qx
            .items()
            .iter()
            .zip(&self.c)
            .map(|(a, c)| self.tau.mul(&a.add(c)?, self.mode))
            .collect::<Result<_, _>>()?;
        TrackedVector::new(self.fmt, g)
    }

    /// One iteration: `x̂^{k+1} = min(u, max(l, x̂^k − ĝ_τ(x̂^k)))`. The input
    /// error is dropped first so the shadow of the result is `T_τ(x̂^k)`.
    pub fn step(&self, x: &TrackedVector) -> Result<FixedStep, FxError> {
        let x = TrackedVector::new(self.fmt, x.items().iter().map(Tracked::forget_err).collect())?;
        let g = self.gradient_step(&x)?;
        let moved = x.sub(&g)?;
        let next = moved
            .items()
            .iter()
            .zip(self.l.iter().zip(&self.u))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect::<Result<_, _>>()?;
        let next = TrackedVector::new(self.fmt, next)?;
        Ok(FixedStep { x, g, next })
    }

    pub fn contains(&self, x: &TrackedVector) -> bool {
        x.len() == self.l.len()
            && x.items()
                .iter()
                .zip(self.l.iter().zip(&self.u))
                .all(|(v, (l, u))| l.raw() <= v.raw() && v.raw() <= u.raw())
    }
}

/// `d̂² = ‖a − b‖²` in fixed point: exact subtraction, then the rounded dot.
pub fn dhat2(a: &TrackedVector, b: &TrackedVector, mode: RoundingMode) -> Result<Tracked, FxError> {
    let d = a.sub(b)?;
    d.dot(&d, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    /// `d̂² < ε̂` fired after computing `x̂^{k+1}`.
    ToleranceHit,
    /// `k` reached `k_max` without the tolerance firing.
    KmaxHit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    #[default]
    Full,
    ExitOnly,
}

/// One row of a fixed-point trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub k: usize,
    pub x: Vec<i64>,
    pub next: Vec<i64>,
    pub dhat2_raw: i64,
    /// `exact(d̂²) = ‖x̂^k − T_τ(x̂^k)‖²`.
    pub exact_d: Rat,
    /// `‖err(x̂^{k+1})‖² = ‖x̂^{k+1} − T_τ(x̂^k)‖²`.
    pub err_sq: Rat,
}

#[derive(Debug, Clone)]
pub struct PgmTrace {
    pub steps: Vec<TraceStep>,
    pub exit: ExitReason,
    /// Iteration counter at exit.
    pub k: usize,
    /// The returned iterate: `x̂^{k+1}` on tolerance exit, `x̂^{k_max}` otherwise.
    pub output: TrackedVector,
}

impl PgmTrace {
    pub fn output_values(&self) -> Vec<Rat> {
        self.output.values()
    }

    /// CSV with raw iterates, raw `d̂²` and exact error norms.
    pub fn to_csv(&self) -> String {
        let n = self.output.len();
        let mut s = String::from("k");
        for i in 0..n {
            let _ = write!(s, ",x{i}");
        }
        for i in 0..n {
            let _ = write!(s, ",next{i}");
        }
        s.push_str(",dhat2_raw,exact_d,err_sq\n");
        for st in &self.steps {
            let _ = write!(s, "{}", st.k);
            for v in st.x.iter().chain(&st.next) {
                let _ = write!(s, ",{v}");
            }
            let render = |r: &Rat| to_exact_decimal(r).unwrap_or_else(|| to_ratio_string(r));
            let _ = writeln!(s, ",{},{},{}", st.dhat2_raw, render(&st.exact_d), render(&st.err_sq));
        }
        s
    }
}

/// Fixed-point PGM: repeat the step until `d̂²(x̂^k) < ε̂` or `k ≥ k_max`.
pub fn pgm_fixed(
    stepper: &FixedStepper,
    x0: &TrackedVector,
    eps_hat: FxValue,
    k_max: usize,
    retention: Retention,
) -> Result<PgmTrace, PgmError> {
    if x0.fmt() != stepper.fmt || !stepper.contains(x0) {
        return Err(PgmError::InfeasibleStart);
    }
    let mut x = x0.clone();
    let mut k = 0;
    let mut steps = Vec::new();
    loop {
        let step = stepper.step(&x)?;
        let d = dhat2(&step.x, &step.next, stepper.mode)?;
        let row = TraceStep {
            k,
            x: step.x.raws(),
            next: step.next.raws(),
            dhat2_raw: d.raw(),
            exact_d: d.shadow().clone(),
            err_sq: linalg::norm_sq(&step.next.errs()),
        };
        let hit = d.raw() < eps_hat.raw();
        if retention == Retention::Full || hit || k + 1 >= k_max {
            steps.push(row);
        }
        if hit {
            return Ok(PgmTrace {
                steps,
                exit: ExitReason::ToleranceHit,
                k,
                output: step.next,
            });
        }
        x = step.next;
        k += 1;
        if k >= k_max {
            return Ok(PgmTrace {
                steps,
                exit: ExitReason::KmaxHit,
                k,
                output: x,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSolution {
    pub x: Vec<Rat>,
    pub f: Rat,
    /// `‖x − T_τ(x)‖²` for the `τ` used in the check; zero when KKT holds
    /// exactly.
    pub residual_sq: Rat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
    Free,
}

/// Exact solution for a fixed guess of the active set, if consistent with
/// the optimality conditions.
fn solve_active_set(qp: &BoxQP, sides: &[Side]) -> Option<Vec<Rat>> {
    let n = qp.n();
    let mut x: Vec<Rat> = sides
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Side::Lower => qp.l()[i].clone(),
            Side::Upper => qp.u()[i].clone(),
            Side::Free => Rat::zero(),
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| sides[i] == Side::Free).collect();
    if !free.is_empty() {
        // Q_FF x_F = −(c_F + Q_FA x_A)
        let a: RatMat = free.iter().map(|&i| free.iter().map(|&j| qp.q()[i][j].clone()).collect()).collect();
        let b: Vec<Rat> = free
            .iter()
            .map(|&i| {
                let fixed: Rat = (0..n)
                    .filter(|j| sides[*j] != Side::Free)
                    .map(|j| &qp.q()[i][j] * &x[j])
                    .sum();
                -(&qp.c()[i] + fixed)
            })
            .collect();
        let sol = linalg::rat_solve(&a, &b)?;
        for (k, &i) in free.iter().enumerate() {
            x[i] = sol[k].clone();
        }
    }
    is_kkt(qp, &x).then_some(x)
}

/// Exact KKT test for the box QP.
pub fn is_kkt(qp: &BoxQP, x: &[Rat]) -> bool {
    if !qp.contains(x) {
        return false;
    }
    qp.grad(x).iter().enumerate().all(|(i, g)| {
        let (l, u) = (&qp.l()[i], &qp.u()[i]);
        if &x[i] == l && &x[i] == u {
            true
        } else if &x[i] == l {
            !g.is_negative()
        } else if &x[i] == u {
            !g.is_positive()
        } else {
            g.is_zero()
        }
    })
}

/// Exact minimizer. A floating-point PGM run identifies the active set, the
/// free coordinates are then solved exactly and the KKT conditions checked
/// in rationals. If the guess is wrong, all `3^n` active sets are tried.
pub fn solve_reference(qp: &BoxQP, tol: f64) -> Result<ReferenceSolution, PgmError> {
    const MAX_ITERS: usize = 200_000;
    let n = qp.n();
    let qf = linalg::to_f64_mat(qp.q());
    let cf: Vec<f64> = qp.c().iter().map(crate::rational::to_f64).collect();
    let lf: Vec<f64> = qp.l().iter().map(crate::rational::to_f64).collect();
    let uf: Vec<f64> = qp.u().iter().map(crate::rational::to_f64).collect();
    let (l_smooth, _) = qp::family_constants(&qp::ProblemFamily::singleton(qp))?;
    let step = 1.0 / crate::rational::to_f64(&l_smooth);
    let mut x: Vec<f64> = (0..n).map(|i| lf[i].max(0.0).min(uf[i])).collect();
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let g: f64 = (0..n).map(|j| qf[i][j] * x[j]).sum::<f64>() + cf[i];
                (x[i] - step * g).max(lf[i]).min(uf[i])
            })
            .collect();
        let diff = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if diff <= tol {
            converged = true;
            break;
        }
    }
    let guess: Vec<Side> = (0..n)
        .map(|i| {
            let scale = 1e-9 * (1.0 + (uf[i] - lf[i]).abs());
            if (x[i] - lf[i]).abs() <= scale {
                Side::Lower
            } else if (x[i] - uf[i]).abs() <= scale {
                Side::Upper
            } else {
                Side::Free
            }
        })
        .collect();
    let exact = solve_active_set(qp, &guess).or_else(|| {
        if n > 12 {
            return None;
        }
        (0..3usize.pow(n as u32)).find_map(|mut code| {
            let sides: Vec<Side> = (0..n)
                .map(|_| {
                    let s = [Side::Free, Side::Lower, Side::Upper][code % 3];
                    code /= 3;
                    s
                })
                .collect();
            solve_active_set(qp, &sides)
        })
    });
    let x = match exact {
        Some(x) => x,
        None => return Err(PgmError::IterationLimit(if converged { 0 } else { MAX_ITERS })),
    };
    let tau = crate::rational::from_f64(step).unwrap();
    let residual_sq = linalg::norm_sq(&linalg::sub_vec(&x, &composite_map(qp, &tau, &x)));
    Ok(ReferenceSolution {
        f: qp.f_value(&x),
        x,
        residual_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn fmt8() -> FxFormat {
        FxFormat::new(8, 8).unwrap()
    }

    fn toy(u: Rat) -> BoxQP {
        BoxQP::new(vec![vec![int(2)]], vec![int(-2)], vec![int(0)], vec![u], fmt8()).unwrap()
    }

    #[test]
    fn composite_map_examples() {
        let qp = toy(int(10));
        let tau = ratio(1, 2);
        assert_eq!(composite_map(&qp, &tau, &[int(0)]), vec![int(1)]);
        assert_eq!(composite_map(&qp, &tau, &[int(1)]), vec![int(1)]);
        assert_eq!(composite_map(&qp, &tau, &[int(5)]), vec![int(1)]);
    }

    #[test]
    fn pgm_exact_examples() {
        let qp = toy(int(10));
        let tau = ratio(1, 2);
        let xs = pgm_exact(&qp, &tau, &[int(0)], 3);
        assert_eq!(xs, vec![vec![int(0)], vec![int(1)], vec![int(1)], vec![int(1)]]);
        assert_eq!(pgm_exact(&qp, &tau, &[int(3)], 0), vec![vec![int(3)]]);
    }

    #[test]
    fn reference_solutions() {
        let r = solve_reference(&toy(int(10)), 1e-13).unwrap();
        assert_eq!(r.x, vec![int(1)]);
        assert_eq!(r.f, int(-1));
        assert!(r.residual_sq.is_zero());

        let r = solve_reference(&toy(ratio(1, 2)), 1e-13).unwrap();
        assert_eq!(r.x, vec![ratio(1, 2)]);

        // interior: x* = −Q⁻¹c
        let qp = BoxQP::new(
            vec![vec![int(2), int(1)], vec![int(1), int(2)]],
            vec![int(-1), ratio(1, 2)],
            vec![int(-4); 2],
            vec![int(4); 2],
            fmt8(),
        )
        .unwrap();
        let r = solve_reference(&qp, 1e-13).unwrap();
        let want = linalg::rat_solve(qp.q(), &[int(1), ratio(-1, 2)]).unwrap();
        assert_eq!(r.x, want);
    }

    #[test]
    fn fixed_pgm_on_toy_problem() {
        let qp = toy(int(10));
        let f = fmt8();
        let tau = FxValue::quantize(&ratio(1, 2), f, RoundingMode::Floor).unwrap();
        let stepper = FixedStepper::new(&qp, f, RoundingMode::Floor, tau).unwrap();
        let x0 = TrackedVector::zeros(f, 1);
        let eps_hat = FxValue::from_raw(1, f).unwrap();
        let trace = pgm_fixed(&stepper, &x0, eps_hat, 100, Retention::Full).unwrap();
        // 0 → 1 → 1: the second step has d̂² = 0
        assert_eq!(trace.exit, ExitReason::ToleranceHit);
        assert_eq!(trace.k, 1);
        assert_eq!(trace.output_values(), vec![int(1)]);
        assert_eq!(trace.steps.last().unwrap().dhat2_raw, 0);

        let trace = pgm_fixed(&stepper, &x0, eps_hat, 1, Retention::Full).unwrap();
        assert_eq!(trace.exit, ExitReason::KmaxHit);
        assert_eq!(trace.k, 1);

        let csv = trace.to_csv();
        assert!(csv.starts_with("k,x0,next0,dhat2_raw,exact_d,err_sq\n0,0,256,256,1,0\n"));
    }

    #[test]
    fn shadow_of_step_is_composite_map() {
        let f = fmt8();
        let qp = BoxQP::new(
            vec![vec![ratio(3, 2), ratio(1, 8)], vec![ratio(1, 8), ratio(5, 4)]],
            vec![ratio(-5, 16), ratio(3, 16)],
            vec![ratio(-1, 2); 2],
            vec![ratio(1, 2); 2],
            f,
        )
        .unwrap();
        let tau = FxValue::from_raw(150, f).unwrap();
        let stepper = FixedStepper::new(&qp, f, RoundingMode::Floor, tau).unwrap();
        for a in (-128..=128).step_by(17) {
            for b in (-128..=128).step_by(23) {
                let x = TrackedVector::from_raw(f, &[a, b]).unwrap();
                let st = stepper.step(&x).unwrap();
                assert_eq!(st.next.shadows(), composite_map(&qp, &tau.to_rat(), &x.values()));
                assert!(stepper.contains(&st.next));
            }
        }
    }

    #[test]
    fn dhat2_examples() {
        let f = fmt8();
        let a = TrackedVector::from_raw(f, &[5, -3]).unwrap();
        let d = dhat2(&a, &a, RoundingMode::Floor).unwrap();
        assert!(d.value().is_zero() && d.err().is_zero());

        let a = TrackedVector::from_raw(f, &[22]).unwrap();
        let b = TrackedVector::zeros(f, 1);
        let d = dhat2(&a, &b, RoundingMode::Floor).unwrap();
        assert_eq!(d.value(), ratio(1, 256));
        assert_eq!(d.err(), ratio(228, 65536));

        let a = TrackedVector::from_raw(f, &[1; 4]).unwrap();
        let d = dhat2(&a, &TrackedVector::zeros(f, 4), RoundingMode::Floor).unwrap();
        assert_eq!(d.raw(), 0);
        assert_eq!(d.shadow(), &ratio(4, 65536));
    }

    #[test]
    fn rejects_infeasible_start() {
        let qp = toy(int(10));
        let f = fmt8();
        let stepper = FixedStepper::new(&qp, f, RoundingMode::Floor, FxValue::from_raw(128, f).unwrap()).unwrap();
        let x0 = TrackedVector::from_raw(f, &[-1]).unwrap();
        assert!(matches!(
            pgm_fixed(&stepper, &x0, FxValue::from_raw(1, f).unwrap(), 5, Retention::Full),
            Err(PgmError::InfeasibleStart)
        ));
    }
}
