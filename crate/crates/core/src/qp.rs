//! Box-constrained QP instances, the uncertainty family they are drawn from,
//! and the constants `L`, `σ`, `τ`.

use std::path::Path;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{is_on_grid, FxError, FxFormat, FxValue, RoundingMode};
use crate::linalg::{self, RatMat};
use crate::rational::{dyadic, from_f64, pow2, Rat};

#[derive(Debug, Error)]
pub enum QpError {
    #[error("matrix is not symmetric")]
    NonSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what}[{index}] is not representable in {fmt}")]
    OffGrid {
        what: &'static str,
        index: usize,
        fmt: FxFormat,
    },
    #[error("empty box in coordinate {0}: need l < u")]
    EmptyBox(usize),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("step size underflows: floor(2^q / L) = 0 for L = {0}")]
    Underflow(String),
    #[error("step size 1/L does not fit the integer bits of {0}")]
    StepOverflow(FxFormat),
    #[error(transparent)]
    Fx(#[from] FxError),
    #[error("cannot read problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
}

/// One realization of `min ½xᵀQx + cᵀx  s.t.  l ≤ x ≤ u`, with all data on
/// the `fmt` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxQP {
    q: RatMat,
    c: Vec<Rat>,
    l: Vec<Rat>,
    u: Vec<Rat>,
    fmt: FxFormat,
}

fn check_grid(what: &'static str, v: &[Rat], fmt: FxFormat) -> Result<(), QpError> {
    match v.iter().position(|x| !is_on_grid(x, fmt)) {
        Some(index) => Err(QpError::OffGrid { what, index, fmt }),
        None => Ok(()),
    }
}

/// Exact positive-definiteness test: every pivot of the symmetric
/// elimination must be strictly positive.
pub fn is_positive_definite(m: &RatMat) -> bool {
    let n = m.len();
    let mut a = m.clone();
    for k in 0..n {
        if !a[k][k].is_positive() {
            return false;
        }
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = &a[i][k] / &a[k][k];
            for j in k..n {
                let d = &f * &a[k][j];
                a[i][j] -= d;
            }
        }
    }
    true
}

fn check_matrix(q: &RatMat, n: usize, fmt: FxFormat) -> Result<(), QpError> {
    if q.len() != n || q.iter().any(|r| r.len() != n) {
        return Err(QpError::Dimension(format!("Q must be {n}x{n}")));
    }
    for row in q {
        check_grid("Q", row, fmt)?;
    }
    if !linalg::is_symmetric(q) {
        return Err(QpError::NonSymmetric);
    }
    if !is_positive_definite(q) {
        return Err(QpError::NotPositiveDefinite);
    }
    Ok(())
}

impl BoxQP {
    pub fn new(q: RatMat, c: Vec<Rat>, l: Vec<Rat>, u: Vec<Rat>, fmt: FxFormat) -> Result<Self, QpError> {
        let n = c.len();
        if l.len() != n || u.len() != n {
            return Err(QpError::Dimension("c, l and u lengths differ".into()));
        }
        check_matrix(&q, n, fmt)?;
        check_grid("c", &c, fmt)?;
        check_grid("l", &l, fmt)?;
        check_grid("u", &u, fmt)?;
        if let Some(i) = (0..n).find(|&i| l[i] >= u[i]) {
            return Err(QpError::EmptyBox(i));
        }
        Ok(Self { q, c, l, u, fmt })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn q(&self) -> &RatMat {
        &self.q
    }

    pub fn c(&self) -> &[Rat] {
        &self.c
    }

    pub fn l(&self) -> &[Rat] {
        &self.l
    }

    pub fn u(&self) -> &[Rat] {
        &self.u
    }

    pub fn fmt(&self) -> FxFormat {
        self.fmt
    }

    /// `f(x) = ½xᵀQx + cᵀx`, exactly.
    pub fn f_value(&self, x: &[Rat]) -> Rat {
        let qx = linalg::rat_matvec(&self.q, x);
        linalg::dot(x, &qx) / Rat::from_integer(2.into()) + linalg::dot(&self.c, x)
    }

    /// `∇f(x) = Qx + c`, exactly.
    pub fn grad(&self, x: &[Rat]) -> Vec<Rat> {
        linalg::rat_matvec(&self.q, x)
            .into_iter()
            .zip(&self.c)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn contains(&self, x: &[Rat]) -> bool {
        x.len() == self.n() && x.iter().zip(&self.l).zip(&self.u).all(|((v, l), u)| l <= v && v <= u)
    }
}

/// The family of problems: a finite set of Hessians and componentwise ranges
/// for `c`, `l` and `u`, all on the data grid `fmt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemFamily {
    pub q_set: Vec<RatMat>,
    pub c_min: Vec<Rat>,
    pub c_max: Vec<Rat>,
    pub l_min: Vec<Rat>,
    pub l_max: Vec<Rat>,
    pub u_min: Vec<Rat>,
    pub u_max: Vec<Rat>,
    pub fmt: FxFormat,
}

impl ProblemFamily {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q_set: Vec<RatMat>,
        c_min: Vec<Rat>,
        c_max: Vec<Rat>,
        l_min: Vec<Rat>,
        l_max: Vec<Rat>,
        u_min: Vec<Rat>,
        u_max: Vec<Rat>,
        fmt: FxFormat,
    ) -> Result<Self, QpError> {
        let n = c_min.len();
        if q_set.is_empty() {
            return Err(QpError::InvalidFamily("empty Q set".into()));
        }
        for v in [&c_max, &l_min, &l_max, &u_min, &u_max] {
            if v.len() != n {
                return Err(QpError::Dimension("family vectors differ in length".into()));
            }
        }
        for q in &q_set {
            check_matrix(q, n, fmt)?;
        }
        for (what, v) in [
            ("c_min", &c_min),
            ("c_max", &c_max),
            ("l_min", &l_min),
            ("l_max", &l_max),
            ("u_min", &u_min),
            ("u_max", &u_max),
        ] {
            check_grid(what, v, fmt)?;
        }
        for i in 0..n {
            if c_min[i] > c_max[i] || l_min[i] > l_max[i] || u_min[i] > u_max[i] {
                return Err(QpError::InvalidFamily(format!("range {i} has min > max")));
            }
            if l_max[i] >= u_min[i] {
                return Err(QpError::EmptyBox(i));
            }
        }
        Ok(Self {
            q_set,
            c_min,
            c_max,
            l_min,
            l_max,
            u_min,
            u_max,
            fmt,
        })
    }

    /// Family with a single realization.
    pub fn singleton(qp: &BoxQP) -> Self {
        Self {
            q_set: vec![qp.q.clone()],
            c_min: qp.c.clone(),
            c_max: qp.c.clone(),
            l_min: qp.l.clone(),
            l_max: qp.l.clone(),
            u_min: qp.u.clone(),
            u_max: qp.u.clone(),
            fmt: qp.fmt,
        }
    }

    pub fn n(&self) -> usize {
        self.c_min.len()
    }

    pub fn realize(&self, q_index: usize, c: Vec<Rat>, l: Vec<Rat>, u: Vec<Rat>) -> Result<BoxQP, QpError> {
        let q = self
            .q_set
            .get(q_index)
            .ok_or_else(|| QpError::InvalidFamily(format!("no Q with index {q_index}")))?;
        let inside = |v: &[Rat], lo: &[Rat], hi: &[Rat]| v.iter().zip(lo).zip(hi).all(|((x, a), b)| a <= x && x <= b);
        if !inside(&c, &self.c_min, &self.c_max)
            || !inside(&l, &self.l_min, &self.l_max)
            || !inside(&u, &self.u_min, &self.u_max)
        {
            return Err(QpError::InvalidFamily("realization outside the family ranges".into()));
        }
        BoxQP::new(q.clone(), c, l, u, self.fmt)
    }

    /// The realization with every range at its lower end.
    pub fn nominal(&self) -> BoxQP {
        BoxQP {
            q: self.q_set[0].clone(),
            c: self.c_min.clone(),
            l: self.l_min.clone(),
            u: self.u_max.clone(),
            fmt: self.fmt,
        }
    }
}

/// Smoothness, strong convexity and the step size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constants {
    pub l_smooth: Rat,
    pub sigma: Rat,
    pub tau: FxValue,
}

/// Extreme eigenvalues of a symmetric matrix (floating point, cyclic Jacobi).
pub fn eigen_extrema(m: &RatMat) -> Result<(f64, f64), QpError> {
    if !linalg::is_symmetric(m) {
        return Err(QpError::NonSymmetric);
    }
    let ev = linalg::symmetric_eigenvalues(&linalg::to_f64_mat(m));
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(QpError::Dimension("empty matrix".into())),
    }
}

/// Extreme eigenvalues widened outward by `10·ε_mach·‖M‖_F` so that
/// `σ ≤ λ_min` and `L ≥ λ_max` hold for the exact matrix.
pub fn sound_extrema(m: &RatMat) -> Result<(Rat, Rat), QpError> {
    let (lo, hi) = eigen_extrema(m)?;
    let margin = 10.0 * f64::EPSILON * linalg::frobenius(&linalg::to_f64_mat(m)) * (1.0 + f64::EPSILON);
    let margin = from_f64(margin).expect("finite margin");
    let lo = from_f64(lo).expect("finite eigenvalue") - &margin;
    let hi = from_f64(hi).expect("finite eigenvalue") + &margin;
    Ok((lo, hi))
}

/// `(L, σ)` over the whole family, with outward rounding.
pub fn family_constants(fam: &ProblemFamily) -> Result<(Rat, Rat), QpError> {
    let mut l_max: Option<Rat> = None;
    let mut s_min: Option<Rat> = None;
    for q in &fam.q_set {
        let (lo, hi) = sound_extrema(q)?;
        l_max = Some(l_max.map_or(hi.clone(), |v| v.max(hi)));
        s_min = Some(s_min.map_or(lo.clone(), |v| v.min(lo)));
    }
    let sigma = s_min.ok_or_else(|| QpError::InvalidFamily("empty Q set".into()))?;
    if !sigma.is_positive() {
        return Err(QpError::NotPositiveDefinite);
    }
    Ok((l_max.unwrap(), sigma))
}

/// Largest `τ` on the `fmt` grid with `τ ≤ 1/L`.
pub fn step_size(l_smooth: &Rat, fmt: FxFormat) -> Result<FxValue, QpError> {
    if !l_smooth.is_positive() {
        return Err(QpError::Underflow(l_smooth.to_string()));
    }
    let raw: BigInt = (Rat::from_integer(pow2(fmt.q())) / l_smooth).floor().to_integer();
    if raw.is_zero() {
        return Err(QpError::Underflow(crate::rational::to_sci(l_smooth, 6)));
    }
    let raw = raw.to_i64().ok_or(QpError::StepOverflow(fmt))?;
    FxValue::from_raw(raw, fmt).map_err(|_| QpError::StepOverflow(fmt))
}

pub fn constants(fam: &ProblemFamily, solver: FxFormat) -> Result<Constants, QpError> {
    let (l_smooth, sigma) = family_constants(fam)?;
    let tau = step_size(&l_smooth, solver)?;
    Ok(Constants { l_smooth, sigma, tau })
}

// ---------------------------------------------------------------------------
// Problem file

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FormatSection {
    pub p: u32,
    pub q: u32,
    pub p_prime: u32,
    pub q_prime: u32,
    #[serde(default)]
    pub rounding: RoundingMode,
}

/// On-disk problem description. Every number is a raw integer scaled by
/// `2^{q_prime}` (or `2^q` for `x0`), so loading is bit-exact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ProblemFile {
    pub format: FormatSection,
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: Vec<i64>,
    #[serde(rename = "Q_set", default, skip_serializing_if = "Option::is_none")]
    pub q_set: Option<Vec<Vec<i64>>>,
    pub c_min: Vec<i64>,
    pub c_max: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_min: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_min: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<Vec<i64>>,
    /// Initial point for `solve`, raw at the solver precision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

/// Solver precision and rounding read from a problem file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverSetup {
    pub fmt: FxFormat,
    pub mode: RoundingMode,
}

fn raw_vec(raw: &[i64], fmt: FxFormat) -> Vec<Rat> {
    raw.iter().map(|&r| dyadic(r, fmt.q())).collect()
}

fn raw_matrix(raw: &[i64], n: usize, fmt: FxFormat) -> Result<RatMat, QpError> {
    if raw.len() != n * n {
        return Err(QpError::Dimension(format!("Q has {} entries, expected {}", raw.len(), n * n)));
    }
    Ok(raw.chunks(n).map(|r| raw_vec(r, fmt)).collect())
}

fn to_raw(v: &[Rat], fmt: FxFormat) -> Result<Vec<i64>, QpError> {
    v.iter()
        .map(|x| FxValue::quantize(x, fmt, RoundingMode::Floor).map(FxValue::raw))
        .collect::<Result<_, _>>()
        .map_err(QpError::from)
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, QpError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), QpError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn data_format(&self) -> Result<FxFormat, QpError> {
        Ok(FxFormat::new(self.format.p_prime, self.format.q_prime)?)
    }

    pub fn solver(&self) -> Result<SolverSetup, QpError> {
        Ok(SolverSetup {
            fmt: FxFormat::new(self.format.p, self.format.q)?,
            mode: self.format.rounding,
        })
    }

    pub fn family(&self) -> Result<ProblemFamily, QpError> {
        let fmt = self.data_format()?;
        let n = self.n;
        let mut q_set = vec![raw_matrix(&self.q, n, fmt)?];
        for extra in self.q_set.iter().flatten() {
            q_set.push(raw_matrix(extra, n, fmt)?);
        }
        let pick = |fixed: &Option<Vec<i64>>, ranged: &Option<Vec<i64>>, what: &str| -> Result<Vec<Rat>, QpError> {
            ranged
                .as_ref()
                .or(fixed.as_ref())
                .map(|v| raw_vec(v, fmt))
                .ok_or_else(|| QpError::InvalidFamily(format!("missing {what}")))
        };
        let fam = ProblemFamily::new(
            q_set,
            raw_vec(&self.c_min, fmt),
            raw_vec(&self.c_max, fmt),
            pick(&self.l, &self.l_min, "l")?,
            pick(&self.l, &self.l_max, "l")?,
            pick(&self.u, &self.u_min, "u")?,
            pick(&self.u, &self.u_max, "u")?,
            fmt,
        )?;
        let solver = self.solver()?;
        if solver.fmt.q() < fmt.q() || solver.fmt.p() < fmt.p() {
            return Err(QpError::InvalidFamily(format!(
                "solver format {} must dominate data format {}",
                solver.fmt, fmt
            )));
        }
        Ok(fam)
    }

    pub fn from_family(fam: &ProblemFamily, solver: SolverSetup) -> Result<Self, QpError> {
        let fmt = fam.fmt;
        let flat = |m: &RatMat| to_raw(&m.iter().flatten().cloned().collect::<Vec<_>>(), fmt);
        let extra = fam.q_set[1..].iter().map(flat).collect::<Result<Vec<_>, _>>()?;
        let fixed_l = fam.l_min == fam.l_max;
        let fixed_u = fam.u_min == fam.u_max;
        Ok(Self {
            format: FormatSection {
                p: solver.fmt.p(),
                q: solver.fmt.q(),
                p_prime: fmt.p(),
                q_prime: fmt.q(),
                rounding: solver.mode,
            },
            n: fam.n(),
            q: flat(&fam.q_set[0])?,
            q_set: (!extra.is_empty()).then_some(extra),
            c_min: to_raw(&fam.c_min, fmt)?,
            c_max: to_raw(&fam.c_max, fmt)?,
            l: if fixed_l { Some(to_raw(&fam.l_min, fmt)?) } else { None },
            u: if fixed_u { Some(to_raw(&fam.u_min, fmt)?) } else { None },
            l_min: if fixed_l { None } else { Some(to_raw(&fam.l_min, fmt)?) },
            l_max: if fixed_l { None } else { Some(to_raw(&fam.l_max, fmt)?) },
            u_min: if fixed_u { None } else { Some(to_raw(&fam.u_min, fmt)?) },
            u_max: if fixed_u { None } else { Some(to_raw(&fam.u_max, fmt)?) },
            x0: None,
            notes: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fmt() -> FxFormat {
        FxFormat::new(8, 8).unwrap()
    }

    fn m(rows: &[&[i64]]) -> RatMat {
        rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect()
    }

    #[test]
    fn eigen_extrema_examples() {
        let (lo, hi) = eigen_extrema(&vec![vec![int(2), int(0)], vec![int(0), ratio(1, 2)]]).unwrap();
        assert_eq!((lo, hi), (0.5, 2.0));
        let (lo, hi) = eigen_extrema(&m(&[&[2, 1], &[1, 2]])).unwrap();
        assert!((lo - 1.0).abs() < 1e-10 && (hi - 3.0).abs() < 1e-10 * 3.0);
        assert!(matches!(eigen_extrema(&m(&[&[2, 1], &[0, 2]])), Err(QpError::NonSymmetric)));
    }

    #[test]
    fn family_constants_examples() {
        let single = ProblemFamily::singleton(
            &BoxQP::new(m(&[&[2, 1], &[1, 2]]), vec![int(0); 2], vec![int(-1); 2], vec![int(1); 2], fmt()).unwrap(),
        );
        let (l, s) = family_constants(&single).unwrap();
        let slack = ratio(1, 1 << 40);
        assert!(l >= int(3) && l - int(3) < slack);
        assert!(s <= int(1) && int(1) - s < slack);

        let mut fam = single.clone();
        fam.q_set = vec![m(&[&[1, 0], &[0, 1]]), vec![vec![ratio(1, 2), int(0)], vec![int(0), int(2)]]];
        let (l, s) = family_constants(&fam).unwrap();
        assert!(l >= int(2) && l - int(2) < slack);
        assert!(s <= ratio(1, 2) && ratio(1, 2) - s < slack);

        fam.q_set = vec![m(&[&[1, 0], &[0, 1]])];
        let (l, s) = family_constants(&fam).unwrap();
        assert!(l >= int(1) && s <= int(1) && &l - &s < slack);
    }

    #[test]
    fn step_size_examples() {
        let f21 = FxFormat::new(10, 21).unwrap();
        let tau = step_size(&crate::rational::parse_rat("4.9645").unwrap(), f21).unwrap();
        assert_eq!(tau.raw(), 422429);
        let l = crate::rational::parse_rat("4.9645").unwrap();
        assert!(&tau.to_rat() * &l <= int(1));
        assert!((tau.to_rat() + f21.ulp()) * &l > int(1));

        assert_eq!(step_size(&int(2), fmt()).unwrap().to_rat(), ratio(1, 2));
        assert!(matches!(step_size(&int(512), fmt()), Err(QpError::Underflow(_))));
    }

    #[test]
    fn f_and_grad_examples() {
        let qp = BoxQP::new(m(&[&[2]]), vec![int(-2)], vec![int(0)], vec![int(10)], fmt()).unwrap();
        assert_eq!(qp.f_value(&[int(1)]), int(-1));
        assert_eq!(qp.grad(&[int(1)]), vec![int(0)]);
        assert_eq!(qp.f_value(&[int(0)]), int(0));
        assert_eq!(qp.grad(&[int(0)]), vec![int(-2)]);
    }

    #[test]
    fn smoothness_sandwich_on_random_pairs() {
        let qp = BoxQP::new(
            vec![vec![ratio(5, 2), ratio(1, 2)], vec![ratio(1, 2), ratio(3, 4)]],
            vec![ratio(1, 4), ratio(-3, 8)],
            vec![int(-1); 2],
            vec![int(1); 2],
            fmt(),
        )
        .unwrap();
        let (l, s) = family_constants(&ProblemFamily::singleton(&qp)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let half = ratio(1, 2);
        for _ in 0..10_000 {
            let mut pt = || -> Vec<Rat> { (0..2).map(|_| ratio(rng.gen_range(-512..=512), 256)).collect() };
            let (x, y) = (pt(), pt());
            let d = linalg::sub_vec(&x, &y);
            let gap = qp.f_value(&x) - qp.f_value(&y) - linalg::dot(&qp.grad(&y), &d);
            let nd = linalg::norm_sq(&d);
            assert!(gap <= &half * &l * &nd);
            assert!(gap >= &half * &s * &nd);
        }
    }

    #[test]
    fn rejects_invalid_problems() {
        let f = fmt();
        assert!(matches!(
            BoxQP::new(m(&[&[1, 2], &[2, 1]]), vec![int(0); 2], vec![int(-1); 2], vec![int(1); 2], f),
            Err(QpError::NotPositiveDefinite)
        ));
        assert!(matches!(
            BoxQP::new(m(&[&[1]]), vec![int(0)], vec![int(1)], vec![int(1)], f),
            Err(QpError::EmptyBox(0))
        ));
        assert!(matches!(
            BoxQP::new(vec![vec![ratio(1, 1024)]], vec![int(0)], vec![int(0)], vec![int(1)], f),
            Err(QpError::OffGrid { what: "Q", .. })
        ));
    }

    #[test]
    fn problem_file_round_trip() {
        let f = FxFormat::new(4, 6).unwrap();
        let fam = ProblemFamily::new(
            vec![vec![vec![int(2), ratio(1, 8)], vec![ratio(1, 8), int(2)]]],
            vec![ratio(-1, 2), ratio(-1, 4)],
            vec![ratio(1, 2), ratio(1, 4)],
            vec![ratio(-1, 4); 2],
            vec![ratio(-1, 4); 2],
            vec![ratio(1, 4); 2],
            vec![ratio(1, 4); 2],
            f,
        )
        .unwrap();
        let solver = SolverSetup {
            fmt: FxFormat::new(4, 8).unwrap(),
            mode: RoundingMode::Floor,
        };
        let file = ProblemFile::from_family(&fam, solver).unwrap();
        assert_eq!(file.q, vec![128, 8, 8, 128]);
        let text = serde_json::to_string(&file).unwrap();
        let back: ProblemFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.family().unwrap(), fam);
        assert_eq!(back.solver().unwrap(), solver);
    }
}
