//! Realizations and grid points of a problem family.
//!
//! Exhaustive enumeration is lexicographic over (Q index, c grid, ℓ grid,
//! u grid, x̂ grid) with the last coordinate varying fastest.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fixedpoint::FxFormat;
use crate::qp::{BoxQP, ProblemFamily};
use crate::rational::{dyadic, pow2, Rat};

use super::kernel::Kernel;
use super::{CertifyError, CheckSetup};

/// One member of the family, as raw integers in the data format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub q_index: usize,
    pub c: Vec<i64>,
    pub l: Vec<i64>,
    pub u: Vec<i64>,
}

/// A realization together with a feasible solver-grid point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Point {
    pub realization: Realization,
    /// Raw solver integers.
    pub x: Vec<i64>,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: i64,
    hi: i64,
    stride: u64,
}

impl Axis {
    fn len(&self) -> u64 {
        (self.hi - self.lo) as u64 / self.stride + u64::from(!((self.hi - self.lo) as u64).is_multiple_of(self.stride)) + 1
    }

    fn at(&self, k: u64) -> i64 {
        (self.lo as i128 + k as i128 * self.stride as i128).min(self.hi as i128) as i64
    }

    fn values(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len()).map(|k| self.at(k))
    }
}

fn raw_of(v: &Rat, q: u32) -> i64 {
    (v * Rat::from_integer(pow2(q)))
        .to_integer()
        .to_i64()
        .expect("family values fit the data format")
}

#[derive(Debug, Clone)]
pub struct SearchSpace {
    solver: FxFormat,
    data: FxFormat,
    n: usize,
    /// Each Q of the set as raw solver integers, row-major.
    q_solver: Vec<Vec<i64>>,
    q_data: Vec<Vec<i64>>,
    c: Vec<Axis>,
    l: Vec<Axis>,
    u: Vec<Axis>,
    c_stride: u64,
}

impl SearchSpace {
    pub fn new(setup: &CheckSetup, c_stride: u64) -> Self {
        let fam = &setup.family;
        let dq = fam.fmt.q();
        let axes = |lo: &[Rat], hi: &[Rat], stride: u64| -> Vec<Axis> {
            lo.iter()
                .zip(hi)
                .map(|(a, b)| Axis {
                    lo: raw_of(a, dq),
                    hi: raw_of(b, dq),
                    stride: stride.max(1),
                })
                .collect()
        };
        Self {
            solver: setup.fmt,
            data: fam.fmt,
            n: fam.n(),
            q_solver: fam
                .q_set
                .iter()
                .map(|m| m.iter().flatten().map(|v| raw_of(v, setup.fmt.q())).collect())
                .collect(),
            q_data: fam
                .q_set
                .iter()
                .map(|m| m.iter().flatten().map(|v| raw_of(v, dq)).collect())
                .collect(),
            c: axes(&fam.c_min, &fam.c_max, c_stride),
            l: axes(&fam.l_min, &fam.l_max, 1),
            u: axes(&fam.u_min, &fam.u_max, 1),
            c_stride: c_stride.max(1),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c_stride(&self) -> u64 {
        self.c_stride
    }

    fn lift(&self) -> u32 {
        self.solver.q() - self.data.q()
    }

    fn axes(&self) -> impl Iterator<Item = &Axis> {
        self.c.iter().chain(&self.l).chain(&self.u)
    }

    /// Number of realizations, if it fits in `u64`.
    pub fn realization_count(&self) -> Option<u64> {
        self.axes()
            .try_fold(self.q_solver.len() as u64, |acc, a| acc.checked_mul(a.len()))
    }

    /// Total number of (realization, x̂) pairs.
    pub fn cardinality(&self) -> BigInt {
        let s = BigInt::from(1u64) << self.lift();
        let mut total = BigInt::from(self.q_solver.len());
        for a in &self.c {
            total *= a.len();
        }
        for (la, ua) in self.l.iter().zip(&self.u) {
            // Σ_{ℓ,u} ((u − ℓ)·s + 1), separable per coordinate.
            let (nl, nu) = (BigInt::from(la.len()), BigInt::from(ua.len()));
            let sum_l: BigInt = la.values().map(BigInt::from).sum();
            let sum_u: BigInt = ua.values().map(BigInt::from).sum();
            total *= &nl * &nu + &s * (&nl * &sum_u - &nu * &sum_l);
        }
        total
    }

    pub fn realization(&self, mut index: u64) -> Realization {
        let axes: Vec<&Axis> = self.axes().collect();
        let mut vals = vec![0i64; axes.len()];
        for (k, a) in axes.iter().enumerate().rev() {
            let len = a.len();
            vals[k] = a.at(index % len);
            index /= len;
        }
        let n = self.n;
        Realization {
            q_index: index as usize,
            c: vals[..n].to_vec(),
            l: vals[n..2 * n].to_vec(),
            u: vals[2 * n..].to_vec(),
        }
    }

    /// Solver-raw box of a realization.
    pub fn solver_box(&self, r: &Realization) -> (Vec<i64>, Vec<i64>) {
        let s = self.lift();
        (
            r.l.iter().map(|v| v << s).collect(),
            r.u.iter().map(|v| v << s).collect(),
        )
    }

    pub fn grid_size(&self, r: &Realization) -> u64 {
        let (l, u) = self.solver_box(r);
        l.iter()
            .zip(&u)
            .try_fold(1u64, |acc, (a, b)| acc.checked_mul((b - a) as u64 + 1))
            .unwrap_or(u64::MAX)
    }

    /// `index`-th grid point of the realization's box, last coordinate fastest.
    pub fn grid_point(&self, lo: &[i64], hi: &[i64], mut index: u64, out: &mut [i64]) {
        for k in (0..lo.len()).rev() {
            let len = (hi[k] - lo[k]) as u64 + 1;
            out[k] = lo[k] + (index % len) as i64;
            index /= len;
        }
    }

    pub fn kernel(&self, setup: &CheckSetup, r: &Realization) -> Option<Kernel> {
        let s = self.lift();
        let (l, u) = self.solver_box(r);
        Kernel::new(
            self.solver,
            setup.mode,
            setup.tau.raw(),
            self.q_solver[r.q_index].clone(),
            r.c.iter().map(|v| v << s).collect(),
            l,
            u,
        )
    }

    pub fn to_qp(&self, fam: &ProblemFamily, r: &Realization) -> Result<BoxQP, CertifyError> {
        let q = self.data.q();
        let v = |raw: &[i64]| raw.iter().map(|&x| dyadic(x, q)).collect::<Vec<_>>();
        Ok(fam.realize(r.q_index, v(&r.c), v(&r.l), v(&r.u))?)
    }

    pub fn q_data(&self, index: usize) -> &[i64] {
        &self.q_data[index]
    }

    /// Uniform draw per axis; `x̂` uniform in the drawn box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        let draw = |rng: &mut R, a: &Axis| a.at(rng.gen_range(0..a.len()));
        let q_index = rng.gen_range(0..self.q_solver.len());
        let c = self.c.iter().map(|a| draw(rng, a)).collect();
        let l = self.l.iter().map(|a| draw(rng, a)).collect();
        let u = self.u.iter().map(|a| draw(rng, a)).collect();
        let realization = Realization { q_index, c, l, u };
        let (lo, hi) = self.solver_box(&realization);
        let x = lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a..=b)).collect();
        Point { realization, x }
    }
}
