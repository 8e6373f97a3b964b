//! One fixed-point PGM step evaluated on raw integers.
//!
//! Scales: raw solver values carry `q` fractional bits, exact gradient steps
//! `3q`, exact squared distances `6q`, and `‖x̂ − x̂⁺‖²` stays at `2q`.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::fixedpoint::{FxError, FxFormat, RoundingMode, TrackedVector};
use crate::pgm::{dhat2, FixedStepper};
use crate::rational::{pow2, Rat};

/// Largest dimension handled by the stack-allocated kernel.
pub const KERNEL_MAX_N: usize = 16;

/// Non-negative integer that is usually small.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Wide {
    Small(i128),
    Big(BigInt),
}

impl Wide {
    pub fn zero() -> Self {
        Wide::Small(0)
    }

    pub fn to_bigint(&self) -> BigInt {
        match self {
            Wide::Small(v) => BigInt::from(*v),
            Wide::Big(v) => v.clone(),
        }
    }

    /// `self · 2^{-bits}` as a rational.
    pub fn to_rat(&self, bits: u32) -> Rat {
        Rat::new(self.to_bigint(), pow2(bits))
    }

    fn normalize(v: BigInt) -> Self {
        match v.to_i128() {
            Some(s) => Wide::Small(s),
            None => Wide::Big(v),
        }
    }

    /// `Σ vᵢ²` with an i128 fast path.
    pub fn sum_sq(vals: &[i128]) -> Self {
        let mut acc: i128 = 0;
        for &v in vals {
            match v.checked_mul(v).and_then(|s| acc.checked_add(s)) {
                Some(next) => acc = next,
                None => {
                    let big: BigInt = vals.iter().map(|&v| BigInt::from(v) * BigInt::from(v)).sum();
                    return Wide::normalize(big);
                }
            }
        }
        Wide::Small(acc)
    }

    pub fn from_bigint(v: BigInt) -> Self {
        Wide::normalize(v)
    }
}

impl Ord for Wide {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Wide::Small(a), Wide::Small(b)) => a.cmp(b),
            _ => self.to_bigint().cmp(&other.to_bigint()),
        }
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowStage {
    /// Inside `ĝ_τ(x̂)`.
    Gradient,
    /// In `x̂ − ĝ_τ(x̂)`.
    Step,
    /// In the exit test `d̂²`.
    Distance,
}

/// All quantities the checks need from one step at one point.
///
/// Fields past the overflow stage are zero and must not be read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointEval {
    pub overflow: Option<OverflowStage>,
    /// `d̂²` raw at `q` bits.
    pub dhat2: i64,
    /// `‖τ∇f(x̂) − ĝ_τ(x̂)‖²` at `6q` bits.
    pub omega_sq: Wide,
    /// `‖x̂ − T_τ(x̂)‖²` at `6q` bits.
    pub exact_d: Wide,
    /// `‖x̂⁺ − T_τ(x̂)‖²` at `6q` bits.
    pub omega_small_sq: Wide,
    /// `‖x̂ − x̂⁺‖²` at `2q` bits.
    pub theta_sq: Wide,
}

impl PointEval {
    fn overflowed(stage: OverflowStage, omega_sq: Wide) -> Self {
        Self {
            overflow: Some(stage),
            dhat2: 0,
            omega_sq,
            exact_d: Wide::zero(),
            omega_small_sq: Wide::zero(),
            theta_sq: Wide::zero(),
        }
    }
}

/// A realization loaded as raw solver integers.
#[derive(Debug, Clone)]
pub struct Kernel {
    n: usize,
    q_bits: u32,
    limit: u128,
    mode: RoundingMode,
    t: i64,
    qm: Vec<i64>,
    c: Vec<i64>,
    l: Vec<i64>,
    u: Vec<i64>,
}

impl Kernel {
    /// `None` when the exact intermediates could exceed i128 or `n` is too
    /// large; callers then fall back to [`evaluate_tracked`].
    pub fn new(
        fmt: FxFormat,
        mode: RoundingMode,
        tau_raw: i64,
        qm: Vec<i64>,
        c: Vec<i64>,
        l: Vec<i64>,
        u: Vec<i64>,
    ) -> Option<Self> {
        let n = c.len();
        if n > KERNEL_MAX_N || qm.len() != n * n || l.len() != n || u.len() != n {
            return None;
        }
        let w = fmt.p() + fmt.q();
        let log_n = 64 - (n as u64 + 1).leading_zeros();
        if 3 * w + log_n + 2 > 126 {
            return None;
        }
        Some(Self {
            n,
            q_bits: fmt.q(),
            limit: fmt.raw_limit() as u128,
            mode,
            t: tau_raw,
            qm,
            c,
            l,
            u,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[i64] {
        &self.l
    }

    pub fn upper(&self) -> &[i64] {
        &self.u
    }

    #[inline]
    fn fits(&self, v: i128) -> bool {
        v.unsigned_abs() < self.limit
    }

    pub fn eval(&self, x: &[i64]) -> PointEval {
        let n = self.n;
        let q = self.q_bits;
        let mode = self.mode;
        let t = self.t as i128;

        let mut g = [0i128; KERNEL_MAX_N];
        let mut big_g = [0i128; KERNEL_MAX_N];
        let mut gerr = [0i128; KERNEL_MAX_N];
        for i in 0..n {
            let row = &self.qm[i * n..(i + 1) * n];
            let mut acc: i128 = 0;
            let mut exact: i128 = 0;
            for (&a, &b) in row.iter().zip(x) {
                let w = a as i128 * b as i128;
                let pr = mode.shift(w, q);
                acc += pr;
                if !self.fits(pr) || !self.fits(acc) {
                    return PointEval::overflowed(OverflowStage::Gradient, Wide::zero());
                }
                exact += w;
            }
            acc += self.c[i] as i128;
            if !self.fits(acc) {
                return PointEval::overflowed(OverflowStage::Gradient, Wide::zero());
            }
            exact += (self.c[i] as i128) << q;
            let gi = mode.shift(t * acc, q);
            if !self.fits(gi) {
                return PointEval::overflowed(OverflowStage::Gradient, Wide::zero());
            }
            g[i] = gi;
            big_g[i] = t * exact;
            gerr[i] = big_g[i] - (gi << (2 * q));
        }
        let omega_sq = Wide::sum_sq(&gerr[..n]);

        let mut xn = [0i128; KERNEL_MAX_N];
        for i in 0..n {
            let y = x[i] as i128 - g[i];
            if !self.fits(y) {
                return PointEval::overflowed(OverflowStage::Step, omega_sq);
            }
            xn[i] = y.clamp(self.l[i] as i128, self.u[i] as i128);
        }

        let s = 2 * q;
        let mut dx = [0i128; KERNEL_MAX_N];
        let mut dom = [0i128; KERNEL_MAX_N];
        let mut diff = [0i128; KERNEL_MAX_N];
        for i in 0..n {
            let xi = (x[i] as i128) << s;
            let ti = (xi - big_g[i]).clamp((self.l[i] as i128) << s, (self.u[i] as i128) << s);
            dx[i] = xi - ti;
            dom[i] = ti - (xn[i] << s);
            diff[i] = x[i] as i128 - xn[i];
        }

        let mut d2: i128 = 0;
        let mut dist_overflow = false;
        for &d in &diff[..n] {
            if !self.fits(d) {
                dist_overflow = true;
                break;
            }
            let sq = mode.shift(d * d, q);
            d2 += sq;
            if !self.fits(sq) || !self.fits(d2) {
                dist_overflow = true;
                break;
            }
        }
        PointEval {
            overflow: dist_overflow.then_some(OverflowStage::Distance),
            dhat2: if dist_overflow { 0 } else { d2 as i64 },
            omega_sq,
            exact_d: Wide::sum_sq(&dx[..n]),
            omega_small_sq: Wide::sum_sq(&dom[..n]),
            theta_sq: Wide::sum_sq(&diff[..n]),
        }
    }
}

fn scaled(v: &Rat, bits: u32) -> Wide {
    let s = v * Rat::from_integer(pow2(bits));
    debug_assert!(s.is_integer());
    Wide::from_bigint(s.to_integer())
}

fn sum_sq_rat(v: impl Iterator<Item = Rat>) -> Rat {
    v.map(|e| &e * &e).fold(Rat::zero(), |a, b| a + b)
}

/// The same quantities computed through [`FixedStepper`] and exact shadows.
/// Serves as the fallback for large formats and as the kernel's oracle.
pub fn evaluate_tracked(stepper: &FixedStepper, x: &[i64]) -> Result<PointEval, FxError> {
    let fmt = stepper.fmt();
    let q = fmt.q();
    let xv = TrackedVector::from_raw(fmt, x)?;
    let is_overflow = |e: &FxError| matches!(e, FxError::Overflow { .. });
    let g = match stepper.gradient_step(&xv) {
        Ok(g) => g,
        Err(e) if is_overflow(&e) => return Ok(PointEval::overflowed(OverflowStage::Gradient, Wide::zero())),
        Err(e) => return Err(e),
    };
    let omega_sq = scaled(&sum_sq_rat(g.errs().into_iter()), 6 * q);
    let step = match stepper.step(&xv) {
        Ok(s) => s,
        Err(e) if is_overflow(&e) => return Ok(PointEval::overflowed(OverflowStage::Step, omega_sq)),
        Err(e) => return Err(e),
    };
    let x_vals = step.x.values();
    let t = step.next.shadows();
    let next_vals = step.next.values();
    let exact_d = sum_sq_rat(x_vals.iter().zip(&t).map(|(a, b)| a - b));
    let omega_small = sum_sq_rat(step.next.errs().into_iter());
    let theta = sum_sq_rat(x_vals.iter().zip(&next_vals).map(|(a, b)| a - b));
    let (overflow, d2) = match dhat2(&step.x, &TrackedVector::from_raw(fmt, &step.next.raws())?, stepper.mode()) {
        Ok(d) => (None, d.raw()),
        Err(e) if is_overflow(&e) => (Some(OverflowStage::Distance), 0),
        Err(e) => return Err(e),
    };
    Ok(PointEval {
        overflow,
        dhat2: d2,
        omega_sq,
        exact_d: scaled(&exact_d, 6 * q),
        omega_small_sq: scaled(&omega_small, 6 * q),
        theta_sq: scaled(&theta, 2 * q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FxValue;
    use crate::qp::BoxQP;
    use crate::rational::{dyadic, ratio};
    use proptest::prelude::*;

    fn raw_at(v: &Rat, q: u32) -> i64 {
        (v * Rat::from_integer(pow2(q))).to_integer().try_into().unwrap()
    }

    fn kernel_for(qp: &BoxQP, fmt: FxFormat, mode: RoundingMode, tau: FxValue) -> Kernel {
        let r = |v: &Rat| raw_at(v, fmt.q());
        Kernel::new(
            fmt,
            mode,
            tau.raw(),
            qp.q().iter().flatten().map(r).collect(),
            qp.c().iter().map(r).collect(),
            qp.l().iter().map(r).collect(),
            qp.u().iter().map(r).collect(),
        )
        .unwrap()
    }

    #[test]
    fn wide_ordering_and_fallback() {
        let big = Wide::sum_sq(&[i128::MAX / 2, 3]);
        assert!(matches!(big, Wide::Big(_)));
        assert!(big > Wide::Small(i128::MAX));
        assert_eq!(Wide::sum_sq(&[3, 4]), Wide::Small(25));
        assert_eq!(Wide::Small(5).to_rat(2), ratio(5, 4));
    }

    #[test]
    fn kernel_flags_gradient_overflow() {
        let fmt = FxFormat::new(1, 4).unwrap();
        let qp = BoxQP::new(
            vec![vec![Rat::from_integer(1.into())]],
            vec![ratio(3, 2)],
            vec![ratio(-3, 2)],
            vec![ratio(3, 2)],
            FxFormat::new(1, 4).unwrap(),
        )
        .unwrap();
        let tau = FxValue::from_raw(16, fmt).unwrap();
        let k = kernel_for(&qp, fmt, RoundingMode::Floor, tau);
        // 1.5 + 1.5 = 3 ≥ 2^1
        assert_eq!(k.eval(&[24]).overflow, Some(OverflowStage::Gradient));
        let stepper = FixedStepper::new(&qp, fmt, RoundingMode::Floor, tau).unwrap();
        assert_eq!(evaluate_tracked(&stepper, &[24]).unwrap().overflow, Some(OverflowStage::Gradient));
    }

    fn arb_case() -> impl Strategy<Value = (usize, u32, Vec<i64>, Vec<i64>, Vec<i64>, i64, u8)> {
        (1usize..=3, 2u32..=6).prop_flat_map(|(n, q)| {
            let one = 1i64 << q;
            (
                Just(n),
                Just(q),
                prop::collection::vec(-2 * one..=2 * one, n * n),
                prop::collection::vec(-2 * one..=2 * one, n),
                prop::collection::vec(-one..=one, n),
                1i64..=one,
                0u8..3,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn kernel_matches_tracked((n, q, qm, c, x, t, m) in arb_case()) {
            // symmetrize and make diagonally dominant so the QP is valid
            let one = 1i64 << q;
            let mut qs = qm.clone();
            for i in 0..n {
                for j in 0..i {
                    qs[i * n + j] = qs[j * n + i];
                }
                let off: i64 = (0..n).filter(|&j| j != i).map(|j| qs[i * n + j].abs()).sum();
                qs[i * n + i] = off + one / 2 + qs[i * n + i].abs() % one;
            }
            let fmt = FxFormat::new(3, q).unwrap();
            let mode = [RoundingMode::Floor, RoundingMode::TowardZero, RoundingMode::Nearest][m as usize];
            let qp = BoxQP::new(
                (0..n).map(|i| (0..n).map(|j| dyadic(qs[i * n + j], q)).collect()).collect(),
                c.iter().map(|&v| dyadic(v, q)).collect(),
                vec![dyadic(-one, q); n],
                vec![dyadic(one, q); n],
                fmt,
            ).unwrap();
            let tau = FxValue::from_raw(t, fmt).unwrap();
            let k = kernel_for(&qp, fmt, mode, tau);
            let stepper = FixedStepper::new(&qp, fmt, mode, tau).unwrap();
            prop_assert_eq!(k.eval(&x), evaluate_tracked(&stepper, &x).unwrap());
        }
    }
}
