//! The inner-product assertion program
//!
//! ```text
//! a ∈ [−â, â]^m;  r = ⟨a, a⟩;  μ = b·r
//! assert |err(r)| ≤ χ;  assert exact(μ) ≥ ξ
//! ```
//!
//! decided exactly by per-element decomposition: the sum in `⟨a, a⟩` is
//! exact, so `err(r) = Σᵢ err(aᵢ²)` and the extremes over the box are `m`
//! times the extremes over one element's grid.

use num_traits::{Signed, ToPrimitive, Zero};

use crate::fixedpoint::{FxError, FxFormat, FxValue, RoundingMode, Tracked, TrackedVector};
use crate::rational::{int, ratio, Rat};

use super::VerdictKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionExample {
    pub fmt: FxFormat,
    pub mode: RoundingMode,
    pub m: usize,
    pub a_hat: Rat,
    pub b: Rat,
    pub xi: Rat,
    pub chi: Rat,
}

impl Default for AssertionExample {
    fn default() -> Self {
        Self {
            fmt: FxFormat::new(8, 8).expect("valid format"),
            mode: RoundingMode::Floor,
            m: 20,
            a_hat: ratio(1, 8),
            b: ratio(3, 2),
            xi: Rat::zero(),
            chi: ratio(285, 4096),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionReport {
    pub verdict: VerdictKind,
    /// Grid values examined per element.
    pub grid_values: usize,
    /// `max |err(⟨a, a⟩)|` over the box; the tight `χ`.
    pub tight_bound: Rat,
    /// Worst-case accumulation `m · (max rounding error per product)`.
    pub theoretical_bound: Rat,
    /// `min exact(μ)` over the box.
    pub min_exact_mu: Rat,
    /// Element value repeated `m` times attains `tight_bound`.
    pub witness: FxValue,
    /// `err(⟨a, a⟩)` recomputed on the witness vector by the tracked dot.
    pub witness_err: Rat,
}

impl AssertionReport {
    /// `(theoretical − tight) / tight`, in percent.
    pub fn improvement_percent(&self) -> Rat {
        (&self.theoretical_bound - &self.tight_bound) / &self.tight_bound * int(100)
    }

    pub fn improvement_percent_f64(&self) -> f64 {
        self.improvement_percent().to_f64().unwrap_or(f64::NAN)
    }
}

pub fn run_assertion_example(ex: &AssertionExample) -> Result<AssertionReport, FxError> {
    let fmt = ex.fmt;
    let top = FxValue::quantize(&ex.a_hat, fmt, RoundingMode::Floor)?.raw();
    let m = int(ex.m as i64);

    // (value, err(a²), exact a²) per grid point
    let mut hi: Option<(Rat, FxValue)> = None;
    let mut lo: Option<(Rat, FxValue)> = None;
    let mut sq_min: Option<Rat> = None;
    let mut sq_max: Option<Rat> = None;
    let mut rounded_max = 0i64;
    for k in -top..=top {
        let a = Tracked::exact(FxValue::from_raw(k, fmt)?);
        let p = a.mul(&a, ex.mode)?;
        let e = p.err();
        if hi.as_ref().is_none_or(|(v, _)| &e > v) {
            hi = Some((e.clone(), a.fx()));
        }
        if lo.as_ref().is_none_or(|(v, _)| &e < v) {
            lo = Some((e, a.fx()));
        }
        let s = p.shadow().clone();
        sq_min = Some(sq_min.map_or(s.clone(), |v: Rat| v.min(s.clone())));
        sq_max = Some(sq_max.map_or(s.clone(), |v: Rat| v.max(s)));
        rounded_max = rounded_max.max(p.raw());
    }
    let (hi, lo) = (hi.expect("nonempty grid"), lo.expect("nonempty grid"));
    // overflow of the accumulated dot and of μ at the largest r
    let r_max = Tracked::exact(FxValue::from_raw(0, fmt)?);
    let mut acc = r_max;
    for _ in 0..ex.m {
        acc = acc.add(&Tracked::exact(FxValue::from_raw(rounded_max, fmt)?))?;
    }
    let b = Tracked::exact(FxValue::quantize(&ex.b, fmt, RoundingMode::Floor)?);
    b.mul(&acc, ex.mode)?;

    let (tight, witness) = if hi.0.abs() >= lo.0.abs() {
        (&m * &hi.0, hi.1)
    } else {
        (-(&m * &lo.0), lo.1)
    };
    let min_exact_mu = if ex.b.is_negative() {
        &ex.b * &m * sq_max.unwrap()
    } else {
        &ex.b * &m * sq_min.unwrap()
    };
    let theoretical = &m * fmt.ulp() * ex.mode.max_error_ulps();

    let wv = TrackedVector::new(fmt, vec![Tracked::exact(witness); ex.m])?;
    let witness_err = wv.dot(&wv, ex.mode)?.err();

    let holds = tight <= ex.chi && min_exact_mu >= ex.xi;
    Ok(AssertionReport {
        verdict: if holds { VerdictKind::Pass } else { VerdictKind::Fail },
        grid_values: (2 * top + 1) as usize,
        tight_bound: tight,
        theoretical_bound: theoretical,
        min_exact_mu,
        witness,
        witness_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{dyadic, parse_rat};

    #[test]
    fn reproduces_the_tight_bound() {
        let r = run_assertion_example(&AssertionExample::default()).unwrap();
        assert_eq!(r.verdict, VerdictKind::Pass);
        assert_eq!(r.grid_values, 65);
        assert_eq!(r.tight_bound, parse_rat("0.069580078125").unwrap());
        assert_eq!(r.theoretical_bound, parse_rat("0.078125").unwrap());
        assert_eq!(r.witness.raw().abs(), 22);
        assert_eq!(r.witness_err, r.tight_bound);
        let pct = r.improvement_percent_f64();
        assert!((pct - 12.28).abs() < 0.01, "{pct}");
    }

    #[test]
    fn thresholds_around_the_tight_value() {
        let below = AssertionExample {
            chi: parse_rat("0.069580078125").unwrap() - dyadic(1, 16),
            ..Default::default()
        };
        assert_eq!(run_assertion_example(&below).unwrap().verdict, VerdictKind::Fail);
        let loose = AssertionExample {
            chi: parse_rat("0.078125").unwrap(),
            ..Default::default()
        };
        assert_eq!(run_assertion_example(&loose).unwrap().verdict, VerdictKind::Pass);
    }

    #[test]
    fn decomposition_matches_brute_force_on_a_small_box() {
        // m = 2, q = 3, â = 1/2: 9 values per element, 81 vectors
        let ex = AssertionExample {
            fmt: FxFormat::new(2, 3).unwrap(),
            m: 2,
            a_hat: ratio(1, 2),
            chi: Rat::zero(),
            ..Default::default()
        };
        let r = run_assertion_example(&ex).unwrap();
        let mut best = Rat::zero();
        for i in -4..=4 {
            for j in -4..=4 {
                let v = TrackedVector::from_raw(ex.fmt, &[i, j]).unwrap();
                best = best.max(v.dot(&v, ex.mode).unwrap().err().abs());
            }
        }
        assert_eq!(r.tight_bound, best);
    }
}
