//! Bisection over a monotone verification oracle.

use std::time::Instant;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::rational::{int, pow2, sqrt_lower, sqrt_upper, to_sci, Rat};

use super::witness::Witness;
use super::{BackendKind, BoundQuery, CertifyError, Verdict, VerdictKind, Verifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// PASS for every threshold at or above the tight value (`Ω², δ², …`).
    PassAbove,
    /// PASS for every threshold at or below it (`ε²`).
    PassBelow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BisectStats {
    pub passes: usize,
    pub fails: usize,
    pub unknowns: usize,
    /// Growth steps taken before the bracket was established.
    pub expansions: usize,
    pub call_secs: Vec<f64>,
    pub total_secs: f64,
}

impl BisectStats {
    pub fn calls(&self) -> usize {
        self.passes + self.fails + self.unknowns
    }

    pub fn pass_fail(&self) -> String {
        format!("{}/{}", self.passes, self.fails)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectOutcome {
    pub direction: Direction,
    /// Squared threshold that PASSed, the end of the bracket returned as the bound.
    pub pass_sq: Rat,
    /// Squared threshold on the other end (FAIL, or an unchecked 0 / ceiling).
    pub fail_sq: Rat,
    /// Initial squared threshold supplied by the caller.
    pub init_sq: Rat,
    pub tol: Rat,
    pub stats: BisectStats,
    /// Witness from the last FAIL, showing how close the bound is.
    pub witness: Option<Box<Witness>>,
    /// False when the non-passing end was only UNKNOWN.
    pub tight: bool,
}

impl BisectOutcome {
    /// The unsquared bound, rounded in the sound direction.
    pub fn bound(&self, bits: u32) -> Rat {
        match self.direction {
            Direction::PassAbove => sqrt_upper(&self.pass_sq, bits),
            Direction::PassBelow => sqrt_lower(&self.pass_sq, bits),
        }
    }

    pub fn bracket(&self) -> (Rat, Rat) {
        if self.pass_sq <= self.fail_sq {
            (self.pass_sq.clone(), self.fail_sq.clone())
        } else {
            (self.fail_sq.clone(), self.pass_sq.clone())
        }
    }
}

struct Runner<'a> {
    v: &'a Verifier,
    query: &'a BoundQuery,
    stats: BisectStats,
    witness: Option<Box<Witness>>,
    soft_unknown: bool,
}

impl Runner<'_> {
    /// `Some(true)` PASS, `Some(false)` FAIL, `None` UNKNOWN.
    fn check(&mut self, t: &Rat) -> Result<Option<bool>, CertifyError> {
        let started = Instant::now();
        let Verdict { kind, witness } = self.v.check(&self.query.with_threshold(t.clone()))?;
        self.stats.call_secs.push(started.elapsed().as_secs_f64());
        Ok(match kind {
            VerdictKind::Pass => {
                self.stats.passes += 1;
                Some(true)
            }
            VerdictKind::Fail => {
                self.stats.fails += 1;
                self.witness = witness;
                Some(false)
            }
            VerdictKind::Unknown => {
                self.stats.unknowns += 1;
                None
            }
        })
    }

    /// UNKNOWN only counts as "not PASS" for the analytic backend, where it
    /// means "not proven" and the returned bound stays a proved PASS.
    fn passes(&mut self, t: &Rat, lo: &Rat, hi: &Rat) -> Result<(bool, bool), CertifyError> {
        match self.check(t)? {
            Some(p) => Ok((p, true)),
            None if self.soft_unknown => Ok((false, false)),
            None => Err(CertifyError::BackendInconclusive {
                lo: to_sci(lo, 6),
                hi: to_sci(hi, 6),
            }),
        }
    }
}

/// Narrows a bracket around the tight threshold of `query` until its width
/// is at most `tol`. `init` is the starting guess for the passing end (PassAbove)
/// or failing end (PassBelow); it grows by 4× up to `2^{2p}` when needed.
pub fn bisect_bound(v: &Verifier, query: &BoundQuery, init: Rat, tol: Rat) -> Result<BisectOutcome, CertifyError> {
    let started = Instant::now();
    let direction = query.kind.direction();
    let ceiling = Rat::from_integer(pow2(2 * v.setup().fmt.p()));
    let mut r = Runner {
        v,
        query,
        stats: BisectStats::default(),
        witness: None,
        soft_unknown: v.backend() == BackendKind::AnalyticBound,
    };
    let zero = Rat::zero();
    let init = if init.is_positive() { init } else { v.setup().fmt.ulp() };
    let (mut pass, mut fail, mut tight);
    match direction {
        Direction::PassAbove => {
            let mut hi = init.clone();
            let mut below = zero.clone();
            let mut below_tight = true;
            loop {
                let (p, definite) = r.passes(&hi, &below, &hi)?;
                if p {
                    break;
                }
                below = hi.clone();
                below_tight = definite;
                if hi >= ceiling {
                    return Err(CertifyError::NoPassingBound(to_sci(&ceiling, 6)));
                }
                hi = (&hi * int(4)).min(ceiling.clone());
                r.stats.expansions += 1;
            }
            pass = hi;
            fail = below;
            tight = below_tight;
        }
        Direction::PassBelow => {
            let mut hi = init.clone();
            let mut lo = zero.clone();
            let hi_tight;
            loop {
                let (p, definite) = r.passes(&hi, &lo, &hi)?;
                if !p {
                    hi_tight = definite;
                    break;
                }
                lo = hi.clone();
                if hi >= ceiling {
                    r.stats.total_secs = started.elapsed().as_secs_f64();
                    return Ok(BisectOutcome {
                        direction,
                        pass_sq: hi.clone(),
                        fail_sq: hi,
                        init_sq: init,
                        tol,
                        stats: r.stats,
                        witness: None,
                        tight: false,
                    });
                }
                hi = (&hi * int(4)).min(ceiling.clone());
                r.stats.expansions += 1;
            }
            pass = lo;
            fail = hi;
            tight = hi_tight;
        }
    }

    while (&pass - &fail).abs() > tol {
        let mid = (&pass + &fail) / int(2);
        let (lo, hi) = if pass < fail { (&pass, &fail) } else { (&fail, &pass) };
        let (p, definite) = r.passes(&mid, &lo.clone(), &hi.clone())?;
        if p {
            pass = mid;
        } else {
            fail = mid;
            tight = definite;
        }
    }
    r.stats.total_secs = started.elapsed().as_secs_f64();
    Ok(BisectOutcome {
        direction,
        pass_sq: pass,
        fail_sq: fail,
        init_sq: init,
        tol,
        stats: r.stats,
        witness: r.witness,
        tight,
    })
}
