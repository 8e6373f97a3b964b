//! Verification oracles for the one-step error bounds and the bisection
//! driver that turns them into tight values.
//!
//! Every check looks at a single fixed-point PGM step from every feasible
//! grid point `x̂` of every realization in the family. A [`Verifier`] answers
//! threshold queries with one of three backends:
//!
//! * exhaustive enumeration (sound and complete, bounded by a cap),
//! * seeded random falsification (can only FAIL),
//! * closed-form worst-case accumulation (can only PASS).

mod analytic;
mod backend;
mod bisect;
mod example;
mod kernel;
mod space;
mod witness;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{FxError, FxFormat, FxValue, RoundingMode};
use crate::pgm::PgmError;
use crate::qp::{ProblemFamily, QpError};
use crate::rational::Rat;

pub use analytic::AnalyticBounds;
pub use backend::{ExhaustiveSummary, Verifier};
pub use bisect::{bisect_bound, BisectOutcome, BisectStats, Direction};
pub use example::{run_assertion_example, AssertionExample, AssertionReport};
pub use kernel::{evaluate_tracked, Kernel, OverflowStage, PointEval, Wide};
pub use space::{Point, Realization, SearchSpace};
pub use witness::{Replay, Witness};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("search space has {size} points, above the exhaustive cap {cap}")]
    SearchSpaceTooLarge { size: String, cap: u64 },
    #[error("overflow during a PGM step (witness at x = {:?})", .0.x)]
    Overflow(Box<Witness>),
    #[error("backend inconclusive: bracket [{lo}, {hi}] could not be narrowed")]
    BackendInconclusive { lo: String, hi: String },
    #[error("no passing threshold below the ceiling {0}")]
    NoPassingBound(String),
    #[error("query {0} needs an exit tolerance ε̂")]
    MissingEpsHat(QueryKind),
    #[error("invalid exit tolerance: {0}")]
    InvalidEpsHat(String),
    #[error(transparent)]
    Fx(#[from] FxError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    /// `‖τ∇f(x̂) − ĝ_τ(x̂)‖² ≤ Ω²` for all `x̂`.
    OmegaSq,
    /// `d̂² ≥ ε̂ ⟹ ‖x̂ − T_τ(x̂)‖² ≥ ε²`.
    AssumptionEps,
    /// `d̂² < ε̂ ⟹ ‖x̂ − T_τ(x̂)‖² ≤ δ²`.
    DeltaSq,
    /// `d̂² < ε̂ ⟹ ‖x̂⁺ − T_τ(x̂)‖² ≤ ω²`.
    OmegaSmallSq,
    /// `d̂² < ε̂ ⟹ ‖x̂ − x̂⁺‖² ≤ Θ²`.
    ThetaSq,
    /// No overflow anywhere in one step and the exit test.
    Overflow,
}

impl QueryKind {
    pub fn needs_eps_hat(self) -> bool {
        !matches!(self, QueryKind::OmegaSq)
    }

    /// Which side of a threshold PASSes.
    pub fn direction(self) -> Direction {
        match self {
            QueryKind::AssumptionEps => Direction::PassBelow,
            _ => Direction::PassAbove,
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryKind::OmegaSq => "Omega^2",
            QueryKind::AssumptionEps => "eps^2",
            QueryKind::DeltaSq => "delta^2",
            QueryKind::OmegaSmallSq => "omega^2",
            QueryKind::ThetaSq => "Theta^2",
            QueryKind::Overflow => "overflow",
        })
    }
}

/// Bound selector for the exit-conditioned checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitBound {
    Delta,
    OmegaSmall,
    Theta,
}

impl From<ExitBound> for QueryKind {
    fn from(b: ExitBound) -> Self {
        match b {
            ExitBound::Delta => QueryKind::DeltaSq,
            ExitBound::OmegaSmall => QueryKind::OmegaSmallSq,
            ExitBound::Theta => QueryKind::ThetaSq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundQuery {
    pub kind: QueryKind,
    /// Squared threshold (`Ω²`, `ε²`, `δ²`, `ω²`, `Θ²`); ignored for overflow.
    pub threshold: Rat,
    pub eps_hat: Option<FxValue>,
}

impl BoundQuery {
    pub fn new(kind: QueryKind, threshold: Rat, eps_hat: Option<FxValue>) -> Self {
        Self {
            kind,
            threshold,
            eps_hat,
        }
    }

    pub fn with_threshold(&self, threshold: Rat) -> Self {
        Self {
            threshold,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerdictKind {
    Pass,
    Fail,
    Unknown,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Pass => "PASS",
            VerdictKind::Fail => "FAIL",
            VerdictKind::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub witness: Option<Box<Witness>>,
}

impl Verdict {
    pub fn pass() -> Self {
        Self {
            kind: VerdictKind::Pass,
            witness: None,
        }
    }

    pub fn unknown() -> Self {
        Self {
            kind: VerdictKind::Unknown,
            witness: None,
        }
    }

    pub fn fail(w: Witness) -> Self {
        Self {
            kind: VerdictKind::Fail,
            witness: Some(Box::new(w)),
        }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == VerdictKind::Pass
    }

    pub fn is_fail(&self) -> bool {
        self.kind == VerdictKind::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendKind {
    /// Enumerates every point. `c_stride > 1` thins the `c` grid, which is
    /// recorded and downgrades PASS to UNKNOWN.
    Exhaustive { cap: u64, c_stride: u64 },
    RandomFalsify { samples: u64, seed: u64 },
    AnalyticBound,
}

impl BackendKind {
    pub fn exhaustive(cap: u64) -> Self {
        BackendKind::Exhaustive { cap, c_stride: 1 }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BackendKind::Exhaustive { .. } => "exhaustive",
            BackendKind::RandomFalsify { .. } => "falsify",
            BackendKind::AnalyticBound => "analytic",
        }
    }
}

/// Everything fixed across the checks of one certification run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckSetup {
    pub family: ProblemFamily,
    pub fmt: FxFormat,
    pub mode: RoundingMode,
    pub tau: FxValue,
}

impl CheckSetup {
    pub fn new(family: ProblemFamily, fmt: FxFormat, mode: RoundingMode, tau: FxValue) -> Result<Self, CertifyError> {
        if fmt.q() < family.fmt.q() || fmt.p() < family.fmt.p() {
            return Err(PgmError::Precision {
                data: family.fmt,
                solver: fmt,
            }
            .into());
        }
        let tau = tau.convert(fmt, RoundingMode::Floor)?;
        Ok(Self {
            family,
            fmt,
            mode,
            tau,
        })
    }
}

/// Algorithm for `Ω`: PASS iff `‖err(ĝ_τ(x̂))‖² ≤ Ω²` everywhere.
pub fn check_omega(v: &Verifier, omega_sq: &Rat) -> Result<Verdict, CertifyError> {
    v.check(&BoundQuery::new(QueryKind::OmegaSq, omega_sq.clone(), None))
}

/// Assumption check: FAIL iff some `x̂` has `d̂² ≥ ε̂` but `‖x̂ − T_τ(x̂)‖² < ε²`.
pub fn check_assumption(v: &Verifier, eps_hat: FxValue, eps_sq: &Rat) -> Result<Verdict, CertifyError> {
    v.check(&BoundQuery::new(QueryKind::AssumptionEps, eps_sq.clone(), Some(eps_hat)))
}

/// Exit-conditioned bound check for `δ²`, `ω²` or `Θ²`.
pub fn check_exit_bound(v: &Verifier, eps_hat: FxValue, which: ExitBound, b_sq: &Rat) -> Result<Verdict, CertifyError> {
    v.check(&BoundQuery::new(which.into(), b_sq.clone(), Some(eps_hat)))
}

/// PASS iff no evaluated step (including the exit test) overflows.
pub fn validate_integer_bits(v: &Verifier, eps_hat: FxValue) -> Result<Verdict, CertifyError> {
    v.check(&BoundQuery::new(QueryKind::Overflow, Rat::from_integer(0.into()), Some(eps_hat)))
}
