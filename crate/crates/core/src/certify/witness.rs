//! Counterexamples that replay through the tracked fixed-point path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fixedpoint::{FxFormat, FxValue, RoundingMode};
use crate::pgm::FixedStepper;
use crate::qp::BoxQP;
use crate::rational::{dyadic, parse_rat, to_exact_decimal, to_ratio_string, Rat};

use super::kernel::{evaluate_tracked, OverflowStage, PointEval};
use super::space::Point;
use super::{CertifyError, CheckSetup, QueryKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub query: QueryKind,
    /// Squared threshold as `num/den`.
    pub threshold: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_hat: Option<FxValue>,
    pub solver_format: FxFormat,
    pub data_format: FxFormat,
    pub rounding: RoundingMode,
    pub tau: FxValue,
    pub q_index: usize,
    /// `Q` in the data format, row-major raw integers.
    pub q: Vec<i64>,
    pub c: Vec<i64>,
    pub l: Vec<i64>,
    pub u: Vec<i64>,
    /// `x̂` in the solver format.
    pub x: Vec<i64>,
    /// The offending quantity as `num/den` (absent on overflow).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value_decimal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub overflow: Option<OverflowStage>,
}

/// Outcome of re-running a witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub eval: PointEval,
    pub value: Option<Rat>,
    pub violates: bool,
}

/// The quantity a query inspects, as an exact rational.
pub(crate) fn query_value(kind: QueryKind, e: &PointEval, q: u32) -> Option<Rat> {
    match kind {
        QueryKind::OmegaSq => Some(e.omega_sq.to_rat(6 * q)),
        QueryKind::AssumptionEps | QueryKind::DeltaSq => Some(e.exact_d.to_rat(6 * q)),
        QueryKind::OmegaSmallSq => Some(e.omega_small_sq.to_rat(6 * q)),
        QueryKind::ThetaSq => Some(e.theta_sq.to_rat(2 * q)),
        QueryKind::Overflow => None,
    }
}

/// [`query_value`] unless an overflow made the quantity meaningless.
pub(crate) fn usable_value(kind: QueryKind, e: &PointEval, q: u32) -> Option<Rat> {
    match e.overflow {
        None => query_value(kind, e, q),
        Some(OverflowStage::Gradient) => None,
        Some(_) if kind == QueryKind::OmegaSq => query_value(kind, e, q),
        Some(_) => None,
    }
}

/// Whether a single evaluation violates the query.
pub(crate) fn violates(kind: QueryKind, e: &PointEval, q: u32, threshold: &Rat, eps_hat: Option<i64>) -> bool {
    match kind {
        QueryKind::Overflow => e.overflow.is_some(),
        QueryKind::OmegaSq => e.overflow != Some(OverflowStage::Gradient) && &e.omega_sq.to_rat(6 * q) > threshold,
        _ if e.overflow.is_some() => false,
        QueryKind::AssumptionEps => e.dhat2 >= eps_hat.unwrap_or(i64::MAX) && &e.exact_d.to_rat(6 * q) < threshold,
        _ => {
            e.dhat2 < eps_hat.unwrap_or(i64::MIN)
                && query_value(kind, e, q).is_some_and(|v| &v > threshold)
        }
    }
}

impl Witness {
    pub(crate) fn build(
        setup: &CheckSetup,
        point: &Point,
        q_data: &[i64],
        kind: QueryKind,
        threshold: &Rat,
        eps_hat: Option<FxValue>,
        eval: &PointEval,
    ) -> Self {
        let value = usable_value(kind, eval, setup.fmt.q());
        let r = &point.realization;
        Self {
            query: kind,
            threshold: to_ratio_string(threshold),
            eps_hat,
            solver_format: setup.fmt,
            data_format: setup.family.fmt,
            rounding: setup.mode,
            tau: setup.tau,
            q_index: r.q_index,
            q: q_data.to_vec(),
            c: r.c.clone(),
            l: r.l.clone(),
            u: r.u.clone(),
            x: point.x.clone(),
            value_decimal: value.as_ref().and_then(to_exact_decimal),
            value: value.as_ref().map(to_ratio_string),
            overflow: eval.overflow,
        }
    }

    pub fn threshold(&self) -> Result<Rat, CertifyError> {
        parse_rat(&self.threshold).map_err(|e| CertifyError::InvalidEpsHat(e.to_string()))
    }

    pub fn value(&self) -> Option<Rat> {
        self.value.as_deref().and_then(|s| parse_rat(s).ok())
    }

    /// The realization as a standalone problem.
    pub fn problem(&self) -> Result<BoxQP, CertifyError> {
        let n = self.c.len();
        let q = self.data_format.q();
        let v = |raw: &[i64]| raw.iter().map(|&x| dyadic(x, q)).collect::<Vec<_>>();
        let mat = (0..n).map(|i| v(&self.q[i * n..(i + 1) * n])).collect();
        Ok(BoxQP::new(mat, v(&self.c), v(&self.l), v(&self.u), self.data_format)?)
    }

    /// Re-runs the step through [`FixedStepper`] and exact shadows.
    pub fn replay(&self) -> Result<Replay, CertifyError> {
        let qp = self.problem()?;
        let stepper = FixedStepper::new(&qp, self.solver_format, self.rounding, self.tau)?;
        let eval = evaluate_tracked(&stepper, &self.x)?;
        let threshold = self.threshold()?;
        let q = self.solver_format.q();
        let violates = violates(self.query, &eval, q, &threshold, self.eps_hat.map(FxValue::raw));
        Ok(Replay {
            value: usable_value(self.query, &eval, q),
            eval,
            violates,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("witness serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, CertifyError> {
        let text = std::fs::read_to_string(path).map_err(crate::qp::QpError::from)?;
        serde_json::from_str(&text).map_err(|e| CertifyError::Qp(crate::qp::QpError::from(e)))
    }
}
