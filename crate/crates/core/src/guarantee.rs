//! Iteration and suboptimality certificates for fixed-point PGM.
//!
//! All arithmetic is exact; square roots enter only through the bounds
//! themselves, which callers pass as (upper) rationals.

use std::path::Path;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{FxFormat, FxValue, RoundingMode};
use crate::qp::ProblemFamily;
use crate::rational::{int, to_sci, Exact, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GuaranteeError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("precondition violated: {what}")]
    PreconditionViolated {
        what: String,
        /// Smallest admissible ε, `4Ω/(τσ)`, when that is the failing inequality.
        min_eps: Option<String>,
    },
}

/// Ordering of the roundings inside `ĝ_τ`, recorded in every certificate.
pub const GRADIENT_ORDER: &str = "row dot Q_i x (one rounding per product), exact + c_i, one rounded multiply by tau";

/// Smallest `k ≥ 0` with `r^k ≤ target`, for `0 < r < 1`, `0 < target ≤ 1`.
fn smallest_power_below(r: &Rat, target: &Rat) -> u64 {
    if target >= &Rat::one() {
        return 0;
    }
    let guess = (target.to_f64().unwrap().ln() / r.to_f64().unwrap().ln()).ceil();
    let mut k = if guess.is_finite() && guess > 0.0 { guess as u64 } else { 1 };
    let pow = |k: u64| num_traits::pow(r.clone(), k as usize);
    while &pow(k) > target {
        k += 1;
    }
    while k > 0 && &pow(k - 1) <= target {
        k -= 1;
    }
    k
}

/// Iterations for exact PGM to reach `‖x^k − x*‖² ≤ ε_target²` from
/// `‖x^0 − x*‖² = dist0²`: smallest `k` with `(1 − τσ)^k ≤ ε_target²/dist0²`.
pub fn kmax_exact(eps_target_sq: &Rat, dist0_sq: &Rat, tau: &Rat, sigma: &Rat) -> Result<u64, GuaranteeError> {
    let ts = tau * sigma;
    if !ts.is_positive() || ts >= Rat::one() {
        return Err(GuaranteeError::InvalidRange(format!("tau*sigma = {} not in (0, 1)", to_sci(&ts, 6))));
    }
    if !eps_target_sq.is_positive() || !dist0_sq.is_positive() || eps_target_sq > dist0_sq {
        return Err(GuaranteeError::InvalidRange("need 0 < eps_target^2 <= dist0^2".into()));
    }
    Ok(smallest_power_below(&(Rat::one() - ts), &(eps_target_sq / dist0_sq)))
}

/// `4Ω/(τσ)`, the smallest ε the contraction argument admits (exclusive).
pub fn min_epsilon(tau: &Rat, sigma: &Rat, omega: &Rat) -> Rat {
    omega * int(4) / (tau * sigma)
}

/// `C = (1 − τσ)/(1 − 4Ω/ε)`, requiring `ετσ > 4Ω`.
pub fn contraction_c(tau: &Rat, sigma: &Rat, omega: &Rat, eps: &Rat) -> Result<Rat, GuaranteeError> {
    if eps * tau * sigma <= omega * int(4) {
        let min = min_epsilon(tau, sigma, omega);
        return Err(GuaranteeError::PreconditionViolated {
            what: format!("eps*tau*sigma > 4*Omega fails: eps = {} <= 4*Omega/(tau*sigma) = {}", to_sci(eps, 5), to_sci(&min, 5)),
            min_eps: Some(to_sci(&min, 5)),
        });
    }
    Ok((Rat::one() - tau * sigma) / (Rat::one() - omega * int(4) / eps))
}

/// Smallest `k` with `C^k ≤ ε²/(4D)`.
pub fn kmax_fixed(c: &Rat, d: &Rat, eps: &Rat) -> Result<u64, GuaranteeError> {
    if !c.is_positive() || c >= &Rat::one() {
        return Err(GuaranteeError::InvalidRange(format!("C = {} not in (0, 1)", to_sci(c, 6))));
    }
    let target = eps * eps / (d * int(4));
    if !d.is_positive() || target > Rat::one() {
        return Err(GuaranteeError::InvalidRange("need eps^2 <= 4D".into()));
    }
    Ok(smallest_power_below(c, &target))
}

/// `T = σ⁻¹(τ⁻¹ + L)`.
pub fn conditioning_t(tau: &Rat, l_smooth: &Rat, sigma: &Rat) -> Rat {
    (tau.recip() + l_smooth) / sigma
}

/// Exit-mode bounds `(ω + δT, τ⁻¹((Θ + Ω)(ω + δT) + Θ²/2))`.
#[allow(clippy::too_many_arguments)]
pub fn exit_bounds(
    delta: &Rat,
    omega_small: &Rat,
    theta: &Rat,
    omega: &Rat,
    tau: &Rat,
    l_smooth: &Rat,
    sigma: &Rat,
) -> Result<(Rat, Rat), GuaranteeError> {
    if [delta, omega_small, theta, omega].iter().any(|v| v.is_negative()) || !sigma.is_positive() {
        return Err(GuaranteeError::InvalidRange("bounds must be nonnegative and sigma positive".into()));
    }
    let t = conditioning_t(tau, l_smooth, sigma);
    let dist = omega_small + delta * &t;
    let fgap = ((theta + omega) * &dist + theta * theta / int(2)) / tau;
    Ok((dist, fgap))
}

/// Bounds when `k_max` is reached without exiting: `(ε/2, (ε² − 4Ωε)/(8τ))`.
pub fn kmax_mode_bounds(eps: &Rat, omega: &Rat, tau: &Rat) -> Result<(Rat, Rat), GuaranteeError> {
    if eps < &(omega * int(4)) {
        return Err(GuaranteeError::InvalidRange("need eps >= 4*Omega".into()));
    }
    Ok((eps / int(2), (eps * eps - omega * eps * int(4)) / (tau * int(8))))
}

/// Sound `D ≥ max_{x̂⁰} ‖x̂⁰ − x*‖²`: `x*` lies in `[ℓ_min, u_max]`, so each
/// coordinate is at most the larger distance to either end.
pub fn bound_d(fam: &ProblemFamily, starts: &[Vec<Rat>]) -> Rat {
    starts
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(i, xi)| {
                    let a = xi - &fam.l_min[i];
                    let b = &fam.u_max[i] - xi;
                    (&a * &a).max(&b * &b)
                })
                .fold(Rat::zero(), |s, v| s + v)
        })
        .max()
        .unwrap_or_else(Rat::zero)
}

/// Where a bound came from, without timings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub bound: String,
    pub backend: String,
    pub passes: usize,
    pub fails: usize,
    /// Bisection tolerance on the squared value.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tol: Option<Exact>,
    /// False when the value is only a proved bound (not bracketed by a FAIL).
    pub tight: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Inputs a certificate is computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub format: FxFormat,
    pub data_format: FxFormat,
    pub rounding: RoundingMode,
    pub tau: FxValue,
    pub l_smooth: Exact,
    pub sigma: Exact,
    #[serde(rename = "Omega")]
    pub omega: Exact,
    pub eps: Exact,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_hat: Option<FxValue>,
    pub delta: Exact,
    /// `None` substitutes `Ω`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omega_small: Option<Exact>,
    #[serde(rename = "Theta")]
    pub theta: Exact,
    #[serde(rename = "D")]
    pub d: Exact,
    pub d_inferred: bool,
    /// Number of matrices in the family's finite Q set.
    pub q_set_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub inputs: CertificateInputs,
    pub gradient_order: String,
    /// `ω` actually used (equals `Ω` when substituted).
    pub omega_used: Exact,
    pub omega_substituted: bool,
    pub min_eps: Exact,
    #[serde(rename = "T")]
    pub t: Exact,
    #[serde(rename = "C")]
    pub c: Exact,
    pub k_max: u64,
    /// Iterations exact-arithmetic PGM needs for `‖x^k − x*‖² ≤ ε²/4`.
    pub k_exact: u64,
    pub dist_exit: Exact,
    pub fgap_exit: Exact,
    pub dist_kmax: Exact,
    pub fgap_kmax: Exact,
    pub provenance: Vec<Provenance>,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Recomputes every derived field from the stored inputs.
    pub fn recompute(&self) -> Result<Certificate, GuaranteeError> {
        assemble_certificate(self.inputs.clone(), self.provenance.clone(), self.notes.clone())
    }

    pub fn tau(&self) -> Rat {
        self.inputs.tau.to_rat()
    }

    pub fn eps(&self) -> &Rat {
        &self.inputs.eps.0
    }
}

/// Fills every derived field; refuses when `ετσ ≤ 4Ω`.
pub fn assemble_certificate(
    inputs: CertificateInputs,
    provenance: Vec<Provenance>,
    notes: Vec<String>,
) -> Result<Certificate, GuaranteeError> {
    let tau = inputs.tau.to_rat();
    if !tau.is_positive() {
        return Err(GuaranteeError::PreconditionViolated {
            what: "tau > 0".into(),
            min_eps: None,
        });
    }
    if &tau * &inputs.l_smooth.0 > Rat::one() {
        return Err(GuaranteeError::PreconditionViolated {
            what: "tau <= 1/L".into(),
            min_eps: None,
        });
    }
    let (l, sigma, omega, eps) = (&inputs.l_smooth.0, &inputs.sigma.0, &inputs.omega.0, &inputs.eps.0);
    let c = contraction_c(&tau, sigma, omega, eps)?;
    let d = &inputs.d.0;
    let k_max = kmax_fixed(&c, d, eps)?;
    let k_exact = kmax_exact(&(eps * eps / int(4)), d, &tau, sigma)?;
    let omega_used = inputs.omega_small.as_ref().map_or(omega.clone(), |v| v.0.clone());
    let (dist_exit, fgap_exit) = exit_bounds(&inputs.delta.0, &omega_used, &inputs.theta.0, omega, &tau, l, sigma)?;
    let (dist_kmax, fgap_kmax) = kmax_mode_bounds(eps, omega, &tau)?;
    Ok(Certificate {
        gradient_order: GRADIENT_ORDER.into(),
        omega_substituted: inputs.omega_small.is_none(),
        omega_used: Exact(omega_used),
        min_eps: Exact(min_epsilon(&tau, sigma, omega)),
        t: Exact(conditioning_t(&tau, l, sigma)),
        c: Exact(c),
        k_max,
        k_exact,
        dist_exit: Exact(dist_exit),
        fgap_exit: Exact(fgap_exit),
        dist_kmax: Exact(dist_kmax),
        fgap_kmax: Exact(fgap_kmax),
        inputs,
        provenance,
        notes,
    })
}
