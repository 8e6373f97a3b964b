//! Closed-form worst-case bounds from per-operation rounding errors.
//!
//! Each rounded product contributes at most one rounding error `e`
//! (`2^{-q}` for floor and toward-zero, `2^{-q-1}` for nearest), so a row
//! with `m` inexact products has `|err(ĝᵢ)| ≤ τ·m·e + e`.

use num_traits::{Signed, Zero};

use crate::rational::{int, pow2, sqrt_lower, sqrt_upper, Rat};

use super::{BoundQuery, CheckSetup, QueryKind, Verdict};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalyticBounds {
    n: usize,
    ulp: Rat,
    /// Largest single rounding error.
    e: Rat,
    /// Largest amount by which a rounded square can undershoot its value.
    e_low: Rat,
    omega_sq: Rat,
    overflow_safe: bool,
    sqrt_bits: u32,
}

impl AnalyticBounds {
    pub fn new(setup: &CheckSetup) -> Self {
        let fam = &setup.family;
        let n = fam.n();
        let q = setup.fmt.q();
        let ulp = setup.fmt.ulp();
        let e = &ulp * setup.mode.max_error_ulps();
        let e_low = match setup.mode {
            crate::fixedpoint::RoundingMode::Nearest => e.clone(),
            _ => Rat::zero(),
        };
        let tau = setup.tau.to_rat();
        let tau_rounds = setup.tau.raw() % (1i64 << q) != 0;

        let mut omega_sq = Rat::zero();
        for i in 0..n {
            let m = (0..n)
                .filter(|&j| fam.q_set.iter().any(|qm| !qm[i][j].is_integer()))
                .count();
            let mut b = &tau * &e * int(m as i64);
            if tau_rounds {
                b += &e;
            }
            omega_sq += &b * &b;
        }

        Self {
            n,
            e_low,
            omega_sq,
            overflow_safe: magnitudes_fit(setup),
            sqrt_bits: 4 * q + 16,
            ulp,
            e,
        }
    }

    pub fn overflow_safe(&self) -> bool {
        self.overflow_safe
    }

    /// Bound on `‖err(ĝ_τ(x̂))‖²`.
    pub fn omega_sq(&self) -> Rat {
        self.omega_sq.clone()
    }

    /// Clamping is 1-Lipschitz, so `‖x̂⁺ − T_τ(x̂)‖ ≤ ‖err(ĝ)‖`.
    pub fn omega_small_sq(&self) -> Rat {
        self.omega_sq.clone()
    }

    /// `d̂² ≤ ε̂ − 2^{-q}` on exit, and each square loses less than `e`.
    pub fn theta_sq(&self, eps_hat: &Rat) -> Rat {
        let v = eps_hat - &self.ulp + &self.e * int(self.n as i64);
        if v.is_negative() {
            Rat::zero()
        } else {
            v
        }
    }

    /// `(Θ + Ω)² ≤ 2Θ² + 2Ω²`.
    pub fn delta_sq(&self, eps_hat: &Rat) -> Rat {
        (self.theta_sq(eps_hat) + &self.omega_sq) * int(2)
    }

    /// Largest `ε²` the assumption provably holds for:
    /// `‖x̂ − T_τ(x̂)‖ ≥ ‖x̂ − x̂⁺‖ − Ω ≥ sqrt(ε̂ − n·e_low) − Ω`.
    pub fn assumption_eps_sq(&self, eps_hat: &Rat) -> Rat {
        let a = eps_hat - &self.e_low * int(self.n as i64);
        if !a.is_positive() {
            return Rat::zero();
        }
        let r = sqrt_lower(&a, self.sqrt_bits) - sqrt_upper(&self.omega_sq, self.sqrt_bits);
        if r.is_positive() {
            &r * &r
        } else {
            Rat::zero()
        }
    }

    /// The bound for a query kind; `None` for the overflow query.
    pub fn bound(&self, kind: QueryKind, eps_hat: Option<&Rat>) -> Option<Rat> {
        let eh = || eps_hat.cloned().unwrap_or_else(Rat::zero);
        match kind {
            QueryKind::OmegaSq => Some(self.omega_sq()),
            QueryKind::OmegaSmallSq => Some(self.omega_small_sq()),
            QueryKind::ThetaSq => Some(self.theta_sq(&eh())),
            QueryKind::DeltaSq => Some(self.delta_sq(&eh())),
            QueryKind::AssumptionEps => Some(self.assumption_eps_sq(&eh())),
            QueryKind::Overflow => None,
        }
    }

    pub fn check(&self, query: &BoundQuery) -> Verdict {
        if !self.overflow_safe {
            return Verdict::unknown();
        }
        let eps = query.eps_hat.map(|v| v.to_rat());
        let proved = match self.bound(query.kind, eps.as_ref()) {
            None => true,
            Some(b) if query.kind == QueryKind::AssumptionEps => query.threshold <= b,
            Some(b) => query.threshold >= b,
        };
        if proved {
            Verdict::pass()
        } else {
            Verdict::unknown()
        }
    }
}

/// Interval bound on every intermediate magnitude of one step and the
/// exit test; each rounding can grow a value by at most one ulp.
fn magnitudes_fit(setup: &CheckSetup) -> bool {
    let fam = &setup.family;
    let n = fam.n();
    let ulp = setup.fmt.ulp();
    let lim = Rat::from_integer(pow2(setup.fmt.p()));
    let tau = setup.tau.to_rat();
    let absmax = |a: &Rat, b: &Rat| a.abs().max(b.abs());
    let x: Vec<Rat> = (0..n).map(|j| absmax(&fam.l_min[j], &fam.u_max[j])).collect();
    let ok = |v: &Rat| v < &lim;
    for i in 0..n {
        let mut acc = Rat::zero();
        for (j, xj) in x.iter().enumerate() {
            let qij = fam.q_set.iter().map(|m| m[i][j].abs()).max().unwrap_or_else(Rat::zero);
            let pr = qij * xj + &ulp;
            acc += &pr;
            if !ok(&pr) || !ok(&acc) {
                return false;
            }
        }
        acc += absmax(&fam.c_min[i], &fam.c_max[i]);
        let g = &tau * &acc + &ulp;
        if !ok(&acc) || !ok(&g) || !ok(&(&x[i] + &g)) {
            return false;
        }
    }
    let mut d2 = Rat::zero();
    for i in 0..n {
        let d = &fam.u_max[i] - &fam.l_min[i];
        let sq = &d * &d + &ulp;
        d2 += &sq;
        if !ok(&d) || !ok(&sq) || !ok(&d2) {
            return false;
        }
    }
    true
}
