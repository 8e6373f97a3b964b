//! Condensed linear MPC: from an LTI model and tracking cost to a box-QP
//! family over the stacked control moves.
//!
//! The decision variable is `z = (ũ_0, …, ũ_{N_c−1})`. Inputs beyond the
//! control horizon repeat `ũ_{N_c−1}`. The parameter vector the linear term
//! depends on is `θ = (x̃(t), x_r, u_r)`, and the condensed objective is
//!
//! ```text
//! f(z, θ) = ½ zᵀQz + (Gθ)ᵀz + θᵀKθ
//! ```
//!
//! All condensation is done in exact rationals. Only the matrix exponential
//! and the Riccati iteration run in `f64`; their results enter as exact
//! binary fractions.

use std::path::Path;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{FxError, FxFormat, FxValue, RoundingMode};
use crate::linalg::{self, Mat, RatMat};
use crate::qp::{self, is_positive_definite, ProblemFamily, ProblemFile, QpError, SolverSetup};
use crate::rational::{from_f64, int, parse_rat, to_f64, to_sci, Rat};

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 100_000;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("Riccati iteration did not converge in {0} iterations")]
    Divergence(usize),
    #[error("non-finite value in {0}")]
    NotFinite(&'static str),
    #[error("quantized Q is not positive definite in {0}")]
    QuantizedNotPd(FxFormat),
    #[error(transparent)]
    Fx(#[from] FxError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    #[default]
    Zoh,
    ForwardEuler,
}

/// How the three-mass chain is held.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpringLayout {
    /// Springs only between neighbouring masses.
    Free,
    /// Additional springs from the outer masses to fixed walls.
    #[default]
    Anchored,
}

/// Scaling between the tracking cost `J` and the QP objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostConvention {
    /// `f = J`, so `Q` is the Hessian of `J`.
    #[default]
    Full,
    /// `f = J/2`: weighted norms read as `½vᵀWv`.
    Half,
}

impl CostConvention {
    fn scale(self) -> Rat {
        match self {
            CostConvention::Full => int(1),
            CostConvention::Half => Rat::new(1.into(), 2.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LtiModel {
    a: RatMat,
    b: RatMat,
}

impl LtiModel {
    pub fn new(a: RatMat, b: RatMat) -> Result<Self, MpcError> {
        let nx = a.len();
        if nx == 0 || a.iter().any(|r| r.len() != nx) {
            return Err(MpcError::Dimension("A must be square and nonempty".into()));
        }
        let nu = b.first().map_or(0, Vec::len);
        if b.len() != nx || nu == 0 || b.iter().any(|r| r.len() != nu) {
            return Err(MpcError::Dimension(format!("B must be {nx}xm with m ≥ 1")));
        }
        Ok(Self { a, b })
    }

    pub fn from_f64(a: &Mat, b: &Mat) -> Result<Self, MpcError> {
        Self::new(rat_mat(a, "A")?, rat_mat(b, "B")?)
    }

    pub fn a(&self) -> &RatMat {
        &self.a
    }

    pub fn b(&self) -> &RatMat {
        &self.b
    }

    pub fn nx(&self) -> usize {
        self.a.len()
    }

    pub fn nu(&self) -> usize {
        self.b[0].len()
    }

    pub fn step(&self, x: &[Rat], u: &[Rat]) -> Vec<Rat> {
        let ax = linalg::rat_matvec(&self.a, x);
        let bu = linalg::rat_matvec(&self.b, u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }
}

fn rat_mat(m: &Mat, what: &'static str) -> Result<RatMat, MpcError> {
    m.iter()
        .map(|r| r.iter().map(|&v| from_f64(v).ok_or(MpcError::NotFinite(what))).collect())
        .collect()
}

fn scaled_identity(n: usize, s: &Rat) -> RatMat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { s.clone() } else { Rat::zero() }).collect())
        .collect()
}

/// Continuous-time chain of three unit masses and unit springs. States are
/// the three positions followed by the three velocities; the inputs are
/// forces on the outer masses.
pub fn mass_spring_continuous(springs: SpringLayout) -> (Mat, Mat) {
    let wall = match springs {
        SpringLayout::Free => 1.0,
        SpringLayout::Anchored => 2.0,
    };
    let k = [[-wall, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -wall]];
    let mut ac = linalg::zeros(6, 6);
    for i in 0..3 {
        ac[i][3 + i] = 1.0;
        for j in 0..3 {
            ac[3 + i][j] = k[i][j];
        }
    }
    let mut bc = linalg::zeros(6, 2);
    bc[3][0] = 1.0;
    bc[5][1] = 1.0;
    (ac, bc)
}

/// Discretizes `ẋ = A_c x + B_c u` with sample time `ts`.
pub fn discretize(ac: &Mat, bc: &Mat, ts: f64, method: Discretization) -> (Mat, Mat) {
    let (nx, nu) = (ac.len(), bc[0].len());
    match method {
        Discretization::ForwardEuler => (
            linalg::add(&linalg::identity(nx), &linalg::scale(ac, ts)),
            linalg::scale(bc, ts),
        ),
        Discretization::Zoh => {
            // exp([[A_c, B_c], [0, 0]]·ts) = [[A, B], [0, I]]
            let mut m = linalg::zeros(nx + nu, nx + nu);
            for i in 0..nx {
                for j in 0..nx {
                    m[i][j] = ac[i][j] * ts;
                }
                for j in 0..nu {
                    m[i][nx + j] = bc[i][j] * ts;
                }
            }
            let e = linalg::expm(&m);
            let a = e[..nx].iter().map(|r| r[..nx].to_vec()).collect();
            let b = e[..nx].iter().map(|r| r[nx..].to_vec()).collect();
            (a, b)
        }
    }
}

pub fn three_mass_spring(ts: f64, method: Discretization, springs: SpringLayout) -> Result<LtiModel, MpcError> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(MpcError::InvalidParams(format!("sample time must be positive, got {ts}")));
    }
    let (ac, bc) = mass_spring_continuous(springs);
    let (a, b) = discretize(&ac, &bc, ts, method);
    LtiModel::from_f64(&a, &b)
}

/// Terminal weight from the Riccati recursion
/// `P ← W_x + AᵀPA − AᵀPB(W_u + BᵀPB)⁻¹BᵀPA`, started at `P = W_x` and
/// stopped when successive iterates differ by at most `tol` in max norm.
pub fn dare_terminal(a: &Mat, b: &Mat, wx: &Mat, wu: &Mat, tol: f64) -> Result<Mat, MpcError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(MpcError::InvalidParams("DARE tolerance must be positive".into()));
    }
    let at = linalg::transpose(a);
    let bt = linalg::transpose(b);
    let mut p = wx.clone();
    for _ in 0..DARE_MAX_ITER {
        let pa = linalg::matmul(&p, a);
        let pb = linalg::matmul(&p, b);
        let s = linalg::add(wu, &linalg::matmul(&bt, &pb));
        let s_inv = linalg::inverse(&s).ok_or(MpcError::NotPositiveDefinite("W_u + BᵀPB"))?;
        let k = linalg::matmul(&s_inv, &linalg::matmul(&bt, &pa));
        let correction = linalg::matmul(&linalg::matmul(&at, &pb), &k);
        let mut next = linalg::add(wx, &linalg::add(&linalg::matmul(&at, &pa), &linalg::scale(&correction, -1.0)));
        symmetrize(&mut next);
        if next.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MpcError::NotFinite("Riccati iterate"));
        }
        let diff = linalg::max_abs_diff(&next, &p);
        p = next;
        if diff <= tol {
            return Ok(p);
        }
    }
    Err(MpcError::Divergence(DARE_MAX_ITER))
}

fn symmetrize(m: &mut Mat) {
    let n = m.len();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpcParams {
    pub n_p: usize,
    pub n_c: usize,
    pub w_x: RatMat,
    pub w_u: RatMat,
    pub terminal: RatMat,
    pub u_min: Vec<Rat>,
    pub u_max: Vec<Rat>,
    /// Interval per state for `x̃(t)`.
    pub state_box: Vec<(Rat, Rat)>,
    /// Interval per entry of `(x_r, u_r)`.
    pub ref_box: Vec<(Rat, Rat)>,
    pub convention: CostConvention,
}

impl MpcParams {
    pub fn validate(&self, model: &LtiModel) -> Result<(), MpcError> {
        let (nx, nu) = (model.nx(), model.nu());
        if self.n_c == 0 || self.n_p < self.n_c {
            return Err(MpcError::InvalidParams(format!(
                "need N_p ≥ N_c ≥ 1, got N_p = {}, N_c = {}",
                self.n_p, self.n_c
            )));
        }
        for (what, m, n) in [("W_x", &self.w_x, nx), ("W_u", &self.w_u, nu), ("P", &self.terminal, nx)] {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(MpcError::Dimension(format!("{what} must be {n}x{n}")));
            }
            if !linalg::is_symmetric(m) || !is_positive_definite(m) {
                return Err(MpcError::NotPositiveDefinite(what));
            }
        }
        if self.u_min.len() != nu || self.u_max.len() != nu {
            return Err(MpcError::Dimension(format!("input bounds must have {nu} entries")));
        }
        if self.u_min.iter().zip(&self.u_max).any(|(l, u)| l > u) {
            return Err(MpcError::InvalidParams("input bounds need u₋ ≤ u₊".into()));
        }
        if self.state_box.len() != nx {
            return Err(MpcError::Dimension(format!("state box must have {nx} intervals")));
        }
        if self.ref_box.len() != nx + nu {
            return Err(MpcError::Dimension(format!("reference box must have {} intervals", nx + nu)));
        }
        if self.state_box.iter().chain(&self.ref_box).any(|(lo, hi)| lo > hi) {
            return Err(MpcError::InvalidParams("empty interval in state or reference box".into()));
        }
        Ok(())
    }

    /// Stacked box over `z`.
    pub fn z_bounds(&self) -> (Vec<Rat>, Vec<Rat>) {
        let rep = |v: &[Rat]| (0..self.n_c).flat_map(|_| v.iter().cloned()).collect();
        (rep(&self.u_min), rep(&self.u_max))
    }

    /// The box over `θ = (x̃(t), x_r, u_r)`.
    pub fn theta_box(&self) -> Vec<(Rat, Rat)> {
        self.state_box.iter().chain(&self.ref_box).cloned().collect()
    }
}

/// Splits `θ` into `(x̃(t), x_r, u_r)`.
pub fn split_theta(theta: &[Rat], nx: usize) -> (&[Rat], &[Rat], &[Rat]) {
    (&theta[..nx], &theta[nx..2 * nx], &theta[2 * nx..])
}

/// The condensed problem: `f(z, θ) = ½zᵀQz + (Gθ)ᵀz + θᵀKθ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condensed {
    pub q: RatMat,
    pub gain: RatMat,
    pub constant: RatMat,
}

impl Condensed {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn c(&self, theta: &[Rat]) -> Vec<Rat> {
        linalg::rat_matvec(&self.gain, theta)
    }

    pub fn objective(&self, z: &[Rat], theta: &[Rat]) -> Rat {
        let qz = linalg::rat_matvec(&self.q, z);
        let kt = linalg::rat_matvec(&self.constant, theta);
        linalg::dot(z, &qz) / int(2) + linalg::dot(&self.c(theta), z) + linalg::dot(theta, &kt)
    }
}

fn add_into(acc: &mut RatMat, m: &RatMat) {
    for (ra, rm) in acc.iter_mut().zip(m) {
        for (a, v) in ra.iter_mut().zip(rm) {
            *a += v;
        }
    }
}

fn scale_mat(m: &RatMat, s: &Rat) -> RatMat {
    m.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

/// `XᵀWY`.
fn sandwich(x: &RatMat, w: &RatMat, y: &RatMat) -> RatMat {
    linalg::rat_matmul(&linalg::rat_transpose(x), &linalg::rat_matmul(w, y))
}

/// Eliminates the states. With `x̃_i − x_r = Γ_i z + M_i θ` and
/// `ũ_i − u_r = E_i z − N θ`, the cost is a sum of weighted squares of these
/// affine residuals.
pub fn condense(model: &LtiModel, params: &MpcParams) -> Result<Condensed, MpcError> {
    params.validate(model)?;
    let (nx, nu) = (model.nx(), model.nu());
    let n = nu * params.n_c;
    let m = 2 * nx + nu;
    let one = int(1);

    let select = |i: usize| -> RatMat {
        let block = i.min(params.n_c - 1);
        let mut e = linalg::rat_zeros(nu, n);
        for k in 0..nu {
            e[k][block * nu + k] = one.clone();
        }
        e
    };
    let mut n_sel = linalg::rat_zeros(nu, m);
    for k in 0..nu {
        n_sel[k][2 * nx + k] = one.clone();
    }

    let mut h = linalg::rat_zeros(n, n);
    let mut lin = linalg::rat_zeros(n, m);
    let mut konst = linalg::rat_zeros(m, m);

    // i = 0: Γ_0 = 0, Φ_0 = I
    let mut gamma = linalg::rat_zeros(nx, n);
    let mut phi = scaled_identity(nx, &one);
    for i in 0..=params.n_p {
        let mut mi = linalg::rat_zeros(nx, m);
        for r in 0..nx {
            mi[r][..nx].clone_from_slice(&phi[r]);
            mi[r][nx + r] = -one.clone();
        }
        let w = if i < params.n_p { &params.w_x } else { &params.terminal };
        add_into(&mut h, &sandwich(&gamma, w, &gamma));
        add_into(&mut lin, &sandwich(&gamma, w, &mi));
        add_into(&mut konst, &sandwich(&mi, w, &mi));
        if i < params.n_p {
            let e = select(i);
            add_into(&mut h, &sandwich(&e, &params.w_u, &e));
            add_into(&mut lin, &scale_mat(&sandwich(&e, &params.w_u, &n_sel), &-one.clone()));
            add_into(&mut konst, &sandwich(&n_sel, &params.w_u, &n_sel));
            let ag = linalg::rat_matmul(&model.a, &gamma);
            let be = linalg::rat_matmul(&model.b, &e);
            gamma = ag;
            add_into(&mut gamma, &be);
            phi = linalg::rat_matmul(&model.a, &phi);
        }
    }
    let s = params.convention.scale();
    let two_s = &s * int(2);
    Ok(Condensed {
        q: scale_mat(&h, &two_s),
        gain: scale_mat(&lin, &two_s),
        constant: scale_mat(&konst, &s),
    })
}

/// Direct evaluation of the tracking cost by simulating the dynamics with
/// the blocked input sequence, scaled by the cost convention.
pub fn rollout_cost(model: &LtiModel, params: &MpcParams, z: &[Rat], theta: &[Rat]) -> Rat {
    let (nx, nu) = (model.nx(), model.nu());
    let (x0, xr, ur) = split_theta(theta, nx);
    let weighted = |w: &RatMat, v: &[Rat]| linalg::dot(v, &linalg::rat_matvec(w, v));
    let mut x = x0.to_vec();
    let mut total = Rat::zero();
    for i in 0..params.n_p {
        let block = i.min(params.n_c - 1);
        let u = &z[block * nu..(block + 1) * nu];
        total += weighted(&params.w_x, &linalg::sub_vec(&x, xr));
        total += weighted(&params.w_u, &linalg::sub_vec(u, ur));
        x = model.step(&x, u);
    }
    total += weighted(&params.terminal, &linalg::sub_vec(&x, xr));
    total * params.convention.scale()
}

/// Componentwise range of `c = Gθ` over a box, attained at the vertex that
/// picks each bound by the sign of the gain.
pub fn c_range(cond: &Condensed, theta_box: &[(Rat, Rat)]) -> Result<(Vec<Rat>, Vec<Rat>), MpcError> {
    if theta_box.len() != cond.gain.first().map_or(0, Vec::len) {
        return Err(MpcError::Dimension("θ box does not match the c map".into()));
    }
    let mut lo = Vec::with_capacity(cond.n());
    let mut hi = Vec::with_capacity(cond.n());
    for row in &cond.gain {
        let (mut a, mut b) = (Rat::zero(), Rat::zero());
        for (g, (l, u)) in row.iter().zip(theta_box) {
            if g.is_negative() {
                a += g * u;
                b += g * l;
            } else {
                a += g * l;
                b += g * u;
            }
        }
        lo.push(a);
        hi.push(b);
    }
    Ok((lo, hi))
}

fn ceil_fx(x: &Rat, fmt: FxFormat) -> Result<Rat, FxError> {
    Ok(-FxValue::quantize(&-x, fmt, RoundingMode::Floor)?.to_rat())
}

fn floor_fx(x: &Rat, fmt: FxFormat) -> Result<Rat, FxError> {
    Ok(FxValue::quantize(x, fmt, RoundingMode::Floor)?.to_rat())
}

/// A family stored in the data format, with constants of the stored `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedProblem {
    pub family: ProblemFamily,
    pub mode: RoundingMode,
    pub l_smooth: Rat,
    pub sigma: Rat,
}

/// Stores the problem in `fmt`. `Q` is rounded entrywise with `mode`; the `c`
/// range is rounded outward and the input box inward so the stored family
/// covers every reachable `c` and never relaxes the input limits.
pub fn quantize_problem(
    q: &RatMat,
    l: &[Rat],
    u: &[Rat],
    c_min: &[Rat],
    c_max: &[Rat],
    fmt: FxFormat,
    mode: RoundingMode,
) -> Result<QuantizedProblem, MpcError> {
    let qq = q
        .iter()
        .map(|r| r.iter().map(|v| FxValue::quantize(v, fmt, mode).map(FxValue::to_rat)).collect())
        .collect::<Result<RatMat, _>>()?;
    if !is_positive_definite(&qq) {
        return Err(MpcError::QuantizedNotPd(fmt));
    }
    let each = |v: &[Rat], f: fn(&Rat, FxFormat) -> Result<Rat, FxError>| v.iter().map(|x| f(x, fmt)).collect::<Result<Vec<_>, _>>();
    let l = each(l, ceil_fx)?;
    let u = each(u, floor_fx)?;
    let family = ProblemFamily::new(
        vec![qq],
        each(c_min, floor_fx)?,
        each(c_max, ceil_fx)?,
        l.clone(),
        l,
        u.clone(),
        u,
        fmt,
    )?;
    let (l_smooth, sigma) = qp::family_constants(&family)?;
    Ok(QuantizedProblem {
        family,
        mode,
        l_smooth,
        sigma,
    })
}

// ---------------------------------------------------------------------------
// Config file

/// A number written either as a JSON number or as an exact string such as
/// `"0.2"` or `"1/3"`. JSON numbers are read through their shortest decimal
/// form, so `0.2` means 1/5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Text(String),
    Float(f64),
}

impl Num {
    pub fn to_rat(&self) -> Result<Rat, MpcError> {
        let text = match self {
            Num::Text(s) => s.clone(),
            Num::Float(v) if v.is_finite() => format!("{v}"),
            Num::Float(_) => return Err(MpcError::NotFinite("config number")),
        };
        parse_rat(&text).map_err(|e| MpcError::InvalidParams(e.0))
    }
}

impl From<&str> for Num {
    fn from(s: &str) -> Self {
        Num::Text(s.to_string())
    }
}

/// A weight given as a scalar multiple of the identity or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(Num),
    Matrix(Vec<Vec<Num>>),
}

impl Weight {
    fn resolve(&self, n: usize) -> Result<RatMat, MpcError> {
        match self {
            Weight::Scalar(s) => Ok(scaled_identity(n, &s.to_rat()?)),
            Weight::Matrix(m) => num_matrix(m),
        }
    }
}

fn num_matrix(m: &[Vec<Num>]) -> Result<RatMat, MpcError> {
    m.iter().map(|r| r.iter().map(Num::to_rat).collect()).collect()
}

fn num_vec(v: &[Num]) -> Result<Vec<Rat>, MpcError> {
    v.iter().map(Num::to_rat).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ThreeMassSpring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<Num>,
    #[serde(default)]
    pub method: Discretization,
    #[serde(default)]
    pub springs: SpringLayout,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<Num>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<Num>>>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<LtiModel, MpcError> {
        match (self.preset, &self.a, &self.b) {
            (Some(Preset::ThreeMassSpring), None, None) => {
                let ts = self.ts.as_ref().map_or(Ok(Rat::new(1.into(), 5.into())), Num::to_rat)?;
                three_mass_spring(to_f64(&ts), self.method, self.springs)
            }
            (None, Some(a), Some(b)) => LtiModel::new(num_matrix(a)?, num_matrix(b)?),
            _ => Err(MpcError::InvalidParams("model needs either a preset or both A and B".into())),
        }
    }
}

/// Terminal weight: the Riccati solution or an explicit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerminalSpec {
    Keyword(String),
    Weight(Weight),
}

impl Default for TerminalSpec {
    fn default() -> Self {
        TerminalSpec::Keyword("dare".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub model: ModelSpec,
    pub n_p: usize,
    pub n_c: usize,
    pub w_x: Weight,
    pub w_u: Weight,
    #[serde(default)]
    pub terminal: TerminalSpec,
    pub u_min: Vec<Num>,
    pub u_max: Vec<Num>,
    /// `[lo, hi]` per state.
    pub state_box: Vec<[Num; 2]>,
    /// `[lo, hi]` per entry of `(x_r, u_r)`; all zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_box: Option<Vec<[Num; 2]>>,
    #[serde(default)]
    pub convention: CostConvention,
    /// Solver format `p.q`.
    pub format: String,
    /// Data format `p′.q′`; the solver format when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_format: Option<String>,
    #[serde(default)]
    pub rounding: RoundingMode,
    /// Rounding applied to `Q` when it is stored.
    #[serde(default = "default_quantize")]
    pub quantize: RoundingMode,
}

fn default_quantize() -> RoundingMode {
    RoundingMode::Nearest
}

fn interval(pair: &[Num; 2]) -> Result<(Rat, Rat), MpcError> {
    Ok((pair[0].to_rat()?, pair[1].to_rat()?))
}

impl MpcConfig {
    pub fn load(path: &Path) -> Result<Self, MpcError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Three unit masses, ZOH at 0.2 s, `N_c = 2`, `N_p = 5`, inputs in
    /// ±0.5, positions in ±0.5, velocities in ±1, zero references, and a
    /// (10.21) solver.
    pub fn three_mass_spring() -> Self {
        let sym = |a: &str, b: &str| [Num::from(a), Num::from(b)];
        Self {
            model: ModelSpec {
                preset: Some(Preset::ThreeMassSpring),
                ts: Some(Num::from("0.2")),
                method: Discretization::Zoh,
                springs: SpringLayout::Anchored,
                a: None,
                b: None,
            },
            n_p: 5,
            n_c: 2,
            w_x: Weight::Scalar(Num::from("0.5")),
            w_u: Weight::Scalar(Num::from("0.25")),
            terminal: TerminalSpec::default(),
            u_min: vec![Num::from("-0.5"); 2],
            u_max: vec![Num::from("0.5"); 2],
            state_box: [sym("-0.5", "0.5"), sym("-0.5", "0.5"), sym("-0.5", "0.5"), sym("-1", "1"), sym("-1", "1"), sym("-1", "1")].to_vec(),
            ref_box: None,
            convention: CostConvention::Half,
            format: "10.21".into(),
            data_format: None,
            rounding: RoundingMode::Floor,
            quantize: RoundingMode::Nearest,
        }
    }

    /// `x⁺ = x + u` with unit weights and one-step horizons.
    pub fn scalar() -> Self {
        let one = || Weight::Matrix(vec![vec![Num::from("1")]]);
        Self {
            model: ModelSpec {
                preset: None,
                ts: None,
                method: Discretization::Zoh,
                springs: SpringLayout::Anchored,
                a: Some(vec![vec![Num::from("1")]]),
                b: Some(vec![vec![Num::from("1")]]),
            },
            n_p: 1,
            n_c: 1,
            w_x: one(),
            w_u: one(),
            terminal: TerminalSpec::Weight(one()),
            u_min: vec![Num::from("-1")],
            u_max: vec![Num::from("1")],
            state_box: vec![[Num::from("-1"), Num::from("1")]],
            ref_box: None,
            convention: CostConvention::Full,
            format: "4.8".into(),
            data_format: None,
            rounding: RoundingMode::Floor,
            quantize: RoundingMode::Nearest,
        }
    }

    pub fn solver(&self) -> Result<SolverSetup, MpcError> {
        Ok(SolverSetup {
            fmt: self.format.parse()?,
            mode: self.rounding,
        })
    }

    pub fn data_fmt(&self) -> Result<FxFormat, MpcError> {
        Ok(match &self.data_format {
            Some(s) => s.parse()?,
            None => self.format.parse()?,
        })
    }

    pub fn params(&self, model: &LtiModel) -> Result<MpcParams, MpcError> {
        let (nx, nu) = (model.nx(), model.nu());
        let w_x = self.w_x.resolve(nx)?;
        let w_u = self.w_u.resolve(nu)?;
        let terminal = match &self.terminal {
            TerminalSpec::Keyword(k) if k == "dare" => {
                let p = dare_terminal(
                    &linalg::to_f64_mat(model.a()),
                    &linalg::to_f64_mat(model.b()),
                    &linalg::to_f64_mat(&w_x),
                    &linalg::to_f64_mat(&w_u),
                    DARE_TOL,
                )?;
                rat_mat(&p, "P")?
            }
            TerminalSpec::Keyword(k) => {
                return Err(MpcError::InvalidParams(format!("unknown terminal weight {k:?}")));
            }
            TerminalSpec::Weight(w) => w.resolve(nx)?,
        };
        let ref_box = match &self.ref_box {
            Some(b) => b.iter().map(interval).collect::<Result<_, _>>()?,
            None => vec![(Rat::zero(), Rat::zero()); nx + nu],
        };
        let params = MpcParams {
            n_p: self.n_p,
            n_c: self.n_c,
            w_x,
            w_u,
            terminal,
            u_min: num_vec(&self.u_min)?,
            u_max: num_vec(&self.u_max)?,
            state_box: self.state_box.iter().map(interval).collect::<Result<_, _>>()?,
            ref_box,
            convention: self.convention,
        };
        params.validate(model)?;
        Ok(params)
    }
}

/// Everything the build produces, before and after quantization.
#[derive(Debug, Clone)]
pub struct MpcBuild {
    pub model: LtiModel,
    pub params: MpcParams,
    pub condensed: Condensed,
    pub c_min: Vec<Rat>,
    pub c_max: Vec<Rat>,
    /// Extreme eigenvalues of the exact condensed `Q`.
    pub exact_sigma: f64,
    pub exact_l: f64,
    pub quantized: QuantizedProblem,
    pub solver: SolverSetup,
}

impl MpcBuild {
    pub fn problem_file(&self) -> Result<ProblemFile, MpcError> {
        let mut file = ProblemFile::from_family(&self.quantized.family, self.solver)?;
        file.notes = Some(serde_json::json!({
            "source": "condensed MPC",
            "quantize_rounding": self.quantized.mode,
            "convention": self.params.convention,
            "N_p": self.params.n_p,
            "N_c": self.params.n_c,
            "L": to_sci(&self.quantized.l_smooth, 8),
            "sigma": to_sci(&self.quantized.sigma, 8),
        }));
        Ok(file)
    }
}

pub fn build(config: &MpcConfig) -> Result<MpcBuild, MpcError> {
    let solver = config.solver()?;
    let data = config.data_fmt()?;
    if solver.fmt.p() < data.p() || solver.fmt.q() < data.q() {
        return Err(MpcError::InvalidParams(format!(
            "solver format {} must dominate data format {data}",
            solver.fmt
        )));
    }
    let model = config.model.build()?;
    let params = config.params(&model)?;
    let condensed = condense(&model, &params)?;
    let (c_min, c_max) = c_range(&condensed, &params.theta_box())?;
    let (exact_sigma, exact_l) = qp::eigen_extrema(&condensed.q)?;
    let (l, u) = params.z_bounds();
    let quantized = quantize_problem(&condensed.q, &l, &u, &c_min, &c_max, data, config.quantize)?;
    Ok(MpcBuild {
        model,
        params,
        condensed,
        c_min,
        c_max,
        exact_sigma,
        exact_l,
        quantized,
        solver,
    })
}
