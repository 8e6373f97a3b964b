use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::fixedpoint::FxValue;
use crate::pgm::FixedStepper;
use crate::rational::Rat;

use super::analytic::AnalyticBounds;
use super::kernel::{evaluate_tracked, Kernel, OverflowStage, PointEval, Wide};
use super::space::{Point, Realization, SearchSpace};
use super::witness::Witness;
use super::{BackendKind, BoundQuery, CertifyError, CheckSetup, QueryKind, Verdict};

const CHUNK: u64 = 1 << 14;
const SAMPLE_CHUNK: u64 = 1 << 10;

/// Position in the deterministic enumeration (or sample) order.
type Key = (u64, u64);

enum Evaluator {
    Fast(Kernel),
    Tracked(Box<FixedStepper>),
}

impl Evaluator {
    fn eval(&self, x: &[i64]) -> Result<PointEval, CertifyError> {
        match self {
            Evaluator::Fast(k) => Ok(k.eval(x)),
            Evaluator::Tracked(s) => Ok(evaluate_tracked(s, x)?),
        }
    }
}

/// Running extremum with ties broken toward the earlier key.
#[derive(Debug, Clone)]
struct Best(Option<(Wide, Key)>);

impl Best {
    fn offer(&mut self, v: &Wide, key: Key, larger: bool) {
        let better = match &self.0 {
            None => true,
            Some((cur, ck)) => {
                let ord = if larger { v.cmp(cur) } else { cur.cmp(v) };
                ord.is_gt() || (ord.is_eq() && key < *ck)
            }
        };
        if better {
            self.0 = Some((v.clone(), key));
        }
    }

    fn merge(mut self, other: Best, larger: bool) -> Best {
        if let Some((v, k)) = other.0 {
            self.offer(&v, k, larger);
        }
        self
    }
}

#[derive(Debug, Clone)]
struct Acc {
    points: u64,
    exits: u64,
    omega: Best,
    delta: Best,
    omega_small: Best,
    theta: Best,
    assumption: Best,
    grad_overflow: Option<Key>,
    overflow: Option<Key>,
}

fn min_key(a: Option<Key>, b: Option<Key>) -> Option<Key> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Acc {
    fn new() -> Self {
        Self {
            points: 0,
            exits: 0,
            omega: Best(None),
            delta: Best(None),
            omega_small: Best(None),
            theta: Best(None),
            assumption: Best(None),
            grad_overflow: None,
            overflow: None,
        }
    }

    fn observe(&mut self, key: Key, e: &PointEval, eps_hat: Option<i64>) {
        self.points += 1;
        if e.overflow == Some(OverflowStage::Gradient) {
            self.grad_overflow = min_key(self.grad_overflow, Some(key));
            self.overflow = min_key(self.overflow, Some(key));
            return;
        }
        self.omega.offer(&e.omega_sq, key, true);
        if e.overflow.is_some() {
            self.overflow = min_key(self.overflow, Some(key));
            return;
        }
        if let Some(eh) = eps_hat {
            if e.dhat2 < eh {
                self.exits += 1;
                self.delta.offer(&e.exact_d, key, true);
                self.omega_small.offer(&e.omega_small_sq, key, true);
                self.theta.offer(&e.theta_sq, key, true);
            } else {
                self.assumption.offer(&e.exact_d, key, false);
            }
        }
    }

    fn merge(self, o: Acc) -> Acc {
        Acc {
            points: self.points + o.points,
            exits: self.exits + o.exits,
            omega: self.omega.merge(o.omega, true),
            delta: self.delta.merge(o.delta, true),
            omega_small: self.omega_small.merge(o.omega_small, true),
            theta: self.theta.merge(o.theta, true),
            assumption: self.assumption.merge(o.assumption, false),
            grad_overflow: min_key(self.grad_overflow, o.grad_overflow),
            overflow: min_key(self.overflow, o.overflow),
        }
    }
}

/// A point attaining an extremum, with its exact value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extremum {
    pub value: Rat,
    pub point: Point,
    pub eval: PointEval,
}

/// Everything one pass over the space learns for a given `ε̂`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExhaustiveSummary {
    pub eps_hat: Option<i64>,
    pub points: u64,
    /// Points where the exit test fires.
    pub exits: u64,
    pub omega_sq: Option<Extremum>,
    pub delta_sq: Option<Extremum>,
    pub omega_small_sq: Option<Extremum>,
    pub theta_sq: Option<Extremum>,
    /// Minimum of `‖x̂ − T_τ(x̂)‖²` over points where the exit test does not fire.
    pub assumption_min: Option<Extremum>,
    pub gradient_overflow: Option<(Point, PointEval)>,
    pub overflow: Option<(Point, PointEval)>,
}

impl ExhaustiveSummary {
    pub fn extremum(&self, kind: QueryKind) -> Option<&Extremum> {
        match kind {
            QueryKind::OmegaSq => self.omega_sq.as_ref(),
            QueryKind::AssumptionEps => self.assumption_min.as_ref(),
            QueryKind::DeltaSq => self.delta_sq.as_ref(),
            QueryKind::OmegaSmallSq => self.omega_small_sq.as_ref(),
            QueryKind::ThetaSq => self.theta_sq.as_ref(),
            QueryKind::Overflow => None,
        }
    }
}

/// Answers [`BoundQuery`]s for one setup and backend. Scans are cached per
/// `ε̂`, so bisection over thresholds costs one pass.
pub struct Verifier {
    setup: CheckSetup,
    backend: BackendKind,
    space: SearchSpace,
    analytic: AnalyticBounds,
    cache: Mutex<HashMap<Option<i64>, Arc<ExhaustiveSummary>>>,
}

impl Verifier {
    pub fn new(setup: CheckSetup, backend: BackendKind) -> Self {
        let stride = match backend {
            BackendKind::Exhaustive { c_stride, .. } => c_stride,
            _ => 1,
        };
        Self {
            space: SearchSpace::new(&setup, stride),
            analytic: AnalyticBounds::new(&setup),
            setup,
            backend,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn setup(&self) -> &CheckSetup {
        &self.setup
    }

    pub fn backend(&self) -> BackendKind {
        self.backend
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn analytic(&self) -> &AnalyticBounds {
        &self.analytic
    }

    /// Validates `ε̂` and returns its raw value in the solver format.
    pub fn eps_raw(&self, eps_hat: FxValue) -> Result<i64, CertifyError> {
        let v = eps_hat
            .convert(self.setup.fmt, crate::fixedpoint::RoundingMode::Floor)
            .map_err(|e| CertifyError::InvalidEpsHat(e.to_string()))?;
        if v.to_rat() != eps_hat.to_rat() {
            return Err(CertifyError::InvalidEpsHat(format!("{eps_hat} is not on the {} grid", self.setup.fmt)));
        }
        if v.raw() < 1 {
            return Err(CertifyError::InvalidEpsHat(format!("{eps_hat} is below one ulp")));
        }
        Ok(v.raw())
    }

    pub fn check(&self, query: &BoundQuery) -> Result<Verdict, CertifyError> {
        let eps = match (query.kind.needs_eps_hat(), query.eps_hat) {
            (false, _) => None,
            (true, Some(e)) => Some(self.eps_raw(e)?),
            (true, None) => return Err(CertifyError::MissingEpsHat(query.kind)),
        };
        if self.backend == BackendKind::AnalyticBound {
            return Ok(self.analytic.check(query));
        }
        let summary = self.summary(eps)?;
        self.decide(&summary, query)
    }

    /// The exact extremum a query's tight threshold equals; exhaustive only.
    pub fn extremum(&self, kind: QueryKind, eps_hat: Option<FxValue>) -> Result<Option<Rat>, CertifyError> {
        let eps = eps_hat.map(|e| self.eps_raw(e)).transpose()?;
        let s = self.summary(if kind.needs_eps_hat() { eps } else { None })?;
        Ok(s.extremum(kind).map(|e| e.value.clone()))
    }

    /// Runs (or reuses) the scan for `ε̂`. Summaries computed for some
    /// `ε̂` also answer `Ω²` queries.
    pub fn summary(&self, eps: Option<i64>) -> Result<Arc<ExhaustiveSummary>, CertifyError> {
        {
            let cache = self.cache.lock().unwrap();
            if let Some(s) = cache.get(&eps) {
                return Ok(s.clone());
            }
            if eps.is_none() {
                if let Some(s) = cache.values().next() {
                    return Ok(s.clone());
                }
            }
        }
        let s = Arc::new(match self.backend {
            BackendKind::Exhaustive { cap, .. } => self.scan_exhaustive(cap, eps)?,
            BackendKind::RandomFalsify { samples, seed } => self.scan_samples(samples, seed, eps)?,
            BackendKind::AnalyticBound => unreachable!("analytic backend does not scan"),
        });
        self.cache.lock().unwrap().insert(eps, s.clone());
        Ok(s)
    }

    fn evaluator(&self, r: &Realization) -> Result<Evaluator, CertifyError> {
        if let Some(k) = self.space.kernel(&self.setup, r) {
            return Ok(Evaluator::Fast(k));
        }
        let qp = self.space.to_qp(&self.setup.family, r)?;
        Ok(Evaluator::Tracked(Box::new(FixedStepper::new(
            &qp,
            self.setup.fmt,
            self.setup.mode,
            self.setup.tau,
        )?)))
    }

    fn scan_exhaustive(&self, cap: u64, eps: Option<i64>) -> Result<ExhaustiveSummary, CertifyError> {
        let card = self.space.cardinality();
        if card > BigInt::from(cap) {
            return Err(CertifyError::SearchSpaceTooLarge {
                size: card.to_string(),
                cap,
            });
        }
        let realizations = self.space.realization_count().expect("bounded by the cap");
        let mut units = Vec::new();
        for r in 0..realizations {
            let m = self.space.grid_size(&self.space.realization(r));
            let mut start = 0;
            while start < m {
                units.push((r, start, (start + CHUNK).min(m)));
                start += CHUNK;
            }
        }
        let acc = units
            .par_iter()
            .map(|&(r, start, end)| {
                let real = self.space.realization(r);
                let ev = self.evaluator(&real)?;
                let (lo, hi) = self.space.solver_box(&real);
                let mut x = vec![0i64; lo.len()];
                let mut acc = Acc::new();
                for idx in start..end {
                    self.space.grid_point(&lo, &hi, idx, &mut x);
                    acc.observe((r, idx), &ev.eval(&x)?, eps);
                }
                Ok::<_, CertifyError>(acc)
            })
            .try_reduce(Acc::new, |a, b| Ok(a.merge(b)))?;
        self.resolve(acc, eps, |(r, idx)| {
            let realization = self.space.realization(r);
            let (lo, hi) = self.space.solver_box(&realization);
            let mut x = vec![0i64; lo.len()];
            self.space.grid_point(&lo, &hi, idx, &mut x);
            Point { realization, x }
        })
    }

    fn sample(&self, seed: u64, i: u64) -> Point {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        self.space.sample(&mut rng)
    }

    fn scan_samples(&self, samples: u64, seed: u64, eps: Option<i64>) -> Result<ExhaustiveSummary, CertifyError> {
        let chunks = samples.div_ceil(SAMPLE_CHUNK);
        let acc = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Acc::new();
                for i in c * SAMPLE_CHUNK..((c + 1) * SAMPLE_CHUNK).min(samples) {
                    let p = self.sample(seed, i);
                    let ev = self.evaluator(&p.realization)?;
                    acc.observe((0, i), &ev.eval(&p.x)?, eps);
                }
                Ok::<_, CertifyError>(acc)
            })
            .try_reduce(Acc::new, |a, b| Ok(a.merge(b)))?;
        self.resolve(acc, eps, |(_, i)| self.sample(seed, i))
    }

    fn resolve(
        &self,
        acc: Acc,
        eps: Option<i64>,
        point_at: impl Fn(Key) -> Point,
    ) -> Result<ExhaustiveSummary, CertifyError> {
        let q = self.setup.fmt.q();
        let eval_at = |key: Key| -> Result<(Point, PointEval), CertifyError> {
            let p = point_at(key);
            let e = self.evaluator(&p.realization)?.eval(&p.x)?;
            Ok((p, e))
        };
        let ext = |b: Best, bits: u32| -> Result<Option<Extremum>, CertifyError> {
            b.0.map(|(v, key)| {
                let (point, eval) = eval_at(key)?;
                Ok(Extremum {
                    value: v.to_rat(bits),
                    point,
                    eval,
                })
            })
            .transpose()
        };
        Ok(ExhaustiveSummary {
            eps_hat: eps,
            points: acc.points,
            exits: acc.exits,
            omega_sq: ext(acc.omega, 6 * q)?,
            delta_sq: ext(acc.delta, 6 * q)?,
            omega_small_sq: ext(acc.omega_small, 6 * q)?,
            theta_sq: ext(acc.theta, 2 * q)?,
            assumption_min: ext(acc.assumption, 6 * q)?,
            gradient_overflow: acc.grad_overflow.map(eval_at).transpose()?,
            overflow: acc.overflow.map(eval_at).transpose()?,
        })
    }

    fn witness(&self, kind: QueryKind, query: &BoundQuery, point: &Point, eval: &PointEval) -> Witness {
        Witness::build(
            &self.setup,
            point,
            self.space.q_data(point.realization.q_index),
            kind,
            &query.threshold,
            query.eps_hat,
            eval,
        )
    }

    fn decide(&self, s: &ExhaustiveSummary, query: &BoundQuery) -> Result<Verdict, CertifyError> {
        let complete = matches!(self.backend, BackendKind::Exhaustive { .. }) && self.space.c_stride() == 1;
        let no_violation = if complete { Verdict::pass() } else { Verdict::unknown() };
        let overflow_err = |(p, e): &(Point, PointEval)| {
            CertifyError::Overflow(Box::new(self.witness(QueryKind::Overflow, query, p, e)))
        };
        let thr = &query.threshold;
        match query.kind {
            QueryKind::Overflow => Ok(match &s.overflow {
                Some((p, e)) => Verdict::fail(self.witness(QueryKind::Overflow, query, p, e)),
                None => no_violation,
            }),
            QueryKind::OmegaSq => {
                if let Some(o) = &s.gradient_overflow {
                    return Err(overflow_err(o));
                }
                Ok(match &s.omega_sq {
                    Some(x) if &x.value > thr => Verdict::fail(self.witness(query.kind, query, &x.point, &x.eval)),
                    _ => no_violation,
                })
            }
            kind => {
                if let Some(o) = &s.overflow {
                    return Err(overflow_err(o));
                }
                let ext = s.extremum(kind);
                let violated = match ext {
                    Some(x) if kind == QueryKind::AssumptionEps => &x.value < thr,
                    Some(x) => &x.value > thr,
                    None => false,
                };
                Ok(match ext {
                    Some(x) if violated => Verdict::fail(self.witness(kind, query, &x.point, &x.eval)),
                    _ => no_violation,
                })
            }
        }
    }
}
