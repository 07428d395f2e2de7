//! Two-projection hyperplane method for the monotone pricing VI.
//!
//! Each iteration projects `p - mu Z(p)` onto the feasible set, backtracks
//! along the segment towards that projection until the Armijo-type test
//! holds at a point `z`, and then projects the current iterate onto the
//! feasible set cut by the half-space `<Z(z), q - z> <= 0`. The half-space
//! contains the solution and strictly excludes the current iterate, so the
//! distance to the solution never increases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::market::{check_len, Allocation, PriceVector};
use crate::scalar::{dist2, dot, Scalar};
use crate::vi::{eval_operator, lipschitz_constant, FeasibleSet, HalfSpace, VIProblem};

/// Backtracking steps allowed before the line search gives up.
pub const MAX_LINE_SEARCH_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams<T> {
    /// Projection step; `None` uses `1 / max_n alpha_n`.
    pub step_mu: Option<T>,
    pub armijo_sigma: T,
    /// Backtracking ratio.
    pub armijo_gamma: T,
    /// Natural-residual tolerance.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            step_mu: None,
            armijo_sigma: T::lit(0.3),
            armijo_gamma: T::lit(0.5),
            tol: T::lit(1e-8),
            max_iter: 500,
        }
    }
}

impl<T: Scalar> SolverParams<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field, x: T| {
            if x > T::zero() && x < T::one() {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must lie in (0, 1), got {x}")))
            }
        };
        unit("armijo_sigma", self.armijo_sigma)?;
        unit("armijo_gamma", self.armijo_gamma)?;
        if !(self.tol > T::zero()) {
            return Err(Error::invalid(
                "tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if let Some(mu) = self.step_mu {
            if !(mu > T::zero()) || !mu.is_finite() {
                return Err(Error::invalid("step_mu", format!("must be positive, got {mu}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    /// The projection step actually used on `prob`.
    pub fn step(&self, prob: &VIProblem<T>) -> T {
        self.step_mu
            .unwrap_or_else(|| T::one() / lipschitz_constant(prob))
    }
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace<T> {
    /// `p^0, p^1, ...`; one more entry than `search_points`.
    pub iterates: Vec<PriceVector<T>>,
    /// Natural residual at each iterate.
    pub residuals: Vec<T>,
    pub search_points: Vec<PriceVector<T>>,
    pub linesearch_steps: Vec<usize>,
    pub converged: bool,
    /// Number of hyperplane updates performed.
    pub iterations: usize,
}

impl<T> Default for SolveTrace<T> {
    fn default() -> Self {
        Self {
            iterates: Vec::new(),
            residuals: Vec::new(),
            search_points: Vec::new(),
            linesearch_steps: Vec::new(),
            converged: false,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution<T> {
    pub allocation: Allocation<T>,
    pub trace: SolveTrace<T>,
}

#[derive(Debug, Error)]
pub enum SolveError<T: std::fmt::Debug> {
    #[error(transparent)]
    Model(#[from] Error),
    /// Iteration cap reached; carries the last allocation and the full trace.
    #[error("no convergence within {} iterations (last residual {:?})", .0.trace.iterations, .0.trace.residuals.last())]
    NotConverged(Box<Solution<T>>),
}

impl<T: std::fmt::Debug> SolveError<T> {
    pub fn trace(&self) -> Option<&SolveTrace<T>> {
        match self {
            SolveError::NotConverged(s) => Some(&s.trace),
            SolveError::Model(_) => None,
        }
    }
}

/// Where operator values come from during a solve.
///
/// The centralized solver evaluates the operator directly; the negotiation
/// simulation gathers each entry from the owning agent.
pub trait OperatorSource<T: Scalar> {
    fn operator(&mut self, round: usize, p: &[T]) -> Vec<T>;

    /// `Z(z)` at a line-search point `z` along the direction `d = p - r`.
    fn probe(&mut self, round: usize, z: &[T], d: &[T]) -> Vec<T>;

    /// Called with each new iterate.
    fn publish(&mut self, _round: usize, _p: &[T]) {}
}

/// Direct evaluation of the operator on a known problem.
#[derive(Debug, Clone, Copy)]
pub struct DirectOperator<'a, T> {
    prob: &'a VIProblem<T>,
}

impl<'a, T: Scalar> DirectOperator<'a, T> {
    pub fn new(prob: &'a VIProblem<T>) -> Self {
        Self { prob }
    }
}

impl<T: Scalar> OperatorSource<T> for DirectOperator<'_, T> {
    fn operator(&mut self, _round: usize, p: &[T]) -> Vec<T> {
        eval_operator(p, self.prob)
    }

    fn probe(&mut self, _round: usize, z: &[T], _d: &[T]) -> Vec<T> {
        eval_operator(z, self.prob)
    }
}

/// `r = Proj(p - mu Z(p))` and `|r - p|`; the norm vanishes exactly at the
/// solution.
pub fn natural_residual<T: Scalar>(p: &[T], prob: &VIProblem<T>, mu: T) -> Result<(PriceVector<T>, T)> {
    check_len(prob.dim(), p.len())?;
    let z = eval_operator(p, prob);
    residual_from(p, &z, prob.feasible_set(), mu)
}

fn residual_from<T: Scalar>(p: &[T], z: &[T], set: &FeasibleSet<T>, mu: T) -> Result<(PriceVector<T>, T)> {
    let step: Vec<T> = p.iter().zip(z).map(|(&x, &g)| x - mu * g).collect();
    let r = set.project(&step)?;
    let norm = dist2(&r, p);
    Ok((r, norm))
}

/// Backtracks `z = p + theta (r - p)`, `theta = gamma^m`, until
/// `<Z(z), p - r> >= (sigma / mu) |p - r|^2`. Returns `z` and `m`.
pub fn line_search<T: Scalar>(
    p: &[T],
    r: &[T],
    prob: &VIProblem<T>,
    params: &SolverParams<T>,
) -> Result<(PriceVector<T>, usize)> {
    check_len(prob.dim(), p.len())?;
    check_len(prob.dim(), r.len())?;
    let mu = params.step(prob);
    let set = prob.feasible_set();
    let (z, m, _) = search_segment(&mut DirectOperator::new(prob), set, 0, p, r, params, mu)?;
    Ok((z, m))
}

fn search_segment<T: Scalar, S: OperatorSource<T>>(
    source: &mut S,
    set: &FeasibleSet<T>,
    round: usize,
    p: &[T],
    r: &[T],
    params: &SolverParams<T>,
    mu: T,
) -> Result<(PriceVector<T>, usize, Vec<T>)> {
    let d: Vec<T> = p.iter().zip(r).map(|(&a, &b)| a - b).collect();
    let threshold = params.armijo_sigma / mu * dot(&d, &d);
    let mut theta = T::one();
    for m in 0..=MAX_LINE_SEARCH_STEPS {
        let z: Vec<T> = p.iter().zip(&d).map(|(&x, &di)| x - theta * di).collect();
        let zz = source.probe(round, &z, &d);
        if set.face_inner(&zz, p, r) >= threshold {
            return Ok((PriceVector::from_projection(z), m, zz));
        }
        theta = theta * params.armijo_gamma;
    }
    Err(Error::LineSearchFailure(MAX_LINE_SEARCH_STEPS))
}

/// Separating half-space `{q : <Z(z), q> <= <Z(z), z>}`.
///
/// The solution always lies inside it. Returns `None` when `Z(z) = 0`, in
/// which case `z` itself is the solution.
pub fn hyperplane_from<T: Scalar>(z: &[T], prob: &VIProblem<T>) -> Option<HalfSpace<T>> {
    halfspace_at(eval_operator(z, prob), z)
}

fn halfspace_at<T: Scalar>(normal: Vec<T>, z: &[T]) -> Option<HalfSpace<T>> {
    if normal.iter().all(|&x| x == T::zero()) {
        return None;
    }
    let offset = dot(&normal, z);
    Some(HalfSpace::new(normal, offset))
}

/// Solves the VI from `p0` (or [`VIProblem::default_start`]).
pub fn solve<T: Scalar>(
    prob: &VIProblem<T>,
    params: &SolverParams<T>,
    p0: Option<&PriceVector<T>>,
) -> std::result::Result<Solution<T>, SolveError<T>> {
    solve_with(prob, params, p0, &mut DirectOperator::new(prob))
}

/// [`solve`] with operator values supplied by `source`.
pub fn solve_with<T: Scalar, S: OperatorSource<T>>(
    prob: &VIProblem<T>,
    params: &SolverParams<T>,
    p0: Option<&PriceVector<T>>,
    source: &mut S,
) -> std::result::Result<Solution<T>, SolveError<T>> {
    params.validate()?;
    let mu = params.step(prob);
    let (prices, trace) = iterate(prob.feasible_set(), mu, params, p0, source)?;
    let allocation = allocation_at(prob, prices, params.tol)?;
    let solution = Solution { allocation, trace };
    if solution.trace.converged {
        Ok(solution)
    } else {
        Err(SolveError::NotConverged(Box::new(solution)))
    }
}

/// The bare iteration: needs only the feasible set, the projection step
/// `mu` and operator values, never the users' private parameters.
///
/// Returns the final prices (the last projection step, so a binding budget
/// is met exactly) and the trace; `trace.converged` tells whether the
/// tolerance was reached. The step size in `params` is ignored in favor of
/// `mu`.
pub fn iterate<T: Scalar, S: OperatorSource<T>>(
    set: &FeasibleSet<T>,
    mu: T,
    params: &SolverParams<T>,
    p0: Option<&PriceVector<T>>,
    source: &mut S,
) -> Result<(PriceVector<T>, SolveTrace<T>)> {
    params.validate()?;
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(Error::invalid("step_mu", format!("must be positive, got {mu}")));
    }
    let mut p = match p0 {
        Some(p0) => {
            check_len(set.dim(), p0.len())?;
            set.project(p0)?
        }
        None => set.default_start(),
    };
    let mut trace = SolveTrace::default();

    for round in 0..=params.max_iter {
        let zp = source.operator(round, &p);
        let (r, norm) = residual_from(&p, &zp, set, mu)?;
        trace.iterates.push(p.clone());
        trace.residuals.push(norm);
        if norm <= params.tol {
            trace.converged = true;
            return Ok((r, trace));
        }
        if round == params.max_iter {
            return Ok((r, trace));
        }
        let (z, m, zz) = search_segment(source, set, round, &p, &r, params, mu)?;
        trace.linesearch_steps.push(m);
        trace.search_points.push(z.clone());
        if zz.iter().all(|&x| x == T::zero()) {
            // The search point zeroes the operator: it is the solution.
            trace.iterations += 1;
            trace.iterates.push(z.clone());
            trace.residuals.push(T::zero());
            trace.converged = true;
            return Ok((z, trace));
        }
        p = set.project_anchored(&p, &zz, &z)?;
        trace.iterations += 1;
        source.publish(round, &p);
    }
    unreachable!("the last round always returns")
}

/// Builds the allocation at `prices`, estimating the budget multiplier from
/// the stationarity residuals of interior coordinates: each one gives
/// `tau = (P_n - alpha_n p_n - e_n) / e_n`, and the estimate is their mean.
pub fn allocation_at<T: Scalar>(
    prob: &VIProblem<T>,
    prices: PriceVector<T>,
    tol: T,
) -> Result<Allocation<T>> {
    let budget = prob.budget();
    let spent = dot(prob.surplus(), &prices);
    let complete = (spent - budget).abs() <= tol * budget.max(T::one());
    let tau = if complete {
        estimate_tau(prob, &prices)
    } else {
        T::zero()
    };
    let mut alloc = Allocation::evaluate(prob.eus(), prices, tau, budget, tol * budget.max(T::one()))?;
    alloc.complete = complete;
    Ok(alloc)
}

/// Whether `p` sits strictly inside `[lo, hi]` beyond a relative margin.
pub(crate) fn is_interior<T: Scalar>(p: T, lo: T, hi: T) -> bool {
    let margin = T::tol(1e-9, hi.abs().max(lo.abs()));
    p - lo > margin && hi - p > margin
}

fn estimate_tau<T: Scalar>(prob: &VIProblem<T>, p: &[T]) -> T {
    let (sum, count) = prob
        .eus()
        .iter()
        .zip(p)
        .zip(prob.lower().iter().zip(prob.upper()))
        .filter(|((_, &x), (&lo, &hi))| is_interior(x, lo, hi))
        .fold((T::zero(), 0usize), |(s, c), ((eu, &x), _)| {
            (s - eu.operator_component(x) / eu.surplus(), c + 1)
        });
    if count == 0 {
        return T::zero();
    }
    (sum / T::from_usize(count).expect("count fits scalar")).max(T::zero())
}
