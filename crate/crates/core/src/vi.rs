//! The pricing game posed as a variational inequality over price vectors.
//!
//! The feasible set is the box `lower <= p <= upper` intersected with the
//! budget half-space `sum_n e_n p_n <= C`. The operator is the stacked
//! negative benefit gradient, affine with a positive diagonal Jacobian, so
//! the problem is strongly monotone and has exactly one solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{check_len, EnergyUser, MarketConfig, PriceVector};
use crate::projection;
use crate::scalar::{dot, Scalar};

/// Price box intersected with the budget half-space: all that the
/// projections need, and all that the facility controller knows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet<T> {
    surplus: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    budget: T,
}

impl<T: Scalar> FeasibleSet<T> {
    pub fn new(surplus: Vec<T>, lower: Vec<T>, upper: Vec<T>, budget: T) -> Result<Self> {
        if surplus.is_empty() {
            return Err(Error::invalid("surplus", "at least one energy user is required"));
        }
        check_len(surplus.len(), lower.len())?;
        check_len(surplus.len(), upper.len())?;
        if let Some(n) = surplus.iter().position(|&e| !(e > T::zero()) || !e.is_finite()) {
            return Err(Error::invalid(
                "surplus",
                format!("user {n}: must be positive and finite"),
            ));
        }
        if !(budget > T::zero()) || !budget.is_finite() {
            return Err(Error::invalid(
                "budget",
                format!("must be positive and finite, got {budget}"),
            ));
        }
        for (n, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid(
                    "bounds",
                    format!("user {n}: need finite lower < upper, got [{lo}, {hi}]"),
                ));
            }
        }
        let floor_cost = dot(&surplus, &lower);
        if floor_cost > budget {
            return Err(Error::Infeasible(format!(
                "paying every user its lower bound costs {floor_cost} > budget {budget}"
            )));
        }
        Ok(Self {
            surplus,
            lower,
            upper,
            budget,
        })
    }

    pub fn surplus(&self) -> &[T] {
        &self.surplus
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn budget(&self) -> T {
        self.budget
    }

    pub fn dim(&self) -> usize {
        self.surplus.len()
    }

    /// Center of the box projected onto the set.
    pub fn default_start(&self) -> PriceVector<T> {
        let half = T::lit(0.5);
        let mid: Vec<T> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + half * (hi - lo))
            .collect();
        self.project(&mid).expect("dimension matches by construction")
    }

    /// Whether `p` satisfies the box exactly and the budget within `budget_tol`.
    pub fn contains(&self, p: &[T], budget_tol: T) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
            && dot(&self.surplus, p) <= self.budget + budget_tol
    }

    /// Euclidean projection of `v`.
    pub fn project(&self, v: &[T]) -> Result<PriceVector<T>> {
        check_len(self.dim(), v.len())?;
        Ok(PriceVector::from_projection(projection::box_budget(
            v,
            &self.surplus,
            &self.lower,
            &self.upper,
            self.budget,
        )))
    }

    /// Euclidean projection of `v` onto the set cut by `hs`.
    ///
    /// Fails with [`Error::SeparationFailure`] when the intersection is empty.
    pub fn project_cut(&self, v: &[T], hs: &HalfSpace<T>, method: CutProjection) -> Result<PriceVector<T>> {
        check_len(self.dim(), v.len())?;
        check_len(self.dim(), hs.normal.len())?;
        let cut = projection::Cut {
            normal: &hs.normal,
            offset: hs.offset,
            anchor: None,
        };
        self.project_with(v, cut, method)
    }

    /// Projection onto the set cut by `{q : <normal, q - anchor> <= 0}`.
    pub(crate) fn project_anchored(&self, v: &[T], normal: &[T], anchor: &[T]) -> Result<PriceVector<T>> {
        let cut = projection::Cut {
            normal,
            offset: dot(normal, anchor),
            anchor: Some(projection::Anchor {
                point: anchor,
                slack: self.slack(anchor),
            }),
        };
        self.project_with(v, cut, CutProjection::Dual)
    }

    fn project_with(
        &self,
        v: &[T],
        cut: projection::Cut<'_, T>,
        method: CutProjection,
    ) -> Result<PriceVector<T>> {
        let (w, lo, hi, cap) = (&self.surplus, &self.lower, &self.upper, self.budget);
        let p = match method {
            CutProjection::Dual => projection::box_budget_cut(v, w, lo, hi, cap, cut)?,
            CutProjection::Dykstra => projection::dykstra(v, w, lo, hi, cap, cut)?,
        };
        Ok(PriceVector::from_projection(p))
    }

    /// `C - sum_n e_n p_n`, exactly zero for points on the budget face up to
    /// rounding.
    pub(crate) fn slack(&self, p: &[T]) -> T {
        projection::budget_slack(&self.surplus, p, self.budget)
    }

    /// `<a, p - r>`, accurate even when `a` is nearly normal to the budget
    /// face and both points lie on it.
    pub(crate) fn face_inner(&self, a: &[T], p: &[T], r: &[T]) -> T {
        let d: Vec<T> = p.iter().zip(r).map(|(&x, &y)| x - y).collect();
        projection::face_inner(a, &d, &self.surplus, self.slack(p), self.slack(r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VIProblem<T> {
    eus: Vec<EnergyUser<T>>,
    config: MarketConfig<T>,
    set: FeasibleSet<T>,
}

impl<T: Scalar> VIProblem<T> {
    /// Box defaults to `[0, P_n]` for every user.
    pub fn new(eus: Vec<EnergyUser<T>>, config: MarketConfig<T>) -> Result<Self> {
        let lower = vec![T::zero(); eus.len()];
        let upper = eus.iter().map(|eu| eu.price_cap()).collect();
        Self::with_bounds(eus, config, lower, upper)
    }

    pub fn with_bounds(
        eus: Vec<EnergyUser<T>>,
        config: MarketConfig<T>,
        lower: Vec<T>,
        upper: Vec<T>,
    ) -> Result<Self> {
        if eus.is_empty() {
            return Err(Error::invalid("eus", "at least one energy user is required"));
        }
        let surplus = eus.iter().map(|eu| eu.surplus()).collect();
        let set = FeasibleSet::new(surplus, lower, upper, config.budget())?;
        Ok(Self { eus, config, set })
    }

    pub fn eus(&self) -> &[EnergyUser<T>] {
        &self.eus
    }

    pub fn config(&self) -> &MarketConfig<T> {
        &self.config
    }

    pub fn feasible_set(&self) -> &FeasibleSet<T> {
        &self.set
    }

    pub fn budget(&self) -> T {
        self.set.budget
    }

    pub fn lower(&self) -> &[T] {
        &self.set.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.set.upper
    }

    pub fn surplus(&self) -> &[T] {
        &self.set.surplus
    }

    pub fn dim(&self) -> usize {
        self.eus.len()
    }

    /// Same market restricted to the users at `indices`, keeping their bounds.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::with_bounds(
            indices.iter().map(|&i| self.eus[i]).collect(),
            self.config,
            indices.iter().map(|&i| self.set.lower[i]).collect(),
            indices.iter().map(|&i| self.set.upper[i]).collect(),
        )
    }

    /// Replaces the budget, keeping users and bounds.
    pub fn with_budget(&self, budget: T) -> Result<Self> {
        Self::with_bounds(
            self.eus.clone(),
            self.config.with_budget(budget)?,
            self.set.lower.clone(),
            self.set.upper.clone(),
        )
    }

    /// Center of the box projected onto the feasible set.
    pub fn default_start(&self) -> PriceVector<T> {
        self.set.default_start()
    }

    /// Whether `p` satisfies the box exactly and the budget within `budget_tol`.
    pub fn is_feasible(&self, p: &[T], budget_tol: T) -> bool {
        self.set.contains(p, budget_tol)
    }
}

/// Half-space `{p : <normal, p> <= offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace<T> {
    pub normal: Vec<T>,
    pub offset: T,
}

impl<T: Scalar> HalfSpace<T> {
    pub fn new(normal: Vec<T>, offset: T) -> Self {
        Self { normal, offset }
    }

    /// `<normal, p> - offset`; positive outside the half-space.
    pub fn violation(&self, p: &[T]) -> T {
        dot(&self.normal, p) - self.offset
    }

    pub fn contains(&self, p: &[T], tol: T) -> bool {
        self.violation(p) <= tol
    }
}

/// Pseudo-gradient `Z(p)_n = alpha_n p_n + e_n - P_n`.
pub fn eval_operator<T: Scalar>(p: &[T], prob: &VIProblem<T>) -> Vec<T> {
    debug_assert_eq!(p.len(), prob.dim());
    prob.eus
        .iter()
        .zip(p)
        .map(|(eu, &x)| eu.operator_component(x))
        .collect()
}

/// Strong monotonicity modulus of the operator, `min_n alpha_n`.
///
/// Since the Jacobian is `diag(alpha)`,
/// `<Z(p) - Z(q), p - q> = sum_n alpha_n (p_n - q_n)^2 >= min_n alpha_n |p - q|^2`.
pub fn monotonicity_modulus<T: Scalar>(prob: &VIProblem<T>) -> T {
    prob.eus
        .iter()
        .map(|eu| eu.sensitivity())
        .fold(T::infinity(), T::min)
}

/// Lipschitz constant of the operator, `max_n alpha_n`.
pub fn lipschitz_constant<T: Scalar>(prob: &VIProblem<T>) -> T {
    prob.eus.iter().map(|eu| eu.sensitivity()).fold(T::zero(), T::max)
}

/// Euclidean projection onto `{lower <= p <= upper, sum e_n p_n <= C}`.
pub fn project_feasible<T: Scalar>(v: &[T], prob: &VIProblem<T>) -> Result<PriceVector<T>> {
    prob.set.project(v)
}

/// Algorithm used for projecting onto the feasible set cut by a half-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CutProjection {
    /// Outer root search on the half-space multiplier around the exact
    /// box-and-budget projection.
    #[default]
    Dual,
    /// Cyclic Dykstra over box, budget and cut.
    Dykstra,
}

/// Euclidean projection onto the feasible set intersected with `hs`.
///
/// Fails with [`Error::SeparationFailure`] when the intersection is empty.
pub fn project_feasible_cap_halfspace<T: Scalar>(
    v: &[T],
    hs: &HalfSpace<T>,
    prob: &VIProblem<T>,
) -> Result<PriceVector<T>> {
    prob.set.project_cut(v, hs, CutProjection::Dual)
}

pub fn project_feasible_cap_halfspace_with<T: Scalar>(
    v: &[T],
    hs: &HalfSpace<T>,
    prob: &VIProblem<T>,
    method: CutProjection,
) -> Result<PriceVector<T>> {
    prob.set.project_cut(v, hs, method)
}
