//! Independent ground truth for the equilibrium.
//!
//! [`tau_solve`] exploits the separable structure: for a common budget
//! multiplier `tau` every user's best price is a clamped affine function,
//! and `tau` is found by bisection on the budget. The grid routines
//! enumerate price grids on tiny instances and share no code path with the
//! iterative solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{benefit, check_len, EnergyUser, PriceVector};
use crate::scalar::{clamp, dot, Scalar};
use crate::solver::is_interior;
use crate::vi::VIProblem;

// Stop well inside the 1e-10 relative budget guarantee; the bisection also
// stops once the bracket collapses.
const TAU_REL_TOL: f64 = 1e-14;
const TAU_MAX_ITER: usize = 200;

/// Largest instance the grid oracles accept.
pub const GRID_MAX_USERS: usize = 3;

/// Solution of the KKT system of the budget-coupled problem.
///
/// The budget `sum_n e_n p_n <= C` has gradient `e_n` in user `n`'s price,
/// so one common multiplier `tau` enters user `n`'s stationarity condition
/// as `tau_n = tau * e_n`: `P_n - alpha_n p_n - e_n - tau e_n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KKTSolution<T> {
    pub prices: PriceVector<T>,
    /// Common budget multiplier.
    pub tau: T,
    /// Budget constraint active.
    pub binding: bool,
    /// `P_n - alpha_n p_n - e_n - tau e_n` per user.
    pub stationarity_residuals: Vec<T>,
}

impl<T: Scalar> KKTSolution<T> {
    /// Per-user multipliers `tau * e_n`.
    pub fn user_multipliers(&self, prob: &VIProblem<T>) -> Vec<T> {
        prob.surplus().iter().map(|&e| self.tau * e).collect()
    }
}

/// Price each user picks for a given budget multiplier.
pub fn price_at_tau<T: Scalar>(eu: &EnergyUser<T>, tau: T, lower: T, upper: T) -> T {
    clamp(
        (eu.price_cap() - (T::one() + tau) * eu.surplus()) / eu.sensitivity(),
        lower,
        upper,
    )
}

fn prices_at<T: Scalar>(prob: &VIProblem<T>, tau: T) -> Vec<T> {
    prob.eus()
        .iter()
        .zip(prob.lower().iter().zip(prob.upper()))
        .map(|(eu, (&lo, &hi))| price_at_tau(eu, tau, lo, hi))
        .collect()
}

/// Solves the KKT system with one common multiplier.
///
/// Returns `tau = 0` when the unconstrained best responses already fit the
/// budget. Problems with an empty feasible set cannot be constructed, so
/// this never fails.
pub fn tau_solve<T: Scalar>(prob: &VIProblem<T>) -> KKTSolution<T> {
    let budget = prob.budget();
    let spend = |tau: T| dot(prob.surplus(), &prices_at(prob, tau)) - budget;
    let finish = |tau: T, binding: bool| {
        let prices = prices_at(prob, tau);
        let stationarity_residuals = prob
            .eus()
            .iter()
            .zip(&prices)
            .map(|(eu, &p)| -eu.operator_component(p) - tau * eu.surplus())
            .collect();
        KKTSolution {
            prices: PriceVector::from_projection(prices),
            tau,
            binding,
            stationarity_residuals,
        }
    };

    let excess0 = spend(T::zero());
    if excess0 <= T::zero() {
        return finish(T::zero(), false);
    }
    let mut lo = T::zero();
    let mut hi = prob
        .eus()
        .iter()
        .zip(prob.lower())
        .map(|(eu, &l)| (eu.price_cap() - eu.surplus() - eu.sensitivity() * l) / eu.surplus())
        .fold(T::zero(), T::max);
    let tol = T::tol(TAU_REL_TOL, budget);
    let (mut best, mut best_err) = (hi, spend(hi).abs());
    for _ in 0..TAU_MAX_ITER {
        let mid = lo + (hi - lo) * T::lit(0.5);
        let f = spend(mid);
        if f.abs() < best_err {
            best = mid;
            best_err = f.abs();
        }
        if best_err <= tol || !(mid > lo && mid < hi) {
            break;
        }
        if f > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    finish(best, true)
}

/// KKT violation of `(p, tau)`.
///
/// Stationarity `P_n - alpha_n p_n - e_n - tau e_n = 0` is measured in absolute
/// value on interior coordinates and one-sided on coordinates at a bound
/// (a price at its floor may only want to go lower, one at its ceiling
/// only higher). Adds the complementary-slackness gap
/// `|tau (sum e_n p_n - C)|` and any negativity of `tau`.
pub fn kkt_residual<T: Scalar>(p: &[T], tau: T, prob: &VIProblem<T>) -> Result<T> {
    check_len(prob.dim(), p.len())?;
    let stationarity = prob
        .eus()
        .iter()
        .zip(p)
        .zip(prob.lower().iter().zip(prob.upper()))
        .map(|((eu, &x), (&lo, &hi))| {
            let g = -eu.operator_component(x) - tau * eu.surplus();
            if is_interior(x, lo, hi) {
                g.abs()
            } else if x <= lo {
                g.max(T::zero())
            } else {
                (-g).max(T::zero())
            }
        })
        .fold(T::zero(), T::max);
    let slackness = (tau * (dot(prob.surplus(), p) - prob.budget())).abs();
    Ok(stationarity + slackness + (-tau).max(T::zero()))
}

fn grid_axis<T: Scalar>(lo: T, hi: T, step: T) -> Vec<T> {
    let count = ((hi - lo) / step).floor().to_usize().unwrap_or(0);
    (0..=count)
        .map(|k| lo + step * T::from_usize(k).expect("grid index fits scalar"))
        .collect()
}

fn check_grid<T: Scalar>(prob: &VIProblem<T>, grid_step: T) -> Result<()> {
    if prob.dim() > GRID_MAX_USERS {
        return Err(Error::OracleTooLarge {
            max: GRID_MAX_USERS,
            actual: prob.dim(),
        });
    }
    if !(grid_step > T::zero()) || !grid_step.is_finite() {
        return Err(Error::invalid(
            "grid_step",
            format!("must be positive, got {grid_step}"),
        ));
    }
    Ok(())
}

/// Enumerates every grid point of the coordinates in `outer` that leaves
/// budget for the remaining coordinate, calling `visit(prefix, room)` with
/// the prices chosen so far (indexed like the problem) and the budget left.
fn enumerate_outer<T: Scalar>(
    prob: &VIProblem<T>,
    outer: &[usize],
    grid_step: T,
    prices: &mut [T],
    room: T,
    visit: &mut impl FnMut(&[T], T),
) {
    let Some((&n, rest)) = outer.split_first() else {
        visit(prices, room);
        return;
    };
    let e = prob.surplus()[n];
    for q in grid_axis(prob.lower()[n], prob.upper()[n], grid_step) {
        let left = room - e * q;
        if left < -T::tol(1e-12, prob.budget()) {
            break;
        }
        prices[n] = q;
        enumerate_outer(prob, rest, grid_step, prices, left, visit);
    }
}

/// Welfare-maximizing price vector found by exhaustive grid search.
///
/// One user at a time is singled out; everyone else ranges over the grid
/// `lower_n + k * grid_step` and the singled-out user's price is the exact
/// maximizer of its (concave) benefit over whatever budget is left. The
/// best point over all choices wins. A fully discrete grid cannot
/// represent points on the budget hyperplane, where the optimum lies
/// whenever the budget binds, and a user stuck at a bound cannot absorb
/// the leftover budget, hence trying every user.
pub fn brute_force_welfare<T: Scalar>(prob: &VIProblem<T>, grid_step: T) -> Result<PriceVector<T>> {
    check_grid(prob, grid_step)?;
    let mut best: Option<(T, Vec<T>)> = None;
    for last in 0..prob.dim() {
        let outer: Vec<usize> = (0..prob.dim()).filter(|&n| n != last).collect();
        let eu = prob.eus()[last];
        let (lo, hi) = (prob.lower()[last], prob.upper()[last]);
        let best_last = crate::market::price_cap_bound(&eu);
        let mut prices = prob.lower().to_vec();
        enumerate_outer(
            prob,
            &outer,
            grid_step,
            &mut prices,
            prob.budget(),
            &mut |prefix, room| {
                let cap = hi.min(room / eu.surplus());
                if cap < lo {
                    return;
                }
                let q = clamp(best_last, lo, cap);
                let welfare = outer.iter().fold(benefit(q, &eu), |acc, &n| {
                    acc + benefit(prefix[n], &prob.eus()[n])
                });
                if best.as_ref().is_none_or(|(w, _)| welfare > *w) {
                    let mut point = prefix.to_vec();
                    point[last] = q;
                    best = Some((welfare, point));
                }
            },
        );
    }
    let (_, point) = best.expect("lower bounds are feasible");
    Ok(PriceVector::from_projection(point))
}

/// Best benefit of `eu` over grid prices in `[lo, cap]` (grid anchored at
/// `lo`), using concavity: only the grid neighbours of the clamped
/// unconstrained maximizer can win.
fn best_grid_benefit<T: Scalar>(eu: &EnergyUser<T>, lo: T, cap: T, step: T) -> Option<(T, T)> {
    if cap < lo {
        return None;
    }
    let k_max = ((cap - lo) / step).floor();
    let target = ((crate::market::price_cap_bound(eu) - lo) / step)
        .max(T::zero())
        .min(k_max);
    [target.floor(), target.ceil()]
        .into_iter()
        .filter(|&k| k >= T::zero() && k <= k_max)
        .map(|k| {
            let q = lo + k * step;
            (benefit(q, eu), q)
        })
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
}

/// Largest social welfare over the fully discrete feasible grid, with the
/// maximizing grid point.
pub fn grid_welfare_max<T: Scalar>(prob: &VIProblem<T>, grid_step: T) -> Result<(T, PriceVector<T>)> {
    check_grid(prob, grid_step)?;
    let last = prob.dim() - 1;
    let outer: Vec<usize> = (0..last).collect();
    let eu = prob.eus()[last];
    let (lo, hi) = (prob.lower()[last], prob.upper()[last]);
    let mut best: Option<(T, Vec<T>)> = None;
    let mut prices = prob.lower().to_vec();
    let slack = T::tol(1e-12, prob.budget());
    enumerate_outer(
        prob,
        &outer,
        grid_step,
        &mut prices,
        prob.budget(),
        &mut |prefix, room| {
            let cap = hi.min((room + slack) / eu.surplus());
            let Some((x_last, q)) = best_grid_benefit(&eu, lo, cap, grid_step) else {
                return;
            };
            let welfare = outer
                .iter()
                .fold(x_last, |acc, &n| acc + benefit(prefix[n], &prob.eus()[n]));
            if best.as_ref().is_none_or(|(w, _)| welfare > *w) {
                let mut point = prefix.to_vec();
                point[last] = q;
                best = Some((welfare, point));
            }
        },
    );
    let (w, point) = best.expect("lower bounds are feasible");
    Ok((w, PriceVector::from_projection(point)))
}

/// Tolerance separating a genuine benefit improvement from rounding noise.
pub const PARETO_TOL: f64 = 1e-9;

/// Whether no feasible grid point Pareto-dominates `p_star`.
///
/// A grid point dominates when every user's benefit is at least its benefit
/// at `p_star` and some user gains more than [`PARETO_TOL`].
pub fn pareto_check<T: Scalar>(p_star: &[T], prob: &VIProblem<T>, grid_step: T) -> Result<bool> {
    check_grid(prob, grid_step)?;
    check_len(prob.dim(), p_star.len())?;
    let reference: Vec<T> = prob
        .eus()
        .iter()
        .zip(p_star)
        .map(|(eu, &p)| benefit(p, eu))
        .collect();
    let strict = T::lit(PARETO_TOL);
    let last = prob.dim() - 1;
    let outer: Vec<usize> = (0..last).collect();
    let eu = prob.eus()[last];
    let (lo, hi) = (prob.lower()[last], prob.upper()[last]);
    let slack = T::tol(1e-12, prob.budget());
    let mut dominated = false;
    let mut prices = prob.lower().to_vec();
    enumerate_outer(
        prob,
        &outer,
        grid_step,
        &mut prices,
        prob.budget(),
        &mut |prefix, room| {
            if dominated {
                return;
            }
            let mut gains = false;
            for &n in &outer {
                let x = benefit(prefix[n], &prob.eus()[n]);
                if x < reference[n] {
                    return;
                }
                gains |= x > reference[n] + strict;
            }
            let cap = hi.min((room + slack) / eu.surplus());
            // Maximizing the last user's benefit is its best shot at dominating.
            if let Some((x_last, _)) = best_grid_benefit(&eu, lo, cap, grid_step) {
                if x_last >= reference[last] && (gains || x_last > reference[last] + strict) {
                    dominated = true;
                }
            }
        },
    );
    Ok(!dominated)
}
