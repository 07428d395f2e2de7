//! Euclidean projections onto `box ∩ {<w, x> <= cap}` and onto that set cut
//! by one more half-space. Weights `w` are strictly positive.

use crate::error::{Error, Result};
use crate::scalar::{clamp, dot, Scalar};

const ROOT_MAX_ITER: usize = 200;
const DYKSTRA_MAX_ITER: usize = 10_000;
const SEPARATION_REL_TOL: f64 = 1e-10;
/// Residuals within this many ulps of the magnitudes involved count as zero.
const ROUNDING_ULPS: f64 = 8.0;

/// Budget slack `cap - <w, x>`, snapped to exactly zero when it is within
/// rounding noise. Points produced by a projection onto the budget face
/// then count as lying on it exactly.
pub(crate) fn budget_slack<T: Scalar>(w: &[T], x: &[T], cap: T) -> T {
    let slack = cap - dot(w, x);
    let mag = w
        .iter()
        .zip(x)
        .fold(cap.abs(), |acc, (&wi, &xi)| acc + (wi * xi).abs());
    if slack.abs() <= T::lit(2.0 * ROUNDING_ULPS) * T::epsilon() * mag {
        T::zero()
    } else {
        slack
    }
}

/// `<a, w> / |w|^2` over the coordinates selected by `free`, or over all of
/// them if none is selected.
fn face_coefficient<T: Scalar>(a: &[T], w: &[T], free: impl Fn(usize) -> bool) -> T {
    let (aw, ww) = (0..a.len())
        .filter(|&n| free(n))
        .fold((T::zero(), T::zero()), |(aw, ww), n| {
            (aw + a[n] * w[n], ww + w[n] * w[n])
        });
    if ww > T::zero() {
        aw / ww
    } else {
        dot(a, w) / dot(w, w)
    }
}

/// `<a, d>` evaluated as `<a - beta w, d> + beta (slack(r) - slack(p))` for
/// `d = p - r`, with `beta` fitted on the coordinates where `d` is nonzero.
///
/// This is the plain inner product in exact arithmetic. Near an equilibrium
/// on the budget face, `a` restricted to the moving coordinates is almost
/// parallel to `w` while `p` and `r` both sit on the face, and the plain
/// form would be swamped by the rounding of `<w, p>` and `<w, r>`.
pub(crate) fn face_inner<T: Scalar>(a: &[T], d: &[T], w: &[T], slack_p: T, slack_r: T) -> T {
    let beta = face_coefficient(a, w, |n| d[n] != T::zero());
    let tangential = a
        .iter()
        .zip(w)
        .zip(d)
        .fold(T::zero(), |acc, ((&ai, &wi), &di)| acc + (ai - beta * wi) * di);
    tangential + beta * (slack_r - slack_p)
}

/// Boundary point of a cut together with its budget slack.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Anchor<'a, T> {
    pub point: &'a [T],
    pub slack: T,
}

/// The half-space `{x : <normal, x> <= offset}`. With an anchor `z` on its
/// boundary the violation is evaluated as `<normal, x - z>` split into its
/// components across and along the budget face, in the manner of
/// [`face_inner`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cut<'a, T> {
    pub normal: &'a [T],
    pub offset: T,
    pub anchor: Option<Anchor<'a, T>>,
}

struct CutEval<'a, T> {
    cut: Cut<'a, T>,
    w: &'a [T],
    cap: T,
    beta: T,
    a_perp: Vec<T>,
}

impl<'a, T: Scalar> CutEval<'a, T> {
    fn new(cut: Cut<'a, T>, w: &'a [T], lower: &[T], upper: &[T], cap: T) -> Self {
        // Split along the budget normal as seen by the coordinates that are
        // free at the anchor; bound ones barely move.
        let beta = match cut.anchor {
            Some(z) => face_coefficient(cut.normal, w, |n| z.point[n] > lower[n] && z.point[n] < upper[n]),
            None => dot(cut.normal, w) / dot(w, w),
        };
        let a_perp = cut
            .normal
            .iter()
            .zip(w)
            .map(|(&ai, &wi)| ai - beta * wi)
            .collect();
        Self {
            cut,
            w,
            cap,
            beta,
            a_perp,
        }
    }

    fn violation(&self, x: &[T]) -> T {
        match self.cut.anchor {
            Some(z) => {
                let tangential = self
                    .a_perp
                    .iter()
                    .zip(x.iter().zip(z.point))
                    .fold(T::zero(), |acc, (&a, (&xi, &zi))| acc + a * (xi - zi));
                tangential + self.beta * (z.slack - budget_slack(self.w, x, self.cap))
            }
            None => dot(self.cut.normal, x) - self.cut.offset,
        }
    }

    /// Rounding noise in [`violation`](Self::violation) at `x`. Differences
    /// of nearby floats are exact, so the anchored form is only as noisy as
    /// the products.
    fn noise(&self, x: &[T]) -> T {
        let mag = match self.cut.anchor {
            Some(z) => self.a_perp.iter().zip(x.iter().zip(z.point)).fold(
                (self.beta * (z.slack - budget_slack(self.w, x, self.cap))).abs(),
                |acc, (&a, (&xi, &zi))| acc + a.abs() * (xi - zi).abs(),
            ),
            None => self
                .cut
                .normal
                .iter()
                .zip(x)
                .fold(self.cut.offset.abs(), |acc, (&a, &xi)| acc + a.abs() * xi.abs()),
        };
        T::lit(ROUNDING_ULPS) * T::epsilon() * mag
    }
}

/// Root of a non-increasing function bracketed by `f(lo) > 0 >= f(hi)`.
///
/// Each round takes a secant step followed by a bisection step, so the
/// bracket at least halves per round and piecewise-linear functions are
/// solved exactly once the bracket sits on one linear piece. Returns a point
/// with `|f| <= tol`, or the non-positive end of the bracket if the round
/// cap is reached.
pub(crate) fn root_decreasing<T: Scalar>(
    mut f: impl FnMut(T) -> T,
    mut lo: T,
    mut f_lo: T,
    mut hi: T,
    mut f_hi: T,
    tol: T,
) -> T {
    let half = T::lit(0.5);
    for _ in 0..ROOT_MAX_ITER {
        if f_hi.abs() <= tol {
            return hi;
        }
        if f_lo.abs() <= tol {
            return lo;
        }
        let denom = f_lo - f_hi;
        let mut s = lo + (hi - lo) * (f_lo / denom);
        if !(s > lo && s < hi) {
            s = lo + half * (hi - lo);
        }
        let f_s = f(s);
        if f_s.abs() <= tol {
            return s;
        }
        if f_s > T::zero() {
            lo = s;
            f_lo = f_s;
        } else {
            hi = s;
            f_hi = f_s;
        }
        let m = lo + half * (hi - lo);
        if !(m > lo && m < hi) {
            break;
        }
        let f_m = f(m);
        if f_m.abs() <= tol {
            return m;
        }
        if f_m > T::zero() {
            lo = m;
            f_lo = f_m;
        } else {
            hi = m;
            f_hi = f_m;
        }
    }
    hi
}

fn clamp_shifted<T: Scalar>(v: &[T], dir: &[T], step: T, lower: &[T], upper: &[T]) -> Vec<T> {
    v.iter()
        .zip(dir)
        .zip(lower.iter().zip(upper))
        .map(|((&x, &d), (&lo, &hi))| clamp(x - step * d, lo, hi))
        .collect()
}

/// Projection onto `{lower <= x <= upper, <w, x> <= cap}`.
///
/// Clamp to the box; if the budget is violated, search for the multiplier
/// `lambda >= 0` with `<w, clamp(v - lambda w)> = cap`.
pub(crate) fn box_budget<T: Scalar>(v: &[T], w: &[T], lower: &[T], upper: &[T], cap: T) -> Vec<T> {
    box_budget_from(v, w, lower, upper, cap, T::zero())
}

/// `clamp(v - nu w)` for the smallest `nu >= nu_min` meeting the budget.
fn box_budget_from<T: Scalar>(v: &[T], w: &[T], lower: &[T], upper: &[T], cap: T, nu_min: T) -> Vec<T> {
    let x0 = clamp_shifted(v, w, nu_min, lower, upper);
    let excess0 = dot(w, &x0) - cap;
    if excess0 <= T::zero() {
        return x0;
    }
    // At this multiplier every coordinate has hit its lower bound.
    let nu_max = v
        .iter()
        .zip(w)
        .zip(lower)
        .map(|((&x, &wi), &lo)| (x - lo) / wi)
        .fold(nu_min, T::max);
    let excess = |nu: T| dot(w, &clamp_shifted(v, w, nu, lower, upper)) - cap;
    let f_hi = excess(nu_max);
    let tol = T::lit(ROUNDING_ULPS) * T::epsilon() * (cap.abs() + T::one());
    let nu = root_decreasing(excess, nu_min, excess0, nu_max, f_hi, tol);
    clamp_shifted(v, w, nu, lower, upper)
}

/// Minimum of `<a, x>` over `{lower <= x <= upper, <w, x> <= cap}` (a
/// fractional knapsack, solved greedily).
pub(crate) fn min_linear<T: Scalar>(a: &[T], w: &[T], lower: &[T], upper: &[T], cap: T) -> T {
    let mut value = dot(a, lower);
    let mut room = cap - dot(w, lower);
    let mut gains: Vec<usize> = (0..a.len()).filter(|&n| a[n] < T::zero()).collect();
    gains.sort_by(|&i, &j| {
        let ri = -a[i] / w[i];
        let rj = -a[j] / w[j];
        rj.partial_cmp(&ri).unwrap_or(std::cmp::Ordering::Equal)
    });
    for n in gains {
        if room <= T::zero() {
            break;
        }
        let step = (upper[n] - lower[n]).min(room / w[n]);
        value = value + a[n] * step;
        room = room - w[n] * step;
    }
    value
}

fn cut_scale<T: Scalar>(cut: &Cut<'_, T>, lower: &[T], upper: &[T]) -> T {
    cut.normal
        .iter()
        .zip(lower.iter().zip(upper))
        .fold(T::one() + cut.offset.abs(), |acc, (&a, (&lo, &hi))| {
            acc + a.abs() * lo.abs().max(hi.abs())
        })
}

fn check_separation<T: Scalar>(cut: &Cut<'_, T>, w: &[T], lower: &[T], upper: &[T], cap: T) -> Result<()> {
    let scale = cut_scale(cut, lower, upper);
    let min_value = min_linear(cut.normal, w, lower, upper, cap);
    if min_value > cut.offset + T::lit(SEPARATION_REL_TOL) * scale {
        return Err(Error::SeparationFailure {
            min_value: min_value.to_f64_lossy(),
            offset: cut.offset.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Projection onto `{lower <= x <= upper, <w, x> <= cap, <a, x> <= b}`.
///
/// For a fixed cut multiplier `mu` the minimizer is the box-and-budget
/// projection of `v - mu a`, and the cut violation along that path is
/// non-increasing in `mu`, so a one-dimensional root search finishes it.
///
/// Near an equilibrium on the budget face the cut normal, restricted to the
/// free coordinates, is almost parallel to `w`, and both multipliers grow
/// without bound while their combination stays moderate. Splitting
/// `a = beta w + a_perp` and searching over `nu = lambda + mu beta` avoids
/// that cancellation:
/// `v - mu a - lambda w = v - mu a_perp - nu w` with `nu >= mu beta`.
pub(crate) fn box_budget_cut<T: Scalar>(
    v: &[T],
    w: &[T],
    lower: &[T],
    upper: &[T],
    cap: T,
    cut: Cut<'_, T>,
) -> Result<Vec<T>> {
    let eval = CutEval::new(cut, w, lower, upper, cap);
    let x0 = box_budget(v, w, lower, upper, cap);
    let g0 = eval.violation(&x0);
    if g0 <= T::zero() {
        return Ok(x0);
    }
    check_separation(&cut, w, lower, upper, cap)?;

    let beta = eval.beta;
    let at = |mu: T| box_budget_from(&shifted(v, &eval.a_perp, mu), w, lower, upper, cap, mu * beta);
    let residual = |mu: T| eval.violation(&at(mu));

    let mut hi = (g0 / dot(cut.normal, cut.normal)).max(T::epsilon());
    let mut x_hi = at(hi);
    let mut g_hi = eval.violation(&x_hi);
    let mut doublings = 0;
    while g_hi > eval.noise(&x_hi) {
        if doublings == ROOT_MAX_ITER || !hi.is_finite() {
            // The cut only touches the feasible set; take the closest point found.
            if g_hi <= T::lit(SEPARATION_REL_TOL) * cut_scale(&cut, lower, upper) {
                return Ok(x_hi);
            }
            return Err(Error::SeparationFailure {
                min_value: g_hi.to_f64_lossy(),
                offset: T::zero().to_f64_lossy(),
            });
        }
        hi = hi * T::lit(2.0);
        x_hi = at(hi);
        g_hi = eval.violation(&x_hi);
        doublings += 1;
    }
    if g_hi.abs() <= eval.noise(&x_hi) && doublings == 0 {
        return Ok(x_hi);
    }
    let tol = eval.noise(&x0).max(eval.noise(&x_hi));
    let mu = root_decreasing(residual, T::zero(), g0, hi, g_hi, tol);
    Ok(at(mu))
}

fn shifted<T: Scalar>(v: &[T], dir: &[T], step: T) -> Vec<T> {
    v.iter().zip(dir).map(|(&x, &d)| x - step * d).collect()
}

fn project_halfspace<T: Scalar>(x: &mut [T], normal: &[T], offset: T, norm_sq: T) {
    let excess = dot(normal, x) - offset;
    if excess > T::zero() && norm_sq > T::zero() {
        let step = excess / norm_sq;
        for (xi, &a) in x.iter_mut().zip(normal) {
            *xi = *xi - step * a;
        }
    }
}

/// Same projection as [`box_budget_cut`] by cyclic Dykstra iterations.
/// Fails with [`Error::ProjectionStalled`] at the sweep cap.
pub(crate) fn dykstra<T: Scalar>(
    v: &[T],
    w: &[T],
    lower: &[T],
    upper: &[T],
    cap: T,
    cut: Cut<'_, T>,
) -> Result<Vec<T>> {
    check_separation(&cut, w, lower, upper, cap)?;
    let cut_offset = match cut.anchor {
        Some(z) => dot(cut.normal, z.point),
        None => cut.offset,
    };
    let n = v.len();
    let w_sq = dot(w, w);
    let a_sq = dot(cut.normal, cut.normal);
    let mut x = v.to_vec();
    let mut inc = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    let tol = T::tol(1e-12, T::one());
    let mut prev = x.clone();
    let mut settled = false;
    for _ in 0..DYKSTRA_MAX_ITER {
        // A sweep can leave x in place while the corrections still move, so
        // both have to settle before stopping.
        let mut corr_change = T::zero();
        for (set, corr) in inc.iter_mut().enumerate() {
            let mut y: Vec<T> = x.iter().zip(corr.iter()).map(|(&xi, &ci)| xi + ci).collect();
            match set {
                0 => {
                    for ((yi, &lo), &hi) in y.iter_mut().zip(lower).zip(upper) {
                        *yi = clamp(*yi, lo, hi);
                    }
                }
                1 => project_halfspace(&mut y, w, cap, w_sq),
                _ => project_halfspace(&mut y, cut.normal, cut_offset, a_sq),
            }
            for ((ci, &xi), &yi) in corr.iter_mut().zip(&x).zip(&y) {
                let next = xi + *ci - yi;
                corr_change = corr_change + (next - *ci).abs();
                *ci = next;
            }
            x = y;
        }
        let change = crate::scalar::dist2(&x, &prev);
        if change + corr_change <= tol * (T::one() + crate::scalar::norm2(&x)) {
            settled = true;
            break;
        }
        prev.clone_from(&x);
    }
    if !settled {
        // Nearly parallel constraints make the sweeps crawl.
        return Err(Error::ProjectionStalled(DYKSTRA_MAX_ITER));
    }
    for ((xi, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = clamp(*xi, lo, hi);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_finder_solves_piecewise_linear_exactly() {
        let f = |x: f64| {
            if x < 2.0 {
                10.0 - 3.0 * x
            } else {
                4.0 - 1.0 * (x - 2.0)
            }
        };
        let r = root_decreasing(f, 0.0, f(0.0), 100.0, f(100.0), 1e-12);
        assert!((r - 6.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn knapsack_minimum() {
        // a = (-2, -1), w = (1, 1), box [0, 5], cap 6: fill x1 = 5 then x2 = 1.
        let v = min_linear(&[-2.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], &[5.0, 5.0], 6.0);
        assert_eq!(v, -11.0);
        let v = min_linear(&[1.0, 3.0], &[1.0, 1.0], &[1.0, 0.0], &[5.0, 5.0], 6.0);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn budget_projection_lands_on_budget() {
        let x = box_budget(
            &[30.0f64, 20.0, 10.0],
            &[2.0, 1.0, 3.0],
            &[0.0; 3],
            &[45.0; 3],
            40.0,
        );
        let spent = dot(&[2.0, 1.0, 3.0], &x);
        assert!((spent - 40.0).abs() <= 1e-11, "{spent}");
        assert!(x.iter().all(|&p| (0.0..=45.0).contains(&p)));
    }

    #[test]
    fn single_precision_projection() {
        let x: Vec<f32> = box_budget(&[8.0f32, 8.0], &[1.0, 1.0], &[0.0; 2], &[45.0; 2], 10.0);
        assert!((x[0] - 5.0).abs() < 1e-5 && (x[1] - 5.0).abs() < 1e-5);
    }
}
