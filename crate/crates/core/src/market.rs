//! Market participants and the closed-form economics of the pricing game.
//!
//! Units are fixed throughout: energy in kWh, prices in cents/kWh, money in
//! cents. Benefit values are plain scalars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// A prosumer offering its surplus energy to the shared facility controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyUser<T> {
    id: usize,
    surplus: T,
    sensitivity: T,
    price_cap: T,
}

impl<T: Scalar> EnergyUser<T> {
    /// `surplus` in kWh, `sensitivity` dimensionless, `price_cap` in cents/kWh.
    /// All three must be finite and strictly positive.
    pub fn new(id: usize, surplus: T, sensitivity: T, price_cap: T) -> Result<Self> {
        positive("surplus", surplus)?;
        positive("sensitivity", sensitivity)?;
        positive("price_cap", price_cap)?;
        Ok(Self {
            id,
            surplus,
            sensitivity,
            price_cap,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn surplus(&self) -> T {
        self.surplus
    }

    pub fn sensitivity(&self) -> T {
        self.sensitivity
    }

    pub fn price_cap(&self) -> T {
        self.price_cap
    }

    /// This user's entry of the pseudo-gradient, `alpha * p + e - P`.
    ///
    /// It is the only quantity a user ever reveals during negotiation.
    pub fn operator_component(&self, price: T) -> T {
        self.sensitivity * price + self.surplus - self.price_cap
    }

    /// Whether some strictly positive price maximizes this user's benefit.
    pub fn has_profitable_price(&self) -> bool {
        price_cap_bound(self) > T::zero()
    }
}

/// Budget and grid tariffs seen by the shared facility controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig<T> {
    budget: T,
    grid_sell_price: T,
    grid_buy_price: T,
    participation_threshold: T,
}

impl<T: Scalar> MarketConfig<T> {
    /// Participation threshold defaults to the grid buy price.
    pub fn new(budget: T, grid_sell_price: T, grid_buy_price: T) -> Result<Self> {
        Self::with_threshold(budget, grid_sell_price, grid_buy_price, grid_buy_price)
    }

    pub fn with_threshold(
        budget: T,
        grid_sell_price: T,
        grid_buy_price: T,
        participation_threshold: T,
    ) -> Result<Self> {
        positive("budget", budget)?;
        positive("grid_buy_price", grid_buy_price)?;
        positive("grid_sell_price", grid_sell_price)?;
        if grid_buy_price >= grid_sell_price {
            return Err(Error::invalid(
                "grid_buy_price",
                format!("must be below the grid sell price ({grid_buy_price} >= {grid_sell_price})"),
            ));
        }
        if !participation_threshold.is_finite() || participation_threshold < T::zero() {
            return Err(Error::invalid(
                "participation_threshold",
                format!("must be finite and non-negative, got {participation_threshold}"),
            ));
        }
        Ok(Self {
            budget,
            grid_sell_price,
            grid_buy_price,
            participation_threshold,
        })
    }

    pub fn budget(&self) -> T {
        self.budget
    }

    pub fn grid_sell_price(&self) -> T {
        self.grid_sell_price
    }

    pub fn grid_buy_price(&self) -> T {
        self.grid_buy_price
    }

    pub fn participation_threshold(&self) -> T {
        self.participation_threshold
    }

    pub fn with_budget(self, budget: T) -> Result<Self> {
        Self::with_threshold(
            budget,
            self.grid_sell_price,
            self.grid_buy_price,
            self.participation_threshold,
        )
    }
}

/// One unit price per energy user, all finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceVector<T>(Vec<T>);

impl<T: Scalar> PriceVector<T> {
    pub fn new(prices: Vec<T>) -> Result<Self> {
        if let Some((n, p)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < T::zero())
        {
            return Err(Error::invalid(
                "prices",
                format!("entry {n} must be finite and non-negative, got {p}"),
            ));
        }
        Ok(Self(prices))
    }

    pub(crate) fn from_projection(prices: Vec<T>) -> Self {
        debug_assert!(prices.iter().all(|p| p.is_finite()));
        Self(prices)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T> std::ops::Deref for PriceVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Final division of the budget among the energy users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation<T> {
    pub prices: PriceVector<T>,
    /// `prices[n] * surplus[n]` in cents.
    pub payments: Vec<T>,
    pub benefits: Vec<T>,
    /// Common budget multiplier; zero whenever the budget is slack.
    pub tau: T,
    /// Total payments equal the budget within tolerance.
    pub complete: bool,
    pub participants: Vec<bool>,
}

impl<T: Scalar> Allocation<T> {
    /// Evaluates payments and benefits at `prices`. Every user is marked as a
    /// participant; `complete` compares total payments to `budget` with the
    /// given absolute tolerance.
    pub fn evaluate(
        eus: &[EnergyUser<T>],
        prices: PriceVector<T>,
        tau: T,
        budget: T,
        tolerance: T,
    ) -> Result<Self> {
        check_len(eus.len(), prices.len())?;
        let payments: Vec<T> = eus
            .iter()
            .zip(prices.iter())
            .map(|(eu, &p)| revenue(p, eu.surplus()))
            .collect();
        let benefits = eus
            .iter()
            .zip(prices.iter())
            .map(|(eu, &p)| benefit(p, eu))
            .collect();
        let total = payments.iter().fold(T::zero(), |acc, &x| acc + x);
        Ok(Self {
            complete: (total - budget).abs() <= tolerance,
            participants: vec![true; eus.len()],
            prices,
            payments,
            benefits,
            tau,
        })
    }

    pub fn total_payment(&self) -> T {
        self.payments.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    pub fn social_welfare(&self) -> T {
        self.benefits.iter().fold(T::zero(), |acc, &x| acc + x)
    }
}

/// `P_n - alpha_n * p - e_n`: linearly decreasing in the price.
pub fn marginal_benefit<T: Scalar>(p: T, eu: &EnergyUser<T>) -> T {
    eu.price_cap - eu.sensitivity * p - eu.surplus
}

/// Net benefit `P_n p - (alpha_n / 2) p^2 - e_n p`, concave in `p`.
pub fn benefit<T: Scalar>(p: T, eu: &EnergyUser<T>) -> T {
    let half = T::lit(0.5);
    eu.price_cap * p - half * eu.sensitivity * p * p - eu.surplus * p
}

pub fn revenue<T: Scalar>(p: T, e: T) -> T {
    p * e
}

/// Sum of user benefits at the given price vector.
pub fn social_welfare<T: Scalar>(prices: &[T], eus: &[EnergyUser<T>]) -> Result<T> {
    check_len(eus.len(), prices.len())?;
    Ok(eus
        .iter()
        .zip(prices)
        .fold(T::zero(), |acc, (eu, &p)| acc + benefit(p, eu)))
}

/// `(P_n - e_n) / alpha_n`, the unconstrained benefit maximizer.
///
/// Under a binding budget every interior equilibrium price sits strictly
/// below it. A negative value means the user has no profitable interior
/// price and the feasible-set lower bound governs; see
/// [`EnergyUser::has_profitable_price`].
pub fn price_cap_bound<T: Scalar>(eu: &EnergyUser<T>) -> T {
    (eu.price_cap - eu.surplus) / eu.sensitivity
}

/// Total payment `sum_n e_n p_n` in cents.
pub fn total_payment<T: Scalar>(prices: &[T], eus: &[EnergyUser<T>]) -> T {
    let surplus: Vec<T> = eus.iter().map(|eu| eu.surplus).collect();
    dot(&surplus, prices)
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn positive<T: Scalar>(field: &'static str, x: T) -> Result<()> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::invalid(
            field,
            format!("must be finite and positive, got {x}"),
        ));
    }
    Ok(())
}
