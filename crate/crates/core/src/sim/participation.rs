//! Who actually trades: users offered less than the grid buy price keep
//! their surplus out of the market.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Allocation, PriceVector};
use crate::scalar::Scalar;
use crate::sim::Scenario;
use crate::solver::{solve, Solution, SolveError, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationMode {
    /// Drop users below the threshold once and keep everyone else's price.
    OneShot,
    /// Drop users below the threshold and re-solve among the rest until no
    /// remaining price is below it.
    #[default]
    FixedPoint,
    /// Ignore the threshold: every user in the game counts as a participant.
    Off,
}

impl fmt::Display for ParticipationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParticipationMode::OneShot => "one-shot",
            ParticipationMode::FixedPoint => "fixed-point",
            ParticipationMode::Off => "off",
        })
    }
}

impl FromStr for ParticipationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-shot" | "one_shot" => Ok(ParticipationMode::OneShot),
            "fixed-point" | "fixed_point" => Ok(ParticipationMode::FixedPoint),
            "off" => Ok(ParticipationMode::Off),
            other => Err(Error::invalid(
                "participation",
                format!("expected one-shot, fixed-point or off, got {other:?}"),
            )),
        }
    }
}

/// A cleared market. Non-participants are reported with price, payment and
/// benefit zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome<T> {
    pub allocation: Allocation<T>,
    pub participants: Vec<bool>,
    /// Hyperplane iterations over every solve that produced this outcome.
    pub rounds: usize,
    pub converged: bool,
    /// kWh bought from participants.
    pub sfc_energy_bought: T,
    /// Cents paid to participants.
    pub sfc_cost: T,
    pub eu_total_revenue: T,
}

impl<T: Scalar> MarketOutcome<T> {
    /// Assembles an outcome from full-length prices; entries of
    /// non-participants are zeroed.
    pub fn new(
        scenario: &Scenario<T>,
        prices: &[T],
        participants: Vec<bool>,
        tau: T,
        rounds: usize,
        converged: bool,
        tol: T,
    ) -> Result<Self> {
        let n = scenario.eus.len();
        if prices.len() != n || participants.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: prices.len().min(participants.len()),
            });
        }
        let prices: Vec<T> = prices
            .iter()
            .zip(&participants)
            .map(|(&p, &on)| if on { p } else { T::zero() })
            .collect();
        let budget = scenario.config.budget();
        let mut allocation = Allocation::evaluate(
            &scenario.eus,
            PriceVector::new(prices)?,
            tau,
            budget,
            tol * budget.max(T::one()),
        )?;
        allocation.participants.clone_from(&participants);
        let (energy, cost) = scenario
            .eus
            .iter()
            .zip(&allocation.payments)
            .zip(&participants)
            .filter(|(_, &on)| on)
            .fold((T::zero(), T::zero()), |(e, c), ((eu, &pay), _)| {
                (e + eu.surplus(), c + pay)
            });
        Ok(Self {
            allocation,
            participants,
            rounds,
            converged,
            sfc_energy_bought: energy,
            sfc_cost: cost,
            eu_total_revenue: cost,
        })
    }

    /// Everyone participates at the solved prices.
    pub fn from_solution(scenario: &Scenario<T>, solution: &Solution<T>, tol: T) -> Result<Self> {
        Self::new(
            scenario,
            &solution.allocation.prices,
            vec![true; scenario.eus.len()],
            solution.allocation.tau,
            solution.trace.iterations,
            solution.trace.converged,
            tol,
        )
    }

    pub fn participant_count(&self) -> usize {
        self.participants.iter().filter(|&&on| on).count()
    }

    /// Arithmetic mean of participants' benefits; zero with no participants.
    pub fn mean_participant_benefit(&self) -> T {
        let (sum, count) = self
            .allocation
            .benefits
            .iter()
            .zip(&self.participants)
            .filter(|(_, &on)| on)
            .fold((T::zero(), 0usize), |(s, c), (&b, _)| (s + b, c + 1));
        if count == 0 {
            T::zero()
        } else {
            sum / T::from_usize(count).expect("count fits scalar")
        }
    }
}

/// Solves a scenario centrally with every user taking part.
pub fn solve_scenario<T: Scalar>(
    scenario: &Scenario<T>,
    params: &SolverParams<T>,
) -> Result<MarketOutcome<T>> {
    let prob = scenario.problem()?;
    let solution = match solve(&prob, params, None) {
        Ok(sol) => sol,
        Err(SolveError::NotConverged(sol)) => *sol,
        Err(SolveError::Model(e)) => return Err(e),
    };
    MarketOutcome::from_solution(scenario, &solution, params.tol)
}

/// Applies the participation threshold to a solved outcome.
pub fn apply_participation<T: Scalar>(
    outcome: &MarketOutcome<T>,
    scenario: &Scenario<T>,
    mode: ParticipationMode,
    params: &SolverParams<T>,
) -> Result<MarketOutcome<T>> {
    if mode == ParticipationMode::Off {
        return Ok(outcome.clone());
    }
    let threshold = scenario.config.participation_threshold();
    let n = scenario.eus.len();
    let mut prices = outcome.allocation.prices.as_slice().to_vec();
    let mut participants: Vec<bool> = (0..n)
        .map(|i| outcome.participants[i] && prices[i] >= threshold)
        .collect();
    let mut tau = outcome.allocation.tau;
    let mut rounds = outcome.rounds;
    let mut converged = outcome.converged;

    if mode == ParticipationMode::FixedPoint {
        let prob = scenario.problem()?;
        let mut active: Vec<usize> = (0..n).filter(|&i| outcome.participants[i]).collect();
        loop {
            let keep: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| prices[i] >= threshold)
                .collect();
            if keep.len() == active.len() {
                break;
            }
            active = keep;
            if active.is_empty() {
                tau = T::zero();
                break;
            }
            let sub = prob.restrict(&active)?;
            let solution = match solve(&sub, params, None) {
                Ok(sol) => sol,
                Err(SolveError::NotConverged(sol)) => *sol,
                Err(SolveError::Model(e)) => return Err(e),
            };
            rounds += solution.trace.iterations;
            converged &= solution.trace.converged;
            tau = solution.allocation.tau;
            for (&i, &p) in active.iter().zip(solution.allocation.prices.iter()) {
                prices[i] = p;
            }
        }
        participants = (0..n).map(|i| active.contains(&i)).collect();
    }
    MarketOutcome::new(
        scenario,
        &prices,
        participants,
        tau,
        rounds,
        converged,
        params.tol,
    )
}
