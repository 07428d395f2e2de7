//! One-parameter studies over budget, population size and sensitivity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{
    apply_participation, generate_scenario, solve_scenario, GenerationParams, ParticipationMode, Scenario,
};
use crate::solver::SolverParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Budget,
    /// Redraws the population from the base seed; the first users are
    /// shared across sizes.
    NEus,
    /// Gives every user the same sensitivity.
    CommonAlpha,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Budget => "budget",
            SweepAxis::NEus => "n_eus",
            SweepAxis::CommonAlpha => "common_alpha",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "budget" => Ok(SweepAxis::Budget),
            "n_eus" | "n-eus" => Ok(SweepAxis::NEus),
            "common_alpha" | "common-alpha" | "alpha" => Ok(SweepAxis::CommonAlpha),
            other => Err(Error::invalid(
                "axis",
                format!("expected budget, n_eus or common_alpha, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub value: T,
    pub n_eus: usize,
    pub budget: T,
    /// Mean benefit over participants only; zero if nobody trades.
    pub mean_benefit: T,
    pub participants: usize,
    pub total_payment: T,
    pub rounds: usize,
    pub converged: bool,
}

/// The scenario a sweep solves at `value`.
pub fn sweep_scenario<T: Scalar>(
    axis: SweepAxis,
    value: T,
    base: &Scenario<T>,
    generation: &GenerationParams<T>,
) -> Result<Scenario<T>> {
    match axis {
        SweepAxis::Budget => base.with_budget(value),
        SweepAxis::CommonAlpha => base.with_common_alpha(value),
        SweepAxis::NEus => {
            let n = value
                .to_usize()
                .filter(|&n| n >= 1 && T::from_usize(n) == Some(value))
                .ok_or_else(|| Error::invalid("n_eus", format!("must be a positive integer, got {value}")))?;
            let params = GenerationParams {
                budget: base.config.budget(),
                grid_sell: base.config.grid_sell_price(),
                grid_buy: base.config.grid_buy_price(),
                ..*generation
            };
            generate_scenario(n, base.seed, &params)
        }
    }
}

/// Solves the market at every value in order and aggregates each outcome.
pub fn sweep<T: Scalar>(
    axis: SweepAxis,
    values: &[T],
    base: &Scenario<T>,
    generation: &GenerationParams<T>,
    mode: ParticipationMode,
    params: &SolverParams<T>,
) -> Result<Vec<SweepRow<T>>> {
    if values.is_empty() {
        return Err(Error::invalid("values", "at least one sweep value is required"));
    }
    values
        .iter()
        .map(|&value| {
            let scenario = sweep_scenario(axis, value, base, generation)?;
            let full = solve_scenario(&scenario, params)?;
            let out = apply_participation(&full, &scenario, mode, params)?;
            Ok(SweepRow {
                value,
                n_eus: scenario.eus.len(),
                budget: scenario.config.budget(),
                mean_benefit: out.mean_participant_benefit(),
                participants: out.participant_count(),
                total_payment: out.sfc_cost,
                rounds: out.rounds,
                converged: out.converged,
            })
        })
        .collect()
}
