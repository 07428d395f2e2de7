//! Seeded market scenarios and their JSON file form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{EnergyUser, MarketConfig};
use crate::scalar::Scalar;
use crate::sim::ParticipationMode;
use crate::vi::VIProblem;

/// Ranges and constants for [`generate_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams<T> {
    /// Closed range for the surplus `e_n`, kWh.
    pub e_range: (T, T),
    /// Closed range for the sensitivity `alpha_n`.
    pub alpha_range: (T, T),
    pub price_cap: T,
    pub budget: T,
    pub grid_sell: T,
    pub grid_buy: T,
}

impl<T: Scalar> Default for GenerationParams<T> {
    fn default() -> Self {
        Self {
            e_range: (T::lit(3.6), T::lit(12.25)),
            alpha_range: (T::one(), T::lit(3.0)),
            price_cap: T::lit(45.0),
            budget: T::lit(1000.0),
            grid_sell: T::lit(44.0),
            grid_buy: T::lit(8.0),
        }
    }
}

impl<T: Scalar> GenerationParams<T> {
    pub fn validate(&self) -> Result<()> {
        let range = |field, (lo, hi): (T, T)| {
            if lo.is_finite() && hi.is_finite() && lo > T::zero() && lo <= hi {
                Ok(())
            } else {
                Err(Error::invalid(
                    field,
                    format!("need 0 < lo <= hi, got [{lo}, {hi}]"),
                ))
            }
        };
        range("e_range", self.e_range)?;
        range("alpha_range", self.alpha_range)?;
        if !(self.price_cap > T::zero()) || !self.price_cap.is_finite() {
            return Err(Error::invalid(
                "price_cap",
                format!("must be positive, got {}", self.price_cap),
            ));
        }
        self.config().map(|_| ())
    }

    pub fn config(&self) -> Result<MarketConfig<T>> {
        MarketConfig::new(self.budget, self.grid_sell, self.grid_buy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub eus: Vec<EnergyUser<T>>,
    pub config: MarketConfig<T>,
    pub seed: u64,
    pub label: String,
}

impl<T: Scalar> Scenario<T> {
    /// The pricing game with the default `[0, P_n]` box.
    pub fn problem(&self) -> Result<VIProblem<T>> {
        VIProblem::new(self.eus.clone(), self.config)
    }

    pub fn with_budget(&self, budget: T) -> Result<Self> {
        Ok(Self {
            config: self.config.with_budget(budget)?,
            ..self.clone()
        })
    }

    /// Every user gets the same sensitivity; surpluses and caps are kept.
    pub fn with_common_alpha(&self, alpha: T) -> Result<Self> {
        let eus = self
            .eus
            .iter()
            .map(|eu| EnergyUser::new(eu.id(), eu.surplus(), alpha, eu.price_cap()))
            .collect::<Result<_>>()?;
        Ok(Self { eus, ..self.clone() })
    }

    pub fn total_surplus(&self) -> T {
        self.eus.iter().fold(T::zero(), |acc, eu| acc + eu.surplus())
    }
}

/// Draws `n_eus` users from a ChaCha8 stream seeded with `seed`. Each user
/// consumes its surplus draw and then its sensitivity draw, so the first
/// `k` users do not depend on `n_eus`.
pub fn generate_scenario<T: Scalar>(
    n_eus: usize,
    seed: u64,
    params: &GenerationParams<T>,
) -> Result<Scenario<T>> {
    if n_eus == 0 {
        return Err(Error::invalid("n_eus", "must be at least 1"));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = |(lo, hi): (T, T)| (lo.to_f64_lossy(), hi.to_f64_lossy());
    let (e_lo, e_hi) = bounds(params.e_range);
    let (a_lo, a_hi) = bounds(params.alpha_range);
    let eus = (0..n_eus)
        .map(|id| {
            let e: f64 = rng.gen_range(e_lo..=e_hi);
            let alpha: f64 = rng.gen_range(a_lo..=a_hi);
            // Narrowing to f32 can round just outside the range.
            let e = T::lit(e).max(params.e_range.0).min(params.e_range.1);
            let alpha = T::lit(alpha).max(params.alpha_range.0).min(params.alpha_range.1);
            EnergyUser::new(id, e, alpha, params.price_cap)
        })
        .collect::<Result<_>>()?;
    Ok(Scenario {
        eus,
        config: params.config()?,
        seed,
        label: format!("n{n_eus}-seed{seed}"),
    })
}

/// Explicit user in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub e: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_cap: Option<f64>,
}

/// On-disk scenario description. Users are drawn from the ranges unless
/// `users` lists them explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub n_eus: usize,
    #[serde(default = "defaults::e_range")]
    pub e_range: [f64; 2],
    #[serde(default = "defaults::alpha_range")]
    pub alpha_range: [f64; 2],
    #[serde(default = "defaults::price_cap")]
    pub price_cap: f64,
    #[serde(default = "defaults::budget")]
    pub budget: f64,
    #[serde(default = "defaults::grid_sell")]
    pub grid_sell: f64,
    #[serde(default = "defaults::grid_buy")]
    pub grid_buy: f64,
    #[serde(default)]
    pub participation_mode: ParticipationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<UserSpec>>,
}

mod defaults {
    pub fn e_range() -> [f64; 2] {
        [3.6, 12.25]
    }
    pub fn alpha_range() -> [f64; 2] {
        [1.0, 3.0]
    }
    pub fn price_cap() -> f64 {
        45.0
    }
    pub fn budget() -> f64 {
        1000.0
    }
    pub fn grid_sell() -> f64 {
        44.0
    }
    pub fn grid_buy() -> f64 {
        8.0
    }
}

impl ScenarioFile {
    pub fn new(n_eus: usize, seed: u64, params: &GenerationParams<f64>, mode: ParticipationMode) -> Self {
        Self {
            seed,
            n_eus,
            e_range: [params.e_range.0, params.e_range.1],
            alpha_range: [params.alpha_range.0, params.alpha_range.1],
            price_cap: params.price_cap,
            budget: params.budget,
            grid_sell: params.grid_sell,
            grid_buy: params.grid_buy,
            participation_mode: mode,
            label: None,
            users: None,
        }
    }

    /// Parses JSON, reporting the line and column of the first problem.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn generation_params<T: Scalar>(&self) -> GenerationParams<T> {
        let pair = |[lo, hi]: [f64; 2]| (T::lit(lo), T::lit(hi));
        GenerationParams {
            e_range: pair(self.e_range),
            alpha_range: pair(self.alpha_range),
            price_cap: T::lit(self.price_cap),
            budget: T::lit(self.budget),
            grid_sell: T::lit(self.grid_sell),
            grid_buy: T::lit(self.grid_buy),
        }
    }

    pub fn to_scenario<T: Scalar>(&self) -> Result<Scenario<T>> {
        let params = self.generation_params::<T>();
        let Some(users) = &self.users else {
            let mut scenario = generate_scenario(self.n_eus, self.seed, &params)?;
            if let Some(label) = &self.label {
                scenario.label.clone_from(label);
            }
            return Ok(scenario);
        };
        if users.len() != self.n_eus {
            return Err(Error::invalid(
                "users",
                format!("{} users listed but n_eus = {}", users.len(), self.n_eus),
            ));
        }
        let eus = users
            .iter()
            .enumerate()
            .map(|(id, u)| {
                let cap = u.price_cap.unwrap_or(self.price_cap);
                EnergyUser::new(id, T::lit(u.e), T::lit(u.alpha), T::lit(cap))
            })
            .collect::<Result<_>>()?;
        Ok(Scenario {
            eus,
            config: params.config()?,
            seed: self.seed,
            label: self
                .label
                .clone()
                .unwrap_or_else(|| format!("explicit-n{}", self.n_eus)),
        })
    }
}
