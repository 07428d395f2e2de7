//! The market against trading with the grid alone.

use serde::{Deserialize, Serialize};

use crate::market::{EnergyUser, MarketConfig};
use crate::scalar::Scalar;
use crate::sim::{MarketOutcome, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridComparison<T> {
    pub budget: T,
    /// kWh the whole budget buys at the grid sell price.
    pub grid_only_energy: T,
    /// kWh bought from participating users.
    pub market_energy: T,
    pub energy_advantage: T,
    /// Cents participants receive from the controller.
    pub market_revenue: T,
    /// Cents the same participants would get selling to the grid.
    pub grid_revenue: T,
    pub revenue_advantage: T,
    /// Budget left unspent by the controller.
    pub unspent: T,
}

pub fn grid_comparison<T: Scalar>(outcome: &MarketOutcome<T>, config: &MarketConfig<T>) -> GridComparison<T> {
    let budget = config.budget();
    let grid_only_energy = budget / config.grid_sell_price();
    let grid_revenue = config.grid_buy_price() * outcome.sfc_energy_bought;
    GridComparison {
        budget,
        grid_only_energy,
        market_energy: outcome.sfc_energy_bought,
        energy_advantage: outcome.sfc_energy_bought - grid_only_energy,
        market_revenue: outcome.eu_total_revenue,
        grid_revenue,
        revenue_advantage: outcome.eu_total_revenue - grid_revenue,
        unspent: budget - outcome.sfc_cost,
    }
}

/// Surpluses of ten users totalling 81 kWh.
pub const GRID_FIXTURE_SURPLUS: [f64; 10] = [3.75, 5.0, 6.25, 7.0, 8.0, 8.5, 9.25, 10.25, 11.0, 12.0];

/// Ten users with 81 kWh of surplus in total, common sensitivity 2 and cap
/// 45, budget 1000, grid prices 44/8. Every solved price clears the 8-cent
/// threshold and the budget binds, so all ten trade and split it exactly.
pub fn grid_fixture() -> Scenario<f64> {
    let eus = GRID_FIXTURE_SURPLUS
        .iter()
        .enumerate()
        .map(|(n, &e)| EnergyUser::new(n, e, 2.0, 45.0).expect("valid fixture"))
        .collect();
    Scenario {
        eus,
        config: MarketConfig::new(1000.0, 44.0, 8.0).expect("valid fixture"),
        seed: 0,
        label: "grid-81kwh".into(),
    }
}
