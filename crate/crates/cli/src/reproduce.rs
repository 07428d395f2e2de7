//! Case-study tables and figure series. Reference columns hold published
//! values only where they do not depend on the unpublished random draw.

use anyhow::Result;
use cakecut::sim::{
    apply_participation, grid_comparison, grid_fixture, sweep, GenerationParams, MarketOutcome,
    ParticipationMode, Scenario, SweepAxis, SweepRow,
};
use cakecut::{revenue, SolverParams64};
use clap::ValueEnum;

use crate::table::{num, Artifacts, Table};
use crate::{drawn, finish, solve_anyway, trace_table, Options, Report, DEFAULT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Two-seller motivating example; pure arithmetic.
    Table1,
    /// Common sensitivity sweep at two budgets.
    Table3,
    /// Energy the controller gets: market against grid.
    Table4,
    /// Revenue the sellers get: market against grid.
    Table5,
    /// Convergence trace for ten users.
    Fig3,
    /// Mean benefit over population size and budget.
    Fig4,
}

pub const FIG3_REFERENCE_ITERATIONS: usize = 8;
pub const FIG4_SIZES: [usize; 4] = [10, 20, 30, 40];
pub const FIG4_BUDGETS: [f64; 3] = [1000.0, 2000.0, 3000.0];
pub const TABLE3_ALPHAS: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
pub const TABLE3_BUDGETS: [f64; 2] = [1000.0, 2000.0];

pub(crate) fn run(opts: &Options, target: Target) -> Result<Report> {
    let params = opts.params()?;
    let seed = opts.seed.unwrap_or(DEFAULT_SEED);
    let mode = opts.participation.unwrap_or_default();
    let stamp = !opts.deterministic;
    let mut art = Artifacts::default();
    let converged = match target {
        Target::Table1 => {
            art.table("table1", &table1(), opts.format, stamp)?;
            true
        }
        Target::Table3 => {
            let (table, ok) = table3(seed, mode, &params)?;
            art.table("table3", &table, opts.format, stamp)?;
            ok
        }
        Target::Table4 | Target::Table5 => {
            let (t4, t5, ok) = grid_tables(seed, mode, &params)?;
            if target == Target::Table4 {
                art.table("table4", &t4, opts.format, stamp)?;
            } else {
                art.table("table5", &t5, opts.format, stamp)?;
            }
            ok
        }
        Target::Fig3 => {
            let file = opts.scenario_file()?;
            let scenario = file.to_scenario::<f64>()?;
            let sol = solve_anyway(&scenario, &params)?;
            let trace = &sol.trace;
            let reached = trace.residuals.iter().position(|&r| r <= 1e-3);
            let summary = Table::key_value(vec![
                ("label", scenario.label.clone()),
                ("n_eus", scenario.eus.len().to_string()),
                ("budget", num(scenario.config.budget())),
                ("tol", num(params.tol)),
                ("iterations", trace.iterations.to_string()),
                ("converged", trace.converged.to_string()),
                (
                    "final_residual",
                    trace.residuals.last().map_or(String::new(), |&r| num(r)),
                ),
                (
                    "iterations_to_1e-3",
                    reached.map_or(String::new(), |k| k.to_string()),
                ),
                ("reference_iterations", FIG3_REFERENCE_ITERATIONS.to_string()),
            ]);
            art.table("fig3", &trace_table(trace), opts.format, stamp)?;
            art.table("fig3_summary", &summary, opts.format, stamp)?;
            trace.converged
        }
        Target::Fig4 => {
            let (table, ok) = fig4(seed, mode, &params)?;
            art.table("fig4", &table, opts.format, stamp)?;
            ok
        }
    };
    finish(art, opts, converged)
}

/// Percent change truncated toward zero, as the published table prints it.
pub fn truncated_percent(from: f64, to: f64) -> i64 {
    ((to - from) / from * 100.0).trunc() as i64
}

fn signed(pct: i64) -> String {
    if pct > 0 {
        format!("+{pct}")
    } else {
        pct.to_string()
    }
}

/// Quantity, both cases, and the published cases and change if any.
type Table1Row = (&'static str, (f64, f64), Option<(f64, f64, i64)>);

pub fn table1() -> Table {
    let price = [(20.0, 18.0), (20.0, 22.0)];
    let energy = [(35.0, 32.0), (5.0, 8.0)];
    let rev: Vec<(f64, f64)> = price
        .iter()
        .zip(&energy)
        .map(|(p, e)| (revenue(p.0, e.0), revenue(p.1, e.1)))
        .collect();
    let cost = (rev[0].0 + rev[1].0, rev[0].1 + rev[1].1);
    let rows: [Table1Row; 7] = [
        ("price_eu1", price[0], None),
        ("price_eu2", price[1], None),
        ("energy_eu1", energy[0], None),
        ("energy_eu2", energy[1], None),
        ("revenue_eu1", rev[0], Some((700.0, 576.0, -17))),
        ("revenue_eu2", rev[1], Some((100.0, 176.0, 76))),
        ("sfc_cost", cost, Some((800.0, 752.0, -6))),
    ];
    let mut t = Table::new([
        "quantity",
        "case1",
        "case2",
        "change_pct",
        "change_ratio",
        "reference_case1",
        "reference_case2",
        "reference_change_pct",
    ]);
    for (name, (a, b), published) in rows {
        let (p1, p2, pc) = match published {
            Some((p1, p2, pc)) => (num(p1), num(p2), signed(pc)),
            None => Default::default(),
        };
        t.push(vec![
            name.to_string(),
            num(a),
            num(b),
            signed(truncated_percent(a, b)),
            num((b - a) / a),
            p1,
            p2,
            pc,
        ]);
    }
    t
}

/// The same sweep in the game as posed and after sellers below the grid buy
/// price withdraw.
fn paired_sweep(
    axis: SweepAxis,
    values: &[f64],
    base: &Scenario<f64>,
    mode: ParticipationMode,
    params: &SolverParams64,
) -> Result<Vec<(SweepRow<f64>, SweepRow<f64>)>> {
    let gen = GenerationParams::default();
    let game = sweep(axis, values, base, &gen, ParticipationMode::Off, params)?;
    let traded = sweep(axis, values, base, &gen, mode, params)?;
    Ok(game.into_iter().zip(traded).collect())
}

pub fn table3(seed: u64, mode: ParticipationMode, params: &SolverParams64) -> Result<(Table, bool)> {
    let mut t = Table::new([
        "budget",
        "alpha",
        "mean_benefit",
        "drop_vs_alpha1_pct",
        "traders_mean_benefit",
        "traders_drop_vs_alpha1_pct",
        "participants",
        "reference_drop_vs_alpha1_pct",
    ]);
    let mut ok = true;
    for budget in TABLE3_BUDGETS {
        let base = drawn(10, seed, budget)?;
        let rows = paired_sweep(SweepAxis::CommonAlpha, &TABLE3_ALPHAS, &base, mode, params)?;
        let (g0, t0) = (rows[0].0.mean_benefit, rows[0].1.mean_benefit);
        for (game, traded) in &rows {
            ok &= game.converged && traded.converged;
            t.push(vec![
                num(budget),
                num(game.value),
                num(game.mean_benefit),
                num((1.0 - game.mean_benefit / g0) * 100.0),
                num(traded.mean_benefit),
                num((1.0 - traded.mean_benefit / t0) * 100.0),
                traded.participants.to_string(),
                String::new(),
            ]);
        }
    }
    Ok((t, ok))
}

pub fn fig4(seed: u64, mode: ParticipationMode, params: &SolverParams64) -> Result<(Table, bool)> {
    let mut t = Table::new([
        "n_eus",
        "budget",
        "mean_benefit",
        "traders_mean_benefit",
        "participants",
        "participation_pct",
        "total_payment",
        "reference_mean_benefit",
    ]);
    let sizes = FIG4_SIZES.map(|n| n as f64);
    let mut ok = true;
    for budget in FIG4_BUDGETS {
        let base = drawn(FIG4_SIZES[0], seed, budget)?;
        for (game, traded) in paired_sweep(SweepAxis::NEus, &sizes, &base, mode, params)? {
            ok &= game.converged && traded.converged;
            t.push(vec![
                game.n_eus.to_string(),
                num(budget),
                num(game.mean_benefit),
                num(traded.mean_benefit),
                traded.participants.to_string(),
                num(100.0 * traded.participants as f64 / traded.n_eus as f64),
                num(traded.total_payment),
                String::new(),
            ]);
        }
    }
    Ok((t, ok))
}

/// Published reference for the 81 kWh fixture: energy advantage, market
/// revenue, grid revenue, revenue advantage.
const GRID_REFERENCE: (f64, f64, f64, f64) = (58.3, 1000.0, 648.0, 352.0);

pub fn grid_tables(
    seed: u64,
    mode: ParticipationMode,
    params: &SolverParams64,
) -> Result<(Table, Table, bool)> {
    let mut cases = vec![(grid_fixture(), true)];
    for (n, budget) in [(10, 1000.0), (20, 2000.0), (30, 3000.0)] {
        cases.push((drawn(n, seed, budget)?, false));
    }
    let head = ["label", "n_eus", "budget", "participants"];
    let mut t4 = Table::new(head.iter().copied().chain([
        "grid_only_energy",
        "market_energy",
        "energy_advantage",
        "reference_energy_advantage",
    ]));
    let mut t5 = Table::new(head.iter().copied().chain([
        "market_revenue",
        "grid_revenue",
        "revenue_advantage",
        "reference_market_revenue",
        "reference_grid_revenue",
        "reference_revenue_advantage",
    ]));
    let mut ok = true;
    for (scenario, reference) in cases {
        let sol = solve_anyway(&scenario, params)?;
        let full = MarketOutcome::from_solution(&scenario, &sol, params.tol)?;
        let out = apply_participation(&full, &scenario, mode, params)?;
        ok &= out.converged;
        let c = grid_comparison(&out, &scenario.config);
        let lead = vec![
            scenario.label.clone(),
            scenario.eus.len().to_string(),
            num(c.budget),
            out.participant_count().to_string(),
        ];
        let reference_cell = |x: f64| if reference { num(x) } else { String::new() };
        let mut r4 = lead.clone();
        r4.extend([
            num(c.grid_only_energy),
            num(c.market_energy),
            num(c.energy_advantage),
            reference_cell(GRID_REFERENCE.0),
        ]);
        t4.push(r4);
        let mut r5 = lead;
        r5.extend([
            num(c.market_revenue),
            num(c.grid_revenue),
            num(c.revenue_advantage),
            reference_cell(GRID_REFERENCE.1),
            reference_cell(GRID_REFERENCE.2),
            reference_cell(GRID_REFERENCE.3),
        ]);
        t5.push(r5);
    }
    Ok((t4, t5, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_matches_published_changes() {
        assert_eq!(truncated_percent(700.0, 576.0), -17);
        assert_eq!(truncated_percent(100.0, 176.0), 76);
        assert_eq!(truncated_percent(800.0, 752.0), -6);
    }

    #[test]
    fn table1_cells() {
        let t = table1();
        let row = |name: &str| t.rows.iter().find(|r| r[0] == name).unwrap().clone();
        assert_eq!(row("revenue_eu1")[1..4], ["700", "576", "-17"]);
        assert_eq!(row("revenue_eu2")[1..4], ["100", "176", "+76"]);
        assert_eq!(row("sfc_cost")[1..4], ["800", "752", "-6"]);
        for name in ["revenue_eu1", "revenue_eu2", "sfc_cost"] {
            let r = row(name);
            assert_eq!(r[1], r[5]);
            assert_eq!(r[2], r[6]);
            assert_eq!(r[3], r[7]);
        }
        assert_eq!(row("price_eu1")[5], "");
    }
}
