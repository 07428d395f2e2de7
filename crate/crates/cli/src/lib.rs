//! Command-line front end: scenario files in, CSV tables out.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cakecut::sim::{
    apply_participation, generate_scenario, grid_comparison, run_protocol, sweep, GenerationParams,
    MarketOutcome, ParticipationMode, Scenario, ScenarioFile, SweepAxis, SweepRow,
};
use cakecut::{solve, Solution, SolveError, SolveTrace, SolverParams64};
use clap::{Args, Parser, Subcommand};

pub mod reproduce;
pub mod table;

pub use reproduce::Target;
pub use table::{num, Artifacts, Format, Table};

/// Seed used whenever neither a scenario file nor `--seed` gives one.
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_N_EUS: usize = 10;

#[derive(Debug, Parser)]
#[command(
    name = "cakecut",
    version,
    about = "Budget-constrained discriminate pricing for energy users"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Scenario file (JSON); without one a scenario is drawn from --seed and --n-eus.
    #[arg(long, global = true, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Controller budget in cents.
    #[arg(long, global = true, value_name = "CENTS")]
    pub budget: Option<f64>,
    #[arg(long = "n-eus", global = true, value_name = "N")]
    pub n_eus: Option<usize>,
    /// Natural-residual tolerance.
    #[arg(long, global = true, value_name = "X")]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", global = true, value_name = "N")]
    pub max_iter: Option<usize>,
    /// one-shot, fixed-point or off.
    #[arg(long, global = true, value_name = "MODE")]
    pub participation: Option<ParticipationMode>,
    #[arg(long, global = true, value_enum, default_value_t)]
    pub format: Format,
    /// Omit the timestamp line so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve a scenario centrally.
    Solve,
    /// Run the controller/user negotiation and log every message.
    Simulate,
    /// Solve along one parameter axis.
    Sweep {
        /// budget, n_eus or common_alpha.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
    /// Regenerate a table or figure series from the case study.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Write a scenario file.
    GenScenario,
    /// Compare the cleared market with trading through the grid alone.
    CompareGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::NotConverged => 2,
        }
    }
}

#[derive(Debug)]
pub struct Report {
    pub status: Status,
    pub written: Vec<PathBuf>,
    /// Text meant for standard output.
    pub stdout: String,
}

impl Options {
    fn stamp(&self) -> bool {
        !self.deterministic
    }

    fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }

    pub fn params(&self) -> Result<SolverParams64> {
        let mut params = SolverParams64::default();
        if let Some(tol) = self.tol {
            params.tol = tol;
        }
        if let Some(n) = self.max_iter {
            params.max_iter = n;
        }
        params.validate()?;
        Ok(params)
    }

    /// The scenario file after command-line overrides.
    pub fn scenario_file(&self) -> Result<ScenarioFile> {
        let mut file = match &self.scenario {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut file = ScenarioFile::parse(&text)
                    .with_context(|| format!("in scenario file {}", path.display()))?;
                if let Some(seed) = self.seed {
                    file.seed = seed;
                }
                if let Some(n) = self.n_eus {
                    if file.users.is_some() && n != file.n_eus {
                        bail!(
                            "--n-eus {n} conflicts with the {} users listed in the scenario file",
                            file.n_eus
                        );
                    }
                    file.n_eus = n;
                }
                file
            }
            None => ScenarioFile::new(
                self.n_eus.unwrap_or(DEFAULT_N_EUS),
                self.seed.unwrap_or(DEFAULT_SEED),
                &GenerationParams::default(),
                ParticipationMode::default(),
            ),
        };
        if let Some(budget) = self.budget {
            file.budget = budget;
        }
        if let Some(mode) = self.participation {
            file.participation_mode = mode;
        }
        Ok(file)
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Solve => cmd_solve(opts),
        Command::Simulate => cmd_simulate(opts),
        Command::Sweep { axis, values } => cmd_sweep(opts, *axis, values),
        Command::Reproduce { target } => reproduce::run(opts, *target),
        Command::GenScenario => cmd_gen_scenario(opts),
        Command::CompareGrid => cmd_compare_grid(opts),
    }
}

/// Solves without treating the iteration cap as an error.
pub fn solve_anyway(scenario: &Scenario<f64>, params: &SolverParams64) -> Result<Solution<f64>> {
    match solve(&scenario.problem()?, params, None) {
        Ok(sol) => Ok(sol),
        Err(SolveError::NotConverged(sol)) => Ok(*sol),
        Err(SolveError::Model(e)) => Err(e.into()),
    }
}

fn finish(artifacts: Artifacts, opts: &Options, converged: bool) -> Result<Report> {
    let written = artifacts.write(opts.out_dir())?;
    Ok(Report {
        status: if converged {
            Status::Success
        } else {
            Status::NotConverged
        },
        written,
        stdout: String::new(),
    })
}

fn cmd_solve(opts: &Options) -> Result<Report> {
    let file = opts.scenario_file()?;
    let scenario = file.to_scenario::<f64>()?;
    let params = opts.params()?;
    let sol = solve_anyway(&scenario, &params)?;
    let full = MarketOutcome::from_solution(&scenario, &sol, params.tol)?;
    let outcome = apply_participation(&full, &scenario, file.participation_mode, &params)?;

    let mut summary = summary_pairs(&scenario, &outcome, &sol.trace, file.participation_mode);
    summary.push(("social_welfare", num(outcome.allocation.social_welfare())));
    let mut art = Artifacts::default();
    art.table(
        "allocation",
        &allocation_table(&scenario, &outcome),
        opts.format,
        opts.stamp(),
    )?;
    art.table("trace", &trace_table(&sol.trace), opts.format, opts.stamp())?;
    art.table("summary", &Table::key_value(summary), opts.format, opts.stamp())?;
    finish(art, opts, outcome.converged)
}

fn cmd_simulate(opts: &Options) -> Result<Report> {
    let file = opts.scenario_file()?;
    let scenario = file.to_scenario::<f64>()?;
    let params = opts.params()?;
    let run = run_protocol(&scenario, &params)?;
    let outcome = apply_participation(&run.outcome, &scenario, file.participation_mode, &params)?;
    let violations = run.log.audit_privacy(&scenario.eus);

    let mut summary = summary_pairs(&scenario, &outcome, &run.trace, file.participation_mode);
    summary.push(("messages", run.log.len().to_string()));
    summary.push(("privacy_violations", violations.len().to_string()));
    let mut art = Artifacts::default();
    art.table(
        "allocation",
        &allocation_table(&scenario, &outcome),
        opts.format,
        opts.stamp(),
    )?;
    art.table("trace", &trace_table(&run.trace), opts.format, opts.stamp())?;
    art.table("summary", &Table::key_value(summary), opts.format, opts.stamp())?;
    art.raw("messages.jsonl", run.log.to_jsonl());
    finish(art, opts, outcome.converged)
}

fn cmd_sweep(opts: &Options, axis: SweepAxis, values: &[f64]) -> Result<Report> {
    let file = opts.scenario_file()?;
    let scenario = file.to_scenario::<f64>()?;
    let params = opts.params()?;
    let rows = sweep(
        axis,
        values,
        &scenario,
        &file.generation_params(),
        file.participation_mode,
        &params,
    )?;
    let mut art = Artifacts::default();
    art.table("sweep", &sweep_table(axis, &rows), opts.format, opts.stamp())?;
    finish(art, opts, rows.iter().all(|r| r.converged))
}

fn cmd_gen_scenario(opts: &Options) -> Result<Report> {
    let file = opts.scenario_file()?;
    // Validate before anything is written.
    file.to_scenario::<f64>()?;
    let json = file.to_json() + "\n";
    match &opts.out {
        Some(_) => {
            let mut art = Artifacts::default();
            art.raw("scenario.json", json);
            finish(art, opts, true)
        }
        None => Ok(Report {
            status: Status::Success,
            written: Vec::new(),
            stdout: json,
        }),
    }
}

fn cmd_compare_grid(opts: &Options) -> Result<Report> {
    let file = opts.scenario_file()?;
    let scenario = file.to_scenario::<f64>()?;
    let params = opts.params()?;
    let sol = solve_anyway(&scenario, &params)?;
    let full = MarketOutcome::from_solution(&scenario, &sol, params.tol)?;
    let outcome = apply_participation(&full, &scenario, file.participation_mode, &params)?;
    let mut table = grid_header();
    table.push(grid_row(&scenario, &outcome));
    let mut art = Artifacts::default();
    art.table("grid_comparison", &table, opts.format, opts.stamp())?;
    finish(art, opts, outcome.converged)
}

pub fn allocation_table(scenario: &Scenario<f64>, outcome: &MarketOutcome<f64>) -> Table {
    let a = &outcome.allocation;
    let mut t = Table::new(["id", "e", "price", "payment", "benefit", "participant"]);
    for (n, eu) in scenario.eus.iter().enumerate() {
        t.push(vec![
            eu.id().to_string(),
            num(eu.surplus()),
            num(a.prices[n]),
            num(a.payments[n]),
            num(a.benefits[n]),
            outcome.participants[n].to_string(),
        ]);
    }
    t
}

pub fn trace_table(trace: &SolveTrace<f64>) -> Table {
    let n = trace.iterates.first().map_or(0, |p| p.len());
    let mut t = Table::new(
        ["iteration".to_string(), "residual".to_string()]
            .into_iter()
            .chain((0..n).map(|i| format!("p{i}"))),
    );
    for (k, (p, r)) in trace.iterates.iter().zip(&trace.residuals).enumerate() {
        t.push(
            [k.to_string(), num(*r)]
                .into_iter()
                .chain(p.iter().map(|&x| num(x)))
                .collect(),
        );
    }
    t
}

fn summary_pairs(
    scenario: &Scenario<f64>,
    outcome: &MarketOutcome<f64>,
    trace: &SolveTrace<f64>,
    mode: ParticipationMode,
) -> Vec<(&'static str, String)> {
    vec![
        ("label", scenario.label.clone()),
        ("seed", scenario.seed.to_string()),
        ("n_eus", scenario.eus.len().to_string()),
        ("budget", num(scenario.config.budget())),
        ("tau", num(outcome.allocation.tau)),
        ("complete", outcome.allocation.complete.to_string()),
        ("iterations", trace.iterations.to_string()),
        ("rounds", outcome.rounds.to_string()),
        ("converged", outcome.converged.to_string()),
        (
            "final_residual",
            trace.residuals.last().map_or(String::new(), |&r| num(r)),
        ),
        ("participation", mode.to_string()),
        ("participants", outcome.participant_count().to_string()),
        ("sfc_cost", num(outcome.sfc_cost)),
        ("sfc_energy_bought", num(outcome.sfc_energy_bought)),
    ]
}

pub fn sweep_table(axis: SweepAxis, rows: &[SweepRow<f64>]) -> Table {
    let mut t = Table::new([
        axis.to_string().as_str(),
        "n_eus",
        "budget",
        "mean_benefit",
        "participants",
        "total_payment",
        "rounds",
        "converged",
    ]);
    for r in rows {
        t.push(vec![
            num(r.value),
            r.n_eus.to_string(),
            num(r.budget),
            num(r.mean_benefit),
            r.participants.to_string(),
            num(r.total_payment),
            r.rounds.to_string(),
            r.converged.to_string(),
        ]);
    }
    t
}

fn grid_header() -> Table {
    Table::new([
        "label",
        "n_eus",
        "budget",
        "participants",
        "grid_only_energy",
        "market_energy",
        "energy_advantage",
        "market_revenue",
        "grid_revenue",
        "revenue_advantage",
        "unspent",
    ])
}

fn grid_row(scenario: &Scenario<f64>, outcome: &MarketOutcome<f64>) -> Vec<String> {
    let c = grid_comparison(outcome, &scenario.config);
    vec![
        scenario.label.clone(),
        scenario.eus.len().to_string(),
        num(c.budget),
        outcome.participant_count().to_string(),
        num(c.grid_only_energy),
        num(c.market_energy),
        num(c.energy_advantage),
        num(c.market_revenue),
        num(c.grid_revenue),
        num(c.revenue_advantage),
        num(c.unspent),
    ]
}

/// The scenario drawn for `n` users under the default ranges.
pub fn drawn(n: usize, seed: u64, budget: f64) -> Result<Scenario<f64>> {
    let params = GenerationParams {
        budget,
        ..GenerationParams::default()
    };
    Ok(generate_scenario(n, seed, &params)?)
}
