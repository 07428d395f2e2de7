use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cakecut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cakecut"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_table(file: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(file)
        .unwrap_or_else(|e| panic!("{}: {e}", file.display()));
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn summary(dir: &Path) -> std::collections::HashMap<String, String> {
    read_table(&dir.join("summary.csv"))
        .1
        .into_iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect()
}

fn write_users(dir: &Path, users: &[(f64, f64)], budget: f64) -> std::path::PathBuf {
    let list: Vec<String> = users
        .iter()
        .map(|(e, a)| format!("{{\"e\": {e}, \"alpha\": {a}}}"))
        .collect();
    let text = format!(
        "{{\n  \"seed\": 0,\n  \"n_eus\": {},\n  \"budget\": {budget},\n  \"users\": [{}]\n}}\n",
        users.len(),
        list.join(", ")
    );
    let file = dir.join("market.json");
    fs::write(&file, text).unwrap();
    file
}

fn f(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

#[test]
fn two_user_market_splits_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_users(dir.path(), &[(10.0, 1.0), (20.0, 1.0)], 550.0);
    let out = dir.path().join("out");
    let o = cakecut(&[
        "solve",
        "--scenario",
        path(&file),
        "--out",
        path(&out),
        "--deterministic",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = read_table(&out.join("allocation.csv"));
    assert_eq!(header, ["id", "e", "price", "payment", "benefit", "participant"]);
    // tau = 0.6 with multipliers tau * e_n: p = (45 - 1.6 e) / 1.
    assert!((f(&rows[0][2]) - 29.0).abs() < 1e-6);
    assert!((f(&rows[1][2]) - 13.0).abs() < 1e-6);
    let s = summary(&out);
    assert!((f(&s["tau"]) - 0.6).abs() < 1e-6);
    assert_eq!(s["complete"], "true");
    assert_eq!(s["converged"], "true");
}

#[test]
fn slack_budget_is_not_complete() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_users(dir.path(), &[(10.0, 1.0), (20.0, 1.0)], 900.0);
    let out = dir.path().join("out");
    let o = cakecut(&["solve", "--scenario", path(&file), "--out", path(&out)]);
    assert!(o.status.success());
    let (_, rows) = read_table(&out.join("allocation.csv"));
    assert!((f(&rows[0][2]) - 35.0).abs() < 1e-6);
    assert!((f(&rows[1][2]) - 25.0).abs() < 1e-6);
    let s = summary(&out);
    assert_eq!(s["tau"], "0");
    assert_eq!(s["complete"], "false");
}

#[test]
fn default_scenario_trace_decreases_to_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = cakecut(&["solve", "--out", path(dir.path()), "--deterministic"]);
    assert!(o.status.success());
    let (header, rows) = read_table(&dir.path().join("trace.csv"));
    assert_eq!(header.len(), 12);
    assert_eq!(header[..3], ["iteration", "residual", "p0"]);
    let res: Vec<f64> = rows.iter().map(|r| f(&r[1])).collect();
    for (k, w) in res.windows(2).enumerate() {
        assert!(
            w[1] < w[0],
            "residual rose at iteration {}: {} -> {}",
            k + 1,
            w[0],
            w[1]
        );
    }
    assert!(*res.last().unwrap() <= 1e-8);
    assert_eq!(summary(dir.path())["iterations"], (rows.len() - 1).to_string());
}

#[test]
fn missing_scenario_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cakecut(&[
        "solve",
        "--scenario",
        "/nonexistent/market.json",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/market.json"));
    assert!(!out.exists());
}

#[test]
fn malformed_scenario_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "{\n  \"seed\": 1,\n  \"n_eus\": \"ten\"\n}\n").unwrap();
    let out = dir.path().join("out");
    let o = cakecut(&["solve", "--scenario", path(&file), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(!out.exists());

    fs::write(&file, "{\"seed\": 1, \"n_eus\": 3, \"budjet\": 5}").unwrap();
    let o = cakecut(&["solve", "--scenario", path(&file), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budjet"));
}

#[test]
fn invalid_market_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("neg.json");
    fs::write(&file, "{\"seed\": 1, \"n_eus\": 3, \"budget\": -5}").unwrap();
    let o = cakecut(&["solve", "--scenario", path(&file), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("allocation.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cakecut(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(cakecut(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        cakecut(&["solve", "--participation", "sometimes"]).status.code(),
        Some(1)
    );
    assert_eq!(cakecut(&["--help"]).status.code(), Some(0));
}

#[test]
fn iteration_cap_exits_two_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = cakecut(&[
        "solve",
        "--max-iter",
        "3",
        "--out",
        path(dir.path()),
        "--deterministic",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let (_, rows) = read_table(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(summary(dir.path())["converged"], "false");
}

#[test]
fn generated_scenario_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = cakecut(&[
        "gen-scenario",
        "--seed",
        "9",
        "--n-eus",
        "12",
        "--budget",
        "1500",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let file = dir.path().join("scenario.json");

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let direct = dir.path().join("direct");
    for out in [&a, &b] {
        let o = cakecut(&[
            "solve",
            "--scenario",
            path(&file),
            "--out",
            path(out),
            "--deterministic",
        ]);
        assert!(o.status.success());
    }
    let o = cakecut(&[
        "solve",
        "--seed",
        "9",
        "--n-eus",
        "12",
        "--budget",
        "1500",
        "--out",
        path(&direct),
        "--deterministic",
    ]);
    assert!(o.status.success());
    for name in ["allocation.csv", "trace.csv", "summary.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(direct.join(name)).unwrap(), "{name}");
    }
    assert_eq!(summary(&a)["n_eus"], "12");
    assert_eq!(summary(&a)["budget"], "1500");

    // The only difference without --deterministic is the first line.
    let stamped = dir.path().join("stamped");
    cakecut(&["solve", "--scenario", path(&file), "--out", path(&stamped)]);
    let text = fs::read_to_string(stamped.join("allocation.csv")).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# generated"));
    assert_eq!(rest, fs::read_to_string(a.join("allocation.csv")).unwrap());
}

#[test]
fn gen_scenario_prints_without_out() {
    let o = cakecut(&["gen-scenario", "--seed", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"seed\": 3"));
    assert!(text.contains("\"participation_mode\": \"fixed_point\""));
}

#[test]
fn emitted_allocations_satisfy_invariants() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, n, budget) in [("1", "10", "1000"), ("2", "30", "1000"), ("3", "20", "2500")] {
        let out = dir.path().join(seed);
        let o = cakecut(&[
            "solve",
            "--seed",
            seed,
            "--n-eus",
            n,
            "--budget",
            budget,
            "--out",
            path(&out),
        ]);
        assert!(o.status.success());
        let (_, rows) = read_table(&out.join("allocation.csv"));
        let s = summary(&out);
        let mut total = 0.0;
        for r in &rows {
            let (e, price, payment) = (f(&r[1]), f(&r[2]), f(&r[3]));
            assert_eq!(payment, price * e);
            assert!((0.0..=45.0).contains(&price));
            if r[5] == "false" {
                assert_eq!(price, 0.0);
            } else {
                assert!(price >= 8.0, "participant below the grid buy price");
            }
            total += payment;
        }
        let budget = f(budget);
        assert!(total <= budget * (1.0 + 1e-10));
        assert!((f(&s["sfc_cost"]) - total).abs() <= 1e-9 * budget);
        if s["complete"] == "true" {
            assert!((total - budget).abs() <= 1e-8 * budget);
        }
    }
}

#[test]
fn one_shot_keeps_solved_prices() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_users(dir.path(), &[(10.0, 1.0), (30.0, 1.0)], 440.0);
    let once = dir.path().join("once");
    let fixed = dir.path().join("fixed");
    cakecut(&[
        "solve",
        "--scenario",
        path(&file),
        "--participation",
        "one-shot",
        "--out",
        path(&once),
    ]);
    cakecut(&["solve", "--scenario", path(&file), "--out", path(&fixed)]);
    let (_, a) = read_table(&once.join("allocation.csv"));
    let (_, b) = read_table(&fixed.join("allocation.csv"));
    assert!((f(&a[0][2]) - 31.4).abs() < 1e-6);
    assert!((f(&b[0][2]) - 35.0).abs() < 1e-6);
    assert_eq!((a[1][5].as_str(), b[1][5].as_str()), ("false", "false"));
    assert!((f(&summary(&fixed)["sfc_cost"]) - 350.0).abs() < 1e-6);
}

#[test]
fn simulate_matches_solve_and_keeps_secrets() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let sol = dir.path().join("sol");
    assert!(
        cakecut(&["simulate", "--seed", "5", "--out", path(&sim), "--deterministic"])
            .status
            .success()
    );
    assert!(
        cakecut(&["solve", "--seed", "5", "--out", path(&sol), "--deterministic"])
            .status
            .success()
    );
    for name in ["allocation.csv", "trace.csv"] {
        assert_eq!(
            fs::read(sim.join(name)).unwrap(),
            fs::read(sol.join(name)).unwrap(),
            "{name}"
        );
    }
    let s = summary(&sim);
    assert_eq!(s["privacy_violations"], "0");
    let log = fs::read_to_string(sim.join("messages.jsonl")).unwrap();
    assert_eq!(log.lines().count().to_string(), s["messages"]);
    let first = log.lines().next().unwrap();
    assert!(first.contains("\"kind\":\"budget_announce\""), "{first}");
    assert!(first.contains("\"payload\":1000"), "{first}");
    assert!(log.lines().last().unwrap().contains("\"kind\":\"terminate\""));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = cakecut(&[
        "sweep",
        "--axis",
        "budget",
        "--values",
        "500,1000,2000",
        "--out",
        path(dir.path()),
        "--deterministic",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&dir.path().join("sweep.csv"));
    assert_eq!(header[0], "budget");
    assert_eq!(rows.len(), 3);
    let counts: Vec<usize> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");

    assert_eq!(
        cakecut(&["sweep", "--axis", "n_eus", "--values", "2.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        cakecut(&["sweep", "--axis", "colour", "--values", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn compare_grid_on_the_81_kwh_market() {
    let dir = tempfile::tempdir().unwrap();
    let e = [3.75, 5.0, 6.25, 7.0, 8.0, 8.5, 9.25, 10.25, 11.0, 12.0];
    let users: Vec<(f64, f64)> = e.iter().map(|&e| (e, 2.0)).collect();
    let file = write_users(dir.path(), &users, 1000.0);
    let o = cakecut(&[
        "compare-grid",
        "--scenario",
        path(&file),
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let (header, rows) = read_table(&dir.path().join("grid_comparison.csv"));
    let col = |name: &str| f(&rows[0][header.iter().position(|h| h == name).unwrap()]);
    assert!((col("grid_only_energy") - 22.727).abs() < 1e-3);
    assert_eq!(col("market_energy"), 81.0);
    assert!((col("energy_advantage") - 58.3).abs() <= 0.1);
    assert!((col("market_revenue") - 1000.0).abs() < 1e-9);
    assert_eq!(col("grid_revenue"), 648.0);
    assert!((col("revenue_advantage") - 352.0).abs() < 1e-9);
}

#[test]
fn compare_grid_with_nobody_trading() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_users(dir.path(), &[(12.0, 3.0), (12.0, 3.0), (12.0, 3.0)], 20.0);
    let o = cakecut(&[
        "compare-grid",
        "--scenario",
        path(&file),
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let (header, rows) = read_table(&dir.path().join("grid_comparison.csv"));
    let col = |name: &str| f(&rows[0][header.iter().position(|h| h == name).unwrap()]);
    assert_eq!(col("participants"), 0.0);
    assert_eq!(col("market_energy"), 0.0);
    assert_eq!(col("unspent"), 20.0);
}

#[test]
fn reproduce_targets_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    for (target, files) in [
        ("table1", &["table1.csv"][..]),
        ("table3", &["table3.csv"]),
        ("table4", &["table4.csv"]),
        ("table5", &["table5.csv"]),
        ("fig3", &["fig3.csv", "fig3_summary.csv"]),
        ("fig4", &["fig4.csv"]),
    ] {
        let o = cakecut(&["reproduce", target, "--out", path(dir.path()), "--deterministic"]);
        assert!(
            o.status.success(),
            "{target}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        for name in files {
            let (_, rows) = read_table(&dir.path().join(name));
            assert!(!rows.is_empty(), "{name}");
        }
    }
    let (_, fig4) = read_table(&dir.path().join("fig4.csv"));
    assert_eq!(fig4.len(), 12);
    // Reference cells stay blank where the published value depends on the draw.
    assert!(fig4.iter().all(|r| r.last().unwrap().is_empty()));
    let (_, fig3) = read_table(&dir.path().join("fig3_summary.csv"));
    let reference = fig3.iter().find(|r| r[0] == "reference_iterations").unwrap();
    assert_eq!(reference[1], "8");
}

#[test]
fn other_formats() {
    let dir = tempfile::tempdir().unwrap();
    let o = cakecut(&[
        "reproduce",
        "table1",
        "--format",
        "tsv",
        "--out",
        path(dir.path()),
        "--deterministic",
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("table1.tsv")).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("revenue_eu1\t700\t576\t-17\t")));

    let o = cakecut(&[
        "reproduce",
        "table1",
        "--format",
        "pretty",
        "--out",
        path(dir.path()),
        "--deterministic",
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("table1.txt")).unwrap();
    let line = text.lines().find(|l| l.contains("sfc_cost")).unwrap();
    let cells: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(cells[..4], ["sfc_cost", "800", "752", "-6"]);
}
