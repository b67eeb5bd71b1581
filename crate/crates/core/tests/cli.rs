use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hedgetree::cli::{ExperimentConfig, Manifest, DEFAULT_CONFIG};
use hedgetree::market::sample_paths;
use hedgetree::oracle::{dp_terminal_variance, optimal_baseline_pnl};

fn hedgetree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hedgetree"))
        .args(args)
        .env("HEDGETREE_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn edit(text: &str, pairs: &[(&str, &str)]) -> String {
    let mut s = text.to_string();
    for (from, to) in pairs {
        assert!(s.contains(from), "{from} not in config");
        s = s.replacen(from, to, 1);
    }
    s
}

/// Four-step market with a short training loop.
fn small_config(iterations: usize) -> String {
    edit(
        DEFAULT_CONFIG,
        &[
            ("n_steps = 20", "n_steps = 4"),
            ("iterations = 10", &format!("iterations = {iterations}")),
            ("episodes_per_iteration = 1000", "episodes_per_iteration = 12"),
            ("sims_per_move = 25", "sims_per_move = 8"),
            ("eval_paths = 100", "eval_paths = 10"),
        ],
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn malformed_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &edit(DEFAULT_CONFIG, &[("w_ucb", "w_ubc")]));
    let out = hedgetree(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("w_ubc"), "{err}");
}

#[test]
fn zero_iterations_give_an_empty_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config(0));
    let out_dir = dir.path().join("run");
    ok(&hedgetree(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]));
    assert_eq!(read(out_dir.join("curve.csv")), b"iteration,mean,p25,p75,accepted\n");
    assert!(out_dir.join("champion.bin").exists());
    assert!(out_dir.join("champion.bin.json").exists());
}

#[test]
fn training_is_reproducible_and_the_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config(2);
    let cfg = write_config(dir.path(), "c.toml", &text);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&hedgetree(&["train", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]));
    ok(&hedgetree(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--threads",
        "1",
    ]));
    let curve = String::from_utf8(read(a.join("curve.csv"))).unwrap();
    assert_eq!(curve.lines().count(), 3, "{curve}");
    for f in ["curve.csv", "champion.bin", "champion.bin.json", "manifest.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs between runs");
    }

    let manifest: Manifest = serde_json::from_slice(&read(a.join("manifest.json"))).unwrap();
    let original = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(manifest.config, original);
    assert_eq!(manifest.config_sha256, original.hash());
    assert_eq!(manifest.seeds, original.seeds);
    let m = a.join("manifest.json");
    ok(&hedgetree(&["train", "--config", m.to_str().unwrap(), "--out", c.to_str().unwrap()]));
    for f in ["curve.csv", "champion.bin", "manifest.json"] {
        assert_eq!(read(a.join(f)), read(c.join(f)), "{f} differs after replaying the manifest");
    }
}

#[test]
fn one_step_oracle_dump_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(DEFAULT_CONFIG, &[("n_steps = 20", "n_steps = 1"), ("beta = 0.01", "beta = 0.0"), ("liquidation_beta = 0.01", "liquidation_beta = 0.0")]);
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("o");
    ok(&hedgetree(&["oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let table = String::from_utf8(read(out.join("value_table.csv"))).unwrap();
    let rows: Vec<Vec<f64>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);

    let dt: f64 = 60.0 / 365.0;
    let u = (0.3 * (2.0 * dt).sqrt()).exp();
    let a = (0.3 * (dt / 2.0).sqrt()).exp();
    let p_u = ((1.0 - 1.0 / a) / (a - 1.0 / a)).powi(2);
    let expect = [
        (0.0, 0.0, 90.0, p_u * (90.0 * u - 90.0)),
        (1.0, -1.0, 90.0 / u, 0.0),
        (1.0, 0.0, 90.0, 0.0),
        (1.0, 1.0, 90.0 * u, 90.0 * u - 90.0),
    ];
    for (row, (t, j, s, v)) in rows.iter().zip(expect) {
        assert_eq!((row[0], row[1]), (t, j));
        assert!((row[2] - s).abs() < 1e-6 * s, "{row:?}");
        assert!((row[3] - v).abs() < 1e-7 * (1.0 + v), "{row:?} vs {v}");
    }
    // the frictionless policy is a flat table with a header
    assert!(read(out.join("policy_table.csv")).starts_with(b"t,j,n,delta_n,value\n"));

    let again = dir.path().join("o2");
    ok(&hedgetree(&["oracle", "--config", cfg.to_str().unwrap(), "--out", again.to_str().unwrap()]));
    for f in ["value_table.csv", "policy_table.csv", "lattice.csv"] {
        assert_eq!(read(out.join(f)), read(again.join(f)));
    }
}

#[test]
fn value_table_has_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config(0));
    let out = dir.path().join("o");
    ok(&hedgetree(&["oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let table = String::from_utf8(read(out.join("value_table.csv"))).unwrap();
    assert_eq!(table.lines().count() - 1, 5 * 5);
    // costly variance policies depend on wealth, so only the root is dumped
    assert!(out.join("policy_root.json").exists());
}

#[test]
fn worthless_option_prices_to_zero_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(&small_config(0), &[("strike = 90.0", "strike = 500.0")]);
    let cfg = write_config(dir.path(), "c.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = hedgetree(&["price", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rn price          0.000000"), "{stdout}");
    let report: serde_json::Value = serde_json::from_slice(&read(a.join("price.json"))).unwrap();
    for key in ["rn_price", "fair_price"] {
        assert!(report[key].as_f64().unwrap().abs() < 1e-9, "{report}");
    }
    ok(&hedgetree(&["price", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]));
    assert_eq!(read(a.join("price.json")), read(b.join("price.json")));
}

#[test]
fn cara_prices_include_reservation_prices() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(
        &small_config(0),
        &[("model = \"terminal_variance\"", "model = \"cara\"\nlambda = 0.05")],
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = hedgetree(&["price", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("price.json"))).unwrap();
    let (sell, buy) = (report["reservation_sell"].as_f64().unwrap(), report["reservation_buy"].as_f64().unwrap());
    assert!(sell >= buy, "{report}");
}

#[test]
fn assess_writes_per_path_rows_and_dp_matches_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(DEFAULT_CONFIG, &[("iterations = 10", "iterations = 0")]);
    let cfg_path = write_config(dir.path(), "c.toml", &text);
    let run = dir.path().join("run");
    let args = |cmd: &'static str| vec![cmd.to_string(), "--config".into(), cfg_path.to_str().unwrap().into(), "--out".into(), run.to_str().unwrap().into()];
    let call = |a: Vec<String>| hedgetree(&a.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&call(args("train")));
    let mut a = args("assess");
    a.extend(["--paths".into(), "300".into(), "--seed".into(), "17".into()]);
    ok(&call(a));

    let csv = String::from_utf8(read(run.join("assess.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("agent,path,s_t,option_value,pi_t,pnl"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    for agent in ["trained", "dp", "do_nothing"] {
        assert_eq!(rows.iter().filter(|r| r[0] == agent).count(), 300, "{agent}");
    }

    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let problem = cfg.problem().unwrap();
    let paths = sample_paths(&problem.lattice, 300, 17);
    let free = problem.frictionless();
    let dp = dp_terminal_variance(&free.lattice, &free.contract, &free.cost, cfg.holdings_grid().unwrap()).unwrap();
    let expected = optimal_baseline_pnl(&dp, &paths, &problem).unwrap();
    let dp_rows: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "dp").collect();
    let mut by_moneyness = [(0.0, 0usize); 2];
    for (row, want) in dp_rows.iter().zip(&expected) {
        let got: f64 = row[5].parse().unwrap();
        assert!((got - want).abs() <= 1e-8 * (1.0 + want.abs()), "{got} vs {want}");
        let s_t: f64 = row[2].parse().unwrap();
        let near = ((s_t / 90.0).ln().abs() < 0.08) as usize;
        by_moneyness[near].0 += got * got;
        by_moneyness[near].1 += 1;
    }
    // hedging residuals concentrate around the strike
    let rms = |(s, n): (f64, usize)| (s / n as f64).sqrt();
    assert!(rms(by_moneyness[1]) > rms(by_moneyness[0]), "{by_moneyness:?}");

    let hist = String::from_utf8(read(run.join("assess_hist.csv"))).unwrap();
    assert_eq!(hist.lines().count(), 1 + 3 * 50);
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 900);

    ok(&call(args("eval")));
    let report: serde_json::Value = serde_json::from_slice(&read(run.join("eval.json"))).unwrap();
    assert!(report["dp"]["mean"].as_f64().unwrap() > report["do_nothing"]["mean"].as_f64().unwrap());
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config(0));
    let out = hedgetree(&["assess", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn checkpoint_with_other_shape_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small_config(0));
    let run = dir.path().join("run");
    ok(&hedgetree(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]));
    let wide = write_config(dir.path(), "w.toml", &edit(&small_config(0), &[("channels = 8", "channels = 4")]));
    let out = hedgetree(&["eval", "--config", wide.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape mismatch"));
}
