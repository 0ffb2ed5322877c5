use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cellfree::simulator::SimConfig;
use cellfree_cli::{load_config, CONFIG_ENV, RATES_HEADER};

fn cellfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .args(args)
        .env_remove(CONFIG_ENV)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const QUICK: [&str; 6] = ["--set", "n_drops=2", "--set", "n_inner=2", "--set", "alphas=[2, 6]"];

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend(QUICK);
    args.extend(extra);
    cellfree(&args)
}

fn echoed_config(dir: &Path) -> serde_json::Value {
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    summary["config"].clone()
}

#[test]
fn table1_prints_nine_rows() {
    let o = cellfree(&["table1", "--alpha", "1..9"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,delta_opt,a_tilde,var_bussgang,var_max");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("1,1.5957"));
}

#[test]
fn backhaul_calculator() {
    let o = cellfree(&["backhaul", "--alpha", "10", "--N", "25", "--K", "40", "--tau-f", "160", "--Tc-ms", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "100000000");
}

#[test]
fn missing_config_names_path() {
    let o = cellfree(&["run", "--config", "missing.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.toml"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = cellfree(&["run", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constraint_violation_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_into(&out, &["--set", "tau_p=500"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("tau_p ≤ tau_c"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "num_aps = 3\nnum_userz = 4\n").unwrap();
    let err = load_config(Some(&cfg), &[]).unwrap_err().to_string();
    assert!(err.contains("num_userz"), "{err}");
    let err = load_config(None, &["pathloss.d2_m=3".into()]).unwrap_err().to_string();
    assert!(err.contains("d2_m"), "{err}");
}

#[test]
fn defaults_are_echoed_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let o = cellfree(&["run", "--out", dir.path().to_str().unwrap(), "--set", "n_drops=1", "--set", "n_inner=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let expected = serde_json::to_value(SimConfig {
        n_drops: 1,
        n_inner: 1,
        ..SimConfig::default()
    })
    .unwrap();
    assert_eq!(echoed_config(dir.path()), expected);
}

#[test]
fn overrides_beat_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "num_aps = 6\nseed = 5\n[pathloss]\nmodel = \"log-distance\"\nreference_loss_db = 30.0\nexponent = 3.5\nreference_m = 1.0\n").unwrap();
    let c = load_config(Some(&cfg), &["seed=9".into(), "pathloss.exponent=3".into()]).unwrap();
    assert_eq!(c.num_aps, 6);
    assert_eq!(c.seed, 9);
    let out = dir.path().join("out");
    let o = run_into(&out, &["--config", cfg.to_str().unwrap(), "--set", "seed=9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = echoed_config(&out);
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["num_aps"], 6);
    assert_eq!(echo["pathloss"]["model"], "log-distance");
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("env.toml");
    fs::write(&cfg, "num_users = 7\ntau_p = 7\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend(QUICK);
    let o = Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .args(&args)
        .env(CONFIG_ENV, &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(echoed_config(&out)["num_users"], 7);
}

#[test]
fn outputs_have_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rates = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let mut lines = rates.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), RATES_HEADER);
    // 3 settings × 3 detectors × 2 drops × 40 users.
    assert_eq!(lines.clone().count(), 3 * 3 * 2 * 40);
    assert!(lines.next().unwrap().starts_with("MRC,perfect,0,0,"));
    let cdf = fs::read_to_string(dir.path().join("cdf.csv")).unwrap();
    assert_eq!(cdf.lines().nth(1).unwrap(), "detector,alpha,rate,empirical_cdf");
    let last = cdf.lines().last().unwrap();
    assert!(last.starts_with("MMSE,6,") && last.ends_with(",1"));
    let table = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 1);
    assert_eq!(summary["run_id"].as_str().unwrap().len(), 12);
    let results = summary["results"].as_array().unwrap();
    assert_eq!(results.len(), 9);
    let zf6 = results.iter().find(|r| r["detector"] == "ZF" && r["alpha"] == 6).unwrap();
    // 2·6·(20·40 + 20·160) bits per millisecond.
    assert_eq!(zf6["backhaul_rate_per_ap"], 48_000_000.0);
    assert!(zf6["std_error"].as_f64().unwrap() >= 0.0);
}

#[test]
fn echoed_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    assert!(run_into(&first, &["--set", "seed=77"]).status.success());
    let echo = dir.path().join("echo.json");
    fs::write(&echo, serde_json::to_string(&echoed_config(&first)).unwrap()).unwrap();
    let second = dir.path().join("b");
    let o = cellfree(&["run", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["rates.csv", "cdf.csv", "summary.json", "table1.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sinr_oracle_reports_terms() {
    let o = cellfree(&["sinr-oracle", "--realizations", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for needle in ["user 0", "user 1", "MRC", "ZF", "MMSE", "A2", "A6", "bussgang"] {
        assert!(text.contains(needle), "{needle}");
    }
}
