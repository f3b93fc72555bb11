use std::path::Path;
use std::process::{Command, Output};

use pivotal::cli::sha256_hex;

fn pivotal(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pivotal"));
    cmd.args(args).env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn header(path: &Path) -> String {
    String::from_utf8(read(path))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn illustration_reruns_are_byte_identical_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "ks.conf",
        "experiment = illustration_ks\ntrials = 500\nx_grid = 0, 1\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = pivotal(
            &["illustration-ks", "--config", &config, "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["ks.csv", "cdf_curves.csv"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a.join("manifest.json"))).unwrap();
    for entry in manifest["outputs"].as_array().unwrap() {
        let file = entry["file"].as_str().unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), sha256_hex(&read(&a.join(file))));
    }
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(
        header(&a.join("ks.csv")),
        "x,d_ks,conditional_coverage,marginal_coverage,gap,stderr,within_band"
    );
}

#[test]
fn marginal_check_table_has_the_contract_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "m.conf",
        "experiment = marginal_check\nrepetitions = 200\nn_calibration = 19\nN_train = 100\nmodel = spline_flow\n",
    );
    let out = dir.path().join("out");
    let o = pivotal(
        &["marginal-check", "--config", &config, "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(&out.join("marginal_n19.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "alpha,pipeline,coverage,lower,upper,stderr");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let coverage: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&coverage));
    }
}

#[test]
fn toy_with_oracle_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "t.conf",
        "experiment = toy\nmodel = oracle\nN_train = 0\nn_test = 1000\ngrid_points = 11\n",
    );
    let out = dir.path().join("out");
    let o = pivotal(
        &[
            "toy",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "4",
        ],
        &[("PIVOTAL_THREADS", "1")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&out.join("membership.csv")),
        "score,alpha,point,x,y,bin,base,corrected"
    );
    assert_eq!(
        header(&out.join("bin_coverage.csv")),
        "score,alpha,pipeline,bin,center,count,coverage"
    );
    assert_eq!(header(&out.join("summary.csv")), "score,alpha,pipeline,overall,gap,mae");
    assert_eq!(
        header(&out.join("boundaries.csv")),
        "score,alpha,pipeline,x,interval,lower,upper"
    );
    let membership = String::from_utf8(read(&out.join("membership.csv"))).unwrap();
    assert_eq!(membership.lines().count(), 1 + 3 * 1000);
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["model"], "oracle");
}

#[test]
fn short_convergence_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "c.conf",
        "experiment = convergence\nN_ladder = 0, 300\nn_runs = 1\nepochs = 3\nn_calibration = 200\nn_test = 500\nalpha_levels = 9\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = pivotal(
            &["convergence", "--config", &config, "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["runs.csv", "summary.csv"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file}");
    }
    let outputs = |dir: &Path| -> serde_json::Value {
        serde_json::from_slice::<serde_json::Value>(&read(&dir.join("manifest.json"))).unwrap()["outputs"].clone()
    };
    assert_eq!(outputs(&a), outputs(&b));
    let summary = String::from_utf8(read(&a.join("summary.csv"))).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "model,N,mean,sd,runs");
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.conf", "experiment = toy\nmodel = mdn\nN_train = 0\n");
    let o = pivotal(&["toy", "--config", &config], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("N_train"));

    let o = pivotal(
        &["toy", "--config", dir.path().join("missing.conf").to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));

    let config = write_config(dir.path(), "a.conf", "alphas = 0.1, 1.2\n");
    let o = pivotal(&["marginal-check", "--config", &config], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alphas"));

    let config = write_config(dir.path(), "ok.conf", "trials = 10\n");
    let o = pivotal(
        &[
            "illustration-ks",
            "--config",
            &config,
            "--out",
            dir.path().join("x").to_str().unwrap(),
        ],
        &[("PIVOTAL_THREADS", "zero")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PIVOTAL_THREADS"));
}
