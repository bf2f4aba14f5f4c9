use std::process::{Command, Output};

fn ldproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldproj")).args(args).output().unwrap()
}

fn ldproj_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldproj"))
        .args(args)
        .env("LDPROJ_THREADS", threads)
        .output()
        .unwrap()
}

/// Header plus data rows of CSV output.
fn csv_rows(out: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn field(header: &[String], row: &[String], name: &str) -> String {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    row[i].clone()
}

fn float(header: &[String], row: &[String], name: &str) -> f64 {
    field(header, row, name).parse().unwrap()
}

#[test]
fn rate_gaussian_value() {
    let out = ldproj(&["rate", "--p", "2", "--a", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = csv_rows(&out);
    assert_eq!(&h[..5], ["p", "a", "n", "seed", "theta_seed"]);
    let rate = float(&h, &rows[0], "rate");
    assert!((rate - 0.143_841_036_225_890_4).abs() < 1e-12);
}

#[test]
fn rate_at_zero_threshold() {
    let out = ldproj(&["rate", "--p", "3", "--a", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = csv_rows(&out);
    assert_eq!(float(&h, &rows[0], "rate"), 0.0);
    assert_eq!(float(&h, &rows[0], "lambda1"), 0.0);
    assert!(float(&h, &rows[0], "lambda2").abs() < 1e-14);
}

#[test]
fn rate_outside_domain_reports_status() {
    let out = ldproj(&["rate", "--p", "2", "--a", "1.2"]);
    assert_eq!(out.status.code(), Some(2));
    let (h, rows) = csv_rows(&out);
    assert_eq!(field(&h, &rows[0], "status"), "domain_exceeded");
    let reached = float(&h, &rows[0], "domain_reached");
    assert!(reached > 0.99 && reached < 1.0);
}

#[test]
fn invalid_exponent_is_a_domain_error() {
    assert_eq!(ldproj(&["rate", "--p", "0.5", "--a", "0.3"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = ldproj(&["rate", "--p", "2", "--a", "0.5", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn compare_small_threshold_matches_published_scale() {
    let out = ldproj(&["compare", "--p", "3", "--a", "0.1", "--n", "20", "--reps", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = csv_rows(&out);
    let is = float(&h, &rows[0], "is_mean");
    assert!(is > 0.16 && is < 0.64, "{is}");
    let ldp = float(&h, &rows[0], "ldp");
    let rate = float(&h, &rows[0], "rate");
    assert!((ldp - (-20.0 * rate).exp()).abs() < 1e-15 * ldp);
    let sld = float(&h, &rows[0], "sld");
    let rel = float(&h, &rows[0], "rel_dist_pct");
    assert!((rel - (sld - is) * 100.0 / is).abs() < 1e-9 * rel.abs());
}

#[test]
fn single_replication_flags_degenerate_interval() {
    let out = ldproj(&["is", "--p", "3", "--a", "0.7", "--n", "20", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = csv_rows(&out);
    let r = &rows[0];
    assert_eq!(field(&h, r, "is_degenerate_ci"), "true");
    let mean = float(&h, r, "is_mean");
    assert_eq!(float(&h, r, "is_ci_low"), mean);
    assert_eq!(float(&h, r, "is_ci_high"), mean);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let args = [
        "compare",
        "--p",
        "3",
        "--a",
        "0.7",
        "--n",
        "20,80",
        "--reps",
        "200",
        "--estimators",
        "sld,is,mc",
    ];
    let one = ldproj_env(&args, "1");
    let four = ldproj_env(&args, "4");
    let flag = ldproj(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, flag.stdout);
}

#[test]
fn csv_cells_use_full_precision() {
    let out = ldproj(&["sld", "--p", "3", "--a", "0.7", "--n", "20"]);
    let (h, rows) = csv_rows(&out);
    let cell = field(&h, &rows[0], "sld");
    let mantissa = cell.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn json_mirrors_csv() {
    let args = ["sld", "--p", "3", "--a", "0.5,0.7", "--n", "20,40"];
    let csv = ldproj(&args);
    let json = ldproj(&[&args[..], &["--format", "json"]].concat());
    let doc: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc["provenance"]["quad_order"], 64);
    assert!(doc["provenance"]["version"].is_string());
    assert_eq!(doc["config"]["command"]["command"], "sld");
    let (h, rows) = csv_rows(&csv);
    let jrows = doc["rows"].as_array().unwrap();
    assert_eq!(jrows.len(), rows.len());
    for (jr, r) in jrows.iter().zip(&rows) {
        for name in ["sld", "r", "baseline"] {
            assert_eq!(jr[name].as_f64().unwrap(), float(&h, r, name));
        }
    }
}

#[test]
fn figure2_baseline_decreases() {
    let out = ldproj(&[
        "figure2",
        "--p",
        "3",
        "--a",
        "0.7",
        "--n",
        "20,40,80,160",
        "--directions",
        "5",
    ]);
    let (h, rows) = csv_rows(&out);
    let base: Vec<f64> = rows.iter().map(|r| float(&h, r, "baseline")).collect();
    assert!(base.windows(2).all(|w| w[1] < w[0]), "{base:?}");
    // Scatter differs from the baseline once p ≠ 2.
    assert!(rows
        .iter()
        .any(|r| (float(&h, r, "sld_0") / float(&h, r, "baseline") - 1.0).abs() > 1e-3));
}

#[test]
fn figure2_gaussian_scatter_sits_on_baseline() {
    let out = ldproj(&[
        "figure2",
        "--p",
        "2",
        "--a",
        "0.5",
        "--n",
        "10,50,200",
        "--directions",
        "6",
    ]);
    let (h, rows) = csv_rows(&out);
    for r in &rows {
        let base = float(&h, r, "baseline");
        for k in 0..6 {
            let v = float(&h, r, &format!("sld_{k}"));
            assert!((v - base).abs() < 1e-9 * base, "{v} vs {base}");
        }
    }
}

#[test]
fn figure2_scatter_spread_matches_fluctuation_scale() {
    // log(SLD/baseline) = √n·R + log C, and √n·R has limit standard
    // deviation √(n·Var R) under random directions.
    let n = 400usize;
    let out = ldproj(&[
        "figure2",
        "--p",
        "3",
        "--a",
        "0.7",
        "--n",
        &n.to_string(),
        "--directions",
        "200",
    ]);
    let (h, rows) = csv_rows(&out);
    let base = float(&h, &rows[0], "baseline");
    let logs: Vec<f64> = (0..200)
        .map(|k| (float(&h, &rows[0], &format!("sld_{k}")) / base).ln())
        .collect();
    let m = logs.iter().sum::<f64>() / 200.0;
    let sd = (logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 199.0).sqrt();
    let cov = ldproj(&["clt-cov", "--p", "3", "--a", "0.7"]);
    let (ch, crow) = csv_rows(&cov);
    let limit_sd = (n as f64 * float(&ch, &crow[0], "limit_var_r")).sqrt();
    assert!((sd / limit_sd - 1.0).abs() < 0.2, "{sd} vs {limit_sd}");
}

#[test]
fn clt_sim_reports_summary() {
    let out = ldproj(&["clt-sim", "--p", "3", "--a", "0.7", "--n", "500", "--reps", "400"]);
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = csv_rows(&out);
    assert_eq!(float(&h, &rows[0], "limit_draws"), 4000.0);
    let ratio = float(&h, &rows[0], "var_r") / float(&h, &rows[0], "limit_var_r");
    assert!(ratio > 0.7 && ratio < 1.3, "{ratio}");
}

#[test]
fn oracle_runs_for_two_coordinates() {
    let out = ldproj(&["oracle", "--p", "3", "--a", "0.4", "--theta-seed", "3"]);
    let (h, rows) = csv_rows(&out);
    let v = float(&h, &rows[0], "oracle");
    assert!(v > 0.0 && v < 1.0);
    assert_eq!(field(&h, &rows[0], "n"), "2");
}
