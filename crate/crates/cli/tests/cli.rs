use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn brl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn chain_table_matches_closed_form() {
    let out = brl(&["chain", "--length", "2", "--gamma", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(headers, ["t", "C_t_computed", "C_t_formula"]);
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    let expected = [("0", 2.0), ("1", 4.0), ("2", 4.0), ("c_eff", 1.0), ("c_inf", 1.0)];
    assert_eq!(rows.len(), expected.len());
    for (row, (label, value)) in rows.iter().zip(expected) {
        assert_eq!(row[0], label);
        assert_eq!(row[1].parse::<f64>().unwrap(), value);
        assert_eq!(row[2].parse::<f64>().unwrap(), value);
    }
}

#[test]
fn chain_columns_agree_for_longer_chains() {
    for length in ["1", "4", "9"] {
        let out = brl(&["chain", "--length", length, "--gamma", "0.8"]);
        assert_eq!(out.status.code(), Some(0));
        let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
        for record in reader.records() {
            let record = record.unwrap();
            let computed: f64 = record[1].parse().unwrap();
            let formula: f64 = record[2].parse().unwrap();
            assert!((computed - formula).abs() <= 1e-12 * formula.abs());
        }
    }
}

#[test]
fn chain_output_is_stable() {
    let a = brl(&["chain", "--length", "5", "--gamma", "0.9"]);
    let b = brl(&["chain", "--length", "5", "--gamma", "0.9"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn chain_rejects_invalid_gamma() {
    let out = brl(&["chain", "--length", "3", "--gamma", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = brl(&["verify", "everything"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("everything"));
}

#[test]
fn verify_suites_pass_and_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    for (suite, seed) in [
        ("telescoping", "7"),
        ("counterexamples", "0"),
        ("lowrank", "3"),
        ("span", "1"),
        ("bounds", "2"),
    ] {
        let path = dir.path().join(format!("{suite}.json"));
        let out = brl(&["verify", suite, "--seed", seed, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let checks = report.as_array().unwrap();
        assert!(!checks.is_empty());
        for c in checks {
            assert_eq!(c["status"], "pass", "{c}");
            assert!(c["check_name"].is_string());
            assert!(c["threshold"].is_number());
        }
    }
}

#[test]
fn lowrank_suite_reports_small_eps_w() {
    let out = brl(&["verify", "lowrank", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for name in ["occupancy_spanner_eps_w_max", "feature_spanner_eps_w_max"] {
        let check = report
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["check_name"] == name)
            .unwrap();
        assert!(check["measured"].as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn fqi_gap_stays_away_from_zero() {
    let out = brl(&["fqi-gap", "--iters", "20", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.len(), 20);
    let min = rows
        .iter()
        .map(|r| r["bellman_error_sq"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(min >= 0.01);
}

#[test]
fn run_is_deterministic_and_ordered_by_seed() {
    let config = configs_dir().join("random_mabo.json");
    let a = brl(&["run", "--config", config.to_str().unwrap()]);
    let b = brl(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let mut reader = csv::Reader::from_reader(a.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "seed");
    assert_eq!(&headers[1], "algorithm");
    let seeds: Vec<u64> = reader
        .records()
        .map(|r| r.unwrap()[0].parse().unwrap())
        .collect();
    assert_eq!(seeds, [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
}

#[test]
fn csv_numbers_round_trip() {
    let config = configs_dir().join("random_mabo.json");
    let csv_out = brl(&["run", "--config", config.to_str().unwrap()]);
    let json_out = brl(&["run", "--config", config.to_str().unwrap(), "--format", "json"]);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&json_out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(csv_out.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "thm5_rhs").unwrap();
    for (record, row) in reader.records().zip(&rows) {
        let parsed: f64 = record.unwrap()[col].parse().unwrap();
        assert_eq!(parsed, row["thm5_rhs"].as_f64().unwrap());
    }
}

#[test]
fn population_mode_has_no_statistical_term() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pop.json");
    let config = configs_dir().join("population.json");
    let out = brl(&["run", "--config", config.to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["eps_stat"], 0.0);
        assert!(row["n"].is_null());
    }
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"mdp":{"type":"file","path":"missing.json"},"mu":{"type":"uniform"},
            "q_class":{"type":"grid","values":[0]},"w_class":{"type":"grid","values":[0]},
            "algorithms":[],"n":0,"seeds":[3],"delta":1.0,"mode":"empirical"}"#,
    )
    .unwrap();
    let out = brl(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["n:", "delta:", "algorithms:", "mdp.path:", "w_class.type:"] {
        assert!(err.contains(field), "missing {field} in {err}");
    }
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"mdp":{"type":"chain","length":2,"gamma":0.5},"mu":{"type":"uniform"},
            "q_class":{"type":"grid","values":[0]},"w_class":{"type":"constant","value":1},
            "algorithms":["sarsa"],"n":5,"seeds":[3],"delta":0.1,"mode":"empirical"}"#,
    )
    .unwrap();
    let out = brl(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("algorithms[0]"));
}
