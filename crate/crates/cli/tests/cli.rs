use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn rateex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rateex")).args(args).env_remove("RATEEX_THREADS").output().unwrap()
}

fn rateex_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rateex")).args(args).env("RATEEX_THREADS", threads).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> Value {
    let line = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {line}"))
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn scalar_region_single_sensor_value() {
    let out = stdout(&rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--rates", "1"]));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["rate_1", "exponent", "gamma_1"]);
    assert!((rows[0][1] - 0.379885).abs() < 1e-6, "{out}");
}

#[test]
fn csv_cells_carry_twelve_significant_digits() {
    let out = stdout(&rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--rates", "1"]));
    let cell = out.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let digits: String = cell.chars().filter(|c| c.is_ascii_digit()).collect();
    assert_eq!(digits.trim_start_matches('0').len(), 12, "{cell}");
}

#[test]
fn bits_only_rescale_the_display() {
    let nats = stdout(&rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1,2", "--rates", "0.7,0.4"]));
    let bits = stdout(&rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1,2", "--rates", "0.7,0.4", "--bits"]));
    let (_, n) = csv_rows(&nats);
    let (_, b) = csv_rows(&bits);
    assert!((b[0][2] * std::f64::consts::LN_2 - n[0][2]).abs() < 1e-10);
    assert_eq!(n[0][3..], b[0][3..]);
}

#[test]
fn real_convention_halves_the_exponent_at_double_rate() {
    let real = stdout(&rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--rates", "0.5", "--convention", "real"]));
    let complex = stdout(&rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--rates", "1"]));
    let (_, r) = csv_rows(&real);
    let (_, c) = csv_rows(&complex);
    assert!((r[0][1] - 0.5 * c[0][1]).abs() < 1e-11);
}

#[test]
fn unknown_flag_is_an_argument_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let o = rateex(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1", "--rates", "1", "--frobnicate", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(error_json(&o)["error"]["kind"], "argument");
}

#[test]
fn malformed_grid_and_missing_input_are_argument_errors() {
    let o = rateex(&["gap-curve", "--input", data("wald.json").to_str().unwrap(), "--sigma-z2", "1", "--k-max", "2", "--e-grid", "1:0:0.1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rateex(&["vg-region", "--input", "/nonexistent/model.json", "--rates", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(rateex_threads(&["np-oracle", "--input", data("np_instance.json").to_str().unwrap()], "zero").status.code(), Some(2));
}

#[test]
fn non_psd_source_covariance_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");
    let o = rateex(&["vg-region", "--input", data("not_psd.json").to_str().unwrap(), "--rates", "1", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "validation");
    assert!(e["error"]["message"].as_str().unwrap().contains("sigma_x"), "{e}");
}

#[test]
fn broken_json_and_bad_pmfs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ \"p\": [0.5, ").unwrap();
    assert_eq!(rateex(&["np-oracle", "--input", broken.to_str().unwrap()]).status.code(), Some(3));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"p": [0.6, 0.6], "q": [0.5, 0.5], "eps": 0.1}"#).unwrap();
    assert_eq!(rateex(&["np-oracle", "--input", bad.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn jump_discontinuity_is_a_numerical_error_for_the_gap_curve() {
    let o = rateex(&["gap-curve", "--input", data("uniform.json").to_str().unwrap(), "--sigma-z2", "1", "--k-max", "2", "--e-grid", "0:0.1:0.1"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"]["kind"], "numerical");
    // The bounds that do not need κ still work.
    let out = stdout(&rateex(&["ep-bounds", "--input", data("uniform.json").to_str().unwrap(), "--sigma-z2", "1", "--rates", "0.3"]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["profile"].get("kappa").is_none());
    assert!(v["p2p"][0]["lower"].as_f64().unwrap() <= v["p2p"][0]["upper"].as_f64().unwrap());
}

#[test]
fn gap_curve_columns_and_values() {
    let out = stdout(&rateex(&["gap-curve", "--input", data("wald.json").to_str().unwrap(), "--sigma-z2", "1", "--k-max", "5", "--e-grid", "0:0.2:0.05"]));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["K", "E", "delta", "limit_bound_with_E", "limit_bound_uniform"]);
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r[2] >= 0.0 && r[4] >= r[3]);
    }
}

#[test]
fn np_oracle_instance_and_curve() {
    let v: Value = serde_json::from_str(&stdout(&rateex(&["np-oracle", "--input", data("np_instance.json").to_str().unwrap()]))).unwrap();
    // Ratios 5, 1, 1/3: take the first two outcomes whole and half of the third.
    assert!((v["beta"].as_f64().unwrap() - (0.1 + 0.3 + 0.5 * 0.6)).abs() < 1e-12, "{v}");
    let out = stdout(&rateex(&["np-oracle", "--input", data("bsc.json").to_str().unwrap(), "--eps", "0.2", "--n", "3"]));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["n", "exponent_exact", "ceiling"]);
    assert_eq!(rows.len(), 3);
    assert!((rows[0][2] - 0.368064).abs() < 1e-5);
}

#[test]
fn vg_report_round_trips_through_omegas() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let model = data("vector_side_info.json");
    stdout(&rateex(&["vg-region", "--input", model.to_str().unwrap(), "--rates", "0.5,0.3", "--output", first.to_str().unwrap()]));
    let out = stdout(&rateex(&["vg-region", "--input", model.to_str().unwrap(), "--rates", "0.5,0.3", "--omegas", first.to_str().unwrap()]));
    let a: Value = serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&out).unwrap();
    let (ea, eb) = (a["exponent"].as_f64().unwrap(), b["exponent"].as_f64().unwrap());
    assert!((ea - eb).abs() < 1e-12, "{ea} vs {eb}");
    assert_eq!(a["schema_version"], "1");
}

#[test]
fn dm_report_round_trips_through_channels() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("grid.json");
    let inst = data("two_sensor_binary.json");
    let base = ["dm-region", "--input", inst.to_str().unwrap(), "--rates", "0.2,0.1"];
    let mut args = base.to_vec();
    args.extend(["--resolution", "4", "--u-sizes", "2,2", "--output", first.to_str().unwrap()]);
    stdout(&rateex(&args));
    let mut again = base.to_vec();
    again.extend(["--channels", first.to_str().unwrap()]);
    let b: Value = serde_json::from_str(&stdout(&rateex(&again))).unwrap();
    let a: Value = serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    assert!((a["exponent"].as_f64().unwrap() - b["exponent"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn ep_report_feeds_the_gap_curve() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("ep.json");
    stdout(&rateex(&["ep-bounds", "--input", data("wald.json").to_str().unwrap(), "--sigma-z2", "1", "--output", report.to_str().unwrap()]));
    let grid = ["--sigma-z2", "1", "--k-max", "3", "--e-grid", "0:0.1:0.05"];
    let from_report = stdout(&rateex(&[&["gap-curve", "--input", report.to_str().unwrap()][..], &grid[..]].concat()));
    let direct = stdout(&rateex(&[&["gap-curve", "--input", data("wald.json").to_str().unwrap()][..], &grid[..]].concat()));
    assert_eq!(from_report, direct);
}

#[test]
fn simulation_report_parses_back() {
    let out = stdout(&rateex(&["qbt-sim", "--input", data("bsc.json").to_str().unwrap(), "--n", "20", "--trials", "500", "--eps", "0.1", "--seed", "5"]));
    let r: rateex_core::qbt::SimResult = serde_json::from_str(&out).unwrap();
    assert_eq!((r.n, r.trials, r.seed), (20, 500, 5));
    assert!((0.0..=1.0).contains(&r.alpha_hat) && (0.0..=1.0).contains(&r.beta_hat));
}

/// Every subcommand, each run twice and under different thread caps.
fn deterministic_runs() -> Vec<Vec<String>> {
    let d = |n: &str| data(n).to_str().unwrap().to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        [s(&["vg-region", "--input"]), vec![d("vector_side_info.json")], s(&["--rates", "0.5,0.3"])].concat(),
        s(&["scalar-region", "--sigma-x2", "1", "--sigmas", "1,2,3", "--rates", "0.3,0.2,0.1", "--rates", "1,1,1"]),
        [s(&["dm-region", "--input"]), vec![d("two_sensor_binary.json")], s(&["--rates", "0.2,0.1", "--resolution", "4", "--u-sizes", "2,2"])].concat(),
        [s(&["qbt-sim", "--input"]), vec![d("two_sensor_binary.json")], s(&["--n", "30", "--trials", "3000", "--seed", "11", "--typicality-constant", "1.5"])].concat(),
        [s(&["qbt-sim", "--input"]), vec![d("gaussian_sim.json")], s(&["--n", "25", "--trials", "3000", "--seed", "2", "--typicality-constant", "2"])].concat(),
        [s(&["np-oracle", "--input"]), vec![d("bsc.json")], s(&["--eps", "0.2", "--n", "5"])].concat(),
        [s(&["ep-bounds", "--input"]), vec![d("wald.json")], s(&["--sigma-z2", "1", "--k-max", "2", "--e-grid", "0:0.1:0.05", "--rates", "0.1,0.5"])].concat(),
        [s(&["gap-curve", "--input"]), vec![d("wald.json")], s(&["--sigma-z2", "1", "--k-max", "8", "--e-grid", "0:0.3:0.05"])].concat(),
    ]
}

fn outputs_are_byte_identical() -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    for (i, args) in deterministic_runs().into_iter().enumerate() {
        let mut hashes = Vec::new();
        for (j, threads) in ["1", "4", "4"].iter().enumerate() {
            let out = dir.path().join(format!("{i}-{j}"));
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--output", out.to_str().unwrap()]);
            let o = rateex_threads(&a, threads);
            if !o.status.success() {
                return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)));
            }
            hashes.push(sha(&out));
        }
        if hashes.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{} output differs between runs", args[0]));
        }
    }
    Ok(())
}

#[test]
fn seeded_runs_are_byte_identical() {
    outputs_are_byte_identical().unwrap();
}
