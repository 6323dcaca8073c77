use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onn_noise::linear::propagate;
use onn_noise::{Network, NoiseProfile};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onn-noise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_json(args: &[&str]) -> Value {
    serde_json::from_str(&run_ok(args)).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn forward_tanh_example() {
    let net = fixture("tanh.json");
    let v = run_json(&["forward", "--net", p(&net), "--input", "[0,0]"]);
    let y = v["result"]["output"][0].as_f64().unwrap();
    assert!((y - 0.5f64.tanh()).abs() < 1e-12);
    assert!((y - 0.46212).abs() < 5e-6);
    let meta = &v["meta"];
    assert_eq!(meta["command"], "forward");
    assert_eq!(meta["generator"], "splitmix64-ctr/v1");
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn covariance_matches_library_propagation() {
    let net_path = fixture("linear.json");
    let prof_path = fixture("linear_profile.json");
    let v = run_json(&["covariance", "--net", p(&net_path), "--profile", p(&prof_path)]);
    let net = Network::load(&net_path).unwrap();
    let profile = NoiseProfile::load(&prof_path).unwrap();
    let expected = propagate(&net.as_linear().unwrap(), &profile).unwrap();
    let layers = v["result"]["layers"].as_array().unwrap();
    assert_eq!(layers.len(), expected.states.len());
    for (got, want) in layers.iter().zip(&expected.states) {
        assert_eq!(got["index"].as_u64().unwrap() as usize, want.layer_index);
        let rows = got["sigma"].as_array().unwrap();
        for (i, row) in rows.iter().enumerate() {
            for (j, x) in row.as_array().unwrap().iter().enumerate() {
                assert_eq!(x.as_f64().unwrap(), want.sigma[(i, j)]);
            }
        }
    }
}

#[test]
fn covariance_rejects_nonlinear_network() {
    let out = run(&[
        "covariance",
        "--net",
        p(&fixture("tanh.json")),
        "--profile",
        p(&fixture("square_profile.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("linear.json");
    let prof = fixture("linear_profile.json");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("run{k}.json"));
        run_ok(&[
            "simulate", "--net", p(&net), "--profile", p(&prof), "--input", "[1,2]", "--trials", "300", "--seed",
            "11", "--output", p(&path),
        ]);
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let other = dir.path().join("other.json");
    run_ok(&[
        "simulate", "--net", p(&net), "--profile", p(&prof), "--input", "[1,2]", "--trials", "300", "--seed", "12",
        "--output", p(&other),
    ]);
    assert_ne!(outputs[0], std::fs::read(&other).unwrap());
}

#[test]
fn sequential_and_parallel_agree() {
    let net = fixture("linear.json");
    let prof = fixture("linear_profile.json");
    let base = ["design-b", "--net", p(&net), "--profile", p(&prof), "--input", "[1,-1]", "--m", "3", "--trials", "200"];
    let par = run_json(&base);
    let mut seq_args = base.to_vec();
    seq_args.push("--sequential");
    let seq = run_json(&seq_args);
    assert_eq!(par["result"], seq["result"]);
}

#[test]
fn validation_errors_exit_one() {
    let net = fixture("tanh.json");
    assert_eq!(run(&["forward", "--net", p(&net), "--input", "[0]"]).status.code(), Some(1));
    assert_eq!(run(&["forward", "--net", p(&net), "--input", "not json"]).status.code(), Some(1));
    assert_eq!(run(&["forward", "--net", "/nonexistent/net.json", "--input", "[0,0]"]).status.code(), Some(1));
    assert_eq!(run(&["forward", "--nett", p(&net)]).status.code(), Some(1));
    assert_eq!(run(&["insert-layers", "--net", p(&net), "--n", "1"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let net = fixture("tanh.json");
    let out = run(&["forward", "--net", p(&net), "--input", "[0,0]", "--output", "/nonexistent/dir/out.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn csv_has_header_and_meta_columns() {
    let text = run_ok(&["scan-m", "--norms-w", "[2,4]", "--norms-d", "[4]", "--format", "csv"]);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    for h in ["norm_W", "norm_D", "min_m", "predicted_m", "seed", "config_hash", "generator"] {
        assert!(headers.iter().any(|x| x == h), "missing column {h}");
    }
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    assert_eq!(&rows[1][col("min_m")], "16");
    assert_eq!(&rows[0][col("min_m")], "4");
    assert_eq!(&rows[0][col("norm_W")], "2.0");
}

#[test]
fn csv_unavailable_is_usage_error() {
    let out = run(&["insert-layers", "--net", p(&fixture("tanh.json")), "--n", "1", "--slots", "[1,1,1,1]", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn limit_methods_agree() {
    let net = fixture("square.json");
    let prof = fixture("square_profile.json");
    let get = |method: &str| {
        let v = run_json(&["limit", "--net", p(&net), "--profile", p(&prof), "--method", method]);
        let sigma = v["result"]["sigma"].clone();
        let flat: Vec<f64> = sigma
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect::<Vec<_>>())
            .collect();
        flat
    };
    let a = get("series");
    for method in ["iterate", "vectorized"] {
        let b = get(method);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{method}: {x} vs {y}");
        }
    }
}

#[test]
fn mse_experiment_from_config() {
    let v = run_json(&["experiment", "mse", "--config", p(&fixture("mse_config.json")), "--grid", "[1,4]", "--trials", "10"]);
    let rows = v["result"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(v["meta"]["seed"], 7);
    let mse: Vec<f64> = rows.iter().map(|r| r["mse"].as_f64().unwrap()).collect();
    assert!(mse[1] < mse[0]);
}

#[test]
fn insert_layers_writes_network() {
    let v = run_json(&["insert-layers", "--net", p(&fixture("tanh.json")), "--n", "2", "--slots", "[1,1,1,1]"]);
    assert!(v["result"].to_string().contains("identity"));
}

#[test]
fn monte_carlo_csv_rows_carry_intervals() {
    let text = run_ok(&[
        "simulate", "--net", p(&fixture("linear.json")), "--profile", p(&fixture("linear_profile.json")), "--input",
        "[1,2]", "--trials", "500", "--format", "csv",
    ]);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for record in reader.records() {
        let r = record.unwrap();
        let v: f64 = r[col("value")].parse().unwrap();
        let lo: f64 = r[col("ci_low")].parse().unwrap();
        let hi: f64 = r[col("ci_high")].parse().unwrap();
        assert!(lo <= v && v <= hi, "{r:?}");
        assert_eq!(&r[col("trials")], "500");
        assert_eq!(&r[col("confidence")], "0.95");
    }
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("mse_config.json");
    let files: Vec<_> = (0..2)
        .map(|k| {
            let path = dir.path().join(format!("depth{k}.csv"));
            run_ok(&[
                "experiment", "depth", "--config", p(&config), "--trials", "4", "--n-grid", "[0,3]", "--variances",
                "[0.01]", "--slots", "[1,2,1,2]", "--format", "csv", "--output", p(&path),
            ]);
            std::fs::read(&path).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
}

#[test]
fn gnuplot_script_points_at_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mse.csv");
    let script = dir.path().join("mse.gp");
    run_ok(&[
        "experiment", "mse", "--config", p(&fixture("mse_config.json")), "--trials", "4", "--grid", "[1,2]",
        "--format", "csv", "--output", p(&data), "--gnuplot", p(&script),
    ]);
    let text = std::fs::read_to_string(&script).unwrap();
    let header = std::fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    let idx = |name: &str| header.split(',').position(|h| h == name).unwrap() + 1;
    let using = format!("using {}:{}:{}:{}", idx("copies"), idx("mse"), idx("ci_low"), idx("ci_high"));
    assert!(text.contains(&using), "{text}");
    assert!(text.contains(p(&data)));

    let out = run(&["scan-m", "--norms-w", "[2]", "--norms-d", "[2]", "--gnuplot", p(&script)]);
    assert_eq!(out.status.code(), Some(1));
}
