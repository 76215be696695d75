use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cross_impact::equilibrium::{solve_equilibrium, ModelParams};
use cross_impact::io::read_moments_csv;
use cross_impact::monte_carlo::simulate;
use cross_impact::SymMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cross-impact"));
    cmd.env_remove("CROSS_IMPACT_THREADS");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a 2-asset model and returns the directory holding it.
fn model_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("sigma0.csv"), "# fundamental covariance\n1,0.3\n0.3,2\n").unwrap();
    std::fs::write(dir.path().join("omega.csv"), "1,0.1\n0.1,0.5\n").unwrap();
    dir
}

const MODEL: [&str; 4] = ["--sigma0", "sigma0.csv", "--omega", "omega.csv"];

fn with_model<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(MODEL);
    v.extend(extra);
    v
}

#[test]
fn equilibrium_report_envelope() {
    let dir = model_dir();
    let out = run(dir.path(), &with_model("equilibrium", &["--saddles", "-o", "eq.json"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(dir.path().join("eq.json"));
    for key in ["version", "config", "results", "warnings", "meta"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert!(r.get("error").is_none());
    let saddles = r["results"]["saddles"].as_array().unwrap();
    assert_eq!(saddles.len(), 4);
    assert_eq!(saddles.iter().filter(|s| s["is_equilibrium"] == true).count(), 1);
    assert!(r["results"]["quadratic_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn simulate_then_fit_round_trips_moments() {
    let dir = model_dir();
    let out = run(
        dir.path(),
        &with_model("simulate", &["--samples", "20000", "--seed", "7", "--moments-out", "m.csv", "--no-meta", "-o", "sim.json"]),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sim = json(dir.path().join("sim.json"));
    assert!(sim["results"]["relative_errors"]["sigma_hat_vs_half_sigma0"].as_f64().unwrap() < 0.05);

    let params = ModelParams::centered(
        SymMatrix::from_row_slice(2, &[1.0, 0.3, 0.3, 2.0]).unwrap(),
        SymMatrix::from_row_slice(2, &[1.0, 0.1, 0.1, 0.5]).unwrap(),
    )
    .unwrap();
    let eq = solve_equilibrium(&params).unwrap();
    let direct = simulate(&params, &eq, 20_000, 7).unwrap().to_triple(vec![]).unwrap();
    let from_file = read_moments_csv(&std::fs::read_to_string(dir.path().join("m.csv")).unwrap()).unwrap();
    assert_eq!(from_file, direct);

    let out = run(dir.path(), &["fit", "--input", "m.csv", "--method", "all", "--table-csv", "t.csv", "-o", "fit.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(dir.path().join("fit.json"));
    let methods: Vec<&str> = fit["results"]["estimators"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["MLE", "ELM", "Kyle"]);
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,chi2,kappa,lambda_star,alpha");
    assert_eq!(lines.len(), 4);
    assert_eq!(fit["results"]["table"]["columns"][1], "chi2");
}

#[test]
fn series_input_and_method_subset() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("s.csv"),
        "timestamp,dp_a,dp_b,y_a,y_b\n0,0.1,0.2,1,2\n1,-0.2,0.1,-1,0.5\n2,0.05,-0.3,0.4,-2\n3,0.2,0.1,1.5,0.2\n",
    )
    .unwrap();
    let out = run(dir.path(), &["diagnose", "--input", "s.csv", "--method", "elm,mle", "--no-meta", "-o", "d.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = json(dir.path().join("d.json"));
    let rows = d["results"]["diagnostics"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["method"], "MLE");
    assert_eq!(d["results"]["labels"][1], "b");
    assert!(d.get("meta").is_none());
}

#[test]
fn reports_are_deterministic_across_runs_and_threads() {
    let dir = model_dir();
    let args = with_model("simulate", &["--samples", "5000", "--seed", "3", "--no-meta"]);
    let a = bin().current_dir(dir.path()).args(&args).output().unwrap();
    let b = bin().current_dir(dir.path()).args(&args).env("CROSS_IMPACT_THREADS", "1").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let sweep = ["sweep", "--kind", "correlation", "--grid", "0:0.99:7", "--bases", "random:3", "--seed", "5", "--no-meta"];
    let a = run(dir.path(), &sweep);
    let b = bin().current_dir(dir.path()).args(sweep).env("CROSS_IMPACT_THREADS", "2").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_writes_long_format_csv() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["sweep", "--kind", "liquidity", "--grid", "0.01:1:50", "--bases", "random:6", "--seed", "7", "--csv", "sw.csv", "-o", "sw.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "kind,param,method,observable,mean,min,max");
    assert_eq!(lines.len(), 1 + 50 * 3 * 4);
    let r = json(dir.path().join("sw.json"));
    assert_eq!(r["results"]["grid"].as_array().unwrap().len(), 50);
}

#[test]
fn generated_bases_feed_a_sweep() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["gen-bases", "--count", "3", "--seed", "2", "--bases-out", "b.csv", "--no-meta"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["bases"].as_array().unwrap().len(), 3);
    let out = run(dir.path(), &["sweep", "--kind", "rho", "--bases", "b.csv", "--grid", "0,0.5,0.9", "--no-meta"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"]["n_bases"], 3);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = model_dir();
    let out = run(dir.path(), &["fit", "--input", "missing.csv", "-o", "e.json"]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(dir.path().join("e.json"));
    assert_eq!(r["error"]["kind"], "io_error");
    assert!(r["results"].is_null());

    std::fs::write(dir.path().join("bad.csv"), "1,0.3\n0.3,x\n").unwrap();
    let out = run(dir.path(), &["equilibrium", "--sigma0", "bad.csv", "--omega", "omega.csv", "--no-meta"]);
    assert_eq!(out.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["error"]["kind"], "parse_error");

    let out = run(dir.path(), &["sweep", "--kind", "liquidity", "--grid", "0:1:5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["sweep", "--kind", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_three() {
    let dir = model_dir();
    std::fs::write(dir.path().join("singular.csv"), "1,1\n1,1\n").unwrap();
    let out = run(dir.path(), &["equilibrium", "--sigma0", "singular.csv", "--omega", "omega.csv", "--no-meta"]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["error"]["kind"], "not_spd");

    std::fs::write(
        dir.path().join("neg.csv"),
        "# matrix sigma_hat 1\n1\n# matrix omega_d_hat 1\n1\n# matrix response_hat 1\n-0.5\n",
    )
    .unwrap();
    let out = run(dir.path(), &["fit", "--input", "neg.csv", "--no-meta"]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["error"]["kind"], "nonpositive_k");
}
