use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blockopt_cli::spec::ProblemSpec;
use blockopt_core::problems::Builtin;
use serde_json::{json, Value};
use tempfile::TempDir;

fn blockopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockopt"))
        .current_dir(dir)
        .env_remove("BLOCKOPT_SEED")
        .args(args)
        .output()
        .expect("spawn blockopt")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

/// 30×10 blocks with a fixed pseudo-random pattern and ℓ1 weights.
fn lasso_spec() -> Value {
    let (p, n) = (30usize, 10usize);
    let entry = |i: usize, j: usize, s: usize| (((i * 7 + j * 13 + s * 3) % 17) as f64 - 8.0) / 8.0;
    let a: Vec<f64> = (0..p * n).map(|k| entry(k / n, k % n, 1)).collect();
    let b: Vec<f64> = (0..p * n).map(|k| entry(k / n, k % n, 2)).collect();
    let c: Vec<f64> = (0..p).map(|i| ((i % 5) as f64 - 2.0) * 0.7).collect();
    json!({
        "name": "lasso20",
        "algorithm": "bcd",
        "dims": { "n": n, "m": n, "p": p },
        "bcd": {
            "f": { "kind": "l1", "weight": 0.3 },
            "g": { "kind": "l1", "weight": 0.3 },
            "coupling": {
                "a": { "rows": p, "cols": n, "data": a },
                "b": { "rows": p, "cols": n, "data": b },
                "c": c,
                "mu": 0.0
            }
        },
        "config": { "max_iters": 3000 }
    })
}

#[test]
fn run_bcd_custom_lasso_certifies() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("lasso20.json"), lasso_spec().to_string()).unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--problem", "lasso20.json", "--gamma", "1.5", "--certify"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let r = read_json(&dir.path().join("lasso20.report.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["parameters"]["gamma"], 1.5);
    for name in ["sufficient-descent", "subdiff-bound", "finite-length", "limit-criticality"] {
        assert_eq!(check(&r, name)["verdict"], "pass", "{name}");
    }
    assert!(dir.path().join("lasso20.trace.csv").exists());
}

#[test]
fn tau_above_golden_ratio_is_input_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("consensus.json"), r#"{"builtin": "consensus-lasso"}"#).unwrap();
    let o = blockopt(dir.path(), &["run-admm", "--problem", "consensus.json", "--tau", "1.7"]);
    assert_eq!(code(&o), 2);
    let msg = text(&o);
    assert!(msg.contains("tau") && msg.contains("1.618033988749895"), "{msg}");
}

#[test]
fn trace_row_zero_is_initial_point() {
    let dir = TempDir::new().unwrap();
    let x = [0.5, -1.25, 3.0e-3, 7.0];
    let spec = json!({
        "builtin": "quadratic",
        "config": { "max_iters": 5, "initial": { "x": vec![0.1; 20], "y": (0..20).map(|i| x[i % 4] * i as f64).collect::<Vec<_>>() } }
    });
    fs::write(dir.path().join("q.json"), spec.to_string()).unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--problem", "q.json", "--trace", "q.csv"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("q.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    for i in 0..20 {
        let xi = header.iter().position(|h| *h == format!("x_{i}")).unwrap();
        let yi = header.iter().position(|h| *h == format!("y_{i}")).unwrap();
        assert_eq!(row[xi], 0.1);
        assert_eq!(row[yi], x[i % 4] * i as f64);
    }
}

#[test]
fn builtin_trace_starts_at_default_initial_point() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--builtin", "quadratic", "--max-iters", "3"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("quadratic.trace.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let loaded = ProblemSpec::builtin(Builtin::Quadratic)
        .load(Path::new(""), &Default::default(), "quadratic")
        .unwrap();
    let blockopt_cli::spec::Loaded::Bcd(p) = loaded else { panic!("bcd expected") };
    let z0 = p.problem.default_initial_point(p.config.seed()).unwrap();
    let expect: Vec<f64> = z0.x.as_slice().iter().chain(z0.y.as_slice()).copied().collect();
    assert_eq!(&row[6..], &expect[..]);
}

#[test]
fn verify_reproduces_run_report() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--builtin", "lasso-bcd", "--certify", "--report", "run.json"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let v = blockopt(
        dir.path(),
        &["verify", "--trace", "lasso-bcd.trace.csv", "--builtin", "lasso-bcd", "--report", "verify.json"],
    );
    assert_eq!(code(&v), 0, "{}", text(&v));
    assert_eq!(fs::read(dir.path().join("run.json")).unwrap(), fs::read(dir.path().join("verify.json")).unwrap());
}

#[test]
fn verify_reproduces_admm_report_from_sidecar() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(
        dir.path(),
        &["run-admm", "--builtin", "basis-pursuit", "--certify", "--full-dump", "--report", "run.json"],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(dir.path().join("basis-pursuit.trace.csv.full.csv").exists());
    let header = fs::read_to_string(dir.path().join("basis-pursuit.trace.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with("norm_x1,norm_x2,norm_y"));
    let v = blockopt(
        dir.path(),
        &["verify", "--trace", "basis-pursuit.trace.csv", "--builtin", "basis-pursuit", "--report", "verify.json"],
    );
    assert_eq!(code(&v), 0, "{}", text(&v));
    assert_eq!(fs::read(dir.path().join("run.json")).unwrap(), fs::read(dir.path().join("verify.json")).unwrap());
}

#[test]
fn verify_without_sidecar_is_input_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&blockopt(dir.path(), &["run-admm", "--builtin", "basis-pursuit"])), 0);
    let v = blockopt(dir.path(), &["verify", "--trace", "basis-pursuit.trace.csv", "--builtin", "basis-pursuit"]);
    assert_eq!(code(&v), 2);
    assert!(text(&v).contains("--full-dump"));
}

#[test]
fn corrupted_row_fails_with_its_index() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&blockopt(dir.path(), &["run-bcd", "--builtin", "lasso-bcd", "--max-iters", "200"])), 0);
    let path = dir.path().join("lasso-bcd.trace.csv");
    let csv = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = csv.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[121].split(',').map(String::from).collect();
    assert_eq!(cells[0], "120");
    let v: f64 = cells[6].parse().unwrap();
    cells[6] = format!("{:.16e}", v + 0.5);
    lines[121] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = blockopt(
        dir.path(),
        &["verify", "--trace", "lasso-bcd.trace.csv", "--builtin", "lasso-bcd", "--max-iters", "200", "--checks", "descent"],
    );
    assert_eq!(code(&o), 1, "{}", text(&o));
    let msg = text(&o);
    assert!(msg.contains("[Sufficient_Descent1]") && msg.contains("k=120"), "{msg}");
    assert!(msg.contains("lhs=") && msg.contains("rhs=") && msg.contains("slack="));
}

#[test]
fn dimension_mismatch_is_input_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&blockopt(dir.path(), &["run-bcd", "--builtin", "lasso-bcd", "--max-iters", "5"])), 0);
    let spec = json!({ "builtin": "basis-pursuit" });
    fs::write(dir.path().join("bp.json"), spec.to_string()).unwrap();
    let o = blockopt(dir.path(), &["verify", "--trace", "lasso-bcd.trace.csv", "--problem", "bp.json"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn kl_on_quadratic_trace() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&blockopt(dir.path(), &["run-bcd", "--builtin", "quadratic"])), 0);
    let o = blockopt(
        dir.path(),
        &[
            "verify", "--trace", "quadratic.trace.csv", "--builtin", "quadratic", "--checks", "kl", "--theta", "0.5", "--c",
            "auto", "--report", "kl.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let r = read_json(&dir.path().join("kl.json"));
    let kl = check(&r, "kl");
    assert_eq!(kl["verdict"], "pass");
    assert_eq!(kl["violation_count"], 0);
    let theta_hat = kl["metrics"]["theta_hat"].as_f64().unwrap();
    assert!((theta_hat - 0.5).abs() < 0.05, "{theta_hat}");
}

#[test]
fn check_for_other_algorithm_rejected() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&blockopt(dir.path(), &["run-bcd", "--builtin", "quadratic", "--max-iters", "5"])), 0);
    let o = blockopt(dir.path(), &["verify", "--trace", "quadratic.trace.csv", "--builtin", "quadratic", "--checks", "phi"]);
    assert_eq!(code(&o), 2);
    let o = blockopt(dir.path(), &["verify", "--trace", "quadratic.trace.csv", "--builtin", "quadratic", "--checks", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn oracle_prox_l1() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["oracle", "prox", "--atom", "l1", "--lambda", "1", "--t", "1", "--x", "3"]);
    assert_eq!(code(&o), 0);
    let out = text(&o);
    let value = |label: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(label)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!((value("analytic") - 2.0).abs() < 1e-15);
    assert!((value("grid") - 2.0).abs() <= 1e-5);
}

#[test]
fn oracle_prox_zero_is_identity() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["oracle", "prox", "--atom", "zero", "--x", "7"]);
    assert_eq!(code(&o), 0);
    let out = text(&o);
    assert!(out.contains("analytic   7.0000000000000000e0"), "{out}");
    assert!(out.contains("grid       7.0000000000000000e0"), "{out}");
}

#[test]
fn oracle_unsupported_atom() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["oracle", "prox", "--atom", "huber", "--x", "1"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("huber"));
}

#[test]
fn oracle_grad_quadratic() {
    let dir = TempDir::new().unwrap();
    let x = vec!["0.3"; 20].join(",");
    let y = (0..20).map(|i| format!("{}", i as f64 * -0.1)).collect::<Vec<_>>().join(",");
    let o = blockopt(dir.path(), &["oracle", "grad", "--builtin", "quadratic", "--x", &x, "--y", &y]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = text(&o);
    let err: f64 = out.split("relative error ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(err < 1e-9, "{out}");
}

#[test]
fn oracle_subdiff_dist() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["oracle", "subdiff-dist", "--atom", "l1", "--lambda", "1", "--x", "0,1", "--u", "0.5,2"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("analytic   1.0000000000000000e0"));
}

#[test]
fn seed_precedence() {
    let dir = TempDir::new().unwrap();
    let spec = json!({ "builtin": "lasso-bcd", "seed": 11, "config": { "max_iters": 2 } });
    fs::write(dir.path().join("s.json"), spec.to_string()).unwrap();
    let run = |env: Option<&str>, flag: Option<&str>, out: &str| -> Vec<u8> {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_blockopt"));
        cmd.current_dir(dir.path()).env_remove("BLOCKOPT_SEED");
        if let Some(e) = env {
            cmd.env("BLOCKOPT_SEED", e);
        }
        cmd.args(["run-bcd", "--problem", "s.json", "--trace", out]);
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.status().unwrap().success());
        fs::read(dir.path().join(out)).unwrap()
    };
    let file = run(None, None, "a.csv");
    let env = run(Some("12"), None, "b.csv");
    let flag = run(Some("12"), Some("13"), "c.csv");
    let flag_only = run(None, Some("13"), "d.csv");
    let env_only = run(Some("12"), Some("12"), "e.csv");
    assert_ne!(file, env);
    assert_ne!(env, flag);
    assert_eq!(flag, flag_only);
    assert_eq!(env, env_only);
}

#[test]
fn bad_seed_env_is_input_error() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_blockopt"))
        .current_dir(dir.path())
        .env("BLOCKOPT_SEED", "twelve")
        .args(["run-bcd", "--builtin", "quadratic", "--max-iters", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("BLOCKOPT_SEED"), "{}", text(&o));
}

#[test]
fn malformed_spec_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (r#"{"builtin": "quadratic", "config": {"gamma": "big"}}"#, "config.gamma"),
        (r#"{"builtin": "quadratic", "config": {"gama": 2}}"#, "config.gama"),
        (r#"{"builtin": "quadratic", "config": {"gamma": 0.5}}"#, "gamma"),
        (r#"{"builtin": "lasso-bcd", "config": {"rho": 1}}"#, "config.rho"),
        (r#"{"algorithm": "bcd", "dims": {"n": 1, "m": 1, "p": 1}, "bcd": {"f": {"kind": "l1", "weight": -1}, "g": {"kind": "zero"}, "coupling": {"a": {"rows": 1, "cols": 1, "data": [1]}, "b": {"rows": 1, "cols": 1, "data": [1]}, "c": [0], "mu": 0}}}"#, "weight"),
        (r#"{"algorithm": "bcd", "dims": {"n": 2, "m": 1, "p": 1}, "bcd": {"f": {"kind": "zero"}, "g": {"kind": "zero"}, "coupling": {"a": {"rows": 1, "cols": 1, "data": [1]}, "b": {"rows": 1, "cols": 1, "data": [1]}, "c": [0], "mu": 0}}}"#, "bcd.coupling.a"),
        (r#"{"builtin": "quadratic" "#, "problem"),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let name = format!("bad{i}.json");
        fs::write(dir.path().join(&name), body).unwrap();
        let o = blockopt(dir.path(), &["run-bcd", "--problem", &name]);
        assert_eq!(code(&o), 2, "case {i}: {}", text(&o));
        assert!(text(&o).contains(field), "case {i}: expected '{field}' in {}", text(&o));
    }
}

#[test]
fn wrong_subcommand_for_algorithm() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["run-admm", "--builtin", "quadratic"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("run-bcd"));
}

#[test]
fn solver_failure_exit_code() {
    let dir = TempDir::new().unwrap();
    let spec = json!({ "builtin": "lasso-inner", "config": { "inner_tol": 1e-14, "max_inner_iters": 1 } });
    fs::write(dir.path().join("s.json"), spec.to_string()).unwrap();
    let o = blockopt(dir.path(), &["run-admm", "--problem", "s.json"]);
    assert_eq!(code(&o), 3, "{}", text(&o));
}

#[test]
fn spec_round_trip() {
    let spec = ProblemSpec::from_json(&lasso_spec().to_string()).unwrap();
    let again = ProblemSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(spec, again);
    for b in Builtin::ALL {
        let s = ProblemSpec::builtin(b);
        assert_eq!(ProblemSpec::from_json(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn file_backed_matrices_resolve_relative_to_spec() {
    let dir = TempDir::new().unwrap();
    let sub = dir.path().join("data");
    fs::create_dir(&sub).unwrap();
    let mut spec = lasso_spec();
    let a = spec["bcd"]["coupling"]["a"].take();
    let c = spec["bcd"]["coupling"]["c"].take();
    fs::write(sub.join("a.json"), a.to_string()).unwrap();
    fs::write(sub.join("c.json"), c.to_string()).unwrap();
    spec["bcd"]["coupling"]["a"] = json!({ "path": "a.json" });
    spec["bcd"]["coupling"]["c"] = json!({ "path": "c.json" });
    spec["config"]["max_iters"] = json!(10);
    fs::write(sub.join("p.json"), spec.to_string()).unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--problem", "data/p.json", "--trace", "file.csv"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let inline = lasso_spec();
    let mut inline_short = inline.clone();
    inline_short["config"]["max_iters"] = json!(10);
    fs::write(dir.path().join("inline.json"), inline_short.to_string()).unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--problem", "inline.json", "--trace", "inline.csv"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert_eq!(fs::read(dir.path().join("file.csv")).unwrap(), fs::read(dir.path().join("inline.csv")).unwrap());
}

#[test]
fn custom_admm_spec_gets_computed_reference() {
    let dir = TempDir::new().unwrap();
    // min ½‖x1 − d‖² + 0.5‖x2‖₁ s.t. x1 − x2 = 0
    let d = [2.0, -0.2, 0.9, -3.0];
    let eye = json!({ "rows": 4, "cols": 4, "data": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1] });
    let neg = json!({ "rows": 4, "cols": 4, "data": [-1,0,0,0, 0,-1,0,0, 0,0,-1,0, 0,0,0,-1] });
    let spec = json!({
        "algorithm": "admm",
        "name": "soft",
        "dims": { "n": 4, "m": 4, "p": 4 },
        "admm": {
            "block1": { "atom": { "kind": "zero" }, "smooth": { "matrix": eye, "target": d }, "a": eye },
            "block2": { "atom": { "kind": "l1", "weight": 0.5 }, "a": neg },
            "b": [0, 0, 0, 0]
        },
        "config": { "max_iters": 5000 }
    });
    fs::write(dir.path().join("soft.json"), spec.to_string()).unwrap();
    let o = blockopt(dir.path(), &["run-admm", "--problem", "soft.json", "--certify"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let r = read_json(&dir.path().join("soft.report.json"));
    assert_eq!(r["parameters"]["references"], 1.0);
    assert_eq!(check(&r, "reference-distance")["verdict"], "pass");
}

#[test]
fn jobs_keep_input_order_and_match_serial() {
    let serial = TempDir::new().unwrap();
    let parallel = TempDir::new().unwrap();
    let args = |jobs: &'static str| {
        vec![
            "run-admm", "--builtin", "consensus-lasso", "--builtin", "basis-pursuit", "--builtin", "rank-deficient", "--certify",
            "--jobs", jobs,
        ]
    };
    let a = blockopt(serial.path(), &args("1"));
    let b = blockopt(parallel.path(), &args("3"));
    assert_eq!(code(&a), code(&b));
    let out = String::from_utf8_lossy(&b.stdout).into_owned();
    let pos = |s: &str| out.find(&format!("{s}: admm")).unwrap();
    assert!(pos("consensus-lasso") < pos("basis-pursuit") && pos("basis-pursuit") < pos("rank-deficient"));
    for name in ["consensus-lasso", "basis-pursuit", "rank-deficient"] {
        for f in [format!("{name}.trace.csv"), format!("{name}.report.json")] {
            assert_eq!(fs::read(serial.path().join(&f)).unwrap(), fs::read(parallel.path().join(&f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn multiple_problems_reject_explicit_paths() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["run-bcd", "--builtin", "quadratic", "--builtin", "lasso-bcd", "--trace", "t.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn list_problems_names_every_builtin() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["list-problems"]);
    assert_eq!(code(&o), 0);
    let out = text(&o);
    for b in Builtin::ALL {
        assert!(out.contains(b.name()));
    }
}

#[test]
fn report_lists_theorem_tags_and_tolerances() {
    let dir = TempDir::new().unwrap();
    let o = blockopt(dir.path(), &["run-admm", "--builtin", "consensus-lasso", "--max-iters", "5000", "--certify"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let r = read_json(&dir.path().join("consensus-lasso.report.json"));
    for c in r["checks"].as_array().unwrap() {
        assert!(!c["theorem"].as_str().unwrap().is_empty());
        assert!(c["tolerance"].is_number());
        assert!(["pass", "fail", "vacuous", "inconclusive"].contains(&c["verdict"].as_str().unwrap()));
    }
    assert!(r.get("timings").is_none());
}
