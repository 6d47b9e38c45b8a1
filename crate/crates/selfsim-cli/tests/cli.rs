use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_selfsim"));
    c.env_remove("SELFSIM_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn selfsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json_of(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

/// One default solve shared by the tests that only read its output.
fn solved() -> &'static Path {
    static DIR: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    let (_, p) = DIR.get_or_init(|| {
        let t = TempDir::new().unwrap();
        let p = t.path().to_path_buf();
        let o = run(&["solve", "--initial", "rational-one", "--tol", "1e-10", "--out-dir", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (t, p)
    });
    p
}

#[test]
fn constants_prints_eta() {
    let o = run(&["constants"]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    let s = v["eta"].as_str().unwrap();
    let eta: f64 = s.parse().unwrap();
    let exact = 1.0 / (3f64.powi(11) * 2f64.powi(14) * 2f64.sqrt());
    assert!(((eta - exact) / exact).abs() < 1e-15, "{s}");
    // 17 significant digits in lowercase scientific notation.
    let mantissa = s.split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
    assert!(!s.contains('E'));
    for key in ["delta0", "l0", "delta1", "delta_rho", "ln_l1"] {
        assert!(v[key].is_string(), "missing {key}");
    }
}

#[test]
fn constants_as_csv() {
    let o = run(&["constants", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l.starts_with("eta,2.43630278")));
}

#[test]
fn solve_writes_converged_artifacts() {
    let dir = solved();
    for f in ["fixedpoint.json", "fixedpoint.csv", "profiles.csv", "summary.json", "solve_report.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["converged"], true);
    assert!(s["residual"].as_f64().unwrap() <= 1e-10);
    assert!(s["iterations"].as_u64().unwrap() <= 500);
    let cl = s["profiles"]["c_l"].as_f64().unwrap();
    assert!((cl - 2.9987).abs() < 2e-2, "c_l = {cl}");
    assert_eq!(s["profiles"]["c_omega"].as_f64().unwrap(), -1.0);
    let csv = fs::read_to_string(dir.join("profiles.csv")).unwrap();
    assert!(csv.starts_with("x,omega,v,u\n"));
}

#[test]
fn verify_passes_on_solved_fixed_point() {
    let input = solved().join("fixedpoint.json");
    let o = run(&["verify", "--input", input.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_of(&o);
    assert_eq!(v["pass"], true);
    assert_eq!(v["membership"]["member"], true);
    assert_eq!(v["oracles"]["all_pass"], true);
}

#[test]
fn verify_fails_when_residual_tolerance_is_unreachable() {
    let input = solved().join("fixedpoint.json");
    let o = run(&["verify", "--input", input.to_str().unwrap(), "--tol", "1e-16"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json_of(&o)["pass"], false);
}

#[test]
fn asymptotics_and_plots_from_stored_fixed_point() {
    let dir = solved();
    let input = dir.join("fixedpoint.json");
    let o = run(&["asymptotics", "--input", input.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    assert!(v["cm_consistency"].as_f64().unwrap() < 1e-4);
    assert!(v["f_plateau"]["drift"].as_f64().unwrap() < 1e-2);

    let plots = TempDir::new().unwrap();
    let o = run(&["export-plots", "--input", input.to_str().unwrap(), "--out-dir", plots.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["fig1_f_m.csv", "fig2_g.csv", "fig3_asymptotics.csv"] {
        let body = fs::read_to_string(plots.path().join(f)).unwrap();
        assert!(body.lines().count() > 100, "{f} too short");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["constants", "--format", "xml"])), 2);
    assert_eq!(code(&run(&["solve", "--initial", "gaussian"])), 2);
    assert_eq!(code(&run(&["solve", "--initial", "file"])), 2);
    assert_eq!(code(&run(&["solve", "--damping", "1.5"])), 2);
    assert_eq!(code(&run(&["verify"])), 2);

    let t = TempDir::new().unwrap();
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "tolerance = 1e-8\n").unwrap();
    assert_eq!(code(&run(&["constants", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn non_convergence_exits_with_one_and_keeps_report() {
    let t = TempDir::new().unwrap();
    let out = t.path().to_str().unwrap();
    let o = run(&["solve", "--per-decade", "16", "--max-iters", "3", "--out-dir", out, "--dump-bundles"]);
    assert_eq!(code(&o), 1);
    let rep: Value = serde_json::from_str(&fs::read_to_string(t.path().join("solve_report.json")).unwrap()).unwrap();
    assert_eq!(rep["converged"], false);
    assert_eq!(rep["iterations"], 3);
    assert!(!t.path().join("fixedpoint.json").exists());
    let b: Value = serde_json::from_str(&fs::read_to_string(t.path().join("bundles/iter_00002.json")).unwrap()).unwrap();
    assert_eq!(b["record"]["iteration"], 2);
    assert!(b["r"].as_array().unwrap().len() > 100);
}

#[test]
fn config_file_applies_and_flags_override() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "# coarse run\nper_decade = 16\nmax_iters = 2\n").unwrap();
    let out = t.path().join("a");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);

    let out = t.path().join("b");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--max-iters",
        "1000",
        "--tol",
        "1e-8",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["mesh"]["per_decade"], 16);
}

#[test]
fn out_dir_defaults_to_environment() {
    let t = TempDir::new().unwrap();
    let input = solved().join("fixedpoint.json");
    let o = bin()
        .env("SELFSIM_OUT_DIR", t.path())
        .args(["export-plots", "--input", input.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(t.path().join("fig2_g.csv").is_file());
}

#[test]
fn solve_outputs_are_bit_identical_across_runs_and_thread_counts() {
    let t = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = t.path().join(threads);
        let o = run(&["solve", "--per-decade", "24", "--tol", "1e-9", "--threads", threads, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<Vec<u8>> = ["fixedpoint.json", "summary.json", "solve_report.json", "profiles.csv"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push((o.stdout, files));
    }
    assert!(outputs[0] == outputs[1], "outputs differ between runs");
}
