use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_mfsmp");

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, cfg: &Value) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn mfsmp(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let o = Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    if !o.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

fn ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> String {
    let o = mfsmp(cmd, config, out, extra);
    assert!(
        o.status.success(),
        "{cmd} exited with {:?}",
        o.status.code()
    );
    String::from_utf8(o.stdout).unwrap()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn base(coefficients: Value, n: usize, steps: usize) -> Value {
    json!({
        "grid": { "T": 1.0, "n_steps": steps },
        "intensity": { "kind": "constant", "params": { "lam_b": 1.0, "lam_h": 0.0 } },
        "coefficients": coefficients,
        "solver": { "N": n, "tol": 1e-10, "max_iter": 40 },
        "seeds": { "master": 11 }
    })
}

fn vasicek(sigma: f64, n: usize, steps: usize) -> Value {
    base(
        json!({ "name": "vasicek", "params": { "theta": 1.0, "sigma": sigma } }),
        n,
        steps,
    )
}

fn jump_noise(lam_b: f64, lam_h: f64) -> Value {
    let mut cfg = base(json!({ "name": "zero" }), 500, 20);
    cfg["intensity"] = json!({ "kind": "constant", "params": { "lam_b": lam_b, "lam_h": lam_h } });
    cfg["levy"] = json!({ "family": "finite-atoms", "params": { "marks": [-1.0, 0.5], "weights": [0.4, 0.6] }, "M": 2 });
    cfg
}

#[test]
fn null_intensity_gives_zero_increments() {
    let r = Run::new();
    let cfg = r.config("c.json", &jump_noise(0.0, 0.0));
    ok("simulate-noise", &cfg, &r.out("o"), &["--format", "csv"]);
    let text = fs::read_to_string(r.out("o/noise.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,t,dG,dJ_1,dJ_2");
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[2..].iter().all(|&x| x == 0.0), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 20);
}

#[test]
fn noise_files_are_reproducible_and_seed_dependent() {
    let r = Run::new();
    let cfg = r.config("c.json", &jump_noise(1.0, 2.0));
    ok("simulate-noise", &cfg, &r.out("a"), &[]);
    ok("simulate-noise", &cfg, &r.out("b"), &[]);
    ok("simulate-noise", &cfg, &r.out("c"), &["--seed", "12"]);
    for f in ["noise.csv", "isometry.json"] {
        assert_eq!(
            fs::read(r.out("a").join(f)).unwrap(),
            fs::read(r.out("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(r.out("a/noise.csv")).unwrap(),
        fs::read(r.out("c/noise.csv")).unwrap()
    );

    let m = read_json(r.out("a/manifest.json"));
    assert_eq!(m["command"], "simulate-noise");
    assert_eq!(m["master_seed"], 11);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(
        m["config_sha256"],
        read_json(r.out("c/manifest.json"))["config_sha256"]
    );
    assert_eq!(read_json(r.out("c/manifest.json"))["master_seed"], 12);
}

#[test]
fn isometry_summary_within_five_standard_errors() {
    let r = Run::new();
    let mut cfg = jump_noise(1.0, 2.0);
    cfg["solver"]["N"] = json!(4000);
    cfg["intensity"] = json!({
        "kind": "square-root",
        "params": {
            "b": { "init": 1.0, "mean_reversion": 2.0, "level": 1.0, "vol": 0.3 },
            "h": { "init": 2.0, "mean_reversion": 2.0, "level": 2.0, "vol": 0.3 }
        }
    });
    let cfg = r.config("c.json", &cfg);
    ok("simulate-noise", &cfg, &r.out("o"), &["--format", "json"]);
    let rep = read_json(r.out("o/isometry.json"));
    assert!(!r.out("o/noise.csv").exists());
    assert_eq!(rep["n_paths"], 4000);
    for s in rep["integrands"].as_array().unwrap() {
        let (ratio, se) = (
            s["ratio"].as_f64().unwrap(),
            s["ratio_se"].as_f64().unwrap(),
        );
        assert!(
            (ratio - 1.0).abs() <= 5.0 * se,
            "{}: {ratio} +- {se}",
            s["integrand"]
        );
    }
    assert_eq!(rep["all_within"], true);
}

#[test]
fn json_floats_carry_seventeen_significant_digits() {
    let r = Run::new();
    let cfg = r.config("c.json", &jump_noise(1.0, 2.0));
    ok("simulate-noise", &cfg, &r.out("o"), &["--format", "json"]);
    let text = fs::read_to_string(r.out("o/isometry.json")).unwrap();
    let line = text.lines().find(|l| l.contains("\"ratio\"")).unwrap();
    let number = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = number.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{number}");
}

#[test]
fn law_free_dynamics_converge_in_two_iterations() {
    let r = Run::new();
    let cfg = base(
        json!({ "name": "ou-test", "params": { "rev": 1.0, "level": 0.5, "sigma": 0.3 } }),
        300,
        40,
    );
    let cfg = r.config("c.json", &cfg);
    ok("solve-mfsde", &cfg, &r.out("o"), &[]);
    let p = read_json(r.out("o/picard.json"));
    assert_eq!(p["iterations"], 2);
    assert_eq!(p["converged"], true);
    assert_eq!(floats(&p["distances"])[1], 0.0);
    assert!(r.out("o/law.csv").exists() && r.out("o/ensemble.csv").exists());
}

#[test]
fn uncontrolled_vasicek_mean_stays_flat() {
    let r = Run::new();
    let (sigma, n) = (0.3, 400);
    let cfg = r.config("c.json", &vasicek(sigma, n, 50));
    ok("solve-mfsde", &cfg, &r.out("o"), &["--control", "zero"]);
    let p = read_json(r.out("o/picard.json"));
    assert_eq!(p["converged"], true);
    // The empirical mean only moves with the average Gaussian increment.
    let band = 5.0 * sigma / (n as f64).sqrt();
    for m in floats(&p["mean"]) {
        assert!((m - 1.0).abs() <= band, "mean {m}");
    }
    // Contraction: distances decrease from the second iterate on.
    let d = floats(&p["distances"]);
    assert!(d.len() >= 3);
    for w in d[1..].windows(2) {
        assert!(w[1] <= w[0], "{d:?}");
    }
}

fn bsde_config(a: f64, b: f64, c: f64, terminal: Value) -> Value {
    let mut cfg = base(
        json!({ "name": "ou-test", "params": { "rev": 1.0, "level": 0.0, "sigma": 0.2 } }),
        300,
        50,
    );
    cfg["bsde"] = json!({ "a": a, "b": b, "c": c, "terminal": terminal });
    cfg
}

#[test]
fn constant_terminal_gives_constant_solution() {
    let r = Run::new();
    let cfg = r.config(
        "c.json",
        &bsde_config(0.0, 0.0, 0.0, json!({ "kind": "constant", "value": 2.5 })),
    );
    ok("solve-mfbsde", &cfg, &r.out("o"), &[]);
    let s = read_json(r.out("o/bsde.json"));
    assert!(floats(&s["mean_y"])
        .iter()
        .all(|&y| (y - 2.5).abs() < 1e-12));
    assert_eq!(s["terminal_residual"].as_f64().unwrap(), 0.0);
    assert!(r.out("o/bsde.csv").exists());
}

#[test]
fn linear_driver_matches_ode_and_contracts() {
    let r = Run::new();
    let (b, c) = (0.6, 0.4);
    let cfg = r.config(
        "c.json",
        &bsde_config(0.0, b, c, json!({ "kind": "constant", "value": 1.0 })),
    );
    ok("solve-mfbsde", &cfg, &r.out("o"), &[]);
    let s = read_json(r.out("o/bsde.json"));
    assert_eq!(s["converged"], true);
    let y = floats(&s["mean_y"]);
    for (i, &yi) in y.iter().enumerate() {
        let t = i as f64 / 50.0;
        let exact = (-(b + c) * (1.0 - t)).exp();
        assert!((yi - exact).abs() < 1e-2, "t={t}: {yi} vs {exact}");
    }
    let ratios = floats(&s["contraction_ratios"]);
    assert!(
        !ratios.is_empty() && ratios.iter().all(|&q| q < 1.0),
        "{ratios:?}"
    );
}

fn maxprinciple(r: &Run, cfg: &Path, out: &str, extra: &[&str]) -> Value {
    let stdout = ok("check-maxprinciple", cfg, &r.out(out), extra);
    let v = read_json(r.out(out).join("maxprinciple.json"));
    assert!(stdout.contains(if v["passed"] == true { "PASS" } else { "FAIL" }));
    assert!(r.out(out).join("du_hamiltonian.csv").exists());
    v
}

#[test]
fn lq_maximiser_passes_and_perturbed_control_fails() {
    let r = Run::new();
    let cfg = r.config("c.json", &vasicek(0.2, 300, 20));
    let pass = maxprinciple(&r, &cfg, "a", &["--control", "riccati"]);
    assert_eq!(pass["passed"], true, "{:#}", pass["report"]["verdicts"]);
    let fail = maxprinciple(&r, &cfg, "b", &["--control", "riccati", "--perturb", "0.3"]);
    assert_eq!(fail["passed"], false);
    assert_eq!(fail["report"]["verdicts"]["stationarity"], false);
}

#[test]
fn control_free_hamiltonian_passes_trivially() {
    let r = Run::new();
    let mut cfg = base(json!({ "name": "zero" }), 100, 10);
    cfg["control"] = json!({ "u_min": -1.0, "u_max": 1.0 });
    let cfg = r.config("c.json", &cfg);
    let v = maxprinciple(&r, &cfg, "o", &[]);
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["variational_residual"].as_f64().unwrap(), 0.0);
}

#[test]
fn vasicek_run_writes_report_and_series() {
    let r = Run::new();
    let cfg = r.config("c.json", &vasicek(0.2, 200, 20));
    let stdout = ok("run-vasicek", &cfg, &r.out("o"), &[]);
    assert!(stdout.contains("J(u_hat)"));
    let rep = read_json(r.out("o/vasicek_report.json"));
    let j = |name: &str| {
        rep["objectives"]
            .as_array()
            .unwrap()
            .iter()
            .find(|o| o["control"] == name)
            .unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert!(j("u_hat") > j("zero"));
    assert!(rep["control_rel_l2_error"].as_f64().unwrap() < 0.05);
    let series = fs::read_to_string(r.out("o/vasicek_series.csv")).unwrap();
    assert_eq!(series.lines().count(), 22);
}

fn chaos(r: &Run, cfg: &Path, out: &str, n_list: &str) -> Value {
    ok(
        "chaos-study",
        cfg,
        &r.out(out),
        &["--n-list", n_list, "--replications", "16"],
    );
    read_json(r.out(out).join("chaos.json"))
}

#[test]
fn chaos_slope_is_negative() {
    let r = Run::new();
    let cfg = r.config("c.json", &vasicek(0.3, 100, 50));
    let v = chaos(&r, &cfg, "o", "100,400,1600");
    let slope = v["slope"].as_f64().unwrap();
    assert!((-0.8..=-0.2).contains(&slope), "slope {slope}");
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn chaos_singleton_and_reproducible() {
    let r = Run::new();
    let cfg = r.config("c.json", &vasicek(0.3, 100, 20));
    let v = chaos(&r, &cfg, "a", "200");
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
    assert!(v["slope"].is_null());
    chaos(&r, &cfg, "b", "200");
    assert_eq!(
        fs::read(r.out("a/chaos.csv")).unwrap(),
        fs::read(r.out("b/chaos.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_code_two() {
    let r = Run::new();
    let mut cfg = vasicek(0.3, 10, 10);
    cfg["solver"]["bogus"] = json!(1);
    let bad = r.config("bad.json", &cfg);
    assert_eq!(
        mfsmp("solve-mfsde", &bad, &r.out("o"), &[]).status.code(),
        Some(2)
    );

    let mut cfg = vasicek(0.3, 10, 10);
    cfg["solver"]["tol"] = json!(0.0);
    let bad = r.config("tol.json", &cfg);
    assert_eq!(
        mfsmp("solve-mfsde", &bad, &r.out("o"), &[]).status.code(),
        Some(2)
    );

    let missing = r.out("nope.json");
    assert_eq!(
        mfsmp("solve-mfsde", &missing, &r.out("o"), &[])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn non_convergence_exits_with_code_three() {
    let r = Run::new();
    let mut cfg = vasicek(0.3, 50, 20);
    cfg["solver"]["max_iter"] = json!(2);
    let cfg = r.config("c.json", &cfg);
    assert_eq!(
        mfsmp("solve-mfsde", &cfg, &r.out("o"), &[]).status.code(),
        Some(3)
    );
    assert_eq!(read_json(r.out("o/picard.json"))["converged"], false);
    assert_eq!(read_json(r.out("o/manifest.json"))["converged"], false);
}

#[test]
fn explosion_exits_with_code_four() {
    let r = Run::new();
    let cfg = base(
        json!({ "name": "linear-test", "params": { "a": 1e6, "c": 0.0 } }),
        10,
        100,
    );
    let cfg = r.config("c.json", &cfg);
    let o = mfsmp("solve-mfsde", &cfg, &r.out("o"), &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exploded"));
}

#[test]
fn thread_count_does_not_change_results() {
    let r = Run::new();
    let cfg = r.config("c.json", &vasicek(0.3, 300, 30));
    ok("solve-mfsde", &cfg, &r.out("t1"), &["--threads", "1"]);
    ok("solve-mfsde", &cfg, &r.out("t4"), &["--threads", "4"]);
    for f in ["law.csv", "ensemble.csv", "picard.json"] {
        assert_eq!(
            fs::read(r.out("t1").join(f)).unwrap(),
            fs::read(r.out("t4").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(read_json(r.out("t4/manifest.json"))["threads"], 4);
}
