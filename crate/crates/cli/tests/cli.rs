use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64 as C;
use prym_core::conditions::solved_flow_data;
use prym_core::data::{random_ppav, save_flow_data, save_prym_spectral_data, Mode};
use prym_core::spectral::bundled_dataset;
use serde_json::Value;

fn prym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prym")).args(args).output().expect("binary runs")
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn solved_file(dir: &Path) -> String {
    let b = random_ppav(1, 2).unwrap();
    let (d, _) = solved_flow_data(Mode::Prym, &b, &[C::new(1.0, 0.0)], &[C::new(0.5, -0.3)], &[C::new(0.25, 0.1)]).unwrap();
    let p = dir.join("flow.json");
    std::fs::write(&p, save_flow_data(&d)).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn check_prym_on_solved_data_passes() {
    let dir = tempfile::tempdir().unwrap();
    let f = solved_file(dir.path());
    let o = prym(&["check-prym", "--data", &f, "--tolerance", "1e-8", "--samples", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    assert_eq!(r["command"], "check-prym");
    assert_eq!(r["pass"], true);
    assert!(r["metrics"]["pde_residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(r["inputs_digest"].as_str().unwrap().len(), 64);
    assert!(r["warnings"][0].as_str().unwrap().contains("indecomposable"));
}

#[test]
fn zero_u_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let f = solved_file(dir.path());
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    doc["U"] = serde_json::json!([{"re": 0.0, "im": 0.0}]);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let o = prym(&["check-prym", "--data", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&o);
    assert_eq!(r["pass"], false);
    assert!(r["warnings"][0].as_str().unwrap().contains("U must be nonzero"), "{r}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("U must be nonzero"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(prym(&["check-prym", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(prym(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(prym(&[]).status.code(), Some(2));
    assert_eq!(prym(&["theta-eval", "--z", "1+"]).status.code(), Some(2));
    assert_eq!(prym(&["check-prym", "--data", "/nonexistent/x.json"]).status.code(), Some(2));
}

#[test]
fn failing_metric_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = solved_file(dir.path());
    // Prym constants do not satisfy the KP equation
    let o = prym(&["check-jacobian", "--data", &f]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(&o)["pass"], false);
    let o = prym(&["search", "--genus", "1", "--restarts", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn lattice_limit_exits_three() {
    let o = Command::new(env!("CARGO_BIN_EXE_prym"))
        .args(["theta-eval", "--genus", "3", "--tolerance", "1e-14"])
        .env("PRYM_MAX_LATTICE", "5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reports_are_reproducible_and_json_out_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = ["theta-eval", "--genus", "2", "--seed", "9", "--z", "0.1+0.2i,-0.3", "--dir", "1,0i"];
    let a = prym(&args);
    let mut with_out = args.to_vec();
    let out_s = out.to_str().unwrap().to_string();
    with_out.extend(["--json-out", &out_s]);
    let b = prym(&with_out);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&out).unwrap(), a.stdout);
    // a different input changes the digest
    let c = prym(&["theta-eval", "--genus", "2", "--seed", "10", "--z", "0.1+0.2i,-0.3", "--dir", "1,0i"]);
    assert_ne!(report(&a)["inputs_digest"], report(&c)["inputs_digest"]);
}

#[test]
fn config_overlay_changes_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let f = solved_file(dir.path());
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[check-prym]\npde = 1e-30\n").unwrap();
    let o = prym(&["check-prym", "--data", &f, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(&o)["thresholds"]["pde_residual"].as_f64(), Some(1e-30));
}

#[test]
fn spectral_check_bundled_and_corrupted() {
    let o = prym(&["spectral-check"]);
    assert_eq!(o.status.code(), Some(0));
    let mut pd = bundled_dataset();
    for p in &mut pd.points {
        for w in p.omega.values_mut() {
            *w += 1e-2;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, save_prym_spectral_data(&pd)).unwrap();
    let o = prym(&["spectral-check", "--data", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(report(&o)["metrics"]["h_residual"].as_f64().unwrap() >= 1e-3);
}

#[test]
fn remaining_pipelines_pass_on_defaults() {
    for args in [
        &["divisor-test", "--samples", "10"][..],
        &["root-track"],
        &["psdo-verify", "--samples", "5"],
        &["cm-sim", "--samples", "10"],
        &["wave-build", "--grid", "128x32", "--order", "3", "--no-refine", "--tolerance", "1e-5"],
    ] {
        let o = prym(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(report(&o)["command"], args[0]);
    }
}
