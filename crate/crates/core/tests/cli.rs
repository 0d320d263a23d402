use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn oposim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oposim"))
        .args(args)
        .output()
        .expect("run oposim")
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    oposim(&args)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn check<'a>(s: &'a Value, name: &str) -> &'a Value {
    s["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()
}

const SMALL_ENSEMBLE: &str = r#"
seed = 11

[dimensionless]
g = 0.01
gamma_r = 0.25
sigma = 2.0

[ensemble]
dt = 2e-3
duration = 40.0
transient = 5.0
n_traj = 6
sample_every = 10
"#;

#[test]
fn linear_scan_writes_digested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan");
    let o = run_in("linear-scan", &configs().join("ideal_pump_scan.toml"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["command"], "linear-scan");
    let outputs = s["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    for entry in outputs {
        let bytes = std::fs::read(out.join(entry["file"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(entry["sha256"], hex.as_str());
    }
    let csv = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    assert!(csv.starts_with("sigma,S_pminus,S_qminus,S_pplus,S_qplus,S_p0ref,S_q0ref,duan_sum,entangled\n"));
    assert_eq!(csv.lines().count(), 1 + 121);
    for name in ["entangled_at_all_sigma", "s_q_plus_non_decreasing", "s_q_plus_minimal_at_lowest_sigma"] {
        assert_eq!(check(&s, name)["holds"], true, "{name}");
    }
    assert_eq!(check(&s, "s_q_plus_crosses_sql")["holds"], false);
}

#[test]
fn excess_pump_scan_crosses_the_shot_noise_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in("linear-scan", &configs().join("excess_pump_scan.toml"), dir.path(), &[]);
    assert!(o.status.success());
    let s = summary(dir.path());
    let sigma = check(&s, "s_q_plus_crosses_sql")["detail"]["sigma"].as_f64().unwrap();
    assert!((1.1..=1.35).contains(&sigma), "{sigma}");
}

#[test]
fn cavity_sweep_flags_readout_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in("cavity-sweep", &configs().join("cavity_sweep.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    for name in ["amplitude_readout_off_resonance", "phase_readout_at_half_bandwidth", "full_conversion_regime"] {
        assert_eq!(check(&s, name)["holds"], true, "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("cavity_sweep.csv")).unwrap();
    assert!(csv.starts_with("detuning,detected_noise\n"));
    assert_eq!(csv.lines().count(), 1 + 801);
}

#[test]
fn validate_touches_nothing() {
    let o = oposim(&["validate", "--config", configs().join("stochastic_compare.toml").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).ends_with(": ok\n"));
}

#[test]
fn every_shipped_config_validates() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = oposim(&["validate", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn invalid_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[dimensionless]\ng = 0.01\ngamma_r = 0.25\nsigma = 2.0\nbogus = 1\n").unwrap();
    let out = dir.path().join("never");
    for sub in ["linear-scan", "stochastic-compare", "cavity-sweep"] {
        let o = run_in(sub, &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{sub}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("line 5"), "{err}");
        assert!(!out.exists());
    }
}

#[test]
fn out_of_range_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("below.toml");
    std::fs::write(&cfg, SMALL_ENSEMBLE.replace("sigma = 2.0", "sigma = -0.5")).unwrap();
    let out = dir.path().join("never");
    let o = run_in("stochastic-compare", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = run_in("stochastic-compare", &configs().join("stochastic_compare.toml"), &out, &["--dt", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_config_file_exits_2() {
    let o = oposim(&["validate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stochastic_compare_is_reproducible_across_output_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL_ENSEMBLE).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run_in("stochastic-compare", &cfg, &a, &[]).status.success());
    assert!(run_in("stochastic-compare", &cfg, &b, &[]).status.success());
    assert!(run_in("stochastic-compare", &cfg, &c, &["--seed", "12"]).status.success());

    let s = summary(&a);
    let files: Vec<&str> = s["outputs"].as_array().unwrap().iter().map(|o| o["file"].as_str().unwrap()).collect();
    assert_eq!(
        files,
        [
            "spectrum_first_order_p_minus.csv",
            "spectrum_first_order_q_plus.csv",
            "spectrum_nonlinear_p_minus.csv",
            "spectrum_nonlinear_q_plus.csv",
            "agreement.csv",
        ]
    );
    for f in files.iter().chain(&["summary.json"]) {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        std::fs::read(a.join("spectrum_nonlinear_p_minus.csv")).unwrap(),
        std::fs::read(c.join("spectrum_nonlinear_p_minus.csv")).unwrap()
    );
    let csv = std::fs::read_to_string(a.join("spectrum_first_order_q_plus.csv")).unwrap();
    assert!(csv.starts_with("frequency,value,stderr,nTraj\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",6")));
}

#[test]
fn vacuum_coupling_reproduces_shot_noise_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vacuum.toml");
    std::fs::write(&cfg, SMALL_ENSEMBLE.replace("g = 0.01", "g = 0.0")).unwrap();
    let o = run_in("stochastic-compare", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["spectrum_first_order_p_minus.csv", "spectrum_nonlinear_q_plus.csv"] {
        let csv = std::fs::read_to_string(dir.path().join(f)).unwrap();
        for line in csv.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[1].parse::<f64>().unwrap(), 1.0, "{f}: {line}");
            assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0, "{f}: {line}");
        }
    }
    let agreement = std::fs::read_to_string(dir.path().join("agreement.csv")).unwrap();
    assert!(agreement.contains("first_order_vs_analytic,p_minus,,,,skipped"));
}

#[test]
fn trajectory_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL_ENSEMBLE).unwrap();
    let o = run_in("stochastic-compare", &cfg, dir.path(), &["--traj", "3"]);
    assert!(o.status.success());
    let s = summary(dir.path());
    assert_eq!(s["config"]["ensemble"]["n_traj"], 3);
}
