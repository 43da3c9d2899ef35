use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn depol() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depol"));
    cmd.env_remove("DEPOL_OUT_DIR");
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_in(config: &Path, out: &Path, extra: &[&str]) -> Output {
    depol()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

/// Column `name` of a CSV written by `run`.
fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn depolarizing_run_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dep.json",
        r#"{"model": "depolarizing", "m": 1, "N_max": 1, "gamma": 0.5, "state": "plus",
            "t1": 4.0, "n_steps": 4000, "sample_every": 100}"#,
    );
    let out = run_in(&cfg, &dir.path().join("out"), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let (t, s_z) = (column(&csv, "t"), column(&csv, "s_z"));
    assert_eq!(t.len(), 41);
    for (t, s) in t.iter().zip(&s_z) {
        assert!((s - (-t).exp()).abs() < 1e-6, "t = {t}: {s}");
    }
    assert!(dir.path().join("out/metadata.json").exists());
    assert!(dir.path().join("out/final_state.json").exists());
}

#[test]
fn product_state_degree_follows_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pp.json",
        r#"{"model": "multimode", "m": 2, "N_max": 2, "gamma_j": [1.0, 1.0], "state": "product_pp",
            "integrator": "exact", "t1": 2.0, "n_steps": 20}"#,
    );
    let out = run_in(&cfg, dir.path(), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for (t, p) in column(&csv, "t").iter().zip(column(&csv, "P")) {
        assert!((p - (-2.0 * t).exp()).abs() < 1e-9, "t = {t}: {p}");
    }
}

#[test]
fn ensemble_output_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bath.json",
        r#"{"model": "microscopic", "m": 1, "N_max": 1, "state": "x_plus",
            "atoms": [{"g_abs": 0.05, "delta": 1.0, "gamma_decay": 0.001, "n_bar": 50},
                      {"g_abs": 0.04, "delta": -1.2, "gamma_decay": 0.001, "n_bar": 40}],
            "n_samples": 12, "t1": 1000.0, "n_steps": 8, "seed": 5}"#,
    );
    let mut outputs = Vec::new();
    for threads in ["1", "2", "8"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = run_in(&cfg, &out_dir, &["--threads", threads]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(std::fs::read(out_dir.join("trajectory.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let header = String::from_utf8_lossy(&outputs[0])
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.ends_with("stderr_P"), "{header}");

    // A different seed gives a different ensemble.
    let other = dir.path().join("seed");
    assert!(run_in(&cfg, &other, &["--seed", "6"]).status.success());
    assert_ne!(
        outputs[0],
        std::fs::read(other.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "deph.json",
        r#"{"model": "dephasing", "m": 1, "N_max": 1, "gamma_plus": 1.0, "gamma_minus": 0.5,
            "state": "x_plus", "t1": 1.0, "n_steps": 100, "output": {"final_state": null}}"#,
    );
    let env_dir = dir.path().join("from_env");
    let out = depol()
        .arg("run")
        .arg(&cfg)
        .env("DEPOL_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(env_dir.join("trajectory.csv").exists());
    assert!(!env_dir.join("final_state.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": "depolarizing", "m": 1, "N_max": 1, "gama": 1.0, "state": "plus", "t1": 1.0, "n_steps": 10}"#,
    );
    let out = depol().arg("validate").arg(&bad_key).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));

    let missing = depol()
        .arg("run")
        .arg(dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));

    // Two RK4 steps with gamma*dt = 20 leave the physical set.
    let drift = write_config(
        dir.path(),
        "drift.json",
        r#"{"model": "depolarizing", "m": 1, "N_max": 1, "gamma": 4.0, "state": "plus", "t1": 10.0, "n_steps": 2}"#,
    );
    let out = run_in(&drift, dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let good = write_config(
        dir.path(),
        "good.json",
        r#"{"model": "depolarizing", "m": 1, "N_max": 1, "gamma": 1.0, "state": "plus", "t1": 1.0, "n_steps": 10}"#,
    );
    assert_eq!(
        depol()
            .arg("validate")
            .arg(&good)
            .output()
            .unwrap()
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        depol().arg("bogus").output().unwrap().status.code(),
        Some(3)
    );
}

#[test]
fn presets_and_report() {
    let out = depol().arg("presets").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "plus",
        "x_plus",
        "vacuum",
        "bell_plus",
        "singlet",
        "product_pp",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }

    let out = depol()
        .args(["report", "--times", "0,1", "--json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"p_claimed\""));
    assert!(text.contains("\"singlet\""));
}
