//! End-to-end checks of the command-line runner.

use std::path::Path;
use std::process::Command;

fn bellpost() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bellpost"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {path:?}: {e}"))
}

#[test]
fn classical_run_writes_the_declared_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bellpost()
        .args(["classical", "--trials", "5000", "--seed", "7"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let correlations = read(&out.join("correlations.csv"));
    assert!(correlations.starts_with("setting_pair,mean,std_error,n_total,n_kept\n"));
    assert_eq!(correlations.lines().count(), 5); // header + 2x2 pairs
    let chsh = read(&out.join("chsh.csv"));
    assert!(chsh.contains("mc,"));
}

#[test]
fn reruns_emit_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["classical-postselected", "--trials", "4000", "--seed", "11"];
    for run in ["a", "b"] {
        let status = bellpost()
            .args(args)
            .arg("--out")
            .arg(dir.path().join(run))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["correlations.csv", "chsh.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(file)).unwrap(),
            std::fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn config_file_is_honored_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        format!(
            "experiment = \"classical\"\nseed = 1\ntrials = 3000\nn_configs = 5\n\
             out_dir = \"{}\"\n",
            dir.path().join("from_config").display()
        ),
    )
    .unwrap();
    // --seed overrides the file; out_dir comes from the file.
    let output = bellpost()
        .arg("classical")
        .arg("--config")
        .arg(&config_path)
        .args(["--seed", "42"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("seed 42"), "stdout: {stdout}");
    assert!(dir.path().join("from_config/chsh.csv").exists());
}

#[test]
fn invalid_config_fails_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.toml");
    std::fs::write(
        &config_path,
        "experiment = \"classical\"\nsettings_a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]\n",
    )
    .unwrap();
    let output = bellpost()
        .arg("classical")
        .arg("--config")
        .arg(&config_path)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("settings_a[0]"), "stderr: {stderr}");
}

#[test]
fn quantum_werner_reports_reference_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let output = bellpost()
        .arg("quantum-werner")
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let witness = read(&dir.path().join("witness.csv"));
    assert!(witness.contains("werner-qubit,-0.125000000000,true"));
    assert!(witness.contains("singlet,-0.500000000000,true"));
}
