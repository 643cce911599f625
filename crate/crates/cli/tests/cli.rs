use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
run_id = "small"
[domain]
n_grid = 16
[time]
n_steps = 100
[probes]
lipschitz_pairs = 4
frechet_pairs = 1
random_fields = 10
"#;

fn tumorctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tumorctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_raw(path: &Path) -> Vec<f64> {
    std::fs::read(path)
        .unwrap()
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

#[test]
fn negative_weight_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[problem]\nkappa = [-1.0, 0.0, 0.0, 0.0, 0.0]\n");
    let out = tumorctl(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kappa"), "{err}");
}

#[test]
fn unknown_criterion_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tumorctl(&["verify", "--criteria", "11", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_zero_data_writes_a_zero_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}\n[initial.phi0]\npreset = \"zero\"\n[initial.s0]\npreset = \"zero\"\n\
         [problem.u0]\npreset = \"zero\"\n[problem.phi_q]\npreset = \"zero\"\n"
    );
    let cfg = write_config(dir.path(), "zero.toml", &text);
    let out = tumorctl(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let run = dir.path().join("small");
    for name in ["mu", "phi", "s"] {
        let values = read_raw(&run.join(format!("{name}.f64")));
        assert_eq!(values.len(), 16 * 101);
        assert!(values.iter().all(|&v| v == 0.0), "{name}");
    }
    assert!(run.join("energy.csv").exists());
    assert!(run.join("summary.json").exists());
    assert!(run.join("config.toml").exists());
}

#[test]
fn dt_override_changes_the_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = tumorctl(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--dt-override",
        "0.025",
    ]);
    assert!(out.status.success());
    let summary: String = std::fs::read_to_string(dir.path().join("small/summary.json")).unwrap();
    assert!(summary.contains("\"n_steps\": 40"), "{summary}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("40 steps"), "{stdout}");
}

#[test]
fn optimize_with_zero_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", &format!("{SMALL}\n[optimizer]\nmax_iters = 0\n"));
    let out = tumorctl(&["optimize", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("small/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2, "{history}");
    let report = std::fs::read_to_string(dir.path().join("small/report.json")).unwrap();
    assert!(report.contains("max_iterations"), "{report}");
}

#[test]
fn verify_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = tumorctl(&[
            "verify",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--criteria",
            "1,5,9",
            "--seed",
            "7",
        ]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(4));
        reports.push(std::fs::read(out_dir.join("small/verify.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert!(String::from_utf8_lossy(&reports[0]).contains("\"seed\": 7"));
}
