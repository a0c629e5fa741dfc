//! End-to-end CLI checks: determinism of artifacts, exit codes, and the
//! config surface.

use std::path::Path;
use std::process::Command;

fn sinai() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sinai"))
}

fn small_experiment(table_path: &str) -> String {
    format!(
        r#"
table = "{table_path}"
seed = 5

[selftest]
involution_points = 500
mc_samples = 20000
cone_vectors = 100
orbit_tol = 1e-8

[decay]
horizon = 3
mc_samples = 30000
density_f = {{ preset = "cos_r", amplitude = 0.3 }}
density_g = {{ preset = "one" }}

[cone_check]
density = {{ preset = "one" }}
n_curves = 8

[escape]
hole = {{ kind = "arc", scatterer = 0, from = 0.1, to = 0.4 }}
n_between = 2
n_macro = 6
samples = 30000
"#
    )
}

fn write_table(dir: &Path) -> String {
    let path = dir.join("table.toml");
    std::fs::write(
        &path,
        r#"
torus = [1.0, 1.0]
[[scatterers]]
center = [0.0, 0.0]
radius = 0.28
[[scatterers]]
center = [0.5, 0.5]
radius = 0.28
[[scatterers]]
center = [0.5, 0.0]
radius = 0.16
[family]
tau_star = 0.05
kappa_star = 0.15
e_star = 10.0
k0 = 60
delta0 = 0.0012
"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn selftest_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let table = write_table(dir.path());
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, small_experiment(&table)).unwrap();

    let run = |out: &Path| {
        let status = sinai()
            .args(["selftest", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "selftest must pass");
        (
            std::fs::read(out.join("selftest.json")).unwrap(),
            std::fs::read(out.join("manifest.json")).unwrap(),
        )
    };
    let (a1, m1) = run(&dir.path().join("run1"));
    let (a2, m2) = run(&dir.path().join("run2"));
    assert_eq!(a1, a2, "selftest.json must be byte-identical across runs");
    assert_eq!(m1, m2, "manifest.json must be byte-identical across runs");
}

#[test]
fn decay_outputs_are_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let table = write_table(dir.path());
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, small_experiment(&table)).unwrap();
    let run = |out: &Path| {
        let status = sinai()
            .args(["decay", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out.join("decay.csv")).unwrap()
    };
    let c1 = run(&dir.path().join("d1"));
    let c2 = run(&dir.path().join("d2"));
    assert_eq!(c1, c2, "decay.csv must be byte-identical");
    assert!(c1.starts_with("# config_sha256 = "));
    assert!(c1.lines().nth(1).unwrap().starts_with("n,leafwise_diff"));
    // A different seed changes the hash line.
    let out3 = dir.path().join("d3");
    let status = sinai()
        .args(["decay", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out3)
        .args(["--seed", "99"])
        .status()
        .unwrap();
    assert!(status.success());
    let c3 = std::fs::read_to_string(out3.join("decay.csv")).unwrap();
    assert_ne!(
        c1.lines().next().unwrap(),
        c3.lines().next().unwrap(),
        "seed must enter the config hash"
    );
}

#[test]
fn cone_check_reports_membership() {
    let dir = tempfile::tempdir().unwrap();
    let table = write_table(dir.path());
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, small_experiment(&table)).unwrap();
    let out = dir.path().join("cone");
    let output = sinai()
        .args(["cone-check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "constant density is in the cone");
    let report = std::fs::read_to_string(out.join("cone_report.json")).unwrap();
    assert!(report.contains("cond2_margin"));
}

#[test]
fn escape_runs_and_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let table = write_table(dir.path());
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, small_experiment(&table)).unwrap();
    let out = dir.path().join("esc");
    let status = sinai()
        .args(["escape", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("escape.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("n,survivors,mass"));
}

#[test]
fn bad_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // Overlapping scatterers.
    let path = dir.path().join("bad_table.toml");
    std::fs::write(
        &path,
        r#"
[[scatterers]]
center = [0.0, 0.0]
radius = 0.3
[[scatterers]]
center = [0.2, 0.0]
radius = 0.3
[family]
tau_star = 0.05
kappa_star = 0.15
k0 = 60
delta0 = 0.0012
"#,
    )
    .unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, small_experiment(&path.display().to_string())).unwrap();
    let status = sinai()
        .args(["selftest", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "overlap must be a hard error");
}

#[test]
fn kind_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let table = write_table(dir.path());
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!("kind = \"decay\"\n{}", small_experiment(&table)),
    )
    .unwrap();
    let status = sinai()
        .args(["escape", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("y"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
