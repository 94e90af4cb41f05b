use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shockstab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shockstab")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn profile_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = shockstab(&["--out", "run", "profile"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["profile.csv", "profile.json", "checks_profile.json"] {
        assert!(dir.path().join("run").join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(dir.path().join("run/profile.csv")).unwrap();
    assert!(csv.lines().count() > 100);
    let checks: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/checks_profile.json")).unwrap()).unwrap();
    assert_eq!(checks["pass"], true);
}

#[test]
fn malformed_config_exits_two_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "model = \"burgers\"\nnot_a_key = 1\n").unwrap();
    let o = shockstab(&["--config", "bad.toml", "--out", "run", "profile"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("run").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("not_a_key"));

    fs::write(dir.path().join("range.toml"), "[evolve]\nt_final = -1.0\n").unwrap();
    let o = shockstab(&["--config", "range.toml", "--out", "run", "evolve"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("run").exists());

    let o = shockstab(&["--config", "missing.toml", "profile"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&shockstab(&["no-such-command"], dir.path())), 2);
    assert_eq!(code(&shockstab(&[], dir.path())), 2);
    let o = shockstab(&["--out", "run", "verify-lemmas", "--only", "Z9"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn identities_pass_and_the_hz_sweep_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = shockstab(&["--out", "ids", "verify-lemmas", "--only", "interaction1,interaction2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS interaction1") && stdout.contains("PASS interaction2"), "{stdout}");

    let o = shockstab(&["--out", "hz", "verify-lemmas", "--only", "hz"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL hz"));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = shockstab(&["--out", out, "--seed", "11", "verify-lemmas", "--only", "identities"], dir.path());
        assert_eq!(code(&o), 0);
        let o = shockstab(&["--out", out, "profile"], dir.path());
        assert_eq!(code(&o), 0);
    }
    for f in ["lemmas.json", "profile.json", "profile.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    let seeded: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/lemmas.json")).unwrap()).unwrap();
    assert_eq!(seeded["identities"][0]["seed"], 11);
}

#[test]
fn report_aggregates_subcommand_checks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&shockstab(&["--out", "r", "profile"], dir.path())), 0);
    assert_eq!(code(&shockstab(&["--out", "r", "verify-lemmas", "--only", "identities"], dir.path())), 0);
    let o = shockstab(&["--out", "r", "report"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(s["all_pass"], true);
    assert_eq!(s["failed"], serde_json::json!([]));

    assert_eq!(code(&shockstab(&["--out", "r", "verify-lemmas", "--only", "hz"], dir.path())), 1);
    assert_eq!(code(&shockstab(&["--out", "r", "report"], dir.path())), 1);
}

#[test]
fn evans_on_an_inline_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[model]
name = "scaled_burgers"
u_minus = [2.0]
u_plus = [-2.0]
flux = [[{ coef = 0.5, powers = [2] }]]
viscosity = [[1.0]]
"#;
    fs::write(dir.path().join("m.toml"), cfg).unwrap();
    let o = shockstab(&["--config", "m.toml", "--out", "e", "evans"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("e/evans.json").is_file());
}
