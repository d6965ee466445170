use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qbme::config::parse_config;
use qbme::plan::RunManifest;
use qbme::presets::all_presets;

const SMALL_SWEEP: &str = r#"
name = "small-sweep"
kind = "sweep"
mode = "box-nonergodic"
n = 40
temperatures = [0.5, 1.0]
trajectories = 2
seed = 7

[schedule]
warmup = 5.0
measure = 10.0
"#;

fn qbme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbme"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn presets_verb_lists_every_preset() {
    let o = qbme(&["presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for p in all_presets() {
        assert!(text.contains(&p.name), "{} missing", p.name);
    }
}

#[test]
fn builtin_presets_validate() {
    for p in all_presets() {
        p.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
    }
}

#[test]
fn run_writes_bundle_and_replays_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", SMALL_SWEEP);
    let first = dir.path().join("first");
    let o = qbme(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.is_complete());
    assert_eq!(manifest.units.len(), 4);
    assert!(manifest.outputs.iter().any(|f| f.file == "sweep.csv"));

    let second = dir.path().join("second");
    let m = first.join("manifest.json");
    let o = qbme(&[
        "run",
        "--config",
        m.to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["sweep.csv", "sweep_summary.csv"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", SMALL_SWEEP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "7"), (&b, "8")] {
        let o = qbme(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--trajectories",
            "1",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_ne!(
        fs::read(a.join("sweep.csv")).unwrap(),
        fs::read(b.join("sweep.csv")).unwrap()
    );
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &format!("{SMALL_SWEEP}\nbogus = 1\n"),
    );
    let o = qbme(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn invalid_values_name_their_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_SWEEP.replace("n = 40\n", "");
    let cfg = write(dir.path(), "missing.toml", &text);
    let err = parse_config(Path::new(&cfg)).unwrap_err().to_string();
    assert!(err.contains("n:"), "{err}");
    let o = qbme(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));

    let text = SMALL_SWEEP.replace("box-nonergodic", "box-sideways");
    let cfg = write(dir.path(), "mode.toml", &text);
    assert!(parse_config(Path::new(&cfg)).is_err());
}

#[test]
fn unknown_figure_and_flags_exit_with_config_code() {
    assert_eq!(qbme(&["reproduce", "fig99"]).status.code(), Some(2));
    assert_eq!(qbme(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(
        qbme(&["run", "--preset", "no-such-preset"]).status.code(),
        Some(2)
    );
}

#[test]
fn oracle_prints_grand_canonical_json() {
    let o = qbme(&[
        "oracle",
        "grand-canonical",
        "--geometry",
        "box",
        "--n",
        "500",
        "--t-rel",
        "0.5",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let f = v["condensate_fraction"].as_f64().unwrap();
    assert!(f > 0.4 && f < 0.8, "{f}");
}

#[test]
fn catalog_lists_ground_state_first() {
    let o = qbme(&["catalog", "--mode", "osc-ergodic", "--e-max", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert!(lines.len() >= 5, "{text}");
    assert!(lines[1].starts_with('0'), "{text}");
}

#[test]
fn quick_selftest_passes() {
    let o = qbme(&["selftest", "--quick"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
