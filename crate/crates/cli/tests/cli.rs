use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
id = "small"
seed = 5

[trajectory]
velocity = [0.4, 0.0, 0.0]

[[targets]]
position = [0.0, 1.5, 0.0]

[waveform]
chirps_per_frame = 32

[simulation]
frames = 2

[noise]
power = 0.1

[imaging.grid]
center = [0.0, 1.5, 0.0]
extent = [0.1, 0.1]
spacing = [0.004, 0.004]
"#;

fn sarkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("SARKIT_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_scenarios_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = sarkit(&["validate", path.to_str().unwrap()], &root);
            assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
            assert_eq!(v["valid"], true);
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", &SMALL.replace("seed = 5", "seed = 5\nsede = 3"));
    let o = sarkit(&["validate", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("sede"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = sarkit(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
    let o = sarkit(&["sweep"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn staged_commands_match_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL);
    assert!(sarkit(&["simulate", "small.toml", "--out-dir", "sim"], d).status.success());
    assert!(sarkit(&["image", "sim/cube.sarb", "small.toml", "--out-dir", "img"], d).status.success());
    let measured = sarkit(&["measure", "img/image_p000.sarb", "--out-dir", "meas"], d);
    assert!(measured.status.success(), "{}", String::from_utf8_lossy(&measured.stderr));
    assert!(sarkit(&["sweep", "small.toml", "--out-dir", "sweep"], d).status.success());

    assert_eq!(
        fs::read(d.join("img/image_p000.sarb")).unwrap(),
        fs::read(d.join("sweep/image_p000.sarb")).unwrap()
    );
    let metrics = fs::read_to_string(d.join("sweep/metrics.csv")).unwrap();
    assert_eq!(fs::read_to_string(d.join("meas/metrics.csv")).unwrap(), metrics);
    assert_eq!(String::from_utf8_lossy(&measured.stdout).trim(), metrics.lines().nth(1).unwrap());
    for cut in ["cross_range", "range"] {
        let name = format!("profile_p000_{cut}.csv");
        assert_eq!(fs::read(d.join("meas").join(&name)).unwrap(), fs::read(d.join("sweep").join(&name)).unwrap());
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("sweep/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_id"], "small");
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_override_changes_noise() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL);
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        assert!(sarkit(&["simulate", "small.toml", "--seed", seed, "--out-dir", out], d).status.success());
    }
    let read = |o: &str| fs::read(d.join(o).join("cube.sarb")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn unresolved_main_lobe_fails_measure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "narrow.toml", &SMALL.replace("extent = [0.1, 0.1]", "extent = [0.008, 0.1]"));
    let sweep = sarkit(&["sweep", "narrow.toml", "--out-dir", "out"], d);
    assert!(sweep.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&sweep.stdout).unwrap();
    assert!(manifest["failures"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["quantity"] == "width" && f["kind"] == "main_lobe_unresolved"));

    let o = sarkit(&["measure", "out/image_p000.sarb", "--out-dir", "m"], d);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "main_lobe_unresolved");
}

#[test]
fn empty_target_list_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = SMALL.find("[[targets]]").unwrap();
    let end = SMALL.find("[waveform]").unwrap();
    let text = format!("{}{}", &SMALL[..start], &SMALL[end..]).replace("power = 0.1", "power = 0.0");
    write(d, "empty.toml", &text);
    let o = sarkit(&["sweep", "empty.toml", "--out-dir", "out"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!manifest["failures"].as_array().unwrap().is_empty());
    let metrics = fs::read_to_string(d.join("out/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
}

#[test]
fn missing_cube_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL);
    let o = sarkit(&["image", "nowhere.sarb", "small.toml"], d);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "io");
}
