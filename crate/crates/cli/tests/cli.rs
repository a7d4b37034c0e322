use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"{
    "domain": {"width": 80, "height": 60},
    "dx": 4,
    "exits": [{"a": [80, 24], "b": [80, 36]}],
    "spawns": [{"region": {"min": [8, 10], "max": [40, 50]}, "count": 30, "r_a": 2, "r_b": 3.5, "v0": [0.3, 0]}],
    "body_force": {"kind": "goal", "goal": [90, 30], "speed": 0.6},
    "active": {"alpha": 0.01, "beta": 0.1, "d_l": 0.1, "noise_sigma": 0.02},
    "dt": 0.5,
    "steps": 40,
    "snapshot_every": 4,
    "seed": 9
}"#;

fn crowdmpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdmpm")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn empty_spawns_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = SCENARIO.replace(
        r#""spawns": [{"region": {"min": [8, 10], "max": [40, 50]}, "count": 30, "r_a": 2, "r_b": 3.5, "v0": [0.3, 0]}]"#,
        r#""spawns": []"#,
    );
    let sc = write_scenario(dir.path(), "empty.json", &text);
    let out = crowdmpm(&["simulate", "--scenario", path(&sc), "--out", path(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no particles"));
}

#[test]
fn instability_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "fast.json", &SCENARIO.replace(r#""v0": [0.3, 0]"#, r#""v0": [40, 0]"#));
    let out = crowdmpm(&["simulate", "--scenario", path(&sc), "--out", path(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", SCENARIO);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = crowdmpm(&["simulate", "--scenario", path(&sc), "--out", path(out), "--deterministic", "--seed", "4"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert!(tree(&a) == tree(&b));
    let summary: serde_json::Value = serde_json::from_slice(
        &crowdmpm(&["simulate", "--scenario", path(&sc), "--out", path(&a), "--steps", "8"]).stdout,
    )
    .unwrap();
    assert_eq!(summary["frames"], 3);
}

#[test]
fn simulate_analyze_convert_and_train() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", SCENARIO);
    let run = dir.path().join("run");
    assert!(crowdmpm(&["simulate", "--scenario", path(&sc), "--out", path(&run)]).status.success());

    for op in ["curl", "div", "stress"] {
        let out = dir.path().join(op);
        let r = crowdmpm(&["analyze", "--frames", path(&run), "--op", op, "--out", path(&out), "--truth", path(&run)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        assert!(out.join(format!("{op}_00010.csv")).exists() && out.join(format!("{op}_00010.png")).exists());
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["err_vel"], 0.0);
    }

    let flows = dir.path().join("flows");
    assert!(crowdmpm(&["flow", "from-run", "--run", path(&run), "--out", path(&flows)]).status.success());
    let manifest = flows.join("manifest.json");
    let fields = dir.path().join("fields");
    assert!(crowdmpm(&["flow", "convert", "--flows", path(&manifest), "--out", path(&fields)]).status.success());
    assert!(fields.join("field_00010.csv").exists());
    let noisy = dir.path().join("noisy");
    let r = crowdmpm(&[
        "flow",
        "noise",
        "--flows",
        path(&manifest),
        "--out",
        path(&noisy),
        "--kind",
        "mixture",
        "--std",
        "0.1",
        "--prob",
        "0.1",
        "--seed",
        "3",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(std::fs::read_dir(&noisy).unwrap().count(), 12);

    let config = write_scenario(
        dir.path(),
        "train.json",
        r#"{"train": {"epochs": 4, "lr": 0.1, "window": 8, "learn": ["eps"]}, "scene": {"dt": 0.5}, "model": {"eps": 2}}"#,
    );
    let model = dir.path().join("model.json");
    let r = crowdmpm(&["train", "--flows", path(&manifest), "--config", path(&config), "--out", path(&model)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(summary["epochs"], 4);
    let file: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(
        (file["schema_version"].as_u64(), file["repr"].is_string() || file["repr"].is_object()),
        (Some(1), true)
    );

    // A fitted model can drive a scenario.
    let with_model = SCENARIO.replace(r#""dt": 0.5"#, r#""model": "model.json", "dt": 0.5"#);
    let sc2 = write_scenario(dir.path(), "fitted.json", &with_model);
    let r = crowdmpm(&["simulate", "--scenario", path(&sc2), "--out", path(&dir.path().join("run2")), "--steps", "4"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let r = crowdmpm(&[
        "train",
        "--flows",
        path(&dir.path().join("missing.json")),
        "--out",
        path(&dir.path().join("m.json")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let r = crowdmpm(&["analyze", "--frames", path(dir.path()), "--op", "curl", "--out", path(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no frames"));
}
