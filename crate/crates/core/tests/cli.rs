use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = r#"
seed = 1
frames = 8
[[objects]]
shape = { kind = "patch", size = 0.25, n = 6 }
trajectory = { kind = "linear", start = [-0.1, 0.0, 0.9], velocity = [0.2, 0.0, 0.0] }
[camera]
kind = "static"
position = [0.0, 0.0, 1.0]
[track]
particles = 300
bounds = [[-0.4, 0.4], [-0.4, 0.4], [0.6, 1.4]]
skip = 2
"#;

fn nlos(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlos"))
        .current_dir(dir)
        .env_remove("NLOS_SEED")
        .env_remove("NLOS_WORKERS")
        .args(args)
        .output()
        .unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line:?}: {e}"))
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "frames = [not toml").unwrap();
    let o = nlos(
        &["--config", "bad.toml", "--out", "data", "simulate"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "config");
    assert_eq!(e["code"], 2);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), format!("{SCENE}\nbogus = 1\n")).unwrap();
    let o = nlos(
        &["--config", "s.toml", "--out", "data", "simulate"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), SCENE).unwrap();
    let o = nlos(
        &[
            "--config",
            "s.toml",
            "--out",
            "t",
            "track",
            "--dataset",
            "nowhere",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "data");
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), SCENE).unwrap();
    for run in ["a", "b"] {
        let data = format!("{run}/data");
        let out = format!("{run}/track");
        let o = nlos(
            &[
                "--config", "s.toml", "--seed", "5", "--out", &data, "simulate",
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = nlos(
            &[
                "--config",
                "s.toml",
                "--seed",
                "5",
                "--out",
                &out,
                "track",
                "--dataset",
                &data,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "data/manifest",
        "data/frames/3/histogram.f32",
        "track/trajectory.json",
        "track/trajectory.csv",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn seed_changes_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), SCENE).unwrap();
    for seed in ["1", "2"] {
        let o = nlos(
            &[
                "--config", "s.toml", "--seed", seed, "--out", seed, "simulate",
            ],
            dir.path(),
        );
        assert!(o.status.success());
    }
    let a = fs::read(dir.path().join("1/frames/0/histogram.f32")).unwrap();
    let b = fs::read(dir.path().join("2/frames/0/histogram.f32")).unwrap();
    assert_ne!(a, b);
}
