use std::path::Path;
use std::process::{Command, Output};

fn cellsysid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellsysid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
seed = 4
[data]
train_series = [1]
train_steps = 40
test_series = 1
test_steps = 30
[training]
epochs = 2
[evaluation]
horizons = [10, 30]
[[models]]
name = "dense"
sparse = false
replicates = 1
[[models]]
name = "sparse"
replicates = 2
"#;

#[test]
fn regions_for_shape_and_parameters() {
    let out = cellsysid(&["regions", "--shape", "13,6,6,6,8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("d=13 n=6 L=3\nupper: "));

    let out = cellsysid(&["regions", "-d", "7", "-n", "1", "-L", "3"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("upper: 1e0 "));

    let out = cellsysid(&["regions", "-d", "400", "-n", "1000", "-L", "3"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("upper: overflow"));
}

#[test]
fn invalid_region_requests_are_config_errors() {
    assert_eq!(cellsysid(&["regions", "--shape", "13,15,14,12,8"]).status.code(), Some(2));
    assert_eq!(cellsysid(&["regions"]).status.code(), Some(2));
    assert_eq!(cellsysid(&["bogus"]).status.code(), Some(2));
}

#[test]
fn config_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "seed = \"one\"\n");
    assert_eq!(cellsysid(&["--config", &bad, "simulate"]).status.code(), Some(2));

    let inconsistent = write_config(dir.path(), "[evaluation]\nhorizons = [5000]\n");
    assert_eq!(cellsysid(&["--config", &inconsistent, "simulate"]).status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    assert_eq!(cellsysid(&["--config", missing.to_str().unwrap(), "simulate"]).status.code(), Some(4));

    let out = dir.path().join("empty");
    let cfg = write_config(dir.path(), SMALL);
    let o = cellsysid(&["--config", &cfg, "--out", out.to_str().unwrap(), "analyze"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8(o.stderr).unwrap().contains("missing artifact"));
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[data]
train_series = [1]
train_steps = 20
test_series = 0
[evaluation]
horizons = []
[control.u4]
deterministic = { kind = "proportional", gain = -1e6, setpoint = 0.0, measured = "metal_mass" }
random = { lo = 0.0, hi = 0.0 }
hold_steps = 1
impulse = true
"#,
    );
    let out = dir.path().join("out");
    let o = cellsysid(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
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
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn stages_in_sequence_match_run_for_any_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let staged = dir.path().join("staged");
    let whole = dir.path().join("whole");
    for stage in ["simulate", "train", "analyze", "evaluate"] {
        let o = cellsysid(&["--config", &cfg, "--out", staged.to_str().unwrap(), "--jobs", "1", stage]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = cellsysid(&["--config", &cfg, "--out", whole.to_str().unwrap(), "--jobs", "2", "run"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("seed=4"));
    assert_eq!(tree(&staged), tree(&whole));
    assert!(staged.join("models/n01/sparse_01.json").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let o = cellsysid(&["--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "99", "simulate"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(a.join("data/train/series_000.csv")).unwrap();
    assert!(csv.contains("# seed=99\n# series_seed=99\n"));
    assert_eq!(cellsysid(&["--jobs", "0", "--out", a.to_str().unwrap(), "simulate"]).status.code(), Some(2));
}
