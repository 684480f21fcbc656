use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "env = quadratic
algorithm = tdl-direct
seeds = 1,2
steps = 64
minibatch = 32
epochs = 2
iterations = 4
hidden = 8
holdout_size = 16
";

fn tdl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn tdl")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.txt"), TINY).unwrap();
    dir
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn train_reruns_are_byte_identical() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = tdl(&["train", "--config", "tiny.txt", "--out", out, "--jobs", "2"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (files(&dir.path().join("a")), files(&dir.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["aggregate.csv", "config.txt", "schema_version", "seed_1.csv", "seed_2.csv"]);
    assert_eq!(a, b);
}

#[test]
fn seed_flag_replaces_seed_list() {
    let dir = setup();
    let o = tdl(&["train", "--config", "tiny.txt", "--seed", "7", "--out", "r"], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("r/seed_7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(!dir.path().join("r/seed_1.csv").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.txt"), "colour = blue\n").unwrap();
    let cases: [&[&str]; 5] = [
        &["train", "--config", "bad.txt"],
        &["train", "--config", "missing.txt"],
        &["train", "--config", "tiny.txt", "--set", "epochs=zero"],
        &["train", "--config", "tiny.txt", "--jobs", "0"],
        &["no-such-verb"],
    ];
    for args in cases {
        let o = tdl(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn divergence_exits_with_two_only_when_strict() {
    let dir = setup();
    let base = ["train", "--config", "tiny.txt", "--set", "algorithm=ppo", "--set", "lr=1e300"];
    let o = tdl(&base, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let mut strict = base.to_vec();
    strict.push("--strict");
    let o = tdl(&strict, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("runs/seed_1.csv")).unwrap();
    assert!(csv.lines().last().unwrap().contains(",1,"));
}

#[test]
fn sweep_writes_one_summary_row_per_cell() {
    let dir = setup();
    std::fs::write(dir.path().join("grid.txt"), "alpha = 0.01, 0.025, 0.05\n").unwrap();
    let o = tdl(
        &["sweep", "--config", "tiny.txt", "--grid", "grid.txt", "--out", "s", "--set", "seeds=1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("s/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("cell,alpha,"));
    for i in 0..3 {
        assert!(dir.path().join(format!("s/cell_{i:03}/config.txt")).exists());
    }
}

#[test]
fn sweep_rejects_unknown_key() {
    let dir = setup();
    std::fs::write(dir.path().join("grid.txt"), "colour = red, blue\n").unwrap();
    let o = tdl(&["sweep", "--config", "tiny.txt", "--grid", "grid.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_writes_residual_tables() {
    let dir = setup();
    let o = tdl(&["verify", "--draws", "20000", "--out", "v"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "theorem1_residuals.csv",
        "smoothing_residuals.csv",
        "fixed_point_residuals.csv",
        "map_iterates.csv",
        "target_sweep_quadratic.csv",
        "target_sweep_half-line.csv",
        "target_sweep_double-well.csv",
    ] {
        let text = std::fs::read_to_string(dir.path().join("v").join(f)).unwrap();
        assert!(text.lines().count() > 1, "{f}");
    }
    let map = std::fs::read_to_string(dir.path().join("v/map_iterates.csv")).unwrap();
    assert_eq!(map.lines().count(), 52);
}

#[test]
fn repro_verbs_accept_scaled_down_overrides() {
    let dir = setup();
    let small = ["--set", "seeds=1", "--set", "iterations=3", "--set", "steps=128", "--set", "minibatch=64"];
    for verb in ["repro-fig1", "repro-kl", "repro-epochs"] {
        let mut args = vec![verb, "--out", verb];
        args.extend(small);
        let o = tdl(&args, dir.path());
        assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(verb).join("summary.csv").exists());
    }
    let fig1 = std::fs::read_to_string(dir.path().join("repro-fig1/summary.csv")).unwrap();
    assert_eq!(fig1.lines().count(), 7);
    let curves = std::fs::read_to_string(dir.path().join("repro-fig1/median_cost.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);
}
