use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn hpshield(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hpshield"));
    cmd.arg("--out").arg(out).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("HPSHIELD_")) {
        cmd.env_remove(k);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn column_sum(path: &Path, column: &str) -> f64 {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records()
        .map(|rec| match &rec.unwrap()[idx] {
            "true" => 1.0,
            "false" => 0.0,
            v => v.parse::<f64>().unwrap(),
        })
        .sum()
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mutated = model("stopsign_mutated.hp");
    let o = hpshield(dir.path(), &["check", mutated.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows(&dir.path().join("counterexample.csv")).len() > 1);

    let faithful = model("stopsign.hp");
    let o = hpshield(dir.path(), &["--set", "check.depth=4", "check", faithful.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let broken = dir.path().join("broken.hp");
    fs::write(&broken, "init: x >= 0\nprogram: x := ;\nsafe: x >= 0\n").unwrap();
    assert_eq!(code(&hpshield(dir.path(), &["check", broken.to_str().unwrap()])), 2);
    assert_eq!(code(&hpshield(dir.path(), &["check", "/nonexistent/model.hp"])), 2);
    assert_eq!(code(&hpshield(dir.path(), &["check"])), 2);
    assert_eq!(code(&hpshield(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn bad_config_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpshield(dir.path(), &["--set", "train.alpha=2", "train", "--episodes", "3"]);
    assert_eq!(code(&o), 2);
    let o = hpshield(dir.path(), &["--set", "novalue", "train"]);
    assert_eq!(code(&o), 2);
    let o = hpshield(dir.path(), &["--config", "/nonexistent.cfg", "train"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_writes_logs_for_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpshield(dir.path(), &["--seed", "0,1,2", "train", "--episodes", "300"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for s in 0..3 {
        let log = dir.path().join(format!("train_s{s}.csv"));
        assert_eq!(rows(&log).len(), 300);
        assert_eq!(column_sum(&log, "violations"), 0.0);
        assert!(dir.path().join(format!("policy_s{s}.csv")).exists());
    }
    let summary = dir.path().join("train_summary.csv");
    assert_eq!(rows(&summary).len(), 300);
    assert_eq!(column_sum(&summary, "violations_mean"), 0.0);
    let header = fs::read_to_string(dir.path().join("train_s0.csv")).unwrap();
    assert!(header.starts_with("episode,reward,violations,interventions,steps\n"));
}

#[test]
fn unshielded_training_violates() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpshield(dir.path(), &["train", "--episodes", "300", "--shield", "off"]);
    assert_eq!(code(&o), 0);
    assert!(column_sum(&dir.path().join("train_s0.csv"), "violations") > 0.0);
}

#[test]
fn environment_variables_sit_between_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "[train]\nepisodes = 11\n").unwrap();
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hpshield"));
        cmd.arg("--out").arg(dir.path()).arg("--config").arg(&cfg).arg("train").args(extra);
        if let Some(v) = env {
            cmd.env("HPSHIELD_TRAIN_EPISODES", v);
        }
        assert!(cmd.output().unwrap().status.success());
        rows(&dir.path().join("train_s0.csv")).len()
    };
    assert_eq!(run(None, &[]), 11);
    assert_eq!(run(Some("7"), &[]), 7);
    assert_eq!(run(Some("7"), &["--episodes", "5"]), 5);
}

#[test]
fn crossing_training_from_pixels_never_collides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model("crossing.cfg");
    let o = hpshield(dir.path(), &["--config", cfg.to_str().unwrap(), "train", "--episodes", "400"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(column_sum(&dir.path().join("train_s0.csv"), "violations"), 0.0);
    let o = hpshield(dir.path(), &["--config", cfg.to_str().unwrap(), "train", "--episodes", "400", "--shield", "off"]);
    assert_eq!(code(&o), 0);
    assert!(column_sum(&dir.path().join("train_s0.csv"), "violations") > 0.0);
}

#[test]
fn penalty_sweep_is_reproducible_and_matches_plain_training() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "3", "penalty-sweep", "--episodes", "200", "--penalties", "0,-10,-100"];
    assert_eq!(code(&hpshield(a.path(), &args)), 0);
    assert_eq!(code(&hpshield(b.path(), &args)), 0);
    let sweep = fs::read(a.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep, fs::read(b.path().join("sweep.csv")).unwrap());
    let all = rows(&a.path().join("sweep.csv"));
    assert_eq!(all.len(), 600);
    for p in ["0", "-10", "-100"] {
        assert_eq!(all.iter().filter(|r| &r[0] == p).count(), 200);
    }
    assert_eq!(rows(&a.path().join("sweep_summary.csv")).len(), 3);

    assert_eq!(code(&hpshield(b.path(), &["--seed", "3", "train", "--episodes", "200"])), 0);
    let plain = rows(&b.path().join("train_s3.csv"));
    let zero: Vec<_> = all.iter().filter(|r| &r[0] == "0").collect();
    for (t, s) in plain.iter().zip(zero) {
        assert_eq!(t.iter().collect::<Vec<_>>(), s.iter().skip(2).collect::<Vec<_>>());
    }

    let empty = model("sweep.cfg");
    let o = hpshield(a.path(), &["--config", empty.to_str().unwrap(), "--set", "sweep.penalties=", "penalty-sweep"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn adapt_outcomes() {
    let cfg = model("adapt.cfg");
    let cfg = cfg.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = hpshield(dir.path(), &["--config", cfg, "--set", "adapt.phase1_episodes=1", "adapt"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));

    let o = hpshield(dir.path(), &["--config", cfg, "adapt", "--b-actual", "1"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("model consistent"));
    assert!(!dir.path().join("adapt_guards.hp").exists());

    let o = hpshield(dir.path(), &["--config", cfg, "--set", "adapt.phase3_episodes=200", "--set", "adapt.check_depth=3", "adapt"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Vec<(String, String)> =
        rows(&dir.path().join("adapt_report.csv")).iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
    let get = |k: &str| report.iter().find(|(m, _)| m == k).unwrap().1.clone();
    assert_eq!(get("mismatch"), "true");
    assert_eq!(get("phase3_violations"), "0");
    let b_hat: f64 = get("b_hat").parse().unwrap();
    assert!((b_hat - 0.5).abs() < 0.05);
    let guards = fs::read_to_string(dir.path().join("adapt_guards.hp")).unwrap();
    assert!(guards.contains("accel"));
}

#[test]
fn simulate_writes_step_logs_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let o = hpshield(dir.path(), &["simulate", "--episodes", "2", "--policy", "accel"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = dir.path().join("episode_s0_e1.csv");
    assert!(rows(&log).len() > 1);
    assert_eq!(column_sum(&log, "violation"), 0.0);

    let o = hpshield(dir.path(), &["simulate", "--env", "crossing", "--frames"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let steps = rows(&dir.path().join("episode_s0_e0.csv")).len();
    let frames = fs::read_dir(dir.path().join("episode_s0_e0")).unwrap().count();
    assert_eq!(frames, steps + 1);

    let o = hpshield(dir.path(), &["--seed", "4", "simulate", model("stopsign.hp").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("trace_s4.csv").exists());

    let o = hpshield(dir.path(), &["simulate", "--policy", "teleport"]);
    assert_eq!(code(&o), 2);
}
