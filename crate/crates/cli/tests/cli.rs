use std::path::Path;
use std::process::{Command, Output};

fn byzsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzsim")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Drops the two wall-time columns.
fn stable_columns(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 9 && *i != 10).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn header_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", "m = 7\nt = 1\ndataset = synthetic:20x6\niterations = 2\n");
    let out = byzsim(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "task,m,t,s,adversary,tau,iteration,max_worker_flops,master_flops,wall_time_worker_max,wall_time_master,objective,trajectory_deviation"
    );
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn unknown_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "m = 7\nworkers = 3\n");
    let out = byzsim(&["run", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key 'workers'"));
}

#[test]
fn over_budget_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "m = 7\nt = 2\ns = 2\n");
    assert!(!byzsim(&["run", "--config", &cfg]).status.success());
}

#[test]
fn reruns_are_identical_except_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.cfg",
        "m = 9\nt = 1..3\nseed = 4\nadversary = gaussian\ndataset = synthetic:40x12\ntask = cd\ntau = 0.25, 1.0\niterations = 5\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        assert!(byzsim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    }
    let (a, b) = (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
    assert_eq!(stable_columns(&a), stable_columns(&b));
    let c = byzsim(&["run", "--config", &cfg, "--seed-override", "5"]);
    assert_ne!(stable_columns(&a), stable_columns(&String::from_utf8(c.stdout).unwrap()));
}

#[test]
fn generated_files_feed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(byzsim(&["gen", "--n", "30", "--d", "8", "--out", data.to_str().unwrap()]).status.success());
    let cfg = write(dir.path(), "f.cfg", "m = 5\nt = 1\ndataset = data/X.txt, data/y.txt\ntask = lasso\nlambda = 1\niterations = 3\n");
    let out = byzsim(&["verify", "--config", &cfg, "--trials", "10"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
