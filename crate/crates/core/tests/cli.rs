use std::process::{Command, Output};

fn danl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_danl")).args(args).env_remove("DANL_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["--synth-d", "8", "--synth-m", "200", "--workers", "4", "--regions", "2", "--timing", "false"];

#[test]
fn run_writes_header_and_rows() {
    let mut args = vec!["run", "--rounds", "3"];
    args.extend_from_slice(SMALL);
    let o = danl(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "round,gap,grad_norm,regions_trained,min_coverage,gamma_t,elapsed_ms");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("3,"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "# small run\nsynth-d = 8\nsynth_m = 200\nworkers = 4\nregions = 2\nrounds = 9\ntiming = false\n").unwrap();
    let o = danl(&["run", "--config", cfg.to_str().unwrap(), "--rounds", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn seed_comes_from_environment_unless_given() {
    let mut args = vec!["run", "--rounds", "4", "--psi-min", "1", "--s-min", "1"];
    args.extend_from_slice(SMALL);
    let with_env = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_danl")).args(&args).env("DANL_SEED", seed).output().unwrap().stdout
    };
    assert_eq!(with_env("5"), with_env("5"));
    assert_ne!(with_env("5"), with_env("6"));
    let mut explicit = args.clone();
    explicit.extend_from_slice(&["--seed", "5"]);
    assert_eq!(danl(&explicit).stdout, with_env("5"));
}

#[test]
fn sweeps_are_byte_identical_across_invocations() {
    for sweep in ["sweep-fig1", "sweep-fig2"] {
        let dir = tempfile::tempdir().unwrap();
        let run = |name: &str| {
            let out = dir.path().join(name);
            let traj = dir.path().join(format!("{name}-traj"));
            let o = danl(&[sweep, "--rounds", "40", "--out", out.to_str().unwrap(), "--trajectories", traj.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            let mut bytes = std::fs::read(out).unwrap();
            let mut files: Vec<_> = std::fs::read_dir(traj).unwrap().map(|e| e.unwrap().path()).collect();
            files.sort();
            for f in files {
                bytes.extend(std::fs::read(f).unwrap());
            }
            bytes
        };
        assert_eq!(run("a.csv"), run("b.csv"), "{sweep}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(danl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(danl(&["run", "--workers", "zero"]).status.code(), Some(1));
    assert_eq!(danl(&["run", "--psi-min", "11"]).status.code(), Some(1));
    assert_eq!(danl(&["run", "--dataset", "/nonexistent/a1a"]).status.code(), Some(1));
    assert_eq!(danl(&["--help"]).status.code(), Some(0));
    let mut args = vec!["run", "--fedavg-lr", "1e9"];
    args.extend_from_slice(SMALL);
    assert_eq!(danl(&args).status.code(), Some(2));
}

#[test]
fn check_theory_reports_zero_violations() {
    let o = danl(&["check-theory", "--trials", "200", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("lemma1 seed=3 dim=20 trials=200 violations=0"), "{text}");
    assert!(text.contains("fraction_le_0.75=1.000"));
}

#[test]
fn parse_check_summarises_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.svm");
    std::fs::write(&good, "+1 1:0.5 3:1\n-1 2:1\n").unwrap();
    let o = danl(&["parse-check", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "good.svm: samples=2 dim=3 nnz=3 positive_fraction=0.5000");
    let bad = dir.path().join("bad.svm");
    std::fs::write(&bad, "+1 3:1 2:1\n").unwrap();
    let o = danl(&["parse-check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}
