use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
trials = 2
seed = 3
record_every = 50

[env]
kind = "cbmum"
users = 10
clusters = 2
dim = 5
pool_size = 20
arms_per_round = 5
horizon = 200

[[policy]]
name = "club"
algo = "club"

[[policy]]
name = "ind"
algo = "linucb_ind"
"#;

fn banditlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_banditlab"))
        .args(args)
        .env("BANDITLAB_THREADS", "2")
        .output()
        .expect("spawn banditlab")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = banditlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let csv = std::fs::read_to_string(out.join("club_regret.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("round,mean,stderr"));
    let rounds: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(rounds.last(), Some(&200));
    assert!(rounds.windows(2).all(|w| w[0] < w[1]));
    assert!(out.join("ind_regret.csv").exists());
    assert!(out.join("regret.svg").exists());
}

#[test]
fn policy_filter_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = banditlab(&[
        "run", "--config", &cfg, "--out", out.to_str().unwrap(), "--policy", "ind", "--trials", "1", "--seed", "9",
    ]);
    assert_eq!(res.status.code(), Some(0));
    assert!(out.join("ind_regret.csv").exists());
    assert!(!out.join("club_regret.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(banditlab(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(banditlab(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]).status.code(), Some(0));
    for f in ["club_regret.csv", "ind_regret.csv", "regret.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = SMALL.replace("seed = 3", "seed = 3\nbogus = 1");
    let cfg = write_config(dir.path(), &unknown_key);
    assert_eq!(banditlab(&["run", "--config", &cfg]).status.code(), Some(2));

    let absent = dir.path().join("absent.toml");
    assert_eq!(banditlab(&["run", "--config", absent.to_str().unwrap()]).status.code(), Some(2));

    let cfg = write_config(dir.path(), SMALL);
    let res = banditlab(&["run", "--config", &cfg, "--policy", "missing"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("out");
    let res = banditlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--trials", "1"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("file"));
}
