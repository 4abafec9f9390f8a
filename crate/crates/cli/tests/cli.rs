use std::path::Path;
use std::process::{Command, Output};

fn piforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_piforge")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_mdp_and_layout() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f33.json");
    let o = piforge(&["generate", "--family", "F:3,3", "--out", f.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let layout = json(&dir.path().join("f33.layout.json"));
    assert_eq!(layout["split_at"], 3);
    assert_eq!(layout["state_names"].as_array().unwrap().len(), 7);
    assert!(json(&f).is_object());

    let g = dir.path().join("g33.json");
    assert!(piforge(&["generate", "--family", "G:3,3", "--out", g.to_str().unwrap()]).status.success());
    assert!(json(&dir.path().join("g33.layout.json"))["split_at"].is_null());
}

#[test]
fn generate_rejects_bad_parameters() {
    let o = piforge(&["generate", "--family", "F:0,1"]);
    assert!(!o.status.success());
}

#[test]
fn run_f33_reproduces_the_long_peculiar_run() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("f33.jsonl");
    let o = piforge(&["run", "--family", "F:3,3", "--out", log.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("73 policies, final 222·222"), "{}", stdout(&o));
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 74);
    let first: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(first["policy"], "000·000");
}

#[test]
fn run_from_generated_file_uses_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f33.json");
    assert!(piforge(&["generate", "--family", "F:3,3", "--out", f.to_str().unwrap()]).status.success());
    let o = piforge(&["run", "--mdp", f.to_str().unwrap(), "--out", dir.path().join("t.jsonl").to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("73 policies, final 222·222"));
}

#[test]
fn run_g45_index_is_linear() {
    let o = piforge(&["run", "--family", "G:4,5", "--state-select", "howard", "--action-select", "index"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 18);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("17 policies"));
}

#[test]
fn random_runs_need_a_seed_and_are_deterministic() {
    let base = ["run", "--family", "G:4,5", "--state-select", "random", "--action-select", "random"];
    assert!(!piforge(&base).status.success());
    let mut seeded = base.to_vec();
    seeded.extend(["--seed", "17"]);
    let (a, b) = (piforge(&seeded), piforge(&seeded));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_f_grid_matches_count_formula() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("f.csv");
    let o = piforge(&["sweep", "--family", "F", "--sizes", "1..4", "--ks", "2..4", "--out", csv_path.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["family", "size", "k", "variant", "seed", "iterations", "converged", "runtime_ms"]
    );
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (m, k): (u128, u128) = (rec[1].parse().unwrap(), rec[2].parse().unwrap());
        let expected = 2 * k * (k.pow(m as u32) - 1) / (k - 1) - 2 * m + 1;
        assert_eq!(&rec[6], "true");
        assert_eq!(rec[5].parse::<u128>().unwrap(), expected, "F({m},{k})");
        rows += 1;
    }
    assert_eq!(rows, 12);
}

#[test]
fn empty_sweep_writes_only_header() {
    let o = piforge(&["sweep", "--family", "G", "--sizes", "3..2", "--ks", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "family,size,k,variant,seed,iterations,converged,runtime_ms");
}

#[test]
fn verify_single_claims() {
    for args in [
        &["verify", "--claim", "f-count", "--m", "3", "--k", "3"][..],
        &["verify", "--claim", "lemma2", "--n", "5", "--k", "6"],
        &["verify", "--claim", "f-table"],
        &["verify", "--claim", "trajectory", "--family", "H:3,3"],
    ] {
        let o = piforge(args);
        assert!(o.status.success(), "{args:?}: {}", stdout(&o));
        assert!(stdout(&o).contains("pass"));
    }
}

#[test]
fn verify_json_and_failure_exit() {
    let o = piforge(&["verify", "--claim", "f-count", "--m", "2", "--k", "2", "--json"]);
    let line: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(line["passed"], true);
    let o = piforge(&["verify", "--claim", "h-improving-actions", "--n", "4", "--k", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!piforge(&["verify", "--claim", "no-such-claim"]).status.success());
}
