use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn diracsea(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diracsea"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DIRACSEA_OUT")
        .output()
        .expect("binary runs")
}

/// The run directory is the first line of stdout.
fn run_dir(output: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&output.stdout);
    PathBuf::from(stdout.lines().next().expect("run directory on stdout"))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_writes_data_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diracsea(tmp.path(), &["spectrum", "--n", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.starts_with(tmp.path().join("spectrum")));
    let csv = fs::read_to_string(dir.join("eigen.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "index,energy,momentum_index,spin_branch");
    assert_eq!(csv.lines().count(), 9);
    let meta = json(&dir.join("meta.json"));
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["spec_hash"].as_str().unwrap().len(), 16);
    assert_eq!(meta["config"]["spec"]["n_per_side"], 4);
    assert_eq!(meta["files"][0], "eigen.csv");
}

#[test]
fn data_files_are_identical_across_reruns_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["bell", "--state", "packet", "--n-traj", "300", "--t-max", "0.4", "--dt", "0.05", "--seed", "5"];
    let read = |extra: &[&str], root: &str| {
        let all: Vec<&str> = args.iter().chain(extra).copied().collect();
        let out = diracsea(&tmp.path().join(root), &all);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = run_dir(&out);
        (fs::read(dir.join("trajectories.csv")).unwrap(), fs::read(dir.join("diagnostics.json")).unwrap())
    };
    let a = read(&["--workers", "1"], "a");
    let b = read(&["--workers", "4"], "b");
    let c = read(&["--workers", "1"], "c");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn sea_process_never_jumps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diracsea(tmp.path(), &["bell", "--state", "sea", "--n-traj", "500", "--n", "4"]);
    assert!(out.status.success());
    let diag = json(&run_dir(&out).join("diagnostics.json"));
    assert_eq!(diag["jumps"], 0);
    assert_eq!(diag["charge_violations"], 0);
}

#[test]
fn sea_state_file_feeds_born() {
    let tmp = tempfile::tempdir().unwrap();
    let sea = diracsea(tmp.path(), &["sea", "--n", "3"]);
    assert!(sea.status.success());
    let state = run_dir(&sea).join("state.bin");
    let by_file = diracsea(tmp.path(), &["born", "--n", "3", "--state", state.to_str().unwrap(), "--measure", "obv"]);
    assert!(by_file.status.success(), "{}", String::from_utf8_lossy(&by_file.stderr));
    let csv = fs::read_to_string(run_dir(&by_file).join("born.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "sea is a single obvious configuration:\n{csv}");

    // a file written for another lattice is rejected
    let wrong = diracsea(tmp.path(), &["born", "--n", "4", "--state", state.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn json_format_and_env_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_diracsea"))
        .args(["study", "sea_gallery", "--samples", "50", "--format", "json"])
        .env("DIRACSEA_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.starts_with(tmp.path().join("sea_gallery")));
    let rows = json(&dir.join("data.json"));
    assert_eq!(rows.as_array().unwrap().len(), 50);
    assert!(rows[0].get("q0").is_some());
}

#[test]
fn config_file_is_read_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "n = 3\nmass = 2.0\n").unwrap();
    let out = diracsea(tmp.path(), &["spectrum", "--config", cfg.to_str().unwrap(), "--mass", "0.5"]);
    assert!(out.status.success());
    let meta = json(&run_dir(&out).join("meta.json"));
    assert_eq!(meta["config"]["spec"]["n_per_side"], 3);
    assert_eq!(meta["config"]["spec"]["mass"], 0.5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| diracsea(tmp.path(), args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["--version"]), Some(0));
    assert_eq!(code(&["spectrum", "--bogus"]), Some(1));
    assert_eq!(code(&["sea", "--n", "11"]), Some(1));
    assert_eq!(code(&["sea", "--mass", "0"]), Some(1));
    assert_eq!(code(&["study", "unknown"]), Some(1));
    assert_eq!(code(&["born", "--measure", "sideways"]), Some(1));
    assert_eq!(code(&["evolve", "--method", "magic"]), Some(1));
    assert_eq!(code(&["bell", "--probe", "5"]), Some(1));
    assert_eq!(code(&["selftest", "--n", "3"]), Some(0));

    let stderr = String::from_utf8_lossy(&diracsea(tmp.path(), &["spectrum", "--bogus"]).stderr).to_string();
    assert!(stderr.contains("--bogus"));
}

#[test]
fn studies_run_on_small_specs() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["study", "charge_fluctuation", "--sweep", "single", "--n", "4"],
        vec!["study", "locality", "--n", "6", "--time", "0.5"],
        vec!["study", "pair_creation", "--n", "3", "--steps", "4"],
        vec!["evolve", "--state", "level", "--n", "3", "--method", "dense"],
    ] {
        let out = diracsea(tmp.path(), &args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let meta = json(&run_dir(&out).join("meta.json"));
        assert_eq!(meta["status"], "ok", "{args:?}");
    }
}
