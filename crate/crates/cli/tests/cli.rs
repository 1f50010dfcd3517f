use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

fn mtmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mtmc(args);
    assert!(
        out.status.success(),
        "mtmc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn avg_idf1(table: &str) -> f64 {
    let row = table.lines().find(|l| l.starts_with("Avg")).expect("Avg row");
    row.split_whitespace().nth(1).unwrap().parse().unwrap()
}

fn simgen(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["simgen", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("pipeline.toml").to_str().unwrap().to_string()
}

fn full_chain(root: &Path) {
    let cfg = simgen(&root.join("scenario"), &["--seed", "11", "--parked", "2", "--clutter", "2"]);
    let out = root.join("out");
    let out = s(&out);
    ok(&["track", "--config", &cfg, "--out", out]);
    ok(&["train", "--config", &cfg, "--out", out, "--epochs", "20"]);
    ok(&["reid", "--config", &cfg, "--out", out]);
    ok(&["eval", "--config", &cfg, "--out", out, "--mode", "sct"]);
    ok(&["eval", "--config", &cfg, "--out", out, "--mode", "mtmc"]);
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn full_chain_produces_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    full_chain(dir.path());
    let out = dir.path().join("out");
    for f in [
        "tracks/c001.txt",
        "tracks/c003.txt",
        "model.txt",
        "loss.csv",
        "mtmc.txt",
        "report_sct.txt",
        "report_sct_table.txt",
        "report_mtmc.txt",
        "report_mtmc_table.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let loss = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 21, "header plus one row per epoch");
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_chain(a.path());
    full_chain(b.path());
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.len() > 20);
    assert_eq!(ta.len(), tb.len());
    for ((na, da), (nb, db)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs between runs");
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let out = mtmc(&["track", "--config", "/nonexistent/pipeline.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let out = mtmc(&["track"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(mtmc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mtmc(&["track", "--tracker", "nope"]).status.code(), Some(1));
    assert_eq!(mtmc(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simgen(dir.path(), &["--cameras", "1", "--train-vehicles", "4"]);
    let text = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, text.replace("tracker = \"deepsort\"", "tracker = \"kcf\"")).unwrap();
    let out = mtmc(&["track", "--config", &cfg, "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_detection_row_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simgen(dir.path(), &["--cameras", "1", "--train-vehicles", "4"]);
    let det = dir.path().join("c001/det.txt");
    let mut text = std::fs::read_to_string(&det).unwrap();
    text.push_str("7,-1,not-a-number,1,2,3,0.5,-1,-1\n");
    std::fs::write(&det, text).unwrap();
    let out = mtmc(&["track", "--config", &cfg, "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn empty_detection_file_gives_empty_tracks() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("det.txt"), "").unwrap();
    let cfg = dir.path().join("pipeline.toml");
    std::fs::write(
        &cfg,
        "[[cameras]]\nid = \"c001\"\ndetections = \"det.txt\"\n\n[roi]\nenabled = false\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["track", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(std::fs::read_to_string(out.join("tracks/c001.txt")).unwrap(), "");
}

#[test]
fn ground_truth_against_itself_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    simgen(dir.path(), &["--cameras", "2", "--train-vehicles", "4"]);
    let gt = dir.path().join("c001/gt.txt");
    let table = ok(&["eval", "--gt", s(&gt), "--pred", s(&gt), "--out", s(&dir.path().join("out"))]);
    assert_eq!(avg_idf1(&table), 1.0);
    let global = dir.path().join("gt_mtmc.txt");
    let table = ok(&[
        "eval",
        "--mode",
        "mtmc",
        "--gt",
        s(&global),
        "--pred",
        s(&global),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(avg_idf1(&table), 1.0);
}

#[test]
fn zero_max_dist_keeps_every_track_separate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simgen(dir.path(), &["--seed", "3", "--train-vehicles", "6"]);
    let out = dir.path().join("out");
    ok(&["track", "--config", &cfg, "--out", s(&out)]);
    ok(&["train", "--config", &cfg, "--out", s(&out), "--epochs", "5"]);
    let line = ok(&["reid", "--config", &cfg, "--out", s(&out), "--max-dist", "0"]);
    let nums: Vec<usize> = line.split_whitespace().filter_map(|w| w.parse().ok()).collect();
    assert_eq!(nums[0], nums[1], "{line}");
    assert!(nums[0] > 0);
}

#[test]
fn single_camera_ids_are_renumbered_contiguously() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simgen(
        dir.path(),
        &["--cameras", "1", "--parked", "3", "--clutter", "3", "--train-vehicles", "6"],
    );
    let out = dir.path().join("out");
    ok(&["track", "--config", &cfg, "--out", s(&out)]);
    ok(&["train", "--config", &cfg, "--out", s(&out), "--epochs", "5"]);
    ok(&["reid", "--config", &cfg, "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("mtmc.txt")).unwrap();
    let ids: BTreeSet<i64> = text
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    let tracks = std::fs::read_to_string(out.join("tracks/c001.txt")).unwrap();
    let track_ids: BTreeSet<i64> = tracks
        .lines()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ids.len(), track_ids.len());
    assert_eq!(ids, (1..=ids.len() as i64).collect());
}

#[test]
fn sort_tracks_clean_single_camera_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simgen(
        dir.path(),
        &["--seed", "9", "--cameras", "1", "--miss-rate", "0", "--train-vehicles", "4"],
    );
    let out = dir.path().join("out");
    ok(&["track", "--config", &cfg, "--out", s(&out), "--tracker", "sort"]);
    let table = ok(&["eval", "--config", &cfg, "--out", s(&out)]);
    assert!(avg_idf1(&table) >= 0.95, "{table}");
}

#[test]
fn training_needs_two_identities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simgen(dir.path(), &["--cameras", "1", "--vehicles", "1", "--train-vehicles", "1"]);
    let out = mtmc(&["train", "--config", &cfg, "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
