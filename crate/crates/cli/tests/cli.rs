//! End-to-end CLI behavior on the bundled synthetic pack.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pack_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../packs/synthetic")
}

fn tourney(runs: &Path, args: &[&str]) -> Output {
    let pack = pack_dir();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tourney"));
    cmd.env("RUST_LOG", "warn").args(args);
    if matches!(args.first(), Some(&"run") | Some(&"sweep")) {
        cmd.arg("--pack")
            .arg(&pack)
            .arg("--config")
            .arg(pack.join("run.toml"))
            .arg("--run-id")
            .arg("t");
    }
    cmd.arg("--runs-dir").arg(runs).output().expect("spawn tourney")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn score_row(report: &str) -> Vec<String> {
    report
        .lines()
        .find(|l| l.starts_with("| Score"))
        .expect("score row")
        .trim_matches('|')
        .split('|')
        .map(|c| c.trim().to_string())
        .collect()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Longest-reasoning baseline, cap 4 per problem, final subtask first:
/// sum-s3 tries c3 (drops the last value), c2 (32-bit overflow), then c0
/// (correct, 50); the fourth goes to sum-s2 on c3 (0). maxpair-s3 tries c4
/// (doubles the max), c2 and c7 (start from zero, fail on negatives), then c0
/// (correct, 40). mean-s3 tries c4 (first value, 0), c1 and c6 (truncation,
/// half credit: 25) and c3 (rounding, at most half). Total 115.
#[test]
fn longest_baseline_matches_hand_computed_total() {
    let runs = tempfile::tempdir().unwrap();
    let o = tourney(runs.path(), &["run", "--strategy", "longest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(runs.path().join("t/report.txt")).unwrap();
    assert_eq!(score_row(&report), ["Score", "40", "25", "50", "115"]);
    assert!(report.contains("Medal: none"));
    assert!(report.contains("| Submissions | 4       | 4    | 4   | 12    |"), "{report}");

    // The report command prints the stored report verbatim.
    let shown = tourney(runs.path(), &["report", "--run", "t"]);
    assert!(shown.status.success());
    assert_eq!(stdout(&shown), report);

    // Sweeps reuse the stored matrix and grades.
    let k = tourney(runs.path(), &["sweep", "--strategy", "longest", "--param", "k", "--values", "4,8"]);
    assert!(k.status.success(), "{}", stderr(&k));
    let tsv = fs::read_to_string(runs.path().join("t/sweep-k.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with("8\t115.0000\t"), "{tsv}");

    let nt = tourney(runs.path(), &["sweep", "--strategy", "longest", "--param", "num_tests", "--values", "1,8"]);
    assert!(nt.status.success(), "{}", stderr(&nt));
    let too_many = tourney(runs.path(), &["sweep", "--strategy", "longest", "--param", "num_tests", "--values", "99"]);
    assert!(!too_many.status.success());
    assert!(stderr(&too_many).contains("exceeds"));
}

#[test]
fn stage_order_and_resumability() {
    let staged = tempfile::tempdir().unwrap();
    // Forcing a stage whose inputs do not exist names the stage and fails.
    let early = tourney(staged.path(), &["run", "--stage", "rank", "--force"]);
    assert!(!early.status.success());
    assert!(stderr(&early).contains("rank"), "{}", stderr(&early));

    let missing = tourney(staged.path(), &["report", "--run", "t"]);
    assert!(!missing.status.success());

    // Stopping after clustering and resuming gives the same tree as one pass.
    assert!(tourney(staged.path(), &["run", "--stage", "cluster"]).status.success());
    let manifest = fs::read_to_string(staged.path().join("t/manifest.json")).unwrap();
    assert!(manifest.contains("\"rank\": \"pending\""), "{manifest}");
    assert!(tourney(staged.path(), &["run"]).status.success());

    let oneshot = tempfile::tempdir().unwrap();
    let o = tourney(oneshot.path(), &["run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Medal: gold"));
    assert_eq!(files(&staged.path().join("t")), files(&oneshot.path().join("t")));

    // A finished run is a no-op; a changed configuration under the same id is refused.
    assert!(tourney(oneshot.path(), &["run"]).status.success());
    let clash = tourney(oneshot.path(), &["run", "--seed", "9"]);
    assert!(!clash.status.success());
}
