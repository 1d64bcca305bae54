use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use treegraft::experiment::records_from_csv;

const TEN_POINTS_NAMES: &str = "+, -.\n\nA: continuous.\nB: continuous.\n";
const TEN_POINTS_DATA: &str = "1,0.5,+\n3,0.2,+\n4,0.8,+\n6,6,-\n7,8,-\n8,7,-\n9,9,-\n7,9,-\n8,3,-\n9,5,-\n";
const TEN_POINTS_TREE: &str = "test A <= 5\n  leaf + [+=3,-=0]\n  leaf - [+=0,-=7]\n";

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn treegraft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treegraft")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = treegraft(args);
    assert!(out.status.success(), "{args:?} failed: {}", stderr(&out));
    stdout(&out)
}

fn node_count(tree_file: &Path) -> usize {
    fs::read_to_string(tree_file).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture { dir: TempDir::new().unwrap() };
        f.write("f.names", TEN_POINTS_NAMES);
        f.write("f.data", TEN_POINTS_DATA);
        f.write("f.tree", TEN_POINTS_TREE);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn graft(&self, tree: &str, out: &str) -> String {
        ok(&[
            "graft",
            "--tree",
            &self.arg(tree),
            "--names",
            &self.arg("f.names"),
            "--data",
            &self.arg("f.data"),
            "--out",
            &self.arg(out),
        ])
    }
}

fn iris(file: &str) -> String {
    data_dir().join(file).to_str().unwrap().to_string()
}

#[test]
fn train_iris_writes_both_trees() {
    let f = Fixture::new();
    let out = ok(&[
        "train",
        "--names",
        &iris("iris.names"),
        "--data",
        &iris("iris.data"),
        "--out-unpruned",
        &f.arg("u.tree"),
        "--out-pruned",
        &f.arg("p.tree"),
    ]);
    let (u, p) = (node_count(&f.path("u.tree")), node_count(&f.path("p.tree")));
    assert!(u >= p && p >= 1);
    assert!(out.contains(&format!("unpruned: {u} nodes")), "{out}");
    assert!(out.contains(&format!("pruned: {p} nodes")), "{out}");
}

#[test]
fn missing_data_file_names_the_path() {
    let f = Fixture::new();
    let missing = f.arg("nowhere.data");
    let out = treegraft(&[
        "train",
        "--names",
        &f.arg("f.names"),
        "--data",
        &missing,
        "--out-unpruned",
        &f.arg("u.tree"),
        "--out-pruned",
        &f.arg("p.tree"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(&missing), "{}", stderr(&out));
}

#[test]
fn malformed_names_reports_line() {
    let f = Fixture::new();
    f.write("bad.names", "+, -.\n\nA: continuous.\nA: continuous.\n");
    let out = treegraft(&[
        "train",
        "--names",
        &f.arg("bad.names"),
        "--data",
        &f.arg("f.data"),
        "--out-unpruned",
        &f.arg("u.tree"),
        "--out-pruned",
        &f.arg("p.tree"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("bad.names") && err.contains("line 4"), "{err}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(treegraft(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(treegraft(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(treegraft(&["experiment", "--names", "x"]).status.code(), Some(1));
    let help = treegraft(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("experiment"));
}

#[test]
fn ten_points_train_and_graft() {
    let f = Fixture::new();
    ok(&[
        "train",
        "--names",
        &f.arg("f.names"),
        "--data",
        &f.arg("f.data"),
        "--out-unpruned",
        &f.arg("u.tree"),
        "--out-pruned",
        &f.arg("p.tree"),
    ]);
    assert_eq!(node_count(&f.path("u.tree")), 3);

    let report = f.graft("f.tree", "g.tree");
    assert_eq!(node_count(&f.path("g.tree")), 5);
    assert!(report.contains("grafted 1 rejected 1"), "{report}");
    assert!(report.contains("nodes: 3 -> 5"), "{report}");
    assert_eq!(
        f.read("g.tree"),
        "test A <= 5\n  test B <= 3\n    leaf + [+=3,-=0]\n    leaf - [+=0,-=0] grafted\n  leaf - [+=0,-=7]\n"
    );

    // Running again on the grafted tree is a fixpoint.
    let again = f.graft("g.tree", "g2.tree");
    assert!(again.contains("grafted 0 "), "{again}");
    assert_eq!(f.read("g2.tree"), f.read("g.tree"));
}

#[test]
fn graft_reads_csv_and_writes_report_file() {
    let f = Fixture::new();
    let csv: String = std::iter::once("A,B,class\n".to_string())
        .chain(TEN_POINTS_DATA.lines().map(|l| format!("{l}\n")))
        .collect();
    f.write("f.csv", &csv);
    let out = ok(&[
        "graft",
        "--tree",
        &f.arg("f.tree"),
        "--names",
        &f.arg("f.names"),
        "--csv",
        &f.arg("f.csv"),
        "--out",
        &f.arg("g.tree"),
        "--report",
        &f.arg("r.txt"),
    ]);
    let report = f.read("r.txt");
    assert!(out.starts_with(&report), "{out}");
    assert!(report.contains("leaf 0 [+] evidence 0.8000: grafted B > 3 -> - (evidence 0.8750 from 6/6 at root)"), "{report}");
    assert!(report.contains("leaf 1 [-] evidence 0.8889: rejected"), "{report}");
    assert_eq!(node_count(&f.path("g.tree")), 5);
}

#[test]
fn all_discrete_tree_is_unchanged() {
    let f = Fixture::new();
    f.write("d.names", "p, n.\n\nx: a, b.\ny: a, b, c.\n");
    let rows: String = (0..40)
        .map(|i| {
            let x = if i % 3 == 0 { "b" } else { "a" };
            let y = ["a", "b", "c"][i % 3];
            let c = if x == "a" && i % 5 != 0 { "p" } else { "n" };
            format!("{x},{y},{c}\n")
        })
        .collect();
    f.write("d.data", &rows);
    ok(&[
        "train",
        "--names",
        &f.arg("d.names"),
        "--data",
        &f.arg("d.data"),
        "--out-unpruned",
        &f.arg("u.tree"),
        "--out-pruned",
        &f.arg("p.tree"),
    ]);
    let report = ok(&[
        "graft",
        "--tree",
        &f.arg("u.tree"),
        "--names",
        &f.arg("d.names"),
        "--data",
        &f.arg("d.data"),
        "--out",
        &f.arg("g.tree"),
    ]);
    assert!(report.contains("grafted 0 "), "{report}");
    assert_eq!(f.read("g.tree"), f.read("u.tree"));
}

#[test]
fn tree_schema_mismatch_is_a_data_error() {
    let f = Fixture::new();
    let out = treegraft(&[
        "graft",
        "--tree",
        &f.arg("f.tree"),
        "--names",
        &iris("iris.names"),
        "--data",
        &iris("iris.data"),
        "--out",
        &f.arg("g.tree"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("f.tree"), "{}", stderr(&out));
}

#[test]
fn classify_labeled_and_unlabeled() {
    let f = Fixture::new();
    f.graft("f.tree", "g.tree");
    f.write("q.data", "2,9\n");
    let out = ok(&["classify", "--tree", &f.arg("g.tree"), "--names", &f.arg("f.names"), "--input", &f.arg("q.data")]);
    assert_eq!(out, "-\n");
    let out = ok(&["classify", "--tree", &f.arg("f.tree"), "--names", &f.arg("f.names"), "--input", &f.arg("q.data")]);
    assert_eq!(out, "+\n");

    // The training set scores the same under the baseline and grafted trees.
    let base = ok(&["classify", "--tree", &f.arg("f.tree"), "--names", &f.arg("f.names"), "--input", &f.arg("f.data")]);
    let grafted = ok(&["classify", "--tree", &f.arg("g.tree"), "--names", &f.arg("f.names"), "--input", &f.arg("f.data")]);
    assert_eq!(base, grafted);
    assert!(base.ends_with("accuracy: 100.00% (10/10)\n"), "{base}");
}

#[test]
fn classify_csv_input() {
    let f = Fixture::new();
    f.write("q.csv", "A,B,class\n2,9,-\n2,1,+\n");
    let out = ok(&["classify", "--tree", &f.arg("f.tree"), "--names", &f.arg("f.names"), "--input", &f.arg("q.csv")]);
    assert_eq!(out, "+\n+\naccuracy: 50.00% (1/2)\n");
}

fn experiment(f: &Fixture, trials: &str, suffix: &str, format: &str) -> Output {
    treegraft(&[
        "experiment",
        "--names",
        &iris("iris.names"),
        "--data",
        &iris("iris.data"),
        "--trials",
        trials,
        "--records",
        &f.arg(&format!("records{suffix}.csv")),
        "--tables",
        &f.arg(&format!("tables{suffix}.txt")),
        "--format",
        format,
    ])
}

#[test]
fn experiment_two_trials_and_determinism() {
    let f = Fixture::new();
    for suffix in ["a", "b"] {
        let out = experiment(&f, "2", suffix, "csv");
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let records = f.read("recordsa.csv");
    assert_eq!(records.lines().count(), 3);
    assert!(records.lines().skip(1).all(|l| l.starts_with("iris,")));
    let tables = f.read("tablesa.txt");
    // One header plus one row for each of the four tables.
    assert_eq!(tables.lines().count(), 5);
    assert_eq!(f.read("recordsb.csv"), records);
    assert_eq!(f.read("tablesb.txt"), tables);

    let text = experiment(&f, "2", "c", "text");
    assert!(text.status.success());
    let report = ok(&["report", "--records", &f.arg("recordsa.csv")]);
    assert_eq!(report, f.read("tablesc.txt"));
}

#[test]
fn experiment_rejects_single_trial() {
    let f = Fixture::new();
    let out = experiment(&f, "1", "x", "text");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn iris_hundred_trials_pruned_grafted_accuracy() {
    let f = Fixture::new();
    let out = experiment(&f, "100", "h", "csv");
    assert!(out.status.success(), "{}", stderr(&out));
    let records = records_from_csv(&f.read("recordsh.csv")).unwrap();
    assert_eq!(records.len(), 100);
    let mean = records.iter().map(|r| r.accuracy.pruned_grafted).sum::<f64>() / 100.0;
    assert!((mean - 95.7).abs() <= 4.0, "mean {mean}");
}
