use std::path::Path;
use std::process::{Command, Output};

use ddps::cli::{ANALYSIS_HEADER, RATE_HEADER};
use ddps::solver::{TraceRow, NETWORK_ROW, TRACE_HEADER};
use ddps::{DirectedGraph, SolverTrace};

fn ddps(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddps"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Value printed after `label: ` in a summary.
fn field(text: &str, label: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{label}: ")))
        .and_then(|v| v.split_whitespace().next())
        .unwrap_or_else(|| panic!("no {label:?} in {text}"))
        .parse()
        .unwrap()
}

const CLIPPED_MEDIAN: &str = "\
# three anchors on five agents, X = [2, 10]
graph = generate
nodes = 5
problem = sum_of_distances
anchors = 0:0; 1:1; 2:5
constraint = box
box_lower = 2
box_upper = 10
epsilon = 0.1
iters = 100000
record_every = 100
seed = 7
output = cm.csv
";

#[test]
fn gen_graph_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddps(
        &["gen-graph", "--nodes", "10", "--edge-prob", "0.15", "--seed", "42", "--out", "g.txt"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("n = 10"));
    assert!(stdout(&out).contains("strongly connected = true"));
    let loaded = DirectedGraph::load(dir.path().join("g.txt")).unwrap();
    let expected = DirectedGraph::random_strongly_connected(10, 0.15, 42).unwrap();
    assert_eq!(loaded, expected);
    assert!(loaded.is_strongly_connected());
}

#[test]
fn gen_graph_single_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddps(
        &["gen-graph", "--nodes", "1", "--edge-prob", "0", "--seed", "0", "--out", "g.txt"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("g.txt")).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["n 1"]);
}

#[test]
fn run_clipped_median_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cm.cfg"), CLIPPED_MEDIAN).unwrap();
    let out = ddps(&["run", "--config", "cm.cfg"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.contains("(clipped median)"));
    assert_eq!(field(&summary, "f*"), 6.0);
    assert!(field(&summary, "final gap") <= 1e-2, "{summary}");
    assert!(field(&summary, "final max residual") <= 1e-2, "{summary}");
    assert!(summary.contains("wall time"));

    let first = std::fs::read(dir.path().join("cm.csv")).unwrap();
    let out = ddps(&["run", "--config", "cm.cfg", "--out", "again.csv"], dir.path());
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(dir.path().join("again.csv")).unwrap());

    // Header and row count: (K / record_every + 1) rows per series.
    let trace = SolverTrace::load(dir.path().join("cm.csv")).unwrap();
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
    assert_eq!(trace.network_rows().count(), 1001);
    for agent in 0..5 {
        assert_eq!(trace.agent_rows(agent).count(), 1001);
    }

    let out = ddps(&["rate", "--trace", "cm.csv", "--out", "rate.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("slope: "));
    let rate = std::fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    assert_eq!(rate.lines().next().unwrap(), RATE_HEADER.join(","));
}

#[test]
fn overrides_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a.cfg", 1), ("b.cfg", 2)] {
        let text = CLIPPED_MEDIAN
            .replace("seed = 7", &format!("seed = {seed}"))
            .replace("output = cm.csv", &format!("output = {name}.csv"));
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let out = ddps(
        &[
            "run", "--config", "a.cfg", "--config", "b.cfg", "--jobs", "2", "--iters", "500",
            "--record-every", "50",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["a.cfg.csv", "b.cfg.csv"] {
        let trace = SolverTrace::load(dir.path().join(name)).unwrap();
        let ks: Vec<usize> = trace.network_rows().map(|r| r.k).collect();
        assert_eq!(ks.len(), 11);
        assert_eq!(*ks.last().unwrap(), 500);
    }
    let single = ddps(
        &["run", "--config", "b.cfg", "--iters", "500", "--record-every", "50", "--out", "b2.csv"],
        dir.path(),
    );
    assert!(single.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("b.cfg.csv")).unwrap(),
        std::fs::read(dir.path().join("b2.csv")).unwrap()
    );
}

#[test]
fn config_error_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "iters = 10\nwat = 3\n").unwrap();
    let out = ddps(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = ddps(&["run", "--config", "missing.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_abort_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "\
graph = generate
nodes = 2
problem = sum_of_distances
anchors = 0:1e308,1e308
constraint = none
iters = 10
";
    std::fs::write(dir.path().join("inf.cfg"), cfg).unwrap();
    let out = ddps(&["run", "--config", "inf.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn analyze_matrix_single_node() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.txt"), "n 1\n").unwrap();
    let out = ddps(
        &["analyze-matrix", "--graph", "g.txt", "--epsilon", "0.1", "--k-max", "200", "--out", "m.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(dir.path().join("m.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ANALYSIS_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 201);
    let gamma: f64 = rows[0][2].parse().unwrap();
    assert!((gamma - 0.9).abs() < 1e-6);
    assert_eq!(&rows[0][5], "NaN");
}

#[test]
fn analyze_matrix_five_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let g = DirectedGraph::random_strongly_connected(5, 0.15, 7).unwrap();
    g.save(dir.path().join("g.txt")).unwrap();
    let out = ddps(
        &["analyze-matrix", "--graph", "g.txt", "--epsilon", "0.001", "--k-max", "20000", "--out", "m.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(field(&summary, "bottom block max at k = 20000") < 1e-6, "{summary}");
    let mut rdr = csv::Reader::from_path(dir.path().join("m.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let gamma: f64 = rows[0][2].parse().unwrap();
    let err = |k: usize| rows[k][1].parse::<f64>().unwrap();
    assert!(gamma > 0.0 && gamma < 1.0);
    assert!(err(20000) < err(1));
    let upsilon: f64 = rows[0][5].parse().unwrap();
    assert!(upsilon > 0.0);
}

#[test]
fn analyze_matrix_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.txt"), "n 3\n0 1\n1 2\n").unwrap();
    let out = ddps(&["analyze-matrix", "--graph", "g.txt", "--out", "m.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("strongly connected"));

    std::fs::write(dir.path().join("c.txt"), "n 3\n0 1\n1 2\n2 0\n").unwrap();
    let out = ddps(
        &["analyze-matrix", "--graph", "c.txt", "--epsilon", "0.9", "--out", "m.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

fn network_row(k: usize, gap: f64) -> TraceRow {
    TraceRow {
        k,
        agent: NETWORK_ROW,
        x_residual: 0.0,
        consensus_x: 0.0,
        y_norm: 0.0,
        g_total: 0.0,
        f_zbar: gap,
        f_best: gap,
        gap,
    }
}

#[test]
fn rate_on_synthetic_traces() {
    let dir = tempfile::tempdir().unwrap();
    let exact = SolverTrace {
        rows: (0..=200)
            .map(|i| {
                let k = 10 * i;
                let kf = k as f64;
                network_row(k, if k < 2 { f64::INFINITY } else { 0.3 * kf.ln() / kf.sqrt() })
            })
            .collect(),
    };
    exact.save(dir.path().join("exact.csv")).unwrap();
    let out = ddps(&["rate", "--trace", "exact.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!((field(&stdout(&out), "slope") - 1.0).abs() < 1e-6);

    let short = SolverTrace {
        rows: (2..40).map(|k| network_row(k, 1.0 / k as f64)).collect(),
    };
    short.save(dir.path().join("short.csv")).unwrap();
    let out = ddps(&["rate", "--trace", "short.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("insufficient rows"), "{}", stderr(&out));

    std::fs::write(dir.path().join("junk.csv"), "k,agent\n1,2\n").unwrap();
    let out = ddps(&["rate", "--trace", "junk.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
