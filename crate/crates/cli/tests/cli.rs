use std::path::Path;
use std::process::{Command, Output};

fn hypcoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypcoop")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows (header first) of a results file, metadata dropped.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let k = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[k].clone()).collect()
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# timestamp:"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn config_line(text: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix("# config: "))
        .unwrap()
        .to_string()
}

#[test]
fn degenerate_pair_fraction() {
    let o = hypcoop(&[
        "pair-fraction",
        "--lambda",
        "1",
        "--marks",
        "degenerate:mu=0.5",
        "--control",
        "full",
        "--mode",
        "analytic",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(
        r[0],
        ["quantity", "mean", "stderr", "ci_lo", "ci_hi", "replicates", "seed"]
    );
    let v: f64 = column(&r, "mean")[0].parse().unwrap();
    assert!((v - 0.6215).abs() < 5e-4);
}

#[test]
fn empty_control_and_bad_variance() {
    let o = hypcoop(&["pair-fraction", "--control", "empty"]);
    assert_eq!(column(&rows(&stdout(&o)), "mean"), ["0"]);
    let o = hypcoop(&["pair-fraction", "--marks", "beta:mean=0.5,var=0.4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hypcoop(&["pair-fraction", "--control", "sometimes"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn both_mode_reports_agreement() {
    let o = hypcoop(&["pair-fraction", "--mode", "both", "--reps", "60", "--window", "20x20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r[0].last().unwrap(), "agree");
    assert_eq!(column(&r, "agree")[0], "true");
    assert_eq!(column(&r, "replicates")[0], "60");
}

#[test]
fn sweep_rows_and_empty_list() {
    let o = hypcoop(&["sweep-variance", "--variances", "0.05", "--nodes", "12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(column(&r, "variance"), ["0.05"]);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"variances": []}"#).unwrap();
    let o = hypcoop(&["sweep-variance", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least one variance"));
}

#[test]
fn interference_values_and_conservation() {
    let o = hypcoop(&["interference", "--beta", "2.5", "--excl-radius", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let mean: Vec<f64> = column(&r, "mean").iter().map(|v| v.parse().unwrap()).collect();
    assert!((mean[0] - 4.757).abs() < 1e-3 && (mean[1] - 7.809).abs() < 2e-3);

    let o = hypcoop(&["interference", "--excl-radius", "0.5,1,2,3"]);
    let r = rows(&stdout(&o));
    let radius = column(&r, "excl_radius");
    let quantity = column(&r, "quantity");
    let mean: Vec<f64> = column(&r, "mean").iter().map(|v| v.parse().unwrap()).collect();
    for k in (0..mean.len()).step_by(3) {
        assert_eq!(&quantity[k..k + 3], ["singles", "pairs", "total"]);
        let rr: f64 = radius[k].parse().unwrap();
        let tail = 2.0 * std::f64::consts::PI * rr.powf(-0.5) / 0.5;
        assert!((mean[k] + mean[k + 1] - tail).abs() <= 1e-8 * tail);
        assert!((mean[k + 2] - tail).abs() <= 1e-12 * tail);
    }

    assert_eq!(hypcoop(&["interference", "--beta", "2"]).status.code(), Some(2));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn cluster_files() {
    let dir = tempfile::tempdir().unwrap();
    let two = write(dir.path(), "two.csv", "x,y,z\n0,0,1\n1,0,1\n");
    let o = hypcoop(&["cluster", "--input", &two]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), r#"{"pairs":[[0,1]],"singles":[],"n":2}"#);

    let three = write(dir.path(), "three.csv", "x,y,z\n0,0,1\n1,0,1\n2.5,0,1\n");
    let out = dir.path().join("partition.json");
    let o = hypcoop(&[
        "cluster",
        "--input",
        &three,
        "--control",
        "full",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("pair_fraction="));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["pairs"], serde_json::json!([[0, 1]]));
    assert_eq!(json["singles"], serde_json::json!([2]));

    let bad = write(dir.path(), "bad.csv", "x,y,z\n0,0,1\n1,0,0\n");
    let o = hypcoop(&["cluster", "--input", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"));

    let o = hypcoop(&["cluster", "--input", &two, "--boundary", "torus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hypcoop(&["cluster", "--input", &two, "--boundary", "torus", "--window", "1.5x1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn volume_methods() {
    let o = hypcoop(&[
        "volume",
        "--s",
        "1",
        "--z",
        "0.5",
        "--ztilde",
        "0.5",
        "--marks",
        "degenerate:mu=0.5",
    ]);
    let r = rows(&stdout(&o));
    let v: f64 = column(&r, "value")[0].parse().unwrap();
    assert!((v - 5.054815).abs() < 1e-6);

    let o = hypcoop(&[
        "volume",
        "--s",
        "0.8",
        "--z",
        "1.5",
        "--ztilde",
        "2",
        "--marks",
        "uniform:lo=1,hi=3",
        "--method",
        "all",
        "--samples",
        "200000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(column(&rows(&text), "method"), ["slice", "paper", "mc"]);
    let dev: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# note: slice_vs_paper_rel_deviation: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev < 1e-6);
    assert!(text.contains("# note: mc_within_3_stderr: true"));

    let o = hypcoop(&[
        "volume",
        "--s",
        "0",
        "--z",
        "1",
        "--ztilde",
        "1",
        "--marks",
        "uniform:lo=0.5,hi=2",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stalled_quadrature_exits_3() {
    let o = hypcoop(&[
        "volume",
        "--s",
        "0.3",
        "--z",
        "0.2",
        "--ztilde",
        "0.9",
        "--marks",
        "beta:mean=0.5,var=0.24",
        "--method",
        "paper",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"lamda": 1}"#);
    assert_eq!(hypcoop(&["pair-fraction", "--config", &bad]).status.code(), Some(2));

    let other = write(dir.path(), "vol.json", r#"{"command": "volume"}"#);
    assert_eq!(hypcoop(&["pair-fraction", "--config", &other]).status.code(), Some(2));

    let cfg = write(
        dir.path(),
        "pf.json",
        r#"{"marks": "uniform:lo=0.2,hi=0.8", "mode": "sim", "reps": 30, "seed": 5, "window": "15x15"}"#,
    );
    let o = hypcoop(&["pair-fraction", "--config", &cfg, "--reps", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let echoed: serde_json::Value = serde_json::from_str(&config_line(&text)).unwrap();
    assert_eq!(echoed["reps"], 20);
    assert_eq!(echoed["seed"], 5);
    assert_eq!(echoed["marks"], "uniform:lo=0.2,hi=0.8");

    // the echoed configuration reproduces the file
    let again = write(dir.path(), "again.json", &config_line(&text));
    let o2 = hypcoop(&["pair-fraction", "--config", &again]);
    assert_eq!(without_timestamp(&stdout(&o2)), without_timestamp(&text));
}

#[test]
fn worker_count_does_not_change_output() {
    let base = [
        "interference",
        "--mode",
        "sim",
        "--reps",
        "40",
        "--window",
        "12x12",
        "--marks",
        "beta:mean=0.5,var=0.05",
    ];
    let runs: Vec<String> = ["1", "3"]
        .iter()
        .map(|w| {
            let mut args = base.to_vec();
            args.extend(["--workers", w]);
            without_timestamp(&stdout(&hypcoop(&args)))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(hypcoop(&["pair-fraction", "--workers", "0"]).status.code(), Some(2));
}
