use std::path::Path;
use std::process::{Command, Output};

fn blockmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockmg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_forest_reports_level_counts() {
    let o = blockmg(&["check-forest", "--preset", "poisson-fig6", "--ranks", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("level 2: 56"), "{text}");
    assert!(text.contains("level 3: 64"), "{text}");
    assert!(text.contains("balance violations: 0"));
    assert!(text.contains("rank 7: 15 blocks"));

    let o = blockmg(&["check-forest", "--preset", "fig1"]);
    let text = stdout(&o);
    assert!(text.contains("level 1: 12") && text.contains("level 2: 12") && text.contains("level 3: 16"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flat.json", r#"{"dim": 2, "root_dims": [2, 2], "block_size": 4}"#);
    let o = blockmg(&["check-forest", "--config", &cfg]);
    assert!(stdout(&o).contains("level 0: 4"));
}

#[test]
fn comm_volume_csv() {
    let o = blockmg(&["comm-volume", "--preset", "fig2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("mg_level,case,messages,scalars,bytes\n"));
    assert!(text.contains("0,c2f,2,8,64"), "{text}");
    assert!(text.contains("0,f2c,2,4,32"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cube.json", r#"{"dim": 3, "root_dims": [2, 2, 2], "block_size": 8}"#);
    let o = blockmg(&["comm-volume", "--config", &cfg]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows.iter().all(|r| r.contains("same-level")));
}

#[test]
fn solve_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = blockmg(&[
        "solve", "--preset", "fig1", "--block-size", "8", "--scheme", "linear", "--max-cycles", "6",
        "--out", out.to_str().unwrap(), "--threads", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("scheme            linear"));
    assert!(text.contains("cycles            6"));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 8);
    assert!(std::fs::read_to_string(out.join("volume.csv")).unwrap().contains("c2f"));
    assert!(out.join("report.txt").exists());
}

#[test]
fn zero_problem_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "zero.json",
        r#"{"dim": 2, "root_dims": [2, 1], "domain": {"lo": [0, 0], "hi": [2, 1]},
            "refinement": [{"type": "refine_region", "lo": [0, 0], "hi": [1, 1]}],
            "block_size": 4, "problem": "zero"}"#,
    );
    let o = blockmg(&["solve", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("cycles            0"), "{text}");
    assert!(text.contains("l2 error (volume) 0.000000e0"), "{text}");
}

#[test]
fn convergence_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = blockmg(&[
            "convergence", "--preset", "fig1", "--sizes", "4,8", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(std::fs::read(out.join("convergence.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("block_size,scheme,l2_error_volume_weighted,l2_error_plain,kappa,cycles,residual_final")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for (first, second) in rows[..3].iter().zip(&rows[3..]) {
        assert_eq!(first[4], "");
        let e1: f64 = first[2].parse().unwrap();
        let e2: f64 = second[2].parse().unwrap();
        let kappa: f64 = second[4].parse().unwrap();
        assert!((kappa - e2 / e1).abs() < 1e-5 * kappa, "{first:?} {second:?}");
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"dim": 4, "root_dims": [1], "block_size": 4}"#);
    let o = blockmg(&["check-forest", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dim"), "{}", stderr(&o));

    let broken = write(dir.path(), "broken.json", "{\n  \"dim\": 2,\n  \"root_dims\": [1, 1],,\n}");
    let o = blockmg(&["check-forest", "--config", &broken]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    for args in [
        vec!["solve"],
        vec!["solve", "--preset", "nope"],
        vec!["solve", "--preset", "fig2", "--block-size", "5"],
        vec!["solve", "--preset", "fig2", "--scheme", "cubic"],
        vec!["solve", "--preset", "fig2", "--bogus"],
        vec!["convergence", "--preset", "fig2", "--sizes", "8,12"],
    ] {
        let o = blockmg(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(blockmg(&["--help"]).status.code(), Some(0));
}
