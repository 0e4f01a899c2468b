//! The `gmdkp` executable end to end.

use std::process::Command;

fn gmdkp(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gmdkp"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn field<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(',')))
        .unwrap_or_else(|| panic!("no `{key}` in\n{stdout}"))
}

#[test]
fn generate_solve_and_refuse_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.gmdkp");
    let path = path.to_str().unwrap();
    let (ok, out, _) = gmdkp(&[
        "gen", "--n", "50", "--alpha", "1", "--seed", "1", "--out", path,
    ]);
    assert!(ok, "{out}");
    assert_eq!(field(&out, "k"), "50");

    let (ok, out, err) = gmdkp(&["solve", "--engine", "bp", "--warm-start", path]);
    assert!(ok, "{err}");
    assert_eq!(field(&out, "feasible"), "true");
    let profit: f64 = field(&out, "profit").parse().unwrap();
    let m: f64 = field(&out, "scaled_m").parse().unwrap();
    assert!((m - (profit - 25.0) / 50f64.sqrt()).abs() < 1e-12);
    assert!(field(&out, "sweeps_total").parse::<usize>().unwrap() > 0);

    let (ok, _, err) = gmdkp(&["exact", path]);
    assert!(!ok);
    assert!(err.contains("budget"), "{err}");
}

#[test]
fn theory_reports_m_opt_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let (ok, out, err) = gmdkp(&[
        "theory",
        "--alpha",
        "0.25",
        "--xmax",
        "1",
        "--curve",
        curve.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    let m: f64 = field(&out, "m_opt").parse().unwrap();
    assert!(m > 0.0);
    let csv = std::fs::read_to_string(curve).unwrap();
    assert!(csv.lines().count() > 2);
}

#[test]
fn bad_usage_fails_cleanly() {
    let (ok, _, err) = gmdkp(&["solve", "--engine", "simplex"]);
    assert!(!ok);
    assert!(err.contains("simplex"), "{err}");
    let (ok, _, err) = gmdkp(&["gen", "--n", "0"]);
    assert!(!ok);
    assert!(err.starts_with("error:"), "{err}");
}
