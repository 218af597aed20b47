use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zcp"))
        .args(args)
        .env("ZCP_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = zcp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(&["gen", "sd-r1", "--n", "50", "--seed", "7", "--out", p(&a)]);
    ok(&["gen", "sd-r1", "--n", "50", "--seed", "7", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(dir.path().join("a.json").exists());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 51);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = zcp(&["gen", "sd-r9", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(zcp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(zcp(&["bound", "--n-m", "5", "--n-theta", "1", "--n-out", "5"]).status.code(), Some(2));
}

#[test]
fn missing_data_exits_3() {
    let out = zcp(&["train", "--data", "/nonexistent/d.csv", "--out", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bound_reproduces_table_row() {
    let out = ok(&["bound", "--n-m", "77", "--n-theta", "2", "--confidence", "0.9"]);
    let row = out.lines().nth(1).unwrap();
    let cov: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((cov - 0.9504).abs() < 0.002, "{out}");
    assert!(out.contains("sensitivity n_m = 76"));

    // One variable, no outliers: (1 − ε)^n = 1 − confidence.
    let out = ok(&["bound", "--n-m", "100", "--n-theta", "1", "--confidence", "0.5"]);
    let cov: f64 = out.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((cov - 0.5f64.powf(0.01)).abs() < 1e-6);
}

#[test]
fn end_to_end_regression() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let all = d.join("all.csv");
    ok(&["gen", "sd-r1", "--n", "400", "--seed", "1", "--out", p(&all)]);
    ok(&["split", "--data", p(&all), "--fractions", "0.6,0.2,0.2", "--seed", "2", "--out-dir", p(d)]);
    let net = d.join("net.json");
    ok(&["train", "--data", p(&d.join("train.csv")), "--arch", "16,16", "--epochs", "300", "--out", p(&net)]);
    let net_text = fs::read_to_string(&net).unwrap();
    assert_eq!(net_text.matches("\"w\"").count(), 3);

    let zcp_model = d.join("zcp.json");
    let out = ok(&[
        "fit", "--net", p(&net), "--data", p(&d.join("cal.csv")), "--predictor", "zcp", "--cost", "rotated-interval",
        "--n-r", "4", "--audit", "--out", p(&zcp_model),
    ]);
    assert!(out.contains("audit: all 80 retained points covered"), "{out}");
    let ipm_model = d.join("ipm.json");
    ok(&["fit", "--net", p(&net), "--data", p(&d.join("cal.csv")), "--predictor", "ipm", "--cost", "rotated-interval", "--n-r", "4", "--out", p(&ipm_model)]);
    let cp_model = d.join("cp.json");
    ok(&["fit", "--net", p(&net), "--data", p(&d.join("cal.csv")), "--predictor", "cp", "--n-out", "2", "--out", p(&cp_model)]);
    assert!(fs::read_to_string(&cp_model).unwrap().starts_with("{\"kind\":\"cp\""));

    let report = d.join("report.csv");
    let svg = d.join("sets.svg");
    let out = ok(&[
        "eval", "--model", p(&zcp_model), "--data", p(&d.join("test.csv")), "--out", p(&report), "--baseline", p(&ipm_model),
        "--svg", p(&svg), "--svg-count", "7",
    ]);
    let ratio: f64 = out.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(ratio <= 1.0 + 1e-12, "{out}");
    let row = fs::read_to_string(&report).unwrap();
    let coverage: f64 = row.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&coverage));
    assert_eq!(fs::read_to_string(&svg).unwrap().matches("<polygon").count(), 7);

    // Classification costs on regression data are rejected.
    let out = zcp(&["fit", "--net", p(&net), "--data", p(&d.join("cal.csv")), "--cost", "score", "--out", p(&d.join("bad.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_emits_three_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let args = [
        "sweep", "--dataset", "sd-r2", "--n-train", "200", "--n-cal", "40", "--n-test", "60", "--arch", "8,8", "--epochs", "200",
        "--max-out", "2", "--n-r", "3", "--out", p(&out),
    ];
    ok(&args);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    for kind in ["zcp", "ipm", "cp"] {
        let c: Vec<f64> = rows
            .iter()
            .filter(|r| r.starts_with(&format!("{kind},")))
            .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        assert!(c.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{kind}: {c:?}");
    }
    let again = dir.path().join("again.csv");
    let mut args2 = args;
    *args2.last_mut().unwrap() = p(&again);
    ok(&args2);
    let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect::<Vec<_>>();
    assert_eq!(strip(&text), strip(&fs::read_to_string(&again).unwrap()));
}
