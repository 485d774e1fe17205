use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convex-mlr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["fit"]).status.code(), Some(1));
    assert_eq!(
        run(&["phase", "--d", "3", "--alpha", "0.9", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        run(&["solve", s(&missing), "--out", s(&out)]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a_1,a_2,b\n0,0,1\n").unwrap();
    let o = run(&["solve", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn gen_certify_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let betas = dir.path().join("b.csv");
    let o = run(&[
        "gen",
        "--d",
        "4",
        "--alpha",
        "0.1",
        "--seed",
        "3",
        "--out",
        s(&data),
        "--betas-out",
        s(&betas),
    ]);
    assert!(o.status.success());

    let o = run(&["certify", s(&data), "--betas", s(&betas)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["certifies"], true);

    let out = dir.path().join("fit");
    let o = run(&["fit", s(&data), "--k", "3", "--out", s(&out)]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
}

#[test]
fn orthogonal_row_exits_three_with_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(
        &data,
        "a_1,a_2,b,label\n5,1,5.5,1\n-5,1,-4.5,1\n0,1,0.5,1\n5,1,-4.5,2\n-5,1,5.5,2\n",
    )
    .unwrap();
    let o = run(&[
        "certify",
        s(&data),
        "--betas",
        s(&fixture("two_lines_betas.csv")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["certifies"], false);
    assert!(v["failure"].as_str().unwrap().contains("orthogonal"));
}

#[test]
fn phase_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ph");
    let o = run(&[
        "phase",
        "--d",
        "3,4",
        "--alpha",
        "0.05,0.1",
        "--trials",
        "2",
        "--workers",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        "d,0.05,0.1\n3,1,1\n4,1,1\n"
    );
    let pgm = std::fs::read_to_string(out.join("grid.pgm")).unwrap();
    assert_eq!(pgm, "P2\n2 2\n255\n255 255\n255 255\n");
}
