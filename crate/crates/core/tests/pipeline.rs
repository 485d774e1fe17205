use std::path::PathBuf;
use std::time::Instant;

use mlr_core::harness::{
    cmd_certify, cmd_fit, cmd_phase, run_certify, FitOptions, PhaseConfig, PhaseMode, Preprocess,
};
use mlr_core::io::{load_csv, write_betas, write_csv};
use mlr_core::{gen_sim1, gen_sim2, Dataset, Measurement, Sim1Config, Sim2Config};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let (ds, _) = gen_sim1(&Sim1Config::standard(6, 0.37, seed)).unwrap();
        let p = dir.path().join(format!("s{seed}.csv"));
        write_csv(&ds, &p).unwrap();
        let back = load_csv(&p).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (x, y) in back.rows().iter().zip(ds.rows()) {
            assert_eq!(x.b.to_bits(), y.b.to_bits());
            assert!(x
                .a
                .iter()
                .zip(&y.a)
                .all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}

#[test]
fn fit_on_two_line_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_fit(fixture("two_lines.csv"), &FitOptions::new(2), dir.path()).unwrap();
    assert_eq!(report.accuracy, Some(1.0));
    let perm = report.permutation.unwrap();
    let truth = [[1.0, 0.5], [-1.0, 0.5]];
    for (c, beta) in report.refit.betas_hat.iter().enumerate() {
        let t = truth[perm[c]];
        assert!((beta[0] - t[0]).abs() < 1e-5 && (beta[1] - t[1]).abs() < 1e-5);
    }
    for f in ["report.json", "labels.csv", "betas.csv", "estimates.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 41);
}

#[test]
fn tone_shaped_fixture_with_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = FitOptions::new(2);
    opts.preprocess = Some(Preprocess {
        alpha: 40.0,
        column: 0,
    });
    let start = Instant::now();
    let report = cmd_fit(fixture("tone_like.csv"), &opts, dir.path()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(report.m, 150);
    // One row lies on both lines, so it may land in either cluster.
    assert!(report.accuracy.unwrap() >= 149.0 / 150.0);
}

#[test]
fn certify_fixture_and_exports() {
    let r = cmd_certify(fixture("two_lines.csv"), fixture("two_lines_betas.csv")).unwrap();
    assert!(r.certifies);
    assert!((r.verdict.unwrap().gamma - 0.4).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let (ds, model) = gen_sim1(&Sim1Config::standard(5, 0.1, 8)).unwrap();
    write_csv(&ds, dir.path().join("a.csv")).unwrap();
    write_betas(model.betas(), dir.path().join("a_b.csv")).unwrap();
    let r = cmd_certify(dir.path().join("a.csv"), dir.path().join("a_b.csv")).unwrap();
    assert!(r.certifies);

    let (ds, model) = gen_sim2(&Sim2Config::new(5, 0.05, 8)).unwrap();
    write_csv(&ds, dir.path().join("b.csv")).unwrap();
    write_betas(model.betas(), dir.path().join("b_b.csv")).unwrap();
    let r = cmd_certify(dir.path().join("b.csv"), dir.path().join("b_b.csv")).unwrap();
    assert!((r.conditions.balance_residuals[2] - 0.05).abs() < 1e-10);
    assert!(!r.certifies);
}

#[test]
fn orthogonal_row_is_a_structured_verdict() {
    let rows = vec![
        Measurement::new(vec![5.0, 1.0], 5.5).unwrap(),
        Measurement::new(vec![-5.0, 1.0], -4.5).unwrap(),
        Measurement::new(vec![0.0, 1.0], 0.5).unwrap(),
        Measurement::new(vec![5.0, 1.0], -4.5).unwrap(),
        Measurement::new(vec![-5.0, 1.0], 5.5).unwrap(),
    ];
    let ds = Dataset::new(rows)
        .unwrap()
        .with_labels(vec![0, 0, 0, 1, 1])
        .unwrap();
    let r = run_certify(&ds, vec![vec![1.0, 0.5], vec![-1.0, 0.5]]).unwrap();
    assert!(!r.certifies);
    assert!(r.verdict.is_none());
    assert!(r.failure.unwrap().contains("orthogonal"));
    assert_eq!(r.conditions.orthogonal_points, vec![2]);
}

#[test]
fn certify_requires_labels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    std::fs::write(&p, "a_1,a_2,b\n1,0,1\n0,1,1\n").unwrap();
    assert!(cmd_certify(&p, fixture("two_lines_betas.csv")).is_err());
}

#[test]
fn phase_grid_independent_of_workers_and_order() {
    let mut cfg = PhaseConfig::new(PhaseMode::Aperture, vec![3, 4], vec![0.05, 0.4]);
    cfg.trials = 3;
    cfg.base_seed = 17;
    let a = cmd_phase(&cfg, 1).unwrap();
    let b = cmd_phase(&cfg, 3).unwrap();
    assert_eq!(a, b);
    cfg.d_values = vec![4, 3];
    let c = cmd_phase(&cfg, 2).unwrap();
    assert_eq!(c.records, a.records);
    assert_eq!(c.fractions[0], a.fractions[1]);
    for row in &a.fractions {
        assert!(row.iter().all(|f| (0.0..=1.0).contains(f)));
    }
    assert_eq!(a.fractions[0][0], 1.0);
}

#[test]
fn zero_aperture_is_degenerate() {
    // Identical rows within a class span a single direction, so the span
    // condition fails and the fused solution collapses to a common point.
    let mut cfg = PhaseConfig::new(PhaseMode::Aperture, vec![4], vec![0.0]);
    cfg.trials = 2;
    let g = cmd_phase(&cfg, 1).unwrap();
    assert_eq!(g.fractions[0][0], 0.0);
    assert!(g.records.iter().all(|r| r.certifies == Some(false)));
}

#[test]
fn phase_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PhaseConfig::new(PhaseMode::Imbalance, vec![3], vec![0.0]);
    cfg.trials = 2;
    let g = cmd_phase(&cfg, 1).unwrap();
    g.write(dir.path()).unwrap();
    let pgm = std::fs::read_to_string(dir.path().join("grid.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n1 1\n255\n"));
    let csv = std::fs::read_to_string(dir.path().join("fractions.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "d,0");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("grid.json")).unwrap())
            .unwrap();
    assert_eq!(json["mode"], "imbalance");
}
