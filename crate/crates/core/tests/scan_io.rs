use std::fs;

use suscept_core::scan::{compute_points, config_from_summary, run_scan, Emit, ScanConfig};

fn small(dir: &std::path::Path) -> ScanConfig {
    ScanConfig { mu_values: vec![1.0, 2.0, 5.0], order: 2, output_dir: dir.to_path_buf(), ..ScanConfig::default() }
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let one = compute_points(&ScanConfig { jobs: Some(1), ..small(dir.path()) }).unwrap();
    let many = compute_points(&ScanConfig { jobs: Some(3), ..small(dir.path()) }).unwrap();
    assert_eq!(one.len(), many.len());
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(a.mu, b.mu);
        let (a, b) = (a.result.as_ref().unwrap(), b.result.as_ref().unwrap());
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }
}

#[test]
fn summary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let report = run_scan(&cfg).unwrap();
    assert!(report.all_succeeded());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();

    let records = v["records"].as_array().unwrap();
    let mus: Vec<f64> = records.iter().map(|r| r["mu"].as_f64().unwrap()).collect();
    assert_eq!(mus, cfg.mu_values);
    assert!(records.iter().all(|r| r["status"] == "ok" && r["eigenvalues"].as_array().unwrap().len() == 5));

    // no μ inside the fit window, so every rank is present with no slope
    let slopes = v["slopes"].as_object().unwrap();
    assert_eq!(slopes.keys().cloned().collect::<std::collections::BTreeSet<_>>().len(), 5);
    assert!(slopes["1"]["slope"].is_null());

    assert_eq!(v["spread_growth"]["from_mu"], 1.0);
    assert_eq!(v["provenance"]["tolerances"]["noise_floor_ratio"], 1e-15);
    assert_eq!(config_from_summary(&v.to_string()).unwrap(), cfg);
}

#[test]
fn csv_row_counts_match_the_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScanConfig { emit: [Emit::Eigenvalues, Emit::Eigenvectors, Emit::Predictions].into_iter().collect(), ..small(dir.path()) };
    let report = run_scan(&cfg).unwrap();
    let read = |f: &str| fs::read_to_string(dir.path().join(f)).unwrap();
    assert_eq!(read("eigenvalues.csv").lines().count(), 1 + 3 * 5);
    assert_eq!(read("eigenvectors.csv").lines().count(), 1 + 3 * 5 * 5);
    assert!(!dir.path().join("cycles.csv").exists());

    // every number carries 17 significant digits
    let row = read("eigenvalues.csv").lines().nth(1).unwrap().to_string();
    let lambda = row.split(',').nth(2).unwrap();
    assert_eq!(lambda.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    assert_eq!(lambda.parse::<f64>().unwrap(), report.records[0].summary().unwrap().eigenvalues[0]);

    // predictions: one row per (mu, rank, tau), τ spanning [0, 1]
    let preds = read("predictions.csv");
    let taus: Vec<f64> = preds
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("1.0000000000000000e0,1,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!((taus[0], *taus.last().unwrap()), (0.0, 1.0));
    assert!(taus.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn oracle_checks_are_emitted_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScanConfig {
        mu_values: vec![1.0],
        emit: [Emit::OracleChecks, Emit::Summary].into_iter().collect(),
        ..small(dir.path())
    };
    let report = run_scan(&cfg).unwrap();
    let checks = report.oracle_checks.as_ref().unwrap();
    assert!(checks.iter().all(|c| c.passed));
    let csv = fs::read_to_string(dir.path().join("oracle_checks.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("check,measured,reference,error,tolerance,passed"));
    assert_eq!(csv.lines().count(), 1 + checks.len());
}

#[test]
fn unwritable_output_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "").unwrap();
    let err = run_scan(&ScanConfig { output_dir: file.join("sub"), ..small(dir.path()) }).unwrap_err();
    assert!(err.to_string().contains("`out`"), "{err}");
}
