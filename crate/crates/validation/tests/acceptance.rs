//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the full default scan (13 μ points, N = 4).

use std::process::ExitCode;
use std::time::Instant;

use proptest::test_runner::{Config, TestRunner};
use suscept_core::checks::validate;
use suscept_core::dynamics::{enumerate_parameters, ModelConfig, ParameterVector, State, VanDerPol};
use suscept_core::integrate::IntegratorSettings;
use suscept_core::orbit::OrbitSettings;
use suscept_core::pipeline::{analyze_point, PointAnalysis, PointSummary};
use suscept_core::scan::{run_scan, Emit, ScanConfig, ScanReport};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn record(report: &ScanReport, mu: f64) -> &PointSummary {
    report
        .records
        .iter()
        .find(|r| (r.mu - mu).abs() < 1e-9 * mu)
        .and_then(|r| r.summary())
        .unwrap_or_else(|| panic!("no successful record at mu = {mu}"))
}

fn point(mu: f64) -> PointAnalysis {
    analyze_point(mu, 4, &IntegratorSettings::default(), &OrbitSettings::default()).expect("pipeline")
}

fn eigenvalue_count(report: &ScanReport, csv: &str) -> Outcome {
    let p = enumerate_parameters(4).unwrap().len();
    let counts: Vec<usize> = report.records.iter().filter_map(|r| r.summary()).map(|s| s.eigenvalues.len()).collect();
    let rows = csv.lines().skip(1).count();
    let ok = p == 14 && counts.len() == 13 && counts.iter().all(|&c| c == 14) && rows == 13 * 14;
    outcome(ok, format!("P(4) = {p}; eigenvalues per mu {counts:?}; eigenvalues.csv rows {rows}"))
}

fn spread(report: &ScanReport, mu: f64, lo: f64, hi: f64) -> Outcome {
    let s = record(report, mu);
    let flagged: Vec<usize> = s.flagged.iter().enumerate().filter(|(_, f)| **f).map(|(k, _)| k + 1).collect();
    outcome(
        within(s.spread, lo, hi),
        format!("lambda_1/lambda_14 = {:.3e} in [{lo:.0e}, {hi:.0e}]; flagged ranks {flagged:?}", s.spread),
    )
}

fn spread_growth(report: &ScanReport) -> Outcome {
    let g = report.spread_growth.as_ref().expect("spread growth");
    outcome(
        g.from_mu == 1.0 && g.to_mu == 100.0 && within(g.factor, 1e5, 1e9),
        format!("spread(100)/spread(1) = {:.3e} in [1e5, 1e9]", g.factor),
    )
}

/// Ranks `1..=a` constant, the next `b` in the middle band, the rest steep.
fn slope_bands(report: &ScanReport, a: usize, b: usize) -> (bool, Vec<usize>) {
    let mut bad = vec![];
    for s in &report.slopes {
        let band = if s.rank <= a {
            (-0.5, 0.5)
        } else if s.rank <= a + b {
            (-3.5, -1.5)
        } else {
            (-6.5, -4.5)
        };
        if !s.slope.is_some_and(|v| within(v, band.0, band.1)) {
            bad.push(s.rank);
        }
    }
    (bad.is_empty() && report.slopes.len() == 14, bad)
}

fn power_laws(report: &ScanReport) -> Outcome {
    let (ok, bad) = slope_bands(report, 5, 2);
    let slopes: Vec<String> = report
        .slopes
        .iter()
        .map(|s| s.slope.map_or("n/a".into(), |v| format!("{v:+.2}")))
        .collect();
    outcome(ok, format!("slopes by rank [{}]; out of band: ranks {bad:?}", slopes.join(" ")))
}

fn separation(report: &ScanReport) -> Outcome {
    let s = record(report, 100.0);
    let bad: Vec<usize> = s
        .slow_fraction
        .iter()
        .enumerate()
        .filter(|(k, f)| if *k < 5 { **f < 0.95 } else { 1.0 - **f < 0.95 })
        .map(|(k, _)| k + 1)
        .collect();
    let fr: Vec<String> = s.slow_fraction.iter().map(|f| format!("{f:.3}")).collect();
    outcome(bad.is_empty(), format!("slow fraction by rank [{}]; failing ranks {bad:?}", fr.join(" ")))
}

fn orthonormality(points: &[(f64, &PointAnalysis)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut used = vec![];
    for (mu, pa) in points {
        let eig = &pa.susceptibility.eigen;
        let g = pa.susceptibility.factor.prediction_gram(eig);
        let trusted: Vec<usize> = (0..eig.len()).filter(|&k| !eig.is_flagged(k)).collect();
        for &j in &trusted {
            for &k in &trusted {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g[(j, k)] - target).abs());
            }
        }
        used.push(format!("mu={mu}: {} modes", trusted.len()));
    }
    outcome(worst <= 1e-6, format!("max |G - I| = {worst:.2e} (tol 1e-6); {}", used.join(", ")))
}

fn amplitude(pa: &PointAnalysis, k: usize) -> f64 {
    let eig = &pa.susceptibility.eigen;
    let v = eig.vector(k);
    let jac = pa.jacobian();
    let grid = suscept_core::susceptibility::output_grid(&pa.bundle, suscept_core::susceptibility::UNIFORM_OUTPUT_POINTS);
    let max = grid.iter().map(|&t| jac.row(t).iter().zip(v.iter()).map(|(j, e)| j * e).sum::<f64>().abs()).fold(0.0, f64::max);
    max / eig.eigenvalues[k].sqrt()
}

fn amplitude_scaling(p10: &PointAnalysis, p100: &PointAnalysis) -> Outcome {
    let k = p100.susceptibility.eigen.len() - 1;
    let (a10, a100) = (amplitude(p10, k), amplitude(p100, k));
    let ratio = a100 / a10;
    outcome(
        within(ratio, 5.0, 20.0),
        format!(
            "rank {} amplitude {a100:.3e} / {a10:.3e} = {ratio:.3} in [5, 20] (flagged at mu=100: {})",
            k + 1,
            p100.susceptibility.eigen.is_flagged(k)
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let checks = validate(&ScanConfig::default()).expect("validate");
    let relevant: Vec<_> = checks.iter().filter(|c| c.name.starts_with("stiff mode") || c.name.starts_with("H diag")).collect();
    let worst_mode = relevant.iter().filter(|c| c.name.starts_with("stiff")).map(|c| c.error).fold(0.0, f64::max);
    let worst_diag = relevant.iter().filter(|c| c.name.starts_with("H diag")).map(|c| c.error).fold(0.0, f64::max);
    outcome(
        relevant.len() == 8 && relevant.iter().all(|c| c.passed),
        format!("3 stiffest modes max rel err {worst_mode:.2e} (tol 0.10); 5 slow diagonals max rel err {worst_diag:.2e} (tol 0.05)"),
    )
}

fn structural(report: &ScanReport) -> Outcome {
    let mut notes = vec![];
    let mut ok = true;
    let sums: Vec<&PointSummary> = report.records.iter().filter_map(|r| r.summary()).collect();
    let min_ratio = sums.iter().map(|s| s.hessian_min_ratio).fold(f64::INFINITY, f64::min);
    let floquet = sums.iter().map(|s| s.floquet_defect).fold(0.0, f64::max);
    let j0 = sums.iter().map(|s| s.jacobian_endpoints.0).fold(0.0, f64::max);
    ok &= sums.len() == report.records.len();
    ok &= min_ratio >= -1e-12;
    ok &= floquet <= 1e-6;
    ok &= j0 == 0.0;
    notes.push(format!("min eig(H)/lambda_1 = {min_ratio:.2e}"));
    notes.push(format!("max |rho - 1| = {floquet:.2e}"));
    notes.push(format!("max |J(0)| = {j0:e}"));

    // fast terms on the critical manifold, pointwise over random (μ, x, a)
    let mut runner = TestRunner::new(Config { cases: 2000, failure_persistence: None, ..Config::default() });
    let strategy = (0.1f64..100.0, -3.0f64..3.0, proptest::collection::vec(-1.0f64..1.0, 9));
    let prop = runner.run(&strategy, |(mu, x, fast)| {
        let m = VanDerPol::new(ModelConfig::new(mu, 4).unwrap()).unwrap();
        let mut values = vec![0.0; 5];
        values.extend(fast);
        let a = ParameterVector::from_values(4, values).unwrap();
        let z = State::new(x, x - x * x * x / 3.0);
        let (with, without) = (m.rhs(&z, &a), m.rhs(&z, &ParameterVector::zeros(4)));
        proptest::prop_assert_eq!(with, without);
        Ok(())
    });
    ok &= prop.is_ok();
    notes.push(format!("fast terms on critical manifold: {}", if prop.is_ok() { "vanish (2000 cases)" } else { "FAILED" }));
    outcome(ok, notes.join("; "))
}

fn periods(report: &ScanReport) -> Outcome {
    let t1 = record(report, 1.0).period;
    let t100 = record(report, 100.0).period;
    let limit = 3.0 - 2.0 * 2f64.ln();
    let rel = (t100 / limit - 1.0).abs();
    outcome(
        (t1 - 6.663).abs() <= 1e-3 && rel <= 0.03,
        format!("T(1) = {t1:.6} vs 6.663 (tol 1e-3); T(100) = {t100:.6} vs 3 - 2 ln 2 = {limit:.6}, rel {rel:.2e} (tol 0.03)"),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = ScanConfig {
        output_dir: dir.path().to_path_buf(),
        emit: [Emit::Eigenvalues, Emit::Summary].into_iter().collect(),
        ..ScanConfig::default()
    };
    let start = Instant::now();
    let report = run_scan(&cfg).expect("default scan");
    let scan_time = start.elapsed();
    let csv = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).expect("eigenvalues.csv");
    let (p1, p10, p100) = (point(1.0), point(10.0), point(100.0));
    let validate_start = Instant::now();
    let c9 = oracle_equivalence();
    let validate_time = validate_start.elapsed();

    let results = [
        ("1  eigenvalue count", eigenvalue_count(&report, &csv)),
        ("2  spread at mu=1", spread(&report, 1.0, 1e10, 1e13)),
        ("3  spread at mu=100", spread(&report, 100.0, 1e16, 1e20)),
        ("4  spread growth", spread_growth(&report)),
        ("5  power-law structure", power_laws(&report)),
        ("6  eigenvector separation", separation(&report)),
        ("7  eigenprediction orthonormality", orthonormality(&[(1.0, &p1), (10.0, &p10), (100.0, &p100)])),
        ("8  sloppy amplitude scaling", amplitude_scaling(&p10, &p100)),
        ("9  oracle equivalence", c9),
        ("10 structural invariants", structural(&report)),
        ("11 period checks", periods(&report)),
    ];
    println!();
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let (n4, _) = slope_bands(&report, 4, 2);
    println!(
        "info: slope bands with 4 constant modes (4/2/8 split): {}",
        if n4 { "all ranks in band" } else { "some ranks out of band" }
    );
    println!("info: default scan {:.1} s, validate {:.1} s", scan_time.as_secs_f64(), validate_time.as_secs_f64());
    let failed = results.iter().filter(|(_, o)| !o.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
