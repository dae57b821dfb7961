//! Independent numerical oracles for the analytic pipeline: finite
//! differences, brute-force costs and identities of the variational flow.

use nalgebra::DVector;
use suscept_core::checks::validate;
use suscept_core::dynamics::{ModelConfig, ParameterVector, State};
use suscept_core::integrate::{integrate, IntegratorSettings};
use suscept_core::orbit::OrbitSettings;
use suscept_core::pipeline::{analyze_point, PointAnalysis};
use suscept_core::scan::ScanConfig;
use suscept_core::susceptibility::{default_eta, eigencycle, CostOracle, JacobianFactor};

fn point(mu: f64) -> PointAnalysis {
    analyze_point(mu, 4, &IntegratorSettings::default(), &OrbitSettings::default()).unwrap()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `[S_α]` against central differences of the τ-flow with frozen anchor and T.
#[test]
fn parameter_sensitivities_match_finite_differences() {
    let tight = IntegratorSettings::with_tolerances(1e-12, 1e-14);
    for mu in [1.0, 5.0] {
        let pa = analyze_point(mu, 4, &tight, &OrbitSettings::default()).unwrap();
        let (anchor, t) = (pa.cycle.anchor, pa.cycle.period);
        let h = 1e-6;
        let flow = |a: &ParameterVector| {
            integrate(
                |_tau, z: &[f64], dz: &mut [f64]| {
                    let f = pa.model.rhs(&State::new(z[0], z[1]), a);
                    dz[0] = t * f.x;
                    dz[1] = t * f.y;
                },
                &[anchor.x, anchor.y],
                (0.0, 1.0),
                &tight,
            )
            .unwrap()
        };
        let taus: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        for alpha in 0..pa.bundle.n_params() {
            let up = flow(&ParameterVector::unit(4, alpha, h));
            let down = flow(&ParameterVector::unit(4, alpha, -h));
            let fd: Vec<(f64, f64)> = taus
                .iter()
                .map(|&tau| {
                    let (p, m) = (up.eval(tau), down.eval(tau));
                    ((p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h))
                })
                .collect();
            let an: Vec<State> = taus.iter().map(|&tau| pa.bundle.param_sensitivity(tau, alpha)).collect();
            let scale = max_abs(an.iter().flat_map(|s| [s.x, s.y]));
            let err = max_abs(an.iter().zip(&fd).flat_map(|(s, f)| [s.x - f.0, s.y - f.1]));
            assert!(err / scale < 1e-4, "mu {mu} alpha {alpha}: {err:e} vs scale {scale:e}");
        }
    }
}

/// The `validate` suite: period, correction finite differences, Hessian
/// against the brute-force cost.
#[test]
fn validate_suite_passes_at_default_tolerances() {
    let checks = validate(&ScanConfig::default()).unwrap();
    for c in &checks {
        println!("{c}");
    }
    assert!(checks.iter().all(|c| c.passed));
    assert_eq!(checks.iter().filter(|c| c.name.starts_with("dT/da")).count(), 14);
    assert_eq!(checks.iter().filter(|c| c.name.starts_with("H diag")).count(), 5);
}

/// The loosened-tolerance run still reports every check, with errors.
#[test]
fn validate_reports_loosened_tolerances() {
    let cfg = ScanConfig { rtol: 1e-4, ..ScanConfig::default() };
    let checks = validate(&cfg).unwrap();
    assert!(!checks.iter().all(|c| c.passed));
    let floquet = checks.iter().find(|c| c.name == "unit floquet multiplier").unwrap();
    assert!(!floquet.passed && floquet.error > 1e-6);
    assert!(checks.iter().filter(|c| c.name.starts_with("H diag")).all(|c| c.error.is_finite() && c.error > 0.0));
}

#[test]
fn period_corrections_at_larger_mu_match_finite_differences() {
    let pa = point(10.0);
    let s = IntegratorSettings::default();
    // a_{0,1}, a_{1,2}, a_{3,0}
    let c = &pa.corrections;
    let dx_scale = max_abs(c.dx0_da.iter().copied());
    for alpha in [1, 6, 11] {
        let (dx, dt) = suscept_core::checks::correction_fd(&pa, alpha, 1e-5, &s).unwrap();
        assert!((c.dt_da[alpha] - dt).abs() < 1e-3 * dt.abs(), "{} vs {dt}", c.dt_da[alpha]);
        assert!((c.dx0_da[alpha] - dx).abs() < 1e-3 * dx.abs().max(1e-2 * dx_scale), "{} vs {dx}", c.dx0_da[alpha]);
    }
}

/// Under `(x, y) → (−x, −y)` the terms with even `m + n` are odd, so they
/// shift the two half-cycles in opposite directions and leave T unchanged.
#[test]
fn even_terms_leave_the_period_unchanged() {
    for mu in [1.0, 10.0] {
        let pa = point(mu);
        let c = &pa.corrections;
        let scale = max_abs(c.dt_da.iter().copied());
        for (alpha, ix) in pa.basis().iter().enumerate() {
            if (ix.m + ix.n) % 2 == 0 {
                assert!(c.dt_da[alpha].abs() < 1e-8 * scale, "{ix}: {}", c.dt_da[alpha]);
            }
        }
    }
}

#[test]
fn total_jacobian_vanishes_at_the_anchor() {
    for mu in [1.0, 100.0] {
        let pa = point(mu);
        let jac = pa.jacobian();
        assert!(jac.row(0.0).iter().all(|&v| v == 0.0));
        let scale = max_abs(pa.susceptibility.factor.weighted.iter().copied());
        assert!(max_abs(jac.row(1.0)) < 1e-9 * scale.max(1.0), "{:?}", jac.row(1.0));
    }
}

#[test]
fn abel_liouville_identity() {
    // beyond μ ≈ 2 the determinant falls to rounding level
    for mu in [0.5, 1.0, 1.5] {
        let pa = point(mu);
        let m = pa.bundle.monodromy();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let expected = pa.bundle.trace_integral().exp();
        assert!((det / expected - 1.0).abs() < 1e-4, "mu {mu}: {det:e} vs {expected:e}");
    }
}

/// The Gram-accumulated Hessian and the sampled-Jacobian spectrum are two
/// independent quadratures of the same integral.
#[test]
fn hessian_routes_agree() {
    for mu in [1.0, 10.0, 100.0] {
        let pa = point(mu);
        let s = pa.summary().unwrap();
        for (k, (a, b)) in s.eigenvalues.iter().zip(&s.hessian_eigenvalues).enumerate() {
            assert!((a / b - 1.0).abs() < 2e-2, "mu {mu} rank {}: {a:e} vs {b:e}", k + 1);
        }
        for (k, (a, b)) in s.eigenvalues.iter().zip(&s.hessian_eigenvalues).enumerate().take(8) {
            assert!((a / b - 1.0).abs() < 1e-4, "mu {mu} rank {}: {a:e} vs {b:e}", k + 1);
        }
    }
}

#[test]
fn spectrum_does_not_depend_on_the_output_grid() {
    let pa = point(10.0);
    let before = pa.susceptibility.eigen.eigenvalues.clone();
    let coarse = pa.predictions(2001);
    let fine = pa.predictions(4001);
    assert_eq!(pa.susceptibility.eigen.eigenvalues, before);
    assert!(fine[0].taus.len() > coarse[0].taus.len());
    // shared sample points carry identical values
    let at = |p: &suscept_core::susceptibility::Eigenprediction, t: f64| {
        p.values[p.taus.iter().position(|&x| x == t).unwrap()]
    };
    for k in 0..before.len() {
        assert_eq!(at(&coarse[k], 0.5), at(&fine[k], 0.5));
    }
}

#[test]
fn cost_oracle_is_zero_at_zero() {
    let cfg = ModelConfig::new(1.0, 4).unwrap();
    let s = IntegratorSettings::default();
    let oracle = CostOracle::new(cfg, &s, &OrbitSettings::default()).unwrap();
    assert_eq!(oracle.cost(&ParameterVector::zeros(4)).unwrap(), 0.0);
}

#[test]
fn cost_oracle_is_quadratic() {
    let cfg = ModelConfig::new(1.0, 4).unwrap();
    let s = IntegratorSettings::default();
    let oracle = CostOracle::new(cfg, &s, &OrbitSettings::default()).unwrap();
    for alpha in [0, 2, 7, 10] {
        let h = 1e-4;
        let c1 = oracle.cost(&ParameterVector::unit(4, alpha, h)).unwrap();
        let c2 = oracle.cost(&ParameterVector::unit(4, alpha, 2.0 * h)).unwrap();
        assert!((c2 / c1 / 4.0 - 1.0).abs() < 0.05, "alpha {alpha}: {}", c2 / c1);
    }
}

/// The brute-force cost confirms the sloppy end of the analytic spectrum at
/// μ = 100, once h is small enough that quartic terms are negligible.
#[test]
fn brute_force_cost_confirms_sloppy_modes_at_large_mu() {
    let s = IntegratorSettings::default();
    let pa = point(100.0);
    let oracle = CostOracle::new(ModelConfig::new(100.0, 4).unwrap(), &s, &OrbitSettings::default()).unwrap();
    let eig = &pa.susceptibility.eigen;
    for k in [0, 3, 4, 5] {
        let lambda = eig.eigenvalues[k];
        let h = (2e-17 / lambda).sqrt();
        let a = ParameterVector::from_values(4, eig.vector(k).iter().map(|v| v * h).collect()).unwrap();
        let ratio = 2.0 * oracle.cost(&a).unwrap() / (h * h) / lambda;
        assert!((ratio - 1.0).abs() < 0.02, "rank {}: {ratio}", k + 1);
    }
}

#[test]
fn eigenpredictions_are_orthonormal() {
    for mu in [1.0, 30.0] {
        let pa = point(mu);
        let eig = &pa.susceptibility.eigen;
        let g = pa.susceptibility.factor.prediction_gram(eig);
        for j in 0..eig.len() {
            for k in 0..eig.len() {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((g[(j, k)] - target).abs() < 1e-6, "mu {mu} ({j},{k}) {}", g[(j, k)]);
            }
        }
    }
}

/// Orthonormality measured with an independent quadrature: the composite
/// trapezoid rule on the output grid, which is dense at the jumps.
#[test]
fn eigenpredictions_are_orthonormal_on_the_output_grid() {
    let pa = point(1.0);
    let preds = pa.predictions(20001);
    let taus = &preds[0].taus;
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        (1..taus.len()).map(|i| 0.5 * (taus[i] - taus[i - 1]) * (a[i] * b[i] + a[i - 1] * b[i - 1])).sum()
    };
    for j in 0..4 {
        for k in 0..4 {
            let g = dot(&preds[j].values, &preds[k].values);
            let target = if j == k { 1.0 } else { 0.0 };
            assert!((g - target).abs() < 1e-4, "({j},{k}) {g}");
        }
    }
}

#[test]
fn eigencycles() {
    let pa = point(100.0);
    let preds = pa.predictions(2001);
    let p = &preds[0];
    let flat = eigencycle(&pa.bundle, p, 0.0);
    assert_eq!(flat.y_perturbed, flat.y_unperturbed);
    let c = eigencycle(&pa.bundle, p, default_eta(&pa.bundle, p));
    let n = c.taus.len() - 1;
    assert!((c.x[0] - c.x[n]).abs() < 1e-8 && (c.y_perturbed[0] - c.y_perturbed[n]).abs() < 1e-8);
    let max_dy = max_abs(c.y_perturbed.iter().zip(&c.y_unperturbed).map(|(a, b)| a - b));
    let y_amp = max_abs(c.y_unperturbed.iter().copied());
    assert!((max_dy / y_amp - 0.05).abs() < 1e-12);
}

/// Fraction of a mode's squared response within the 5% of τ nearest the jumps.
fn jump_localization(pa: &PointAnalysis, k: usize) -> f64 {
    let f: &JacobianFactor = &pa.susceptibility.factor;
    let col: DVector<f64> = &f.weighted * pa.susceptibility.eigen.vector(k);
    let xs: Vec<f64> = f.taus.iter().map(|&t| pa.bundle.z(t).x).collect();
    let jumps: Vec<f64> = (1..xs.len())
        .filter(|&i| xs[i - 1].signum() != xs[i].signum())
        .map(|i| 0.5 * (f.taus[i - 1] + f.taus[i]))
        .collect();
    assert_eq!(jumps.len(), 2);
    let near = |t: f64| {
        jumps.iter().any(|&j| {
            let d = (t - j).abs();
            d.min(1.0 - d) <= 0.0125
        })
    };
    let total: f64 = col.iter().map(|c| c * c).sum();
    let inside: f64 = col.iter().zip(&f.taus).filter(|(_, &t)| near(t)).map(|(c, _)| c * c).sum();
    inside / total
}

#[test]
fn sloppy_modes_act_at_the_jumps_and_stiff_modes_on_the_branches() {
    let pa = point(100.0);
    let eig = &pa.susceptibility.eigen;
    let sloppiest_trusted = (0..eig.len()).rev().find(|&k| !eig.is_flagged(k)).unwrap();
    assert!(jump_localization(&pa, sloppiest_trusted) >= 0.9);
    assert!(jump_localization(&pa, eig.len() - 1) >= 0.9);
    assert!(jump_localization(&pa, 0) < 0.1);
}

#[test]
fn stiff_eigenprediction_shape_is_stable_at_large_mu() {
    let (a, b) = (point(50.0), point(100.0));
    let n = 20001;
    let sample = |pa: &PointAnalysis| -> Vec<f64> {
        let v = pa.susceptibility.eigen.vector(0);
        let jac = pa.jacobian();
        (0..n).map(|i| jac.row(i as f64 / (n - 1) as f64).iter().zip(v.iter()).map(|(j, e)| j * e).sum()).collect()
    };
    let (ya, yb) = (sample(&a), sample(&b));
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let corr = dot(&ya, &yb) / (dot(&ya, &ya) * dot(&yb, &yb)).sqrt();
    assert!(corr > 0.98, "{corr}");
}
