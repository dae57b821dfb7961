//! Independent numerical checks of the analytic pipeline at μ = 1: period,
//! finite-difference corrections and brute-force cost against the Hessian.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelConfig, ParameterVector};
use crate::error::Result;
use crate::integrate::IntegratorSettings;
use crate::orbit::{measure_period, settle, OrbitSettings};
use crate::pipeline::{analyze_point, PointAnalysis};
use crate::scan::ScanConfig;
use crate::susceptibility::CostOracle;

/// Simulated period of the unperturbed cycle at μ = 1.
pub const PERIOD_AT_MU_ONE: f64 = 6.663;

/// Cost level targeted by the oracle perturbations.
const TARGET_COST: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub measured: f64,
    pub reference: f64,
    /// Absolute for the period check, relative otherwise.
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn new(name: impl Into<String>, measured: f64, reference: f64, error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, reference, error, tolerance, passed: error.is_finite() && error <= tolerance }
    }

    fn relative(name: impl Into<String>, measured: f64, reference: f64, tolerance: f64) -> Self {
        let error = (measured - reference).abs() / reference.abs();
        Self::new(name, measured, reference, error, tolerance)
    }

    fn failed(name: impl Into<String>, tolerance: f64) -> Self {
        Self::new(name, f64::NAN, f64::NAN, f64::INFINITY, tolerance)
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<28} measured {:>+.9e}  reference {:>+.9e}  error {:.2e} (tol {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.reference,
            self.error,
            self.tolerance
        )
    }
}

// Orbit settling tight enough that finite differences of anchors and
// periods are not dominated by the settle tolerance.
fn fd_orbit() -> OrbitSettings {
    OrbitSettings { tolerance: 1e-12, max_periods: 400, ..OrbitSettings::default() }
}

/// Central differences of anchor and period under `a_α = ±h`.
pub fn correction_fd(pa: &PointAnalysis, alpha: usize, h: f64, settings: &IntegratorSettings) -> Result<(f64, f64)> {
    let order = pa.model.config().order;
    let orbit = fd_orbit();
    let side = |s: f64| -> Result<(f64, f64)> {
        let a = ParameterVector::unit(order, alpha, s * h);
        let anchor = settle(&pa.model, &a, pa.cycle.anchor, settings, &orbit)?;
        let c = measure_period(&pa.model, &a, anchor, settings, &orbit)?;
        Ok((anchor.x, c.period))
    };
    let (xp, tp) = side(1.0)?;
    let (xm, tm) = side(-1.0)?;
    Ok(((xp - xm) / (2.0 * h), (tp - tm) / (2.0 * h)))
}

/// Perturbation size giving a cost near [`TARGET_COST`] along a direction of curvature `lambda`.
pub fn oracle_step(lambda: f64) -> f64 {
    (2.0 * TARGET_COST / lambda).sqrt()
}

/// Runs every check at μ = 1 with the configured order and tolerances.
pub fn validate(cfg: &ScanConfig) -> Result<Vec<OracleCheck>> {
    cfg.validate()?;
    let settings = cfg.settings();
    let order = cfg.order;
    let pa = analyze_point(1.0, order, &settings, &OrbitSettings::default())?;
    let mut out = vec![OracleCheck::new(
        "period mu=1",
        pa.cycle.period,
        PERIOD_AT_MU_ONE,
        (pa.cycle.period - PERIOD_AT_MU_ONE).abs(),
        1e-3,
    )];
    out.push(OracleCheck::new("unit floquet multiplier", pa.floquet_defect(), 0.0, pa.floquet_defect(), 1e-6));

    // corrections against finite differences of settled orbits
    let corr = &pa.corrections;
    let dt_scale = corr.dt_da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dx_scale = corr.dx0_da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (alpha, ix) in pa.basis().iter().enumerate() {
        match correction_fd(&pa, alpha, 1e-5, &settings) {
            Ok((dx, dt)) => {
                let rel = |an: f64, fd: f64, scale: f64| (an - fd).abs() / an.abs().max(fd.abs()).max(1e-2 * scale);
                out.push(OracleCheck::new(format!("dT/da {ix}"), corr.dt_da[alpha], dt, rel(corr.dt_da[alpha], dt, dt_scale), 1e-3));
                out.push(OracleCheck::new(format!("dx0/da {ix}"), corr.dx0_da[alpha], dx, rel(corr.dx0_da[alpha], dx, dx_scale), 1e-3));
            }
            Err(_) => {
                out.push(OracleCheck::failed(format!("dT/da {ix}"), 1e-3));
                out.push(OracleCheck::failed(format!("dx0/da {ix}"), 1e-3));
            }
        }
    }

    // analytic Hessian against the brute-force cost
    let oracle = CostOracle::new(ModelConfig::new(1.0, order)?, &settings, &OrbitSettings::default())?;
    let h = &pa.susceptibility.hessian.entries;
    for (alpha, ix) in pa.basis().iter().enumerate().filter(|(_, ix)| ix.is_slow()) {
        let hh = oracle_step(h[(alpha, alpha)]);
        let name = format!("H diag {ix}");
        out.push(match oracle.cost(&ParameterVector::unit(order, alpha, hh)) {
            Ok(c) => OracleCheck::relative(name, 2.0 * c / (hh * hh), h[(alpha, alpha)], 0.05),
            Err(_) => OracleCheck::failed(name, 0.05),
        });
    }
    let eig = &pa.susceptibility.eigen;
    for k in 0..3.min(eig.len()) {
        let lambda = eig.eigenvalues[k];
        let hh = oracle_step(lambda);
        let a = ParameterVector::from_values(order, eig.vector(k).iter().map(|v| v * hh).collect())?;
        let name = format!("stiff mode {}", k + 1);
        out.push(match oracle.cost(&a) {
            Ok(c) => OracleCheck::relative(name, 2.0 * c / (hh * hh), lambda, 0.10),
            Err(_) => OracleCheck::failed(name, 0.10),
        });
    }
    Ok(out)
}
