//! The per-μ chain: limit cycle, sensitivities, corrections, Hessian and
//! spectrum.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelConfig, ParameterVector, PerturbationIndex, VanDerPol};
use crate::error::Result;
use crate::integrate::IntegratorSettings;
use crate::orbit::{find_limit_cycle, LimitCycle, OrbitSettings};
use crate::sensitivity::{integrate_variational, solve_corrections, CorrectionCoefficients, SensitivityBundle, TotalJacobian};
use crate::susceptibility::{
    analyze, default_eta, eigencycle, eigendecompose, eigenpredictions, output_grid, Eigencycle, Eigenprediction,
    Susceptibility,
};

#[derive(Debug, Clone)]
pub struct PointAnalysis {
    pub model: VanDerPol,
    pub cycle: LimitCycle,
    pub bundle: SensitivityBundle,
    pub corrections: CorrectionCoefficients,
    pub susceptibility: Susceptibility,
}

pub fn analyze_point(mu: f64, order: u32, settings: &IntegratorSettings, orbit: &OrbitSettings) -> Result<PointAnalysis> {
    let model = VanDerPol::new(ModelConfig::new(mu, order)?)?;
    let cycle = find_limit_cycle(&model, &ParameterVector::zeros(order), settings, orbit)?;
    let bundle = integrate_variational(&model, &cycle, settings)?;
    let corrections = solve_corrections(&bundle)?;
    let susceptibility = analyze(&bundle, &corrections, order)?;
    Ok(PointAnalysis { model, cycle, bundle, corrections, susceptibility })
}

/// Scalar diagnostics and spectrum of one μ point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub period: f64,
    pub residual: f64,
    pub spread: f64,
    pub eigenvalues: Vec<f64>,
    pub flagged: Vec<bool>,
    pub noise_floor: f64,
    /// Squared eigenvector norm on slow parameters, per rank.
    pub slow_fraction: Vec<f64>,
    /// Spectrum of the Gram-accumulated Hessian, an independent quadrature.
    pub hessian_eigenvalues: Vec<f64>,
    /// Smallest Gram-route eigenvalue over the largest.
    pub hessian_min_ratio: f64,
    pub corrections: CorrectionCoefficients,
    /// `min_i |ρ_i − 1|` over the Floquet multipliers `ρ_i`.
    pub floquet_defect: f64,
    /// `max_α |J_{τα}|` at τ = 0 and τ = 1.
    pub jacobian_endpoints: (f64, f64),
    pub accepted_steps: usize,
}

impl PointAnalysis {
    pub fn basis(&self) -> &[PerturbationIndex] {
        self.model.basis()
    }

    pub fn jacobian(&self) -> TotalJacobian<'_> {
        TotalJacobian::new(&self.bundle, &self.corrections)
    }

    /// Distance of the monodromy matrix's nearest eigenvalue (Floquet
    /// multiplier) from 1.
    pub fn floquet_defect(&self) -> f64 {
        floquet_defect(self.bundle.monodromy())
    }

    pub fn summary(&self) -> Result<PointSummary> {
        let eig = &self.susceptibility.eigen;
        let gram_route = eigendecompose(&self.susceptibility.hessian)?;
        let lam1 = gram_route.eigenvalues[0];
        let amax = |v: Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let jac = self.jacobian();
        Ok(PointSummary {
            period: self.cycle.period,
            residual: self.cycle.residual,
            spread: eig.spread(),
            eigenvalues: eig.eigenvalues.clone(),
            flagged: (0..eig.len()).map(|k| eig.is_flagged(k)).collect(),
            noise_floor: eig.noise_floor,
            slow_fraction: (0..eig.len()).map(|k| eig.slow_fraction(k, self.basis())).collect(),
            hessian_min_ratio: gram_route.eigenvalues.last().copied().unwrap_or(0.0) / lam1,
            hessian_eigenvalues: gram_route.eigenvalues,
            corrections: self.corrections.clone(),
            floquet_defect: self.floquet_defect(),
            jacobian_endpoints: (amax(jac.row(0.0)), amax(jac.row(1.0))),
            accepted_steps: self.bundle.accepted_taus().len().saturating_sub(1),
        })
    }

    /// Eigenpredictions on the accepted steps merged with `n_uniform` points.
    pub fn predictions(&self, n_uniform: usize) -> Vec<Eigenprediction> {
        let grid = output_grid(&self.bundle, n_uniform);
        eigenpredictions(&self.jacobian(), &self.susceptibility.eigen, &grid)
    }

    /// Eigencycles of the unflagged modes at the default η.
    pub fn cycles(&self, predictions: &[Eigenprediction]) -> Vec<Eigencycle> {
        predictions
            .iter()
            .filter(|p| !p.flagged)
            .map(|p| eigencycle(&self.bundle, p, default_eta(&self.bundle, p)))
            .collect()
    }
}

/// `min_i |ρ_i − 1|` over the eigenvalues of a 2×2 monodromy matrix.
pub fn floquet_defect(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        // the larger root first, the smaller from the product to avoid cancellation
        let big = 0.5 * (tr + tr.signum() * disc.sqrt());
        let small = if big != 0.0 { det / big } else { 0.0 };
        (big - 1.0).abs().min((small - 1.0).abs())
    } else {
        (0.5 * tr - 1.0).hypot(0.5 * (-disc).sqrt())
    }
}
