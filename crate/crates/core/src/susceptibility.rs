//! Cost Hessian, its spectrum, eigenpredictions and eigencycles, and a
//! brute-force cost oracle.
//!
//! Two quadratures of `H = JᵀJ` are available. [`assemble_hessian`] forms
//! `AᵀGA` from the Gram matrix accumulated by the variational integration.
//! [`JacobianFactor`] samples `J` at Gauss–Legendre nodes of the same
//! adaptive steps; its SVD yields the spectrum without squaring the condition
//! number, and its left singular vectors are the eigenpredictions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelConfig, ParameterVector, PerturbationIndex, State, VanDerPol};
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorSettings, Trajectory};
use crate::orbit::{find_limit_cycle, measure_period, settle, LimitCycle, OrbitSettings};
use crate::sensitivity::{coefficient_matrix, gauss_legendre_nodes, CorrectionCoefficients, SensitivityBundle, TotalJacobian};

/// Eigenvalues below `λ₁ · NOISE_FLOOR_RATIO` are flagged untrusted.
pub const NOISE_FLOOR_RATIO: f64 = 1e-15;

/// Uniform points overlaid on the accepted steps for output.
pub const UNIFORM_OUTPUT_POINTS: usize = 2001;

/// Symmetric P×P Hessian of the trajectory-difference cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    pub entries: DMatrix<f64>,
    pub mu: f64,
    pub order: u32,
}

impl Hessian {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// `H = AᵀGA`; only the upper triangle is computed and then mirrored.
pub fn assemble_hessian(bundle: &SensitivityBundle, corrections: &CorrectionCoefficients, order: u32) -> Hessian {
    let a = coefficient_matrix(corrections);
    let ga = bundle.gram() * &a;
    let p = a.ncols();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = a.column(i).dot(&ga.column(j));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Hessian { entries: h, mu: bundle.mu, order }
}

/// Spectrum sorted descending with aligned unit eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub noise_floor: f64,
}

impl EigenSystem {
    fn from_unsorted(values: &DVector<f64>, vectors: &DMatrix<f64>) -> Self {
        let n = values.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let eigenvalues: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let mut eigenvectors = DMatrix::from_fn(vectors.nrows(), n, |r, c| vectors[(r, idx[c])]);
        for mut col in eigenvectors.column_iter_mut() {
            let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if lead < 0.0 {
                col.neg_mut();
            }
        }
        let noise_floor = eigenvalues.first().map_or(0.0, |l| l.max(0.0) * NOISE_FLOOR_RATIO);
        Self { eigenvalues, eigenvectors, noise_floor }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Mode `k` is 0-based; rank is `k + 1`.
    pub fn is_flagged(&self, k: usize) -> bool {
        self.eigenvalues[k] <= self.noise_floor
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// `λ₁ / λ_P`.
    pub fn spread(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[self.len() - 1]
    }

    /// Squared norm of eigenvector `k` on the slow (m = 0) parameters.
    pub fn slow_fraction(&self, k: usize, basis: &[PerturbationIndex]) -> f64 {
        self.eigenvectors
            .column(k)
            .iter()
            .zip(basis)
            .filter(|(_, ix)| ix.is_slow())
            .map(|(v, _)| v * v)
            .sum()
    }
}

/// Symmetric eigen-decomposition of `H`.
pub fn eigendecompose(h: &Hessian) -> Result<EigenSystem> {
    let e = h.entries.clone().try_symmetric_eigen(f64::EPSILON, 10_000).ok_or(Error::ConvergenceFailure)?;
    Ok(EigenSystem::from_unsorted(&e.eigenvalues, &e.eigenvectors))
}

/// `J` sampled at five Gauss–Legendre nodes per accepted step, rows scaled by
/// the square root of the quadrature weight, so that `FᵀF` is a quadrature of
/// `JᵀJ` and column-space inner products are quadratures of `∫₀¹ · dτ`.
#[derive(Debug, Clone)]
pub struct JacobianFactor {
    pub taus: Vec<f64>,
    pub weights: Vec<f64>,
    pub weighted: DMatrix<f64>,
}

impl JacobianFactor {
    pub fn sample(jac: &TotalJacobian<'_>) -> Self {
        let p = jac.bundle.n_params();
        let steps = jac.bundle.trajectory().steps();
        let n = steps.len() * 5;
        let mut taus = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * p);
        let mut v = vec![0.0; steps.first().map_or(0, |s| s.dim())];
        let mut row = vec![0.0; p];
        for st in steps {
            for (tau, w) in gauss_legendre_nodes(st.t_start(), st.t_end()) {
                st.eval_into(tau, &mut v);
                jac.row_from_state(&v, &mut row);
                let sw = w.sqrt();
                data.extend(row.iter().map(|r| r * sw));
                taus.push(tau);
                weights.push(w);
            }
        }
        Self { taus, weights, weighted: DMatrix::from_row_slice(n, p, &data) }
    }

    /// Spectrum of `FᵀF` via the singular values of `F`.
    pub fn eigensystem(&self) -> Result<EigenSystem> {
        // QR first: the SVD then acts on a P×P triangle
        let r = self.weighted.clone().qr().r();
        let svd = r.try_svd(false, true, f64::EPSILON, 10_000).ok_or(Error::ConvergenceFailure)?;
        let v = svd.v_t.ok_or(Error::ConvergenceFailure)?.transpose();
        Ok(EigenSystem::from_unsorted(&svd.singular_values.map(|s| s * s), &v))
    }

    /// Quadrature Gram matrix of the eigenpredictions `J ê_k / √λ_k`; flagged
    /// modes are left unnormalized.
    pub fn prediction_gram(&self, eig: &EigenSystem) -> DMatrix<f64> {
        let mut y = &self.weighted * &eig.eigenvectors;
        for (k, mut col) in y.column_iter_mut().enumerate() {
            if !eig.is_flagged(k) {
                col /= eig.eigenvalues[k].sqrt();
            }
        }
        y.transpose() * y
    }
}

/// Hessian and spectrum of the cost at one μ.
#[derive(Debug, Clone)]
pub struct Susceptibility {
    pub hessian: Hessian,
    pub eigen: EigenSystem,
    pub factor: JacobianFactor,
}

/// Gram-route Hessian plus the factor-route spectrum.
pub fn analyze(bundle: &SensitivityBundle, corrections: &CorrectionCoefficients, order: u32) -> Result<Susceptibility> {
    let hessian = assemble_hessian(bundle, corrections, order);
    let factor = JacobianFactor::sample(&TotalJacobian::new(bundle, corrections));
    let eigen = factor.eigensystem()?;
    Ok(Susceptibility { hessian, eigen, factor })
}

/// Accepted step endpoints merged with `n_uniform` evenly spaced points on [0, 1].
pub fn output_grid(bundle: &SensitivityBundle, n_uniform: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = bundle.accepted_taus().to_vec();
    let n = n_uniform.max(2);
    grid.extend((0..n).map(|i| i as f64 / (n - 1) as f64));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 4.0 * f64::EPSILON);
    grid
}

/// Trajectory response of one eigenparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenprediction {
    /// 1-based; rank 1 is the stiffest mode.
    pub rank: usize,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub amplitude: f64,
    /// Below the noise floor: values are `J ê_k` without normalization.
    pub flagged: bool,
}

pub fn eigenpredictions(jac: &TotalJacobian<'_>, eig: &EigenSystem, grid: &[f64]) -> Vec<Eigenprediction> {
    let p = eig.len();
    let rows: Vec<Vec<f64>> = grid.iter().map(|&t| jac.row(t)).collect();
    (0..p)
        .map(|k| {
            let e = eig.eigenvectors.column(k);
            let flagged = eig.is_flagged(k);
            let scale = if flagged { 1.0 } else { 1.0 / eig.eigenvalues[k].sqrt() };
            let values: Vec<f64> =
                rows.iter().map(|r| r.iter().zip(e.iter()).map(|(j, v)| j * v).sum::<f64>() * scale).collect();
            let amplitude = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Eigenprediction { rank: k + 1, taus: grid.to_vec(), values, amplitude, flagged }
        })
        .collect()
}

/// Phase-space curve `(x, y + η δy_k)` on the prediction's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigencycle {
    pub rank: usize,
    pub eta: f64,
    pub taus: Vec<f64>,
    pub x: Vec<f64>,
    pub y_perturbed: Vec<f64>,
    pub y_unperturbed: Vec<f64>,
}

/// `0.05 · max|y| / amplitude`, keeping the curve visible but perturbative.
pub fn default_eta(bundle: &SensitivityBundle, prediction: &Eigenprediction) -> f64 {
    let y_amp = prediction.taus.iter().fold(0.0f64, |m, &t| m.max(bundle.z(t).y.abs()));
    if prediction.amplitude > 0.0 {
        0.05 * y_amp / prediction.amplitude
    } else {
        0.0
    }
}

pub fn eigencycle(bundle: &SensitivityBundle, prediction: &Eigenprediction, eta: f64) -> Eigencycle {
    let n = prediction.taus.len();
    let mut x = Vec::with_capacity(n);
    let mut y_perturbed = Vec::with_capacity(n);
    let mut y_unperturbed = Vec::with_capacity(n);
    for (&t, &dy) in prediction.taus.iter().zip(&prediction.values) {
        let z = bundle.z(t);
        x.push(z.x);
        y_unperturbed.push(z.y);
        y_perturbed.push(z.y + eta * dy);
    }
    Eigencycle { rank: prediction.rank, eta, taus: prediction.taus.clone(), x, y_perturbed, y_unperturbed }
}

/// Brute-force evaluation of `C(a) = ½ ∫₀¹ (y_a(τ) − y_0(τ))² dτ`, each orbit
/// settled on its own cycle, anchored on the section and rescaled to unit τ.
#[derive(Debug, Clone)]
pub struct CostOracle {
    cfg: ModelConfig,
    settings: IntegratorSettings,
    orbit: OrbitSettings,
    reference: LimitCycle,
    reference_traj: Trajectory,
}

impl CostOracle {
    pub fn new(cfg: ModelConfig, settings: &IntegratorSettings, orbit: &OrbitSettings) -> Result<Self> {
        let model = VanDerPol::new(cfg)?;
        let zero = ParameterVector::zeros(cfg.order);
        let reference = find_limit_cycle(&model, &zero, settings, orbit)?;
        let reference_traj = cycle_trajectory(&model, &reference, settings)?;
        Ok(Self { cfg, settings: *settings, orbit: *orbit, reference, reference_traj })
    }

    pub fn reference(&self) -> &LimitCycle {
        &self.reference
    }

    pub fn cost(&self, a: &ParameterVector) -> Result<f64> {
        if a.is_zero() {
            return Ok(0.0);
        }
        let model = VanDerPol::new(self.cfg)?;
        let anchor = settle(&model, a, self.reference.anchor, &self.settings, &self.orbit)?;
        let cycle = measure_period(&model, a, anchor, &self.settings, &self.orbit)?;
        let traj = cycle_trajectory(&model, &cycle, &self.settings)?;
        Ok(0.5 * squared_y_difference(&self.reference_traj, &traj))
    }
}

/// `cost_oracle` without a reusable reference.
pub fn cost_oracle(
    cfg: ModelConfig,
    a: &ParameterVector,
    settings: &IntegratorSettings,
    orbit: &OrbitSettings,
) -> Result<f64> {
    CostOracle::new(cfg, settings, orbit)?.cost(a)
}

// One period from the anchor, time rescaled to τ ∈ [0, 1].
fn cycle_trajectory(model: &VanDerPol, cycle: &LimitCycle, settings: &IntegratorSettings) -> Result<Trajectory> {
    let t = cycle.period;
    let a = &cycle.params;
    integrate(
        |_tau, z: &[f64], dz: &mut [f64]| {
            let f = model.rhs(&State::new(z[0], z[1]), a);
            dz[0] = t * f.x;
            dz[1] = t * f.y;
        },
        &[cycle.anchor.x, cycle.anchor.y],
        (0.0, 1.0),
        settings,
    )
}

// ∫₀¹ (y_a − y_b)² dτ over the union of both step partitions.
fn squared_y_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut cuts: Vec<f64> = a.times().iter().chain(b.times()).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (sa, sb) = (a.steps(), b.steps());
    let (mut ia, mut ib) = (0, 0);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        while ia + 1 < sa.len() && sa[ia].t_end() < mid {
            ia += 1;
        }
        while ib + 1 < sb.len() && sb[ib].t_end() < mid {
            ib += 1;
        }
        for (t, wt) in gauss_legendre_nodes(lo, hi) {
            let d = sa[ia].component(t, 1) - sb[ib].component(t, 1);
            total += wt * d * d;
        }
    }
    total
}

/// Least-squares slope of `ln λ_k` against `ln μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub rank: usize,
    /// `None` when fewer than [`MIN_FIT_POINTS`] trusted points fall in the window.
    pub slope: Option<f64>,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 4;
pub const FIT_WINDOW: (f64, f64) = (10.0, 100.0);

/// Per-rank slopes over μ in `window`; flagged eigenvalues are excluded.
pub fn fit_power_laws(spectra: &[(f64, &EigenSystem)], window: (f64, f64)) -> Vec<PowerLaw> {
    let p = spectra.iter().map(|(_, e)| e.len()).max().unwrap_or(0);
    (0..p)
        .map(|k| {
            let pts: Vec<(f64, f64)> = spectra
                .iter()
                .filter(|(mu, e)| {
                    *mu >= window.0 * (1.0 - 1e-12)
                        && *mu <= window.1 * (1.0 + 1e-12)
                        && k < e.len()
                        && !e.is_flagged(k)
                        && e.eigenvalues[k] > 0.0
                })
                .map(|(mu, e)| (mu.ln(), e.eigenvalues[k].ln()))
                .collect();
            let slope = (pts.len() >= MIN_FIT_POINTS).then(|| least_squares_slope(&pts)).flatten();
            PowerLaw { rank: k + 1, slope, points: pts.len() }
        })
        .collect()
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
