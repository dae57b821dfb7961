//! Forward sensitivities of the limit cycle in rescaled time τ = t/T and the
//! periodicity corrections.
//!
//! One augmented system is integrated over τ ∈ [0, 1]:
//!
//! ```text
//! z'   = T F(z)
//! S_α' = T (∂F/∂z S_α + ∂F/∂a_α)        S_α(0) = 0
//! Φ'   = T ∂F/∂z Φ                      Φ(0)   = I
//! ψ'   = T ∂F/∂z ψ + F(z)               ψ(0)   = 0
//! G'   = b bᵀ                           G(0)   = 0
//! ```
//!
//! where `b = ([S_1]_y, …, [S_P]_y, Φ_yx, ψ_y)` are the basis functions of
//! the total Jacobian and `G` is their Gram matrix, accumulated by the same
//! adaptive steps that resolve the jumps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ParameterVector, PerturbationIndex, State, VanDerPol};
use crate::error::{Error, Result};
use crate::integrate::{integrate_with_accumulators, IntegratorSettings, Trajectory};
use crate::orbit::LimitCycle;

/// Layout of the augmented state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_params: usize,
}

impl Layout {
    pub const Z: usize = 0;

    pub fn s(&self, alpha: usize) -> usize {
        2 + 2 * alpha
    }

    pub fn phi(&self) -> usize {
        2 + 2 * self.n_params
    }

    pub fn psi(&self) -> usize {
        self.phi() + 4
    }

    /// Components carrying dense output.
    pub fn dense_dim(&self) -> usize {
        self.psi() + 2
    }

    pub fn n_basis(&self) -> usize {
        self.n_params + 2
    }

    pub fn gram(&self) -> usize {
        self.dense_dim()
    }

    pub fn gram_len(&self) -> usize {
        let b = self.n_basis();
        b * (b + 1) / 2
    }

    pub fn total_dim(&self) -> usize {
        self.dense_dim() + self.gram_len()
    }
}

/// Sensitivity trajectories over one period, with dense output in τ.
#[derive(Debug, Clone)]
pub struct SensitivityBundle {
    pub mu: f64,
    pub period: f64,
    pub anchor: State,
    pub basis: Vec<PerturbationIndex>,
    layout: Layout,
    traj: Trajectory,
    gram: DMatrix<f64>,
    flow_at_anchor: State,
    trace_integral: f64,
}

impl SensitivityBundle {
    pub fn n_params(&self) -> usize {
        self.layout.n_params
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    /// Accepted step endpoints in τ.
    pub fn accepted_taus(&self) -> &[f64] {
        self.traj.times()
    }

    /// Gram matrix of the basis functions, `G_ij = ∫₀¹ b_i b_j dτ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn flow_at_anchor(&self) -> State {
        self.flow_at_anchor
    }

    /// `∫₀ᵀ tr ∂F/∂z dt` along the orbit.
    pub fn trace_integral(&self) -> f64 {
        self.trace_integral
    }

    pub fn state_at(&self, tau: f64) -> Vec<f64> {
        self.traj.eval(tau)
    }

    pub fn z(&self, tau: f64) -> State {
        let v = self.traj.eval(tau);
        State::new(v[0], v[1])
    }

    pub fn param_sensitivity(&self, tau: f64, alpha: usize) -> State {
        let v = self.traj.eval(tau);
        let i = self.layout.s(alpha);
        State::new(v[i], v[i + 1])
    }

    pub fn phi(&self, tau: f64) -> [[f64; 2]; 2] {
        phi_of(&self.traj.eval(tau), &self.layout)
    }

    pub fn psi(&self, tau: f64) -> State {
        let v = self.traj.eval(tau);
        let i = self.layout.psi();
        State::new(v[i], v[i + 1])
    }

    /// Monodromy matrix Φ(1).
    pub fn monodromy(&self) -> [[f64; 2]; 2] {
        phi_of(self.traj.last_state(), &self.layout)
    }

    /// The P + 2 basis functions at τ, from a stored or interpolated state.
    pub fn basis_values_from(&self, v: &[f64], out: &mut [f64]) {
        basis_values(v, &self.layout, out)
    }
}

fn phi_of(v: &[f64], l: &Layout) -> [[f64; 2]; 2] {
    let i = l.phi();
    [[v[i], v[i + 1]], [v[i + 2], v[i + 3]]]
}

fn basis_values(v: &[f64], l: &Layout, out: &mut [f64]) {
    let p = l.n_params;
    for (alpha, o) in out.iter_mut().take(p).enumerate() {
        *o = v[l.s(alpha) + 1];
    }
    out[p] = v[l.phi() + 2];
    out[p + 1] = v[l.psi() + 1];
}

/// Integrates the augmented variational system around the (unperturbed) cycle.
pub fn integrate_variational(model: &VanDerPol, cycle: &LimitCycle, settings: &IntegratorSettings) -> Result<SensitivityBundle> {
    let p = model.n_params();
    let layout = Layout { n_params: p };
    let zero = ParameterVector::zeros(model.config().order);
    let period = cycle.period;
    let nb = layout.n_basis();

    let mut y0 = vec![0.0; layout.total_dim()];
    y0[0] = cycle.anchor.x;
    y0[1] = cycle.anchor.y;
    y0[layout.phi()] = 1.0;
    y0[layout.phi() + 3] = 1.0;

    let mut dfda = vec![0.0; p];
    let mut b = vec![0.0; nb];
    let rhs = |_tau: f64, v: &[f64], dv: &mut [f64]| {
        let z = State::new(v[0], v[1]);
        let f = model.rhs(&z, &zero);
        let j = model.jacobian_state(&z, &zero);
        model.jacobian_params_into(&z, &mut dfda);
        dv[0] = period * f.x;
        dv[1] = period * f.y;
        let lin = |sx: f64, sy: f64| (j[0][0] * sx + j[0][1] * sy, j[1][0] * sx + j[1][1] * sy);
        for (alpha, g) in dfda.iter().enumerate() {
            let i = layout.s(alpha);
            let (ax, ay) = lin(v[i], v[i + 1]);
            dv[i] = period * (ax + g);
            dv[i + 1] = period * ay;
        }
        let i = layout.phi();
        for col in 0..2 {
            let (ax, ay) = lin(v[i + col], v[i + 2 + col]);
            dv[i + col] = period * ax;
            dv[i + 2 + col] = period * ay;
        }
        let i = layout.psi();
        let (ax, ay) = lin(v[i], v[i + 1]);
        dv[i] = period * ax + f.x;
        dv[i + 1] = period * ay + f.y;

        basis_values(v, &layout, &mut b);
        let mut k = layout.gram();
        for r in 0..nb {
            for c in r..nb {
                dv[k] = b[r] * b[c];
                k += 1;
            }
        }
    };
    let (traj, end) = integrate_with_accumulators(rhs, &y0, (0.0, 1.0), layout.dense_dim(), settings)?;

    let mut gram = DMatrix::zeros(nb, nb);
    let mut k = layout.gram();
    for r in 0..nb {
        for c in r..nb {
            gram[(r, c)] = end[k];
            gram[(c, r)] = end[k];
            k += 1;
        }
    }

    // Abel–Liouville reference: ∫ tr ∂F/∂z dt = T ∫₀¹ μ²(1 − x²) dτ, by Gauss–Legendre on each step.
    let mu2 = model.config().mu.powi(2);
    let mut trace_integral = 0.0;
    for st in traj.steps() {
        trace_integral += gauss_legendre(st.t_start(), st.t_end(), |tau| {
            let x = st.component(tau, 0);
            mu2 * (1.0 - x * x)
        });
    }
    trace_integral *= period;

    let f0 = model.rhs(&cycle.anchor, &zero);
    Ok(SensitivityBundle {
        mu: model.config().mu,
        period,
        anchor: cycle.anchor,
        basis: model.basis().to_vec(),
        layout,
        traj,
        gram,
        flow_at_anchor: f0,
        trace_integral,
    })
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_nodes(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(move |(&x, &w)| (mid + half * x, half * w))
}

pub fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    gauss_legendre_nodes(a, b).map(|(t, w)| w * f(t)).sum()
}

/// Periodicity corrections `(∂x₀/∂a_α, ∂T/∂a_α)`; the y-component of the
/// initial-condition shift is pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionCoefficients {
    pub dx0_da: Vec<f64>,
    pub dt_da: Vec<f64>,
}

/// Solves `[(I − Φ(1)) e_x, −ψ(1)] (δx₀, δT)ᵀ = S_α(1)` for every α.
pub fn solve_corrections(bundle: &SensitivityBundle) -> Result<CorrectionCoefficients> {
    let end = bundle.traj.last_state();
    let l = bundle.layout;
    let phi = phi_of(end, &l);
    let psi = (end[l.psi()], end[l.psi() + 1]);
    // columns of M
    let m00 = 1.0 - phi[0][0];
    let m10 = -phi[1][0];
    let m01 = -psi.0;
    let m11 = -psi.1;
    let rhs: Vec<(f64, f64)> = (0..l.n_params).map(|a| (end[l.s(a)], end[l.s(a) + 1])).collect();
    solve_2x2_family([[m00, m01], [m10, m11]], &rhs)
}

fn solve_2x2_family(m: [[f64; 2]; 2], rhs: &[(f64, f64)]) -> Result<CorrectionCoefficients> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = (m[0][0].abs().max(m[1][0].abs())) * (m[0][1].abs().max(m[1][1].abs()));
    if !det.is_finite() || det.abs() <= 1e-12 * scale || scale == 0.0 {
        return Err(Error::SingularConstraint { det, scale });
    }
    let mut dx0_da = Vec::with_capacity(rhs.len());
    let mut dt_da = Vec::with_capacity(rhs.len());
    for &(sx, sy) in rhs {
        dx0_da.push((m[1][1] * sx - m[0][1] * sy) / det);
        dt_da.push((m[0][0] * sy - m[1][0] * sx) / det);
    }
    Ok(CorrectionCoefficients { dx0_da, dt_da })
}

/// Coefficient matrix `A` ((P+2)×P) mapping basis functions to the total
/// Jacobian columns: identity block, then the `dx0_da` and `dt_da` rows.
pub fn coefficient_matrix(corr: &CorrectionCoefficients) -> DMatrix<f64> {
    let p = corr.dx0_da.len();
    let mut a = DMatrix::zeros(p + 2, p);
    for alpha in 0..p {
        a[(alpha, alpha)] = 1.0;
        a[(p, alpha)] = corr.dx0_da[alpha];
        a[(p + 1, alpha)] = corr.dt_da[alpha];
    }
    a
}

/// `J_{τα} = [S_α]_y + Φ_yx ∂x₀/∂a_α + ψ_y ∂T/∂a_α`, the y-response of the
/// corrected (closed, phase-aligned) orbit.
#[derive(Debug, Clone, Copy)]
pub struct TotalJacobian<'a> {
    pub bundle: &'a SensitivityBundle,
    pub corrections: &'a CorrectionCoefficients,
}

impl<'a> TotalJacobian<'a> {
    pub fn new(bundle: &'a SensitivityBundle, corrections: &'a CorrectionCoefficients) -> Self {
        Self { bundle, corrections }
    }

    /// Row of J from an augmented state vector.
    pub fn row_from_state(&self, v: &[f64], out: &mut [f64]) {
        let l = self.bundle.layout;
        let phi_yx = v[l.phi() + 2];
        let psi_y = v[l.psi() + 1];
        for (alpha, o) in out.iter_mut().enumerate().take(l.n_params) {
            *o = v[l.s(alpha) + 1] + phi_yx * self.corrections.dx0_da[alpha] + psi_y * self.corrections.dt_da[alpha];
        }
    }

    pub fn row(&self, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.bundle.n_params()];
        self.row_from_state(&self.bundle.traj.eval(tau), &mut out);
        out
    }

    /// State-valued analog `S_α + Φ (δx₀, 0) + ψ δT` (both components).
    pub fn state_response(&self, tau: f64, alpha: usize) -> State {
        let v = self.bundle.traj.eval(tau);
        let l = self.bundle.layout;
        let dx0 = self.corrections.dx0_da[alpha];
        let dt = self.corrections.dt_da[alpha];
        State::new(
            v[l.s(alpha)] + v[l.phi()] * dx0 + v[l.psi()] * dt,
            v[l.s(alpha) + 1] + v[l.phi() + 2] * dx0 + v[l.psi() + 1] * dt,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelConfig;
    use crate::orbit::{find_limit_cycle, OrbitSettings};

    #[test]
    fn two_by_two_solve() {
        let c = solve_2x2_family([[2.0, 1.0], [1.0, 3.0]], &[(0.0, 0.0), (3.0, 4.0)]).unwrap();
        assert_eq!((c.dx0_da[0], c.dt_da[0]), (0.0, 0.0));
        assert!((c.dx0_da[1] - 1.0).abs() < 1e-15 && (c.dt_da[1] - 1.0).abs() < 1e-15);
        assert!(matches!(
            solve_2x2_family([[1.0, 2.0], [2.0, 4.0]], &[(1.0, 1.0)]),
            Err(Error::SingularConstraint { .. })
        ));
    }

    #[test]
    fn layout_dimensions() {
        let l = Layout { n_params: 14 };
        assert_eq!(l.dense_dim(), 36);
        assert_eq!(l.gram_len(), 136);
    }

    #[test]
    fn bundle_initial_conditions_and_periodicity() {
        let model = VanDerPol::new(ModelConfig::new(1.0, 4).unwrap()).unwrap();
        let s = IntegratorSettings::default();
        let cycle = find_limit_cycle(&model, &ParameterVector::zeros(4), &s, &OrbitSettings::default()).unwrap();
        let b = integrate_variational(&model, &cycle, &s).unwrap();
        for alpha in 0..14 {
            assert_eq!(b.param_sensitivity(0.0, alpha), State::new(0.0, 0.0));
        }
        assert_eq!(b.phi(0.0), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(b.psi(0.0), State::new(0.0, 0.0));
        assert!(b.z(1.0).max_abs_diff(&cycle.anchor) < 1e-9);
        let m = b.monodromy();
        let f = b.flow_at_anchor();
        let pf = State::new(m[0][0] * f.x + m[0][1] * f.y, m[1][0] * f.x + m[1][1] * f.y);
        let rel = pf.max_abs_diff(&f) / f.x.abs().max(f.y.abs());
        assert!(rel < 1e-6, "{rel}");
    }
}
