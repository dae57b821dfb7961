//! The perturbed van der Pol vector field in Liénard form,
//!
//! ```text
//! μ⁻² ẋ = u + Σ a_{m,n} u^m x^n,   u = x − x³/3 − y
//!     ẏ = x
//! ```
//!
//! together with the perturbation basis and the analytic first derivatives
//! needed by the variational equations. Everything here is expressed in
//! unscaled time `t`; rescaling to unit period happens in [`crate::sensitivity`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label `(m, n)` of the perturbation term `a_{m,n} u^m x^n`.
///
/// `m = 0` terms act on the slow manifold ("slow"); terms with `m ≥ 1`
/// vanish on the critical manifold `u = 0` ("fast").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PerturbationIndex {
    pub m: u32,
    pub n: u32,
}

impl PerturbationIndex {
    pub const fn new(m: u32, n: u32) -> Self {
        Self { m, n }
    }

    pub fn is_slow(&self) -> bool {
        self.m == 0
    }

    pub fn is_fast(&self) -> bool {
        self.m >= 1
    }
}

impl std::fmt::Display for PerturbationIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "a_{{{},{}}}", self.m, self.n)
    }
}

/// Number of perturbation parameters for polynomial order `order`:
/// all `(m, n)` with `m + n ≤ order`, minus `(1, 0)`.
pub fn parameter_count(order: u32) -> usize {
    let n = order as usize;
    (n + 1) * (n + 2) / 2 - 1
}

/// Canonical ordered parameter list: ascending `m`, then ascending `n`,
/// skipping `(1, 0)` which only rescales μ.
pub fn enumerate_parameters(order: u32) -> Result<Vec<PerturbationIndex>> {
    if order == 0 {
        return Err(Error::InvalidConfig {
            field: "order".into(),
            reason: "perturbation order must be at least 1".into(),
        });
    }
    let mut out = Vec::with_capacity(parameter_count(order));
    for m in 0..=order {
        for n in 0..=(order - m) {
            if (m, n) == (1, 0) {
                continue;
            }
            out.push(PerturbationIndex::new(m, n));
        }
    }
    Ok(out)
}

/// Time-scale parameter μ and perturbation order N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mu: f64,
    pub order: u32,
}

impl ModelConfig {
    pub fn new(mu: f64, order: u32) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidConfig {
                field: "mu".into(),
                reason: format!("must be a positive finite number, got {mu}"),
            });
        }
        if order == 0 {
            return Err(Error::InvalidConfig {
                field: "order".into(),
                reason: "perturbation order must be at least 1".into(),
            });
        }
        Ok(Self { mu, order })
    }

    /// Ratio of time scales ε = μ⁻².
    pub fn epsilon(&self) -> f64 {
        1.0 / (self.mu * self.mu)
    }
}

/// Phase-space point `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// Perturbation coefficients in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    order: u32,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(order: u32) -> Self {
        Self { order, values: vec![0.0; parameter_count(order)] }
    }

    pub fn from_values(order: u32, values: Vec<f64>) -> Result<Self> {
        let expected = parameter_count(order);
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        Ok(Self { order, values })
    }

    /// `scale · e_α`.
    pub fn unit(order: u32, alpha: usize, scale: f64) -> Self {
        let mut v = Self::zeros(order);
        v.values[alpha] = scale;
        v
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// The perturbed vector field for a fixed `(μ, N)`.
#[derive(Debug, Clone)]
pub struct VanDerPol {
    cfg: ModelConfig,
    basis: Vec<PerturbationIndex>,
}

// Powers 0..=order of u and x, built by repeated multiplication.
fn powers(base: f64, order: usize, out: &mut [f64]) {
    out[0] = 1.0;
    for k in 1..=order {
        out[k] = out[k - 1] * base;
    }
}

/// Largest supported truncation order N.
pub const MAX_ORDER: u32 = 32;

impl VanDerPol {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let cfg = ModelConfig::new(cfg.mu, cfg.order)?;
        if cfg.order > MAX_ORDER {
            return Err(Error::InvalidConfig {
                field: "order".into(),
                reason: format!("at most {MAX_ORDER} supported"),
            });
        }
        let basis = enumerate_parameters(cfg.order)?;
        Ok(Self { cfg, basis })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &[PerturbationIndex] {
        &self.basis
    }

    pub fn n_params(&self) -> usize {
        self.basis.len()
    }

    fn check(&self, a: &ParameterVector) {
        debug_assert_eq!(a.len(), self.basis.len(), "parameter vector dimensioned for another order");
    }

    /// Fast-nullcline factor `u = x − x³/3 − y`.
    #[inline]
    pub fn nullcline(z: &State) -> f64 {
        z.x - z.x * z.x * z.x / 3.0 - z.y
    }

    /// `(ẋ, ẏ)` in unscaled time.
    pub fn rhs(&self, z: &State, a: &ParameterVector) -> State {
        self.check(a);
        let mu2 = self.cfg.mu * self.cfg.mu;
        let u = Self::nullcline(z);
        let mut pert = 0.0;
        if !a.is_zero() {
            let ord = self.cfg.order as usize;
            let mut up = [0.0; MAX_ORDER as usize + 1];
            let mut xp = [0.0; MAX_ORDER as usize + 1];
            powers(u, ord, &mut up);
            powers(z.x, ord, &mut xp);
            for (idx, &coef) in self.basis.iter().zip(a.values()) {
                if coef != 0.0 {
                    pert += coef * up[idx.m as usize] * xp[idx.n as usize];
                }
            }
        }
        State::new(mu2 * (u + pert), z.x)
    }

    /// `∂F/∂z` as `[[∂ẋ/∂x, ∂ẋ/∂y], [∂ẏ/∂x, ∂ẏ/∂y]]`.
    pub fn jacobian_state(&self, z: &State, a: &ParameterVector) -> [[f64; 2]; 2] {
        self.check(a);
        let mu2 = self.cfg.mu * self.cfg.mu;
        let du_dx = 1.0 - z.x * z.x;
        let mut dfx = du_dx;
        let mut dfy = -1.0;
        if !a.is_zero() {
            let ord = self.cfg.order as usize;
            let u = Self::nullcline(z);
            let mut up = [0.0; MAX_ORDER as usize + 1];
            let mut xp = [0.0; MAX_ORDER as usize + 1];
            powers(u, ord, &mut up);
            powers(z.x, ord, &mut xp);
            for (idx, &coef) in self.basis.iter().zip(a.values()) {
                if coef == 0.0 {
                    continue;
                }
                let (m, n) = (idx.m as usize, idx.n as usize);
                // d/du u^m and d/dx x^n
                let dum = if m > 0 { m as f64 * up[m - 1] } else { 0.0 };
                let dxn = if n > 0 { n as f64 * xp[n - 1] } else { 0.0 };
                dfx += coef * (dum * du_dx * xp[n] + up[m] * dxn);
                dfy -= coef * dum * xp[n];
            }
        }
        [[mu2 * dfx, mu2 * dfy], [1.0, 0.0]]
    }

    /// First row of `∂F/∂a` (the second row is identically zero) written into `out`.
    pub fn jacobian_params_into(&self, z: &State, out: &mut [f64]) {
        assert_eq!(out.len(), self.basis.len());
        let mu2 = self.cfg.mu * self.cfg.mu;
        let ord = self.cfg.order as usize;
        let mut up = [0.0; MAX_ORDER as usize + 1];
        let mut xp = [0.0; MAX_ORDER as usize + 1];
        powers(Self::nullcline(z), ord, &mut up);
        powers(z.x, ord, &mut xp);
        for (o, idx) in out.iter_mut().zip(&self.basis) {
            *o = mu2 * up[idx.m as usize] * xp[idx.n as usize];
        }
    }

    /// `∂F/∂a` as a 2×P matrix (rows ẋ, ẏ).
    pub fn jacobian_params(&self, z: &State) -> [Vec<f64>; 2] {
        let mut row = vec![0.0; self.basis.len()];
        self.jacobian_params_into(z, &mut row);
        [row, vec![0.0; self.basis.len()]]
    }
}
