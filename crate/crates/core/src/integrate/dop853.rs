//! Explicit Dormand–Prince 8(5,3) stepper with 7th-order dense output.

use super::tableau::*;
use super::IntegratorSettings;
use crate::error::{Error, Result};

const SAFE: f64 = 0.9;
const FAC1: f64 = 0.333;
const FAC2: f64 = 6.0;
const EXPO1: f64 = 1.0 / 8.0;

/// Continuous extension of one accepted step over `[t0, t0 + h]`.
///
/// Only the first `dim` components of the system carry dense coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    t0: f64,
    h: f64,
    dim: usize,
    // eight coefficient blocks of length `dim`
    cont: Vec<f64>,
}

impl DenseStep {
    fn with_dim(dim: usize) -> Self {
        Self { t0: 0.0, h: 0.0, dim, cont: vec![0.0; 8 * dim] }
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn coeffs(&self, t: f64) -> (f64, f64) {
        let s = (t - self.t0) / self.h;
        (s, 1.0 - s)
    }

    /// Interpolated component `i` at time `t`.
    #[inline]
    pub fn component(&self, t: f64, i: usize) -> f64 {
        let (s, s1) = self.coeffs(t);
        let d = self.dim;
        let c = |k: usize| self.cont[k * d + i];
        let conpar = c(4) + s * (c(5) + s1 * (c(6) + s * c(7)));
        c(0) + s * (c(1) + s1 * (c(2) + s * (c(3) + s1 * conpar)))
    }

    /// Interpolated state at `t`, written into `out` (length `dim`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.component(t, i);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

/// Adaptive stepper over `[t0, t_end]` for `ẏ = f(t, y)`.
pub struct Dop853<F> {
    f: F,
    n: usize,
    t: f64,
    t_end: f64,
    h: f64,
    h_max: f64,
    y: Vec<f64>,
    k1: Vec<f64>,
    k: [Vec<f64>; 9],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    steps: usize,
    accepted: usize,
    rejected: usize,
    evals: usize,
    facold: f64,
    last_rejected: bool,
    dense: DenseStep,
}

impl<F> Dop853<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(f: F, t0: f64, y0: &[f64], t_end: f64, settings: &IntegratorSettings) -> Result<Self> {
        settings.validate()?;
        // also rejects NaN endpoints
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(t_end > t0) {
            return Err(Error::InvalidConfig { field: "t_span".into(), reason: format!("need t1 > t0, got ({t0}, {t_end})") });
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t0 });
        }
        let n = y0.len();
        let dense_dim = settings.dense_components.map_or(n, |d| d.min(n));
        let mut s = Self {
            f,
            n,
            t: t0,
            t_end,
            h: 0.0,
            h_max: t_end - t0,
            y: y0.to_vec(),
            k1: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            rtol: settings.rtol,
            atol: settings.atol,
            max_steps: settings.max_steps,
            steps: 0,
            accepted: 0,
            rejected: 0,
            evals: 0,
            facold: 1e-4,
            last_rejected: false,
            dense: DenseStep::with_dim(dense_dim),
        };
        (s.f)(t0, &s.y, &mut s.k1);
        s.evals += 1;
        if s.k1.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t0 });
        }
        s.h = match settings.initial_step {
            Some(h) => h.min(s.h_max),
            None => s.initial_step(),
        };
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.t_end
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn evaluations(&self) -> usize {
        self.evals
    }

    /// Dense output of the most recent accepted step.
    pub fn last_step(&self) -> &DenseStep {
        &self.dense
    }

    fn weight(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    // Starting step: h^8 · max(|f0|, |f'|) = 0.01 as in Hairer's HINIT.
    fn initial_step(&mut self) -> f64 {
        let n = self.n;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = self.atol + self.rtol * self.y[i].abs();
            dnf += (self.k1[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.h_max);
        for i in 0..n {
            self.y_stage[i] = self.y[i] + h * self.k1[i];
        }
        let mut f1 = std::mem::take(&mut self.k[0]);
        (self.f)(self.t + h, &self.y_stage, &mut f1);
        self.evals += 1;
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = self.atol + self.rtol * self.y[i].abs();
            der2 += ((f1[i] - self.k1[i]) / sk).powi(2);
        }
        self.k[0] = f1;
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if !der12.is_finite() {
            h * 1e-3
        } else if der12 <= 1e-15 {
            (h.abs() * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h).min(h1).min(self.h_max)
    }

    fn stage(&mut self, c: f64, coefs: &[(usize, f64)], h: f64, out: usize) {
        // k index convention: 0 => k1, j => self.k[j-1]
        for i in 0..self.n {
            let mut acc = 0.0;
            for &(j, a) in coefs {
                let kj = if j == 0 { self.k1[i] } else { self.k[j - 1][i] };
                acc += a * kj;
            }
            self.y_stage[i] = self.y[i] + h * acc;
        }
        let mut buf = std::mem::take(&mut self.k[out - 1]);
        (self.f)(self.t + c * h, &self.y_stage, &mut buf);
        self.k[out - 1] = buf;
        self.evals += 1;
    }

    /// Advances by one accepted step. Returns `Ok(false)` once `t_end` has been reached.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        loop {
            if self.steps >= self.max_steps {
                return Err(Error::StepLimitExceeded { max_steps: self.max_steps, t: self.t });
            }
            let mut h = self.h.min(self.h_max);
            let last = self.t + 1.01 * h >= self.t_end;
            if last {
                h = self.t_end - self.t;
            }
            if h.abs() <= 10.0 * f64::EPSILON * self.t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            self.steps += 1;

            // Stage slots: k[0]=k2 ... k[8]=k10, k1 separate.
            self.stage(C2, &[(0, A21)], h, 1);
            self.stage(C3, &[(0, A31), (1, A32)], h, 2);
            self.stage(C4, &[(0, A41), (2, A43)], h, 3);
            self.stage(C5, &[(0, A51), (2, A53), (3, A54)], h, 4);
            self.stage(C6, &[(0, A61), (3, A64), (4, A65)], h, 5);
            self.stage(C7, &[(0, A71), (3, A74), (4, A75), (5, A76)], h, 6);
            self.stage(C8, &[(0, A81), (3, A84), (4, A85), (5, A86), (6, A87)], h, 7);
            self.stage(C9, &[(0, A91), (3, A94), (4, A95), (5, A96), (6, A97), (7, A98)], h, 8);
            self.stage(C10, &[(0, A101), (3, A104), (4, A105), (5, A106), (6, A107), (7, A108), (8, A109)], h, 9);
            // stage 11 goes into k2's slot, stage 12 into k3's slot (as in the reference code)
            let k11 = {
                for i in 0..self.n {
                    let k = &self.k;
                    let acc = A111 * self.k1[i]
                        + A114 * k[2][i]
                        + A115 * k[3][i]
                        + A116 * k[4][i]
                        + A117 * k[5][i]
                        + A118 * k[6][i]
                        + A119 * k[7][i]
                        + A1110 * k[8][i];
                    self.y_stage[i] = self.y[i] + h * acc;
                }
                let mut buf = vec![0.0; self.n];
                (self.f)(self.t + C11 * h, &self.y_stage, &mut buf);
                buf
            };
            let t_new = self.t + h;
            let mut yy1 = vec![0.0; self.n];
            for i in 0..self.n {
                let k = &self.k;
                let acc = A121 * self.k1[i]
                    + A124 * k[2][i]
                    + A125 * k[3][i]
                    + A126 * k[4][i]
                    + A127 * k[5][i]
                    + A128 * k[6][i]
                    + A129 * k[7][i]
                    + A1210 * k[8][i]
                    + A1211 * k11[i];
                yy1[i] = self.y[i] + h * acc;
            }
            let mut k12 = vec![0.0; self.n];
            (self.f)(t_new, &yy1, &mut k12);
            self.evals += 2;

            let mut err = 0.0;
            let mut err2 = 0.0;
            let mut finite = true;
            for i in 0..self.n {
                let k = &self.k;
                let incr = B1 * self.k1[i]
                    + B6 * k[4][i]
                    + B7 * k[5][i]
                    + B8 * k[6][i]
                    + B9 * k[7][i]
                    + B10 * k[8][i]
                    + B11 * k11[i]
                    + B12 * k12[i];
                self.y_new[i] = self.y[i] + h * incr;
                if !self.y_new[i].is_finite() {
                    finite = false;
                }
                let sk = self.weight(self.y[i], self.y_new[i]);
                let e2 = incr - BHH1 * self.k1[i] - BHH2 * k[7][i] - BHH3 * k12[i];
                err2 += (e2 / sk).powi(2);
                let e1 = ER1 * self.k1[i]
                    + ER6 * k[4][i]
                    + ER7 * k[5][i]
                    + ER8 * k[6][i]
                    + ER9 * k[7][i]
                    + ER10 * k[8][i]
                    + ER11 * k11[i]
                    + ER12 * k12[i];
                err += (e1 / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = if finite { h.abs() * err * (1.0 / (deno * self.n as f64)).sqrt() } else { f64::INFINITY };
            let err = if err.is_nan() { f64::INFINITY } else { err };

            let fac11 = err.powf(EXPO1);
            let fac = (1.0 / FAC2).max((1.0 / FAC1).min(fac11 / SAFE));
            let mut h_new = h / fac;

            if err <= 1.0 {
                self.facold = err.max(1e-4);
                self.accepted += 1;
                let mut k_end = vec![0.0; self.n];
                (self.f)(t_new, &self.y_new, &mut k_end);
                self.evals += 1;
                if k_end.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { t: t_new });
                }
                self.build_dense(h, &k11, &k12, &k_end);
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k1 = k_end;
                self.t = if last { self.t_end } else { t_new };
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.last_rejected = false;
                self.h = h_new.min(self.h_max);
                return Ok(true);
            }
            h_new = h / (1.0 / FAC1).min(fac11 / SAFE);
            if !h_new.is_finite() || h_new <= 0.0 {
                h_new = h / (1.0 / FAC1);
            }
            self.rejected += 1;
            self.last_rejected = true;
            self.h = h_new;
        }
    }

    // Dense coefficients for the step [t, t + h]; three extra stages.
    fn build_dense(&mut self, h: f64, k11: &[f64], k12: &[f64], k_end: &[f64]) {
        let d = self.dense.dim;
        let n = self.n;
        let t = self.t;
        // stage 14
        let mut k14 = vec![0.0; n];
        let mut k15 = vec![0.0; n];
        let mut k16 = vec![0.0; n];
        for i in 0..n {
            let k = &self.k;
            let acc = A141 * self.k1[i]
                + A147 * k[5][i]
                + A148 * k[6][i]
                + A149 * k[7][i]
                + A1410 * k[8][i]
                + A1411 * k11[i]
                + A1412 * k12[i]
                + A1413 * k_end[i];
            self.y_stage[i] = self.y[i] + h * acc;
        }
        (self.f)(t + C14 * h, &self.y_stage, &mut k14);
        for i in 0..n {
            let k = &self.k;
            let acc = A151 * self.k1[i]
                + A156 * k[4][i]
                + A157 * k[5][i]
                + A158 * k[6][i]
                + A1511 * k11[i]
                + A1512 * k12[i]
                + A1513 * k_end[i]
                + A1514 * k14[i];
            self.y_stage[i] = self.y[i] + h * acc;
        }
        (self.f)(t + C15 * h, &self.y_stage, &mut k15);
        for i in 0..n {
            let k = &self.k;
            let acc = A161 * self.k1[i]
                + A166 * k[4][i]
                + A167 * k[5][i]
                + A168 * k[6][i]
                + A169 * k[7][i]
                + A1613 * k_end[i]
                + A1614 * k14[i]
                + A1615 * k15[i];
            self.y_stage[i] = self.y[i] + h * acc;
        }
        (self.f)(t + C16 * h, &self.y_stage, &mut k16);
        self.evals += 3;

        let dense = &mut self.dense;
        dense.t0 = t;
        dense.h = h;
        let k = &self.k;
        for i in 0..d {
            let ydiff = self.y_new[i] - self.y[i];
            let bspl = h * self.k1[i] - ydiff;
            dense.cont[i] = self.y[i];
            dense.cont[d + i] = ydiff;
            dense.cont[2 * d + i] = bspl;
            dense.cont[3 * d + i] = ydiff - h * k_end[i] - bspl;
            let (k1, k6, k7, k8, k9, k10) = (self.k1[i], k[4][i], k[5][i], k[6][i], k[7][i], k[8][i]);
            let (k11, k12, k13, k14, k15, k16) = (k11[i], k12[i], k_end[i], k14[i], k15[i], k16[i]);
            dense.cont[4 * d + i] = h
                * (D41 * k1 + D46 * k6 + D47 * k7 + D48 * k8 + D49 * k9 + D410 * k10 + D411 * k11 + D412 * k12
                    + D413 * k13
                    + D414 * k14
                    + D415 * k15
                    + D416 * k16);
            dense.cont[5 * d + i] = h
                * (D51 * k1 + D56 * k6 + D57 * k7 + D58 * k8 + D59 * k9 + D510 * k10 + D511 * k11 + D512 * k12
                    + D513 * k13
                    + D514 * k14
                    + D515 * k15
                    + D516 * k16);
            dense.cont[6 * d + i] = h
                * (D61 * k1 + D66 * k6 + D67 * k7 + D68 * k8 + D69 * k9 + D610 * k10 + D611 * k11 + D612 * k12
                    + D613 * k13
                    + D614 * k14
                    + D615 * k15
                    + D616 * k16);
            dense.cont[7 * d + i] = h
                * (D71 * k1 + D76 * k6 + D77 * k7 + D78 * k8 + D79 * k9 + D710 * k10 + D711 * k11 + D712 * k12
                    + D713 * k13
                    + D714 * k14
                    + D715 * k15
                    + D716 * k16);
        }
    }
}
