//! Adaptive ODE integration with error control, dense output and
//! section-crossing detection.
//!
//! The single method is the explicit Dormand–Prince 8(5,3) pair. With the
//! default tolerances it handles the stiffness ratio of 10⁴ reached at μ = 100
//! without trouble (the step size is then stability-limited on the slow
//! branches, which is still only a few thousand steps per period).

mod dop853;
mod tableau;

pub use dop853::{DenseStep, Dop853};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Every accepted step is kept for dense output (a few KB each for the
    /// variational system), so this also bounds memory.
    pub max_steps: usize,
    /// `None` selects the starting step automatically.
    pub initial_step: Option<f64>,
    /// Number of leading components that get dense output (`None` = all).
    /// Trailing components (e.g. quadrature accumulators) are still
    /// error-controlled but cannot be interpolated.
    #[serde(skip)]
    pub dense_components: Option<usize>,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 1_000_000, initial_step: None, dense_components: None }
    }
}

impl IntegratorSettings {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1e-14..=1e-2).contains(&self.rtol) {
            return Err(Error::InvalidConfig { field: "rtol".into(), reason: format!("{} outside [1e-14, 1e-2]", self.rtol) });
        }
        if !(1e-16..=1e-2).contains(&self.atol) {
            return Err(Error::InvalidConfig { field: "atol".into(), reason: format!("{} outside [1e-16, 1e-2]", self.atol) });
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig { field: "max_steps".into(), reason: "must be positive".into() });
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig { field: "initial_step".into(), reason: format!("{h} is not positive") });
            }
        }
        Ok(())
    }
}

/// Accepted steps of one integration plus their dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    steps: Vec<DenseStep>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn steps(&self) -> &[DenseStep] {
        &self.steps
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Index of the step whose closed interval contains `t` (clamped).
    fn step_index(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s <= t);
        i.saturating_sub(1).min(self.steps.len() - 1)
    }

    /// State at `t` from the dense output. Stored step endpoints are returned exactly.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if let Ok(i) = self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            return self.state(i).to_vec();
        }
        if self.steps.is_empty() {
            return self.state(0).to_vec();
        }
        self.steps[self.step_index(t)].eval(t)
    }
}

/// Integrates `ẏ = f(t, y)` over `t_span`, recording every accepted step.
pub fn integrate<F>(f: F, y0: &[f64], t_span: (f64, f64), settings: &IntegratorSettings) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut settings = *settings;
    settings.dense_components = None;
    let mut stepper = Dop853::new(f, t_span.0, y0, t_span.1, &settings)?;
    let dim = y0.len();
    let mut traj = Trajectory { dim, times: vec![t_span.0], states: y0.to_vec(), steps: Vec::new() };
    while stepper.step()? {
        traj.times.push(stepper.t());
        traj.states.extend_from_slice(stepper.y());
        traj.steps.push(stepper.last_step().clone());
    }
    Ok(traj)
}

/// Like [`integrate`], but only the first `dense_dim` components are stored
/// and interpolated; the remaining ones (quadrature accumulators) are
/// returned at `t_span.1` only.
pub fn integrate_with_accumulators<F>(
    f: F,
    y0: &[f64],
    t_span: (f64, f64),
    dense_dim: usize,
    settings: &IntegratorSettings,
) -> Result<(Trajectory, Vec<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dense_dim = dense_dim.min(y0.len());
    let mut settings = *settings;
    settings.dense_components = Some(dense_dim);
    let mut stepper = Dop853::new(f, t_span.0, y0, t_span.1, &settings)?;
    let mut traj = Trajectory { dim: dense_dim, times: vec![t_span.0], states: y0[..dense_dim].to_vec(), steps: Vec::new() };
    while stepper.step()? {
        traj.times.push(stepper.t());
        traj.states.extend_from_slice(&stepper.y()[..dense_dim]);
        traj.steps.push(stepper.last_step().clone());
    }
    Ok((traj, stepper.y().to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
}

impl Direction {
    fn matches(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventOptions {
    /// Required `|g(t*, y(t*))|` at the located root.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EventOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub state: Vec<f64>,
}

/// Locates a root of `g` inside `[ta, tb]` on the step's dense output,
/// given `g(ta) = ga` and `g(tb) = gb` of opposite sign.
///
/// Bisection until the bracket is below 1% of the step, then Illinois
/// false position until `|g| < tol`.
pub fn locate_root<G>(step: &DenseStep, g: &G, (ta, ga): (f64, f64), (tb, gb): (f64, f64), opts: &EventOptions) -> Crossing
where
    G: Fn(f64, &[f64]) -> f64,
{
    let mut buf = vec![0.0; step.dim()];
    let eval = |t: f64, buf: &mut Vec<f64>| {
        step.eval_into(t, buf);
        g(t, buf)
    };
    let (mut a, mut fa, mut b, mut fb) = (ta, ga, tb, gb);
    if fa == 0.0 {
        return Crossing { t: a, state: step.eval(a) };
    }
    if fb == 0.0 {
        return Crossing { t: b, state: step.eval(b) };
    }
    let width = (tb - ta).abs();
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for it in 0..opts.max_iter {
        let bisect = (b - a).abs() > 0.01 * width && it < 8;
        let mut c = if bisect { 0.5 * (a + b) } else { (a * fb - b * fa) / (fb - fa) };
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = eval(c, &mut buf);
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc.abs() < opts.tol || (b - a).abs() <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            break;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 && !bisect {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 && !bisect {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Crossing { t: best.0, state: step.eval(best.0) }
}

/// First crossing of `g` in the requested direction strictly after `t_after`.
pub fn find_crossing_after<G>(traj: &Trajectory, g: G, dir: Direction, t_after: f64, opts: &EventOptions) -> Result<Crossing>
where
    G: Fn(f64, &[f64]) -> f64,
{
    let mut prev: Option<(f64, f64)> = None;
    for (i, step) in traj.steps.iter().enumerate() {
        let t1 = traj.times[i + 1];
        if t1 <= t_after {
            continue;
        }
        let ta = traj.times[i].max(t_after);
        let ga = match prev {
            Some((t, v)) if t == ta => v,
            _ => {
                let v = if ta == traj.times[i] { g(ta, traj.state(i)) } else { g(ta, &step.eval(ta)) };
                // starting on the section: wait for the next genuine crossing
                if ta == t_after && v.abs() <= opts.tol {
                    match dir {
                        Direction::Rising => v.abs(),
                        Direction::Falling => -v.abs(),
                    }
                } else {
                    v
                }
            }
        };
        let gb = g(t1, traj.state(i + 1));
        prev = Some((t1, gb));
        if dir.matches(ga, gb) {
            return Ok(locate_root(step, &g, (ta, ga), (t1, gb), opts));
        }
    }
    Err(Error::NoCrossing { t0: t_after.max(traj.t_start()), t1: traj.t_end() })
}

/// First crossing of `g` in the requested direction over the whole trajectory.
pub fn find_crossing<G>(traj: &Trajectory, g: G, dir: Direction) -> Result<Crossing>
where
    G: Fn(f64, &[f64]) -> f64,
{
    find_crossing_after(traj, g, dir, f64::NEG_INFINITY, &EventOptions::default())
}

/// Live integration that reports successive section crossings without
/// storing the trajectory.
pub struct CrossingSearch<F, G> {
    stepper: Dop853<F>,
    g: G,
    dir: Direction,
    opts: EventOptions,
    g_prev: f64,
}

impl<F, G> CrossingSearch<F, G>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: Fn(f64, &[f64]) -> f64,
{
    pub fn new(f: F, t0: f64, y0: &[f64], t_max: f64, settings: &IntegratorSettings, g: G, dir: Direction) -> Result<Self> {
        let mut settings = *settings;
        settings.dense_components = None;
        let stepper = Dop853::new(f, t0, y0, t_max, &settings)?;
        let g_prev = g(t0, y0);
        Ok(Self { stepper, g, dir, opts: EventOptions::default(), g_prev })
    }

    pub fn with_event_options(mut self, opts: EventOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn t(&self) -> f64 {
        self.stepper.t()
    }

    pub fn state(&self) -> &[f64] {
        self.stepper.y()
    }

    /// Integrates until the next matching crossing. At most one crossing per
    /// accepted step is reported.
    pub fn next_crossing(&mut self) -> Result<Crossing> {
        let t_from = self.stepper.t();
        loop {
            let ta = self.stepper.t();
            if !self.stepper.step()? {
                return Err(Error::NoCrossing { t0: t_from, t1: ta });
            }
            let tb = self.stepper.t();
            let gb = (self.g)(tb, self.stepper.y());
            let ga = std::mem::replace(&mut self.g_prev, gb);
            if self.dir.matches(ga, gb) {
                return Ok(locate_root(self.stepper.last_step(), &self.g, (ta, ga), (tb, gb), &self.opts));
            }
        }
    }
}
