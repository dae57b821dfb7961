//! Limit-cycle location, phase anchoring and period measurement.
//!
//! The phase convention is a rising crossing of the section `y = 0` on the
//! right branch (`x > 0`; since `ẏ = x`, rising implies `x > 0`). At large μ
//! this crossing sits on the slow manifold, far from the jumps.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ParameterVector, State, VanDerPol};
use crate::error::{Error, Result};
use crate::integrate::{CrossingSearch, Direction, IntegratorSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSettings {
    /// Max-norm agreement required between successive section returns.
    pub tolerance: f64,
    pub max_periods: usize,
    /// Section is `y = section_level`, crossed upwards.
    pub section_level: f64,
    pub seed: State,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_periods: 200, section_level: 0.0, seed: State::new(2.0, 0.0) }
    }
}

/// A closed orbit anchored on the section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub anchor: State,
    /// Period in unscaled time.
    pub period: f64,
    pub mu: f64,
    pub params: ParameterVector,
    /// `|z(T) − z(0)|` in the max norm.
    pub residual: f64,
}

// Upper bound on the time between two section returns; generous for both the
// relaxation (T → 3 − 2 ln 2) and the harmonic (T → 2π/μ) regimes.
fn return_horizon(mu: f64) -> f64 {
    4.0 * (2.0 * std::f64::consts::PI / mu + 3.0)
}

fn vector_field<'a>(model: &'a VanDerPol, a: &'a ParameterVector) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    move |_t, z, dz| {
        let f = model.rhs(&State::new(z[0], z[1]), a);
        dz[0] = f.x;
        dz[1] = f.y;
    }
}

/// Integrates through section returns until two successive returns agree.
///
/// The agreement threshold is `orbit.tolerance`, floored at `10 · rtol`: the
/// return map cannot be resolved more finely than the integration itself.
pub fn settle(
    model: &VanDerPol,
    a: &ParameterVector,
    start: State,
    settings: &IntegratorSettings,
    orbit: &OrbitSettings,
) -> Result<State> {
    if !start.is_finite() {
        return Err(Error::NonFiniteState { t: 0.0 });
    }
    let level = orbit.section_level;
    let tolerance = orbit.tolerance.max(10.0 * settings.rtol);
    let t_max = return_horizon(model.config().mu) * (orbit.max_periods as f64 + 1.0);
    let mut search = CrossingSearch::new(
        vector_field(model, a),
        0.0,
        &[start.x, start.y],
        t_max,
        settings,
        move |_t, z: &[f64]| z[1] - level,
        Direction::Rising,
    )?;
    let mut prev: Option<State> = None;
    let mut defect = f64::INFINITY;
    for returns in 1..=orbit.max_periods {
        let c = match search.next_crossing() {
            Ok(c) => c,
            Err(Error::NoCrossing { .. }) => return Err(Error::NoConvergence { returns, defect }),
            Err(e) => return Err(e),
        };
        let here = State::new(c.state[0], level);
        // a start sitting on the section counts as the zeroth return
        let reference = prev.or(((start.y - level).abs() <= 1e-12).then_some(start));
        if let Some(reference) = reference {
            defect = here.max_abs_diff(&reference);
            if defect < tolerance {
                return Ok(here);
            }
        }
        prev = Some(here);
    }
    Err(Error::NoConvergence { returns: orbit.max_periods, defect })
}

/// Time from `anchor` to its next section return.
pub fn measure_period(
    model: &VanDerPol,
    a: &ParameterVector,
    anchor: State,
    settings: &IntegratorSettings,
    orbit: &OrbitSettings,
) -> Result<LimitCycle> {
    let level = orbit.section_level;
    let mut search = CrossingSearch::new(
        vector_field(model, a),
        0.0,
        &[anchor.x, anchor.y],
        return_horizon(model.config().mu),
        settings,
        move |_t, z: &[f64]| z[1] - level,
        Direction::Rising,
    )?;
    let c = search.next_crossing()?;
    let back = State::new(c.state[0], c.state[1]);
    Ok(LimitCycle {
        anchor,
        period: c.t,
        mu: model.config().mu,
        params: a.clone(),
        residual: back.max_abs_diff(&anchor),
    })
}

/// `settle` from the configured seed, then `measure_period`.
pub fn find_limit_cycle(
    model: &VanDerPol,
    a: &ParameterVector,
    settings: &IntegratorSettings,
    orbit: &OrbitSettings,
) -> Result<LimitCycle> {
    let anchor = settle(model, a, orbit.seed, settings, orbit)?;
    measure_period(model, a, anchor, settings, orbit)
}
