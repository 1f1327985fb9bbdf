//! The scalar mean-field pitchfork model
//!
//! ```text
//! dX = (α X + β E X − X E X²) dt + X dW
//! ```
//!
//! its linearisation `dZ = (α Z + β E Z) dt + Z dW` at zero, and the planar
//! ODE for `(x, y) = (E X, E X²)`:
//!
//! ```text
//! x' = x (α + β − y)
//! y' = (2α + 1) y + 2β x² − 2 y²
//! ```
//!
//! Attractor experiments use `β = 1` and work on moments only.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::ode::{integrate_adaptive, integrate_adaptive_dense, OdeProblem};
use crate::numerics::Tolerances;
use crate::spectrum::{Method, SpectrumEstimate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchforkParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PitchforkParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::invalid("alpha and beta must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    /// `β = 1`, the attractor setting.
    pub fn attractor(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    fn require_unit_beta(&self) -> Result<()> {
        if self.beta != 1.0 {
            return Err(Error::invalid(format!(
                "this operation needs beta = 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// `(x, y) = (E X, E X²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub x: f64,
    pub y: f64,
}

impl ReducedState {
    /// Validated state with `y >= x² - 1e-9`.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("reduced state must be finite"));
        }
        if y < x * x - 1e-9 {
            return Err(Error::Inadmissible(format!(
                "E X² = {y} is below (E X)² = {}",
                x * x
            )));
        }
        Ok(Self { x, y })
    }

    pub fn ms_norm(&self) -> f64 {
        self.y.max(0.0).sqrt()
    }

    pub fn distance(&self, other: &ReducedState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `‖Φ(t, s) Z‖²_ms` for the linearisation, in closed form:
/// `e^{(2α+1)τ} (‖Z‖² + 2β (E Z)² ∫_0^τ e^{(2β−1)u} du)` with `τ = t − s`.
pub fn analytic_ms_norm_sq(params: &PitchforkParams, s: f64, t: f64, norm_sq: f64, mean: f64) -> Result<f64> {
    if t < s {
        return Err(Error::invalid(format!("end time {t} precedes start time {s}")));
    }
    if mean * mean > norm_sq {
        return Err(Error::Inadmissible(format!(
            "(E Z)² = {} exceeds E Z² = {norm_sq}",
            mean * mean
        )));
    }
    let tau = t - s;
    let (alpha, beta) = (params.alpha, params.beta);
    let k = 2.0 * beta - 1.0;
    let integral = if k.abs() < 1e-8 { tau } else { (k * tau).exp_m1() / k };
    Ok(((2.0 * alpha + 1.0) * tau).exp() * (norm_sq + 2.0 * beta * mean * mean * integral))
}

/// `{α + 1/2} ∪ {α + β}` if `β > 1/2`, else `{α + 1/2}`.
pub fn analytic_spectrum(params: &PitchforkParams) -> SpectrumEstimate {
    let mut points = vec![params.alpha + 0.5];
    if params.beta > 0.5 {
        points.push(params.alpha + params.beta);
    }
    SpectrumEstimate::from_points(&points, Method::EigenLift)
}

pub fn reduced_rhs(params: &PitchforkParams, state: &ReducedState) -> (f64, f64) {
    let (a, b) = (params.alpha, params.beta);
    let (x, y) = (state.x, state.y);
    (x * (a + b - y), (2.0 * a + 1.0) * y + 2.0 * b * x * x - 2.0 * y * y)
}

/// Steady states of the reduced system with validity flags: `(0, 0)`
/// always; `(±√((α+1)/2), α+1)` for `α > −1`; `(0, α+1/2)` for `α ≥ −1/2`.
pub fn steady_states(params: &PitchforkParams) -> Result<Vec<(ReducedState, bool)>> {
    params.require_unit_beta()?;
    let a = params.alpha;
    let branch_x = ((a + 1.0) / 2.0).max(0.0).sqrt();
    let branch_ok = a > -1.0;
    Ok(vec![
        (ReducedState { x: 0.0, y: 0.0 }, true),
        (ReducedState { x: branch_x, y: a + 1.0 }, branch_ok),
        (ReducedState { x: -branch_x, y: a + 1.0 }, branch_ok),
        (ReducedState { x: 0.0, y: a + 0.5 }, a >= -0.5),
    ])
}

/// Radius `√(|α|+2)` of the absorbing ball and the time `ln(R²/(|α|+2))`
/// after which a family bounded by `R` has entered it.
pub fn absorbing_data(params: &PitchforkParams, r: f64) -> Result<(f64, f64)> {
    params.require_unit_beta()?;
    if !(r > 0.0) {
        return Err(Error::invalid("R must be positive"));
    }
    let level = params.alpha.abs() + 2.0;
    let time = if r * r > level { (r * r / level).ln() } else { 0.0 };
    Ok((level.sqrt(), time))
}

fn rhs_fn(params: PitchforkParams) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_t, y: &[f64], dy: &mut [f64]| {
        let (dx, dyy) = reduced_rhs(&params, &ReducedState { x: y[0], y: y[1] });
        dy[0] = dx;
        dy[1] = dyy;
    }
}

/// Reduced state at `t` from `start` at `s`.
pub fn integrate_reduced(
    params: &PitchforkParams,
    start: ReducedState,
    s: f64,
    t: f64,
    tol: Tolerances,
) -> Result<ReducedState> {
    let problem = OdeProblem::new(s, t, vec![start.x, start.y], rhs_fn(*params));
    let y = integrate_adaptive(&problem, tol)?;
    Ok(ReducedState { x: y[0], y: y[1] })
}

/// Reduced states at each of the nondecreasing `times` (all `>= s`).
pub fn reduced_trajectory(
    params: &PitchforkParams,
    start: ReducedState,
    s: f64,
    times: &[f64],
    tol: Tolerances,
) -> Result<Vec<ReducedState>> {
    let ys = integrate_adaptive_dense(s, &[start.x, start.y], times, rhs_fn(*params), tol)?;
    Ok(ys.into_iter().map(|y| ReducedState { x: y[0], y: y[1] }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Trivial,
    PositiveBranch,
    NegativeBranch,
    None,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Trivial => "trivial",
            Classification::PositiveBranch => "positive-branch",
            Classification::NegativeBranch => "negative-branch",
            Classification::None => "none",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nearest valid steady state within `tol`; the state `(0, α+1/2)` and
/// anything farther than `tol` from every steady state map to `None`.
pub fn classify(params: &PitchforkParams, state: &ReducedState, tol: f64) -> Result<Classification> {
    let states = steady_states(params)?;
    let labels = [
        Classification::Trivial,
        Classification::PositiveBranch,
        Classification::NegativeBranch,
        Classification::None,
    ];
    let best = states
        .iter()
        .zip(labels)
        .filter(|((_, valid), _)| *valid)
        .map(|((st, _), label)| (state.distance(st), label))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    Ok(match best {
        Some((dist, label)) if dist <= tol => label,
        _ => Classification::None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackOptions {
    pub classify_tol: f64,
    pub tol: Tolerances,
}

impl Default for PullbackOptions {
    fn default() -> Self {
        Self {
            classify_tol: 1e-4,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackRun {
    pub t: f64,
    pub start_times: Vec<f64>,
    pub limits: Vec<ReducedState>,
    pub classifications: Vec<Classification>,
    /// Classification of the limit from the earliest start time.
    pub converged_to: Classification,
    /// Whether the distance of successive limits to the final one is
    /// nonincreasing as the start time recedes.
    pub monotone: bool,
}

/// Integrates the reduced system from each start time `s` (strictly
/// decreasing, all `<= t`) to `t`, starting from `init(s)`.
pub fn pullback_run<P>(
    params: &PitchforkParams,
    init: P,
    t: f64,
    start_times: &[f64],
    opts: &PullbackOptions,
) -> Result<PullbackRun>
where
    P: Fn(f64) -> ReducedState + Sync,
{
    params.require_unit_beta()?;
    if start_times.is_empty() {
        return Err(Error::invalid("need at least one start time"));
    }
    if start_times.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("start times must be strictly decreasing"));
    }
    if start_times.iter().any(|&s| !(s <= t) || !s.is_finite()) {
        return Err(Error::invalid(format!("start times must be finite and <= t = {t}")));
    }
    let limits: Vec<ReducedState> = start_times
        .par_iter()
        .map(|&s| {
            let start = init(s);
            ReducedState::new(start.x, start.y)
                .and_then(|st| integrate_reduced(params, st, s, t, opts.tol))
                .and_then(|l| {
                    if l.x.is_finite() && l.y.is_finite() {
                        Ok(l)
                    } else {
                        Err(Error::IntegrationDiverged { time: t })
                    }
                })
                .map_err(|e| Error::AtStartTime {
                    start: s,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let classifications = limits
        .iter()
        .map(|l| classify(params, l, opts.classify_tol))
        .collect::<Result<Vec<_>>>()?;
    let last = *limits.last().expect("nonempty");
    let dists: Vec<f64> = limits.iter().map(|l| l.distance(&last)).collect();
    let monotone = dists.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(PullbackRun {
        t,
        start_times: start_times.to_vec(),
        converged_to: *classifications.last().expect("nonempty"),
        limits,
        classifications,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub classification: Classification,
    pub limit: ReducedState,
    pub ms_norm: f64,
}

/// One pullback run of depth `depth` (ending at `t = 0`) per `α`, with a
/// constant initial family.
pub fn bifurcation_sweep(
    alpha_grid: &[f64],
    init: ReducedState,
    depth: f64,
    opts: &PullbackOptions,
) -> Result<Vec<SweepRow>> {
    if !(depth >= 40.0) || !depth.is_finite() {
        return Err(Error::invalid(format!("pullback depth {depth} must be at least 40")));
    }
    alpha_grid
        .par_iter()
        .map(|&alpha| {
            let params = PitchforkParams::attractor(alpha)?;
            let run = pullback_run(&params, |_| init, 0.0, &[-depth], opts)?;
            let limit = run.limits[0];
            Ok(SweepRow {
                alpha,
                classification: run.converged_to,
                limit,
                ms_norm: limit.ms_norm(),
            })
        })
        .collect()
}
