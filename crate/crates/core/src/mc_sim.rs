//! Interacting-particle Euler-Maruyama simulation of mean-field SDEs.
//!
//! `E X_t` (and `E X_t²` for the pitchfork model) is replaced by the
//! ensemble average at the start of each step. Each particle is driven by its
//! own scalar Wiener process. Particles are processed in fixed chunks: the
//! increments of chunk `k` at step `n` come from the counter-based block
//! `(seed, n, k)`, and per-chunk compensated sums are merged exactly in
//! chunk order, so results do not depend on thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moment::{propagate_moments, CoefficientSystem, Coefficients, MomentState};
use crate::numerics::linalg::symmetric_eigen;
use crate::numerics::{Matrix, StableSum, Tolerances};
use crate::pitchfork::{integrate_reduced, PitchforkParams, ReducedState};
use crate::rng::{fill_block_normals, fill_normals};

/// Particles per reduction chunk and per parallel work item.
const CHUNK: usize = 4096;
/// Magnitude beyond which a particle counts as diverged.
pub const BLOW_UP: f64 = 1e12;
/// RNG stream used for Gaussian initialisation (steps use streams `0..`).
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Linear(CoefficientSystem),
    /// `dX = (α X + β E X − X E X²) dt + X dW`.
    Pitchfork(PitchforkParams),
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Linear(c) => c.dim(),
            ModelSpec::Pitchfork(_) => 1,
        }
    }
}

/// `N` particles in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub d: usize,
    pub particles: Vec<f64>,
    pub time: f64,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(d: usize, particles: Vec<f64>, time: f64, seed: u64) -> Result<Self> {
        if d == 0 || particles.len() % d != 0 {
            return Err(Error::invalid(format!(
                "{} particle entries do not fill rows of length {d}",
                particles.len()
            )));
        }
        if particles.len() / d < 2 {
            return Err(Error::invalid("an ensemble needs at least 2 particles"));
        }
        if particles.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("particle entries must be finite"));
        }
        Ok(Self {
            d,
            particles,
            time,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.particles.len() / self.d
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Gaussian particles with mean `m` and covariance `S - m mᵀ`.
    Moments(MomentState),
    /// Explicit `N x d` row-major particle array.
    Particles(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub s: f64,
    pub t: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    /// Record moment estimates every this many steps (the final time is
    /// always recorded); 0 records only the endpoints.
    pub record_every: usize,
}

/// Ensemble moments with standard errors of the averaged quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub state: MomentState,
    pub se_mean: Vec<f64>,
    pub se_secmom: Matrix,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<MomentEstimate>,
    pub ensemble: Ensemble,
}

/// Gaussian particles with the moments of `init`, deterministic in `seed`.
pub fn initial_particles(init: &MomentState, n: usize, seed: u64) -> Vec<f64> {
    let d = init.dim();
    let (vals, vecs) = symmetric_eigen(&init.covariance().symmetrized());
    // factor L = V diag(sqrt λ+), so that L Lᵀ is the covariance
    let mut factor = Matrix::zeros(d, d);
    for j in 0..d {
        let r = vals[j].max(0.0).sqrt();
        for i in 0..d {
            factor[(i, j)] = vecs[(i, j)] * r;
        }
    }
    let mut z = vec![0.0; n * d];
    fill_normals(seed, INIT_STREAM, 0, &mut z);
    let mut out = vec![0.0; n * d];
    for p in 0..n {
        let zp = &z[p * d..(p + 1) * d];
        for i in 0..d {
            let mut acc = init.m[i];
            for j in 0..d {
                acc += factor[(i, j)] * zp[j];
            }
            out[p * d + i] = acc;
        }
    }
    out
}

/// Per-coordinate sums (and, with `squares`, sums of the squared first
/// coordinate), exact across chunks.
struct Sums {
    first: Vec<StableSum>,
    square: StableSum,
}

impl Sums {
    fn new(d: usize) -> Self {
        Self {
            first: vec![StableSum::new(); d],
            square: StableSum::new(),
        }
    }

    fn merge(&mut self, other: &Sums) {
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            a.merge(b);
        }
        self.square.merge(&other.square);
    }
}

/// Neumaier-compensated running sum; cheap enough for the inner loop.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn into_stable(self) -> StableSum {
        [self.sum, self.comp].into_iter().collect()
    }
}

fn chunk_sums(chunk: &[f64], d: usize, squares: bool) -> Sums {
    let mut first = vec![Compensated::default(); d];
    let mut square = Compensated::default();
    for row in chunk.chunks_exact(d) {
        for (acc, &x) in first.iter_mut().zip(row) {
            acc.add(x);
        }
        if squares {
            square.add(row[0] * row[0]);
        }
    }
    Sums {
        first: first.into_iter().map(Compensated::into_stable).collect(),
        square: square.into_stable(),
    }
}

fn ensemble_sums(particles: &[f64], d: usize, squares: bool) -> Sums {
    let parts: Vec<Sums> = particles
        .par_chunks(CHUNK * d)
        .map(|c| chunk_sums(c, d, squares))
        .collect();
    let mut total = Sums::new(d);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Per-step drift and diffusion data, frozen at the step's start.
enum StepLaw<'a> {
    Linear {
        c: &'a Coefficients,
        // B mean and D mean
        b_mean: Vec<f64>,
        d_mean: Vec<f64>,
    },
    Pitchfork {
        alpha: f64,
        beta_mean: f64,
        secmom: f64,
    },
}

/// Advances one chunk of particles by one step; returns the chunk sums of the
/// new state and whether any particle left the blow-up bound.
fn advance_chunk(
    chunk: &mut [f64],
    d: usize,
    block: u64,
    law: &StepLaw,
    h: f64,
    seed: u64,
    step: u64,
    noise: &mut Vec<f64>,
    squares: bool,
) -> (Sums, bool) {
    let count = chunk.len() / d;
    noise.resize(count, 0.0);
    fill_block_normals(seed, step, block, noise);
    let sqrt_h = h.sqrt();
    let mut blown = false;
    match law {
        StepLaw::Pitchfork {
            alpha,
            beta_mean,
            secmom,
        } => {
            let lin = 1.0 + (alpha - secmom) * h;
            let shift = beta_mean * h;
            for (x, z) in chunk.iter_mut().zip(noise.iter()) {
                let v = *x;
                let next = v * lin + shift + v * (sqrt_h * z);
                blown |= !(next.abs() <= BLOW_UP);
                *x = next;
            }
        }
        StepLaw::Linear { c, b_mean, d_mean } if d == 1 => {
            let (a, cc) = (c.a[(0, 0)], c.c[(0, 0)]);
            let (bm, dm) = (b_mean[0], d_mean[0]);
            for (x, z) in chunk.iter_mut().zip(noise.iter()) {
                let v = *x;
                let dw = sqrt_h * z;
                let next = v + (a * v + bm) * h + (cc * v + dm) * dw;
                blown |= !(next.abs() <= BLOW_UP);
                *x = next;
            }
        }
        StepLaw::Linear { c, b_mean, d_mean } => {
            let mut next = vec![0.0; d];
            for (row, z) in chunk.chunks_exact_mut(d).zip(noise.iter()) {
                let dw = sqrt_h * z;
                for i in 0..d {
                    let (mut ax, mut cx) = (0.0, 0.0);
                    for j in 0..d {
                        ax += c.a[(i, j)] * row[j];
                        cx += c.c[(i, j)] * row[j];
                    }
                    next[i] = row[i] + (ax + b_mean[i]) * h + (cx + d_mean[i]) * dw;
                }
                for (x, &v) in row.iter_mut().zip(&next) {
                    blown |= !(v.abs() <= BLOW_UP);
                    *x = v;
                }
            }
        }
    }
    (chunk_sums(chunk, d, squares), blown)
}

/// Euler-Maruyama run of the particle system from `s` to `t`.
pub fn simulate_ensemble(
    model: &ModelSpec,
    init: &InitialCondition,
    cfg: &SimulationConfig,
) -> Result<Trajectory> {
    let d = model.dim();
    if !(cfg.dt > 0.0 && cfg.dt <= 1e-2) {
        return Err(Error::invalid(format!("dt = {} must lie in (0, 0.01]", cfg.dt)));
    }
    if cfg.n < 100 {
        return Err(Error::invalid(format!("N = {} must be at least 100", cfg.n)));
    }
    if !(cfg.t >= cfg.s) || !cfg.s.is_finite() || !cfg.t.is_finite() {
        return Err(Error::invalid(format!(
            "need finite s <= t, got s = {}, t = {}",
            cfg.s, cfg.t
        )));
    }
    let particles = match init {
        InitialCondition::Moments(st) => {
            if st.dim() != d {
                return Err(Error::invalid("initial moments have the wrong dimension"));
            }
            initial_particles(st, cfg.n, cfg.seed)
        }
        InitialCondition::Particles(p) => {
            if p.len() != cfg.n * d {
                return Err(Error::invalid(format!(
                    "expected {} particle entries, got {}",
                    cfg.n * d,
                    p.len()
                )));
            }
            p.clone()
        }
    };
    let mut ens = Ensemble::new(d, particles, cfg.s, cfg.seed)?;
    let pitchfork = matches!(model, ModelSpec::Pitchfork(_));

    let span = cfg.t - cfg.s;
    // tolerate grids that miss t by rounding
    let steps = ((span / cfg.dt) * (1.0 - 1e-12)).ceil() as usize;
    let mut times = vec![cfg.s];
    let mut snapshots = vec![estimate_moments(&ens)];
    let mut sums = ensemble_sums(&ens.particles, d, pitchfork);
    let n = cfg.n as f64;
    for step in 0..steps {
        let t_n = cfg.s + step as f64 * cfg.dt;
        let h = if step + 1 == steps { cfg.t - t_n } else { cfg.dt };
        let mean: Vec<f64> = sums.first.iter().map(|s| s.value() / n).collect();
        let law = match model {
            ModelSpec::Linear(sys) => {
                let c = sys.at(t_n)?;
                StepLaw::Linear {
                    c,
                    b_mean: c.b.matvec(&mean),
                    d_mean: c.d.matvec(&mean),
                }
            }
            ModelSpec::Pitchfork(p) => StepLaw::Pitchfork {
                alpha: p.alpha,
                beta_mean: p.beta * mean[0],
                secmom: sums.square.value() / n,
            },
        };
        let results: Vec<(Sums, bool)> = ens
            .particles
            .par_chunks_mut(CHUNK * d)
            .enumerate()
            .map_init(Vec::new, |noise, (k, chunk)| {
                advance_chunk(chunk, d, k as u64, &law, h, cfg.seed, step as u64, noise, pitchfork)
            })
            .collect();
        if results.iter().any(|(_, blown)| *blown) {
            return Err(Error::SimulationDiverged { step });
        }
        sums = Sums::new(d);
        for (s, _) in &results {
            sums.merge(s);
        }
        ens.time = if step + 1 == steps {
            cfg.t
        } else {
            cfg.s + (step + 1) as f64 * cfg.dt
        };
        let record = step + 1 == steps || (cfg.record_every > 0 && (step + 1) % cfg.record_every == 0);
        if record {
            times.push(ens.time);
            snapshots.push(estimate_moments(&ens));
        }
    }
    Ok(Trajectory {
        times,
        snapshots,
        ensemble: ens,
    })
}

/// Ensemble mean and raw second moments with standard errors
/// `sd / sqrt(N)` of each averaged quantity.
pub fn estimate_moments(ens: &Ensemble) -> MomentEstimate {
    let d = ens.d;
    let n = ens.n();
    let nf = n as f64;
    let mean_of = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| -> f64 {
        let parts: Vec<StableSum> = ens
            .particles
            .par_chunks(CHUNK * d)
            .map(|c| c.chunks_exact(d).map(f).collect())
            .collect();
        let mut total = StableSum::new();
        for p in &parts {
            total.merge(p);
        }
        total.value() / nf
    };
    // standard error from the sample variance of the averaged quantity
    let se_of = |f: &(dyn Fn(&[f64]) -> f64 + Sync), mu: f64| -> f64 {
        let var = mean_of(&|x| {
            let r = f(x) - mu;
            r * r
        }) * nf
            / (nf - 1.0);
        (var / nf).sqrt()
    };
    let mut m = vec![0.0; d];
    let mut se_mean = vec![0.0; d];
    for i in 0..d {
        m[i] = mean_of(&|x| x[i]);
        se_mean[i] = se_of(&|x| x[i], m[i]);
    }
    let mut s = Matrix::zeros(d, d);
    let mut se_s = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = mean_of(&|x| x[i] * x[j]);
            let se = se_of(&|x| x[i] * x[j], v);
            s[(i, j)] = v;
            s[(j, i)] = v;
            se_s[(i, j)] = se;
            se_s[(j, i)] = se;
        }
    }
    MomentEstimate {
        state: MomentState { m, s },
        se_mean,
        se_secmom: se_s,
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub mc: MomentEstimate,
    pub ode: MomentState,
    pub z_mean: Vec<f64>,
    pub z_secmom: Matrix,
}

impl ComparisonReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z_mean
            .iter()
            .chain(self.z_secmom.as_slice())
            .fold(0.0, |a, z| a.max(z.abs()))
    }
}

/// `(mc - ode) / se`; zero when both the error and the difference vanish.
pub fn z_score(mc: f64, ode: f64, se: f64) -> f64 {
    let diff = mc - ode;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * (1.0 + ode.abs()) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Moment-ODE solution from `init` over `[s, t]`: the lifted moment equations
/// for linear models, the reduced system for the pitchfork model.
pub fn reference_moments(
    model: &ModelSpec,
    init: &MomentState,
    s: f64,
    t: f64,
    tol: Tolerances,
) -> Result<MomentState> {
    match model {
        ModelSpec::Linear(sys) => propagate_moments(sys, s, t, init, tol),
        ModelSpec::Pitchfork(p) => {
            if init.dim() != 1 {
                return Err(Error::invalid("the pitchfork model is scalar"));
            }
            let start = ReducedState {
                x: init.m[0],
                y: init.s[(0, 0)],
            };
            let end = integrate_reduced(p, start, s, t, tol)?;
            Ok(MomentState {
                m: vec![end.x],
                s: Matrix::diag(&[end.y]),
            })
        }
    }
}

/// Runs the particle system and the moment ODE from the same initial
/// moments and reports `(mc - ode) / se` componentwise.
pub fn compare_with_moments(
    model: &ModelSpec,
    init: &MomentState,
    cfg: &SimulationConfig,
) -> Result<ComparisonReport> {
    let ode = reference_moments(model, init, cfg.s, cfg.t, Tolerances::default())?;
    let traj = simulate_ensemble(model, &InitialCondition::Moments(init.clone()), &SimulationConfig {
        record_every: 0,
        ..*cfg
    })?;
    let mc = traj.snapshots.last().expect("final snapshot").clone();
    let d = init.dim();
    let z_mean = (0..d)
        .map(|i| z_score(mc.state.m[i], ode.m[i], mc.se_mean[i]))
        .collect();
    let mut z_secmom = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            z_secmom[(i, j)] = z_score(mc.state.s[(i, j)], ode.s[(i, j)], mc.se_secmom[(i, j)]);
        }
    }
    Ok(ComparisonReport {
        mc,
        ode,
        z_mean,
        z_secmom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(alpha: f64, beta: f64, c: f64) -> ModelSpec {
        ModelSpec::Linear(CoefficientSystem::autonomous(Coefficients::scalar(alpha, beta, c, 0.0)))
    }

    fn cfg(t: f64, dt: f64, n: usize, seed: u64) -> SimulationConfig {
        SimulationConfig {
            s: 0.0,
            t,
            dt,
            n,
            seed,
            record_every: 0,
        }
    }

    #[test]
    fn estimate_moments_examples() {
        let ens = Ensemble::new(2, vec![1.5, -2.0].repeat(10), 0.0, 0).unwrap();
        let est = estimate_moments(&ens);
        assert_eq!(est.state.m, vec![1.5, -2.0]);
        assert_eq!(est.state.s, Matrix::outer(&[1.5, -2.0], &[1.5, -2.0]));
        assert!(est.se_mean.iter().all(|&v| v == 0.0));
        assert!(est.se_secmom.as_slice().iter().all(|&v| v == 0.0));

        let ens = Ensemble::new(1, vec![1.0, -1.0], 0.0, 0).unwrap();
        let est = estimate_moments(&ens);
        assert_eq!(est.state.m, vec![0.0]);
        assert_eq!(est.state.s[(0, 0)], 1.0);

        let n = 100_000;
        let mut z = vec![0.0; n];
        fill_normals(5, 0, 0, &mut z);
        let est = estimate_moments(&Ensemble::new(1, z, 0.0, 5).unwrap());
        let nf = n as f64;
        assert!(est.state.m[0].abs() < 3.0 / nf.sqrt());
        assert!((est.state.s[(0, 0)] - 1.0).abs() < 3.0 * 2f64.sqrt() / nf.sqrt());
    }

    #[test]
    fn zero_model_keeps_particles() {
        let init = MomentState::new(vec![0.5], Matrix::diag(&[1.0])).unwrap();
        let traj = simulate_ensemble(&scalar(0.0, 0.0, 0.0), &InitialCondition::Moments(init.clone()), &cfg(0.5, 1e-2, 200, 3)).unwrap();
        assert_eq!(traj.ensemble.particles, initial_particles(&init, 200, 3));
        let report = compare_with_moments(&scalar(0.0, 0.0, 0.0), &MomentState::deterministic(&[1.0]), &cfg(0.5, 1e-2, 200, 3)).unwrap();
        assert_eq!(report.max_abs_z(), 0.0);
    }

    #[test]
    fn variance_growth_matches_closed_form() {
        let init = MomentState::new(vec![0.0], Matrix::diag(&[1.0])).unwrap();
        let traj = simulate_ensemble(&scalar(0.0, 0.0, 1.0), &InitialCondition::Moments(init), &cfg(1.0, 1e-3, 100_000, 11)).unwrap();
        let est = traj.snapshots.last().unwrap();
        let e = std::f64::consts::E;
        assert!((est.state.s[(0, 0)] - e).abs() <= 3.0 * est.se_secmom[(0, 0)], "{est:?}");
        assert_eq!(traj.times.last().copied(), Some(1.0));
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let init = MomentState::deterministic(&[1e11]);
        let err = simulate_ensemble(&scalar(10.0, 0.0, 0.0), &InitialCondition::Moments(init), &cfg(1.0, 1e-2, 100, 0)).unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_settings() {
        let init = InitialCondition::Moments(MomentState::deterministic(&[1.0]));
        assert!(simulate_ensemble(&scalar(0.0, 0.0, 1.0), &init, &cfg(1.0, 0.1, 100, 0)).is_err());
        assert!(simulate_ensemble(&scalar(0.0, 0.0, 1.0), &init, &cfg(1.0, 1e-2, 10, 0)).is_err());
        assert!(Ensemble::new(1, vec![1.0], 0.0, 0).is_err());
    }
}
