//! Mean-square dichotomy spectrum estimators.
//!
//! Growth rates of `‖X_t‖_ms` are half the growth rates of `trace S(t)`, so
//! every real part `λ` of an eigenvalue of the lifted operator is a
//! candidate spectral point `λ / 2`. Only candidates whose invariant
//! subspace contains a genuine moment pair count: a pair `(U, V)` in the
//! lift is realised by a random vector only if `U = m mᵀ` and
//! `V - U ⪰ 0`. [`autonomous_spectrum`] applies that cone filter to the
//! exact eigenstructure; [`finite_time_exponents`] samples achieved growth
//! rates and works for schedules as well.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moment::{
    build_lift_from, is_admissible, packed_index, packed_len, propagate_lifted, sample_admissible,
    unpack_symmetric, CoefficientSystem, LiftedOperator, MomentState,
};
use crate::numerics::eigen::{default_cluster_tol, eigenvalues, invariant_basis};
use crate::numerics::linalg::symmetric_eigen;
use crate::numerics::{Matrix, Tolerances};
use crate::rng::NormalStream;

/// `Γ = 2 d m + 2 d² m²`; the spectrum lies in `[-Γ, Γ]`.
pub fn gamma_bound(coeffs: &CoefficientSystem) -> f64 {
    let d = coeffs.dim() as f64;
    let m = coeffs.bound_m();
    2.0 * d * m + 2.0 * d * d * m * m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    EigenLift,
    FiniteTime,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::EigenLift => "eigen-lift",
            Method::FiniteTime => "finite-time",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of the admissible-cone test for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Retained,
    Rejected,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Retained => "retained",
            Verdict::Rejected => "rejected",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifted eigenvalues sharing one real part, with a real basis of their
/// joint invariant subspace and, when known, the spectral projector onto it.
#[derive(Debug, Clone)]
pub struct SpectralGroup {
    pub eigenvalues: Vec<Complex64>,
    pub basis: Matrix,
    pub projector: Option<Matrix>,
}

impl SpectralGroup {
    /// Candidate mean-square spectral point: half the mean real part.
    pub fn point(&self) -> f64 {
        let k = self.eigenvalues.len() as f64;
        self.eigenvalues.iter().map(|z| z.re).sum::<f64>() / (2.0 * k)
    }
}

/// One candidate point of the eigen-lift method with its cone verdict.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub point: f64,
    pub eigenvalues: Vec<Complex64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Self { lower: x, upper: x }
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && x <= self.upper + slack
    }
}

/// Per-interval bookkeeping.
#[derive(Debug, Clone)]
pub struct IntervalDetail {
    /// Lifted eigenvalue count (eigen-lift) or sample count (finite-time).
    pub multiplicity: usize,
    /// `None` for finite-time estimates, which carry no cone verdict.
    pub verdict: Option<Verdict>,
    pub eigenvalues: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    pub intervals: Vec<Interval>,
    pub method: Method,
    /// One entry per resolvent gap, including the two unbounded ones.
    pub stable_dims: Vec<usize>,
    pub gamma_bound: Option<f64>,
    pub details: Vec<IntervalDetail>,
    /// All eigen-lift candidates, including rejected ones.
    pub candidates: Vec<Candidate>,
    /// Inflation applied by [`resolvent_check`].
    pub uncertainty: f64,
}

impl SpectrumEstimate {
    pub fn has_inconclusive(&self) -> bool {
        self.candidates
            .iter()
            .any(|c| c.verdict == Verdict::Inconclusive)
    }

    /// Degenerate-interval estimate from an explicit point set.
    pub fn from_points(points: &[f64], method: Method) -> Self {
        let mut pts = points.to_vec();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let n = pts.len();
        Self {
            intervals: pts.iter().map(|&p| Interval::point(p)).collect(),
            method,
            stable_dims: (0..=n).collect(),
            gamma_bound: None,
            details: pts
                .iter()
                .map(|_| IntervalDetail {
                    multiplicity: 1,
                    verdict: None,
                    eigenvalues: Vec::new(),
                })
                .collect(),
            candidates: Vec::new(),
            uncertainty: 0.0,
        }
    }
}

/// Settings of the eigen-lift estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenLiftOptions {
    /// Eigenvalue clustering distance; `None` uses `1e-7 (1 + ρ)`.
    pub cluster_tol: Option<f64>,
    /// Retained points closer than this are merged into one interval.
    pub merge_tol: f64,
    /// Relative projection norm below which a sample counts as missing a group.
    pub proj_tol: f64,
    /// Eigenvalue tolerance of the cone membership test on unit vectors.
    pub cone_tol: f64,
    pub cone_samples: usize,
    pub cone_seed: u64,
}

impl Default for EigenLiftOptions {
    fn default() -> Self {
        Self {
            cluster_tol: None,
            merge_tol: 1e-9,
            proj_tol: 1e-8,
            cone_tol: 1e-8,
            cone_samples: 4096,
            cone_seed: 0,
        }
    }
}

/// Exact spectrum of an autonomous system from the lifted eigenstructure.
pub fn autonomous_spectrum(
    coeffs: &CoefficientSystem,
    opts: &EigenLiftOptions,
) -> Result<SpectrumEstimate> {
    if !coeffs.is_autonomous() {
        return Err(Error::invalid(
            "the eigen-lift method needs an autonomous (single-segment) system",
        ));
    }
    let lift = build_lift_from(&coeffs.segments()[0].coefficients);
    let full = lift.to_matrix();
    let n = full.rows();
    let mut eigs = eigenvalues(&full)?;
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let tol = opts
        .cluster_tol
        .unwrap_or_else(|| default_cluster_tol(&eigs));
    let groups = real_part_groups(&full, &eigs, tol);

    let candidates: Vec<Candidate> = groups
        .iter()
        .map(|g| Candidate {
            point: g.point(),
            eigenvalues: g.eigenvalues.clone(),
            verdict: cone_filter(&lift, g, opts),
        })
        .collect();

    let kept: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.verdict != Verdict::Rejected)
        .collect();
    let mut intervals: Vec<Interval> = Vec::new();
    let mut details: Vec<IntervalDetail> = Vec::new();
    for c in kept {
        match intervals.last_mut() {
            Some(last) if c.point - last.upper < opts.merge_tol => {
                last.upper = c.point;
                let det = details.last_mut().expect("parallel to intervals");
                det.multiplicity += c.eigenvalues.len();
                det.eigenvalues.extend(&c.eigenvalues);
                if c.verdict == Verdict::Inconclusive {
                    det.verdict = Some(Verdict::Inconclusive);
                }
            }
            _ => {
                intervals.push(Interval::point(c.point));
                details.push(IntervalDetail {
                    multiplicity: c.eigenvalues.len(),
                    verdict: Some(c.verdict),
                    eigenvalues: c.eigenvalues.clone(),
                });
            }
        }
    }

    // lifted stable dimension at a resolvent point gamma: eigenvalues with Re/2 < gamma
    let below = |gamma: f64| {
        eigs
            .iter()
            .filter(|z| z.re / 2.0 < gamma)
            .count()
    };
    let mut stable_dims = vec![0];
    for w in intervals.windows(2) {
        stable_dims.push(below(0.5 * (w[0].upper + w[1].lower)));
    }
    stable_dims.push(n);

    Ok(SpectrumEstimate {
        intervals,
        method: Method::EigenLift,
        stable_dims,
        gamma_bound: Some(gamma_bound(coeffs)),
        details,
        candidates,
        uncertainty: 0.0,
    })
}

/// Groups eigenvalues by real part (single linkage within `tol`) and attaches
/// invariant bases and spectral projectors.
fn real_part_groups(full: &Matrix, eigenvalues: &[Complex64], tol: f64) -> Vec<SpectralGroup> {
    let n = full.rows();
    // eigenvalues arrive sorted by real part, so linkage only joins neighbours
    let mut members: Vec<Vec<Complex64>> = Vec::new();
    let mut last_re = f64::NEG_INFINITY;
    for &z in eigenvalues {
        if z.re - last_re <= tol && !members.is_empty() {
            members.last_mut().expect("nonempty").push(z);
        } else {
            members.push(vec![z]);
        }
        last_re = z.re;
    }
    // invariant bases come from the clustered decomposition of each group
    let bases: Vec<Matrix> = members
        .iter()
        .map(|group| group_basis(full, group))
        .collect();

    let all = Matrix::from_columns(
        &bases
            .iter()
            .flat_map(|b| (0..b.cols()).map(move |j| b.col(j)))
            .collect::<Vec<_>>(),
    );
    // rows of all^{-1}, block by block, give the spectral projectors
    let inverse = invert(&all);
    let mut offset = 0;
    let mut groups = Vec::with_capacity(members.len());
    for (eigs, basis) in members.into_iter().zip(bases) {
        let k = basis.cols();
        let projector = inverse.as_ref().map(|inv| {
            let rows: Vec<Vec<f64>> = (offset..offset + k).map(|i| inv.row(i).to_vec()).collect();
            basis.matmul(&Matrix::from_rows(&rows).expect("finite rows"))
        });
        offset += k;
        groups.push(SpectralGroup {
            eigenvalues: eigs,
            basis,
            projector,
        });
    }
    debug_assert_eq!(offset, n);
    groups
}

fn group_basis(full: &Matrix, group: &[Complex64]) -> Matrix {
    invariant_basis(full, group, full.frobenius_norm().max(1.0))
}

fn invert(m: &Matrix) -> Option<Matrix> {
    let n = m.rows();
    let cols: Option<Vec<Vec<f64>>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            m.solve(&e)
        })
        .collect();
    cols.map(|c| Matrix::from_columns(&c))
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn either_sign_admissible(x: &[f64], d: usize, tol: f64) -> bool {
    let Some(x) = unit(x) else { return false };
    let p = packed_len(d);
    if is_admissible(&x[..p], &x[p..], d, tol) {
        return true;
    }
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    is_admissible(&neg[..p], &neg[p..], d, tol)
}

/// Decides whether the group's invariant subspace meets the admissible cone.
///
/// A one-dimensional real group is decided exactly. A group of non-real
/// eigenvalues is rejected: the flow rotates its subspace, and a pointed
/// forward-invariant cone cannot contain such an orbit. Otherwise admissible
/// points are searched for among basis vectors, spectral projections of
/// seeded admissible states and random combinations, and a separating
/// functional is searched for to prove rejection.
pub fn cone_filter(op: &LiftedOperator, group: &SpectralGroup, opts: &EigenLiftOptions) -> Verdict {
    let d = op.d;
    let basis = &group.basis;
    let k = basis.cols();
    if group.eigenvalues.iter().all(|z| z.im != 0.0) {
        return Verdict::Rejected;
    }
    if k == 1 {
        return if either_sign_admissible(&basis.col(0), d, opts.cone_tol) {
            Verdict::Retained
        } else {
            Verdict::Rejected
        };
    }
    if (0..k).any(|j| either_sign_admissible(&basis.col(j), d, opts.cone_tol)) {
        return Verdict::Retained;
    }
    if let Some(proj) = &group.projector {
        for i in 0..opts.cone_samples {
            let x = cone_sample(d, opts.cone_seed, i as u64);
            let px = proj.matvec(&x);
            let (nx, np) = (norm(&x), norm(&px));
            if np > opts.proj_tol * nx && either_sign_admissible(&px, d, opts.cone_tol) {
                return Verdict::Retained;
            }
        }
    }
    let mut z = NormalStream::new(opts.cone_seed, 1);
    for _ in 0..256 {
        let c: Vec<f64> = (0..k).map(|_| z.next_normal()).collect();
        if either_sign_admissible(&basis.matvec(&c), d, opts.cone_tol) {
            return Verdict::Retained;
        }
    }
    if separating_functional(basis, d) {
        Verdict::Rejected
    } else {
        Verdict::Inconclusive
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Seeded admissible lifted states, cycling through general, pure-variance
/// (`m = 0`) and deterministic (`S = m mᵀ`) kinds.
fn cone_sample(d: usize, seed: u64, i: u64) -> Vec<f64> {
    let st = sample_admissible(d, seed.wrapping_mul(0x9E37_79B9).wrapping_add(i), 1.0);
    let st = match i % 3 {
        0 => st,
        1 => MomentState {
            m: vec![0.0; d],
            s: st.covariance(),
        },
        _ => MomentState::deterministic(&st.m),
    };
    st.stacked()
}

/// Looks for symmetric `P ≻ 0`, `Q ≻ 0` with `<P, U> + <Q, V - U> = 0` on
/// every basis vector. Such a functional is strictly positive on the relaxed
/// cone `{U ⪰ 0, V - U ⪰ 0} \ {0}`, which contains the admissible cone, and
/// vanishes on the subspace, so the two meet only at the origin. The search
/// alternates projections between the constraint subspace and
/// `{P ⪰ I, Q ⪰ I}` in Frobenius geometry.
fn separating_functional(basis: &Matrix, d: usize) -> bool {
    let p = packed_len(d);
    let dd = d * d;
    let k = basis.cols();
    // constraint rows in full flattened (P, Q) coordinates
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let col = basis.col(j);
            let u = unpack_symmetric(&col[..p], d);
            let w = unpack_symmetric(&col[p..], d).sub(&u);
            let mut r = u.as_slice().to_vec();
            r.extend_from_slice(w.as_slice());
            r
        })
        .collect();
    let g = Matrix::from_rows(&rows).expect("finite basis");
    let ggt = g.matmul(&g.transpose());
    let project = |y: &[f64]| -> Option<Vec<f64>> {
        let gy = g.matvec(y);
        let lam = ggt.solve(&gy)?;
        let corr = g.transpose().matvec(&lam);
        Some(y.iter().zip(corr).map(|(a, b)| a - b).collect())
    };
    let clip = |y: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * dd);
        for half in [&y[..dd], &y[dd..]] {
            let m = Matrix::new(d, d, half.to_vec()).expect("finite").symmetrized();
            let (vals, vecs) = symmetric_eigen(&m);
            let clipped: Vec<f64> = vals.iter().map(|v| v.max(1.0)).collect();
            let r = vecs.matmul(&Matrix::diag(&clipped)).matmul(&vecs.transpose());
            out.extend_from_slice(r.as_slice());
        }
        out
    };
    let certified = |y: &[f64]| -> bool {
        let mut min_eig = f64::INFINITY;
        for half in [&y[..dd], &y[dd..]] {
            let m = Matrix::new(d, d, half.to_vec()).expect("finite").symmetrized();
            min_eig = min_eig.min(symmetric_eigen(&m).0[0]);
        }
        let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        min_eig > 1e-6 * scale
    };
    let id: Vec<f64> = Matrix::identity(d).as_slice().to_vec();
    let starts = [
        [id.clone(), id.clone()].concat(),
        [id.clone(), vec![0.0; dd]].concat(),
        [vec![0.0; dd], id.clone()].concat(),
    ];
    for start in starts {
        let Some(mut y) = project(&start) else { return false };
        for _ in 0..500 {
            if certified(&y) {
                return true;
            }
            match project(&clip(&y)) {
                Some(next) => y = next,
                None => return false,
            }
        }
        if certified(&y) {
            return true;
        }
    }
    false
}

/// Whether `gamma` lies in the estimated resolvent set: outside `[-Γ, Γ]`, or
/// outside every interval inflated by the estimate's uncertainty.
pub fn resolvent_check(coeffs: &CoefficientSystem, gamma: f64, estimate: &SpectrumEstimate) -> bool {
    if gamma.abs() > gamma_bound(coeffs) {
        return true;
    }
    !estimate
        .intervals
        .iter()
        .any(|iv| iv.contains(gamma, estimate.uncertainty))
}

/// A finite-time mean-square growth rate from one seeded initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub seed: u64,
    pub horizon: f64,
    pub rate: f64,
}

/// Settings of the finite-time estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteTimeOptions {
    pub horizon: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub cluster_width: f64,
    pub tol: Tolerances,
}

impl Default for FiniteTimeOptions {
    fn default() -> Self {
        Self {
            horizon: 50.0,
            n_samples: 64,
            seed: 0,
            cluster_width: 0.05,
            tol: Tolerances::default(),
        }
    }
}

/// Longest stretch propagated before the state is renormalised.
const RENORM_SPAN: f64 = 5.0;

/// Mean-square growth rate of the solution from `initial`, measured over
/// the second half of `[t0, t0 + horizon]`:
/// `ln(trace S(t0 + T) / trace S(t0 + T/2)) / T`.
///
/// Discarding the first half removes the transient in which slower modes
/// still dominate the trace. The state is renormalised every few time units
/// (the moment equations are invariant under `m -> c m`, `S -> c² S`), so
/// long horizons cannot overflow.
pub fn finite_time_rate(
    coeffs: &CoefficientSystem,
    t0: f64,
    horizon: f64,
    initial: &MomentState,
    tol: Tolerances,
) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let d = coeffs.dim();
    let diag: Vec<usize> = (0..d).map(|i| packed_len(d) + packed_index(d, i, i)).collect();
    let trace = |x: &[f64]| diag.iter().map(|&k| x[k]).sum::<f64>();
    let half = 0.5 * horizon;
    let pieces = (half / RENORM_SPAN).ceil().max(1.0) as usize;
    let step = half / pieces as f64;
    // the lifted vector (pack(m mᵀ), pack(S)) scales by c² under m -> c m
    let mut x = initial.stacked();
    let tr0 = trace(&x);
    if !(tr0 > 0.0) || !tr0.is_finite() {
        return Err(Error::Inadmissible(format!("trace of S is {tr0:e}")));
    }
    x.iter_mut().for_each(|v| *v /= tr0);
    let mut log_growth = 0.0;
    for i in 0..2 * pieces {
        let a = t0 + i as f64 * step;
        let b = if i + 1 == 2 * pieces { t0 + horizon } else { a + step };
        x = propagate_lifted(coeffs, a, b, &x, tol)?;
        let tr = trace(&x);
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::IntegrationDiverged { time: b });
        }
        x.iter_mut().for_each(|v| *v /= tr);
        if i >= pieces {
            log_growth += tr.ln();
        }
    }
    Ok(log_growth / horizon)
}

/// Seeded initial state number `i`: every fourth is a pure-variance state
/// (`m = 0`), every fourth a deterministic one (`S = m mᵀ`), the rest are
/// general admissible states.
pub fn rate_sample_state(d: usize, seed: u64, i: usize) -> MomentState {
    let st = sample_admissible(d, sample_seed(seed, i), 1.0);
    match i % 4 {
        0 => MomentState {
            m: vec![0.0; d],
            s: st.covariance(),
        },
        1 => MomentState::deterministic(&st.m),
        _ => st,
    }
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(i as u64)
}

/// Growth rates over `[t0, t0 + T]` from `n_samples` seeded initial states,
/// where `t0` is the schedule start (or 0 for autonomous systems). Returned
/// in sample order.
pub fn finite_time_exponents(
    coeffs: &CoefficientSystem,
    horizon: f64,
    n_samples: usize,
    seed: u64,
    tol: Tolerances,
) -> Result<Vec<RateSample>> {
    if !(horizon >= 10.0) {
        return Err(Error::invalid(format!("horizon {horizon} must be at least 10")));
    }
    if n_samples < 16 {
        return Err(Error::invalid(format!("need at least 16 samples, got {n_samples}")));
    }
    let t0 = if coeffs.domain_start().is_finite() {
        coeffs.domain_start()
    } else {
        0.0
    };
    let d = coeffs.dim();
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let s = sample_seed(seed, i);
            let init = rate_sample_state(d, seed, i);
            finite_time_rate(coeffs, t0, horizon, &init, tol)
                .map(|rate| RateSample {
                    seed: s,
                    horizon,
                    rate,
                })
                .map_err(|e| Error::AtSeed {
                    seed: s,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Single-linkage clusters of sampled rates, each reported as `[min, max]`.
pub fn finite_time_spectrum(samples: &[RateSample], cluster_width: f64) -> Result<SpectrumEstimate> {
    if samples.is_empty() {
        return Err(Error::invalid("no rate samples"));
    }
    if !(cluster_width > 0.0) {
        return Err(Error::invalid("cluster width must be positive"));
    }
    let mut rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("rate samples must be finite"));
    }
    rates.sort_by(f64::total_cmp);
    let mut intervals: Vec<Interval> = Vec::new();
    let mut details: Vec<IntervalDetail> = Vec::new();
    for r in rates.iter().copied() {
        match intervals.last_mut() {
            Some(last) if r - last.upper <= cluster_width => {
                last.upper = r;
                details.last_mut().expect("parallel").multiplicity += 1;
            }
            _ => {
                intervals.push(Interval::point(r));
                details.push(IntervalDetail {
                    multiplicity: 1,
                    verdict: None,
                    eigenvalues: Vec::new(),
                });
            }
        }
    }
    let mut stable_dims = vec![0];
    for w in intervals.windows(2) {
        let mid = 0.5 * (w[0].upper + w[1].lower);
        stable_dims.push(rates.iter().filter(|&&r| r < mid).count());
    }
    stable_dims.push(rates.len());
    Ok(SpectrumEstimate {
        intervals,
        method: Method::FiniteTime,
        stable_dims,
        gamma_bound: None,
        details,
        candidates: Vec::new(),
        uncertainty: cluster_width,
    })
}

/// Finite-time estimate with the system's Γ attached.
pub fn finite_time_estimate(coeffs: &CoefficientSystem, opts: &FiniteTimeOptions) -> Result<SpectrumEstimate> {
    let samples = finite_time_exponents(coeffs, opts.horizon, opts.n_samples, opts.seed, opts.tol)?;
    let mut est = finite_time_spectrum(&samples, opts.cluster_width)?;
    est.gamma_bound = Some(gamma_bound(coeffs));
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::Coefficients;

    fn scalar(alpha: f64, beta: f64) -> CoefficientSystem {
        CoefficientSystem::autonomous(Coefficients::scalar(alpha, beta, 1.0, 0.0))
    }

    fn points(est: &SpectrumEstimate) -> Vec<f64> {
        est.intervals.iter().map(|i| i.lower).collect()
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_bound(&scalar(1.0, 0.0)), 4.0);
        let half = CoefficientSystem::autonomous(Coefficients::new(
            Matrix::diag(&[0.5, 0.5]),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
        ).unwrap());
        assert_eq!(gamma_bound(&half), 4.0);
        assert_eq!(gamma_bound(&CoefficientSystem::autonomous(Coefficients::zeros(2))), 0.0);
    }

    #[test]
    fn scalar_spectra() {
        let opts = EigenLiftOptions::default();
        let cases = [(0.0, 1.0, vec![0.5, 1.0]), (0.0, 0.0, vec![0.5]), (-1.0, 2.0, vec![-0.5, 1.0])];
        for (a, b, want) in cases {
            let est = autonomous_spectrum(&scalar(a, b), &opts).unwrap();
            let got = points(&est);
            assert_eq!(got.len(), want.len(), "alpha {a} beta {b}: {got:?}");
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
            assert!(est.intervals.iter().all(|i| i.lower == i.upper));
        }
    }

    #[test]
    fn resonance_merges_into_one_point() {
        let est = autonomous_spectrum(&scalar(0.0, 0.5), &EigenLiftOptions::default()).unwrap();
        assert_eq!(points(&est), vec![0.5]);
        assert_eq!(est.details[0].multiplicity, 2);
    }

    #[test]
    fn scalar_cone_directions() {
        let opts = EigenLiftOptions::default();
        let op = build_lift_from(&Coefficients::scalar(0.0, 1.0, 1.0, 0.0));
        let group = |v: [f64; 2], lam: f64| SpectralGroup {
            eigenvalues: vec![Complex64::new(lam, 0.0)],
            basis: Matrix::column(&v),
            projector: None,
        };
        assert_eq!(cone_filter(&op, &group([1.0, 2.0], 2.0), &opts), Verdict::Retained);
        assert_eq!(cone_filter(&op, &group([1.0, 0.0], 0.0), &opts), Verdict::Rejected);
        assert_eq!(cone_filter(&op, &group([0.0, 1.0], 1.0), &opts), Verdict::Retained);
        assert_eq!(cone_filter(&op, &group([0.0, -3.0], 1.0), &opts), Verdict::Retained);
    }

    #[test]
    fn resolvent_examples() {
        let sys = scalar(0.0, 1.0);
        let est = autonomous_spectrum(&sys, &EigenLiftOptions::default()).unwrap();
        assert!(resolvent_check(&sys, 0.75, &est));
        assert!(!resolvent_check(&sys, 0.5, &est));
        assert!(resolvent_check(&sys, gamma_bound(&sys) + 1.0, &est));
    }

    #[test]
    fn finite_time_rates() {
        let tol = Tolerances::default();
        let pure = MomentState::new(vec![0.0], Matrix::diag(&[1.0])).unwrap();
        let r = finite_time_rate(&scalar(0.0, 0.0), 0.0, 50.0, &pure, tol).unwrap();
        assert!((r - 0.5).abs() < 0.01, "{r}");
        let det = MomentState::deterministic(&[1.0]);
        let r = finite_time_rate(&scalar(0.0, 1.0), 0.0, 50.0, &det, tol).unwrap();
        assert!((r - 1.0).abs() < 0.02, "{r}");
        let zero = CoefficientSystem::autonomous(Coefficients::zeros(2));
        for s in finite_time_exponents(&zero, 20.0, 16, 3, tol).unwrap() {
            assert!(s.rate.abs() < 1e-12);
        }
    }

    #[test]
    fn finite_time_clusters() {
        let tol = Tolerances::default();
        let samples = finite_time_exponents(&scalar(0.0, 0.0), 50.0, 16, 1, tol).unwrap();
        let est = finite_time_spectrum(&samples, 0.05).unwrap();
        assert_eq!(est.intervals.len(), 1);
        assert!((est.intervals[0].lower - 0.5).abs() < 0.02);

        let samples = finite_time_exponents(&scalar(0.0, 1.0), 50.0, 32, 1, tol).unwrap();
        let est = finite_time_spectrum(&samples, 0.05).unwrap();
        let centers: Vec<f64> = est.intervals.iter().map(|i| 0.5 * (i.lower + i.upper)).collect();
        assert_eq!(centers.len(), 2, "{centers:?}");
        assert!((centers[0] - 0.5).abs() < 0.05 && (centers[1] - 1.0).abs() < 0.05);

        let one = [RateSample { seed: 0, horizon: 50.0, rate: 0.3 }];
        let est = finite_time_spectrum(&one, 0.05).unwrap();
        assert_eq!(est.intervals, vec![Interval::point(0.3)]);
        assert_eq!(est.stable_dims, vec![0, 1]);
    }
}
