//! First and second moments of the linear mean-field SDE
//!
//! ```text
//! dX = (A X + B E X) dt + (C X + D E X) dW
//! ```
//!
//! The mean `m = E X` and the raw second-moment matrix `S = E X Xᵀ` satisfy
//!
//! ```text
//! m' = (A + B) m
//! S' = A S + S Aᵀ + C S Cᵀ + B m mᵀ + m mᵀ Bᵀ + C m mᵀ Dᵀ + D m mᵀ Cᵀ + D m mᵀ Dᵀ
//! ```
//!
//! Replacing `m mᵀ` by an independent symmetric matrix `U` turns this into a
//! linear ODE on pairs `(U, V)` of symmetric matrices, i.e. on `R^{d(d+1)}`
//! once both are packed by their upper triangles. That lifted system is
//! block lower-triangular: `U` evolves on its own and drives `V`.

use crate::error::{Error, Result};
use crate::numerics::linalg::symmetric_eigen;
use crate::numerics::ode::{integrate_adaptive, OdeProblem, Tolerances};
use crate::numerics::Matrix;
use crate::rng::NormalStream;

/// Symmetry tolerance on validated second-moment matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue allowed for validated (input) moment states.
pub const PSD_TOL_INPUT: f64 = 1e-10;
/// Smallest eigenvalue allowed after propagation (integration drift).
pub const PSD_TOL_PROPAGATED: f64 = 1e-8;

/// Coefficient matrices `A, B, C, D` in force on one time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl Coefficients {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let dim = a.rows();
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.rows() != dim || m.cols() != dim {
                return Err(Error::invalid(format!(
                    "matrix {name} is {}x{}, expected {dim}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Scalar (`d = 1`) coefficients.
    pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> Self {
        let s = |v: f64| Matrix::diag(&[v]);
        Self {
            a: s(a),
            b: s(b),
            c: s(c),
            d: s(d),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        let z = Matrix::zeros(dim, dim);
        Self {
            a: z.clone(),
            b: z.clone(),
            c: z.clone(),
            d: z,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn max_abs_entry(&self) -> f64 {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .map(|m| m.max_abs())
            .fold(0.0, f64::max)
    }
}

/// One piece of a piecewise-constant schedule, in force from `start` until
/// the next segment's start.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub coefficients: Coefficients,
}

/// Piecewise-constant coefficients of the linear mean-field SDE together
/// with a uniform entrywise bound `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSystem {
    dim: usize,
    segments: Vec<Segment>,
    bound_m: f64,
}

impl CoefficientSystem {
    /// Time-independent system; the bound is the largest absolute entry.
    pub fn autonomous(coefficients: Coefficients) -> Self {
        let bound_m = coefficients.max_abs_entry();
        Self {
            dim: coefficients.dim(),
            segments: vec![Segment {
                start: f64::NEG_INFINITY,
                coefficients,
            }],
            bound_m,
        }
    }

    /// Piecewise-constant system. Segment starts must be strictly increasing
    /// (the first may be `-inf`); every entry must be bounded by `bound_m`,
    /// which defaults to the largest absolute entry.
    pub fn piecewise(segments: Vec<Segment>, bound_m: Option<f64>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::invalid("schedule needs at least one segment"))?;
        let dim = first.coefficients.dim();
        for (k, seg) in segments.iter().enumerate() {
            if seg.coefficients.dim() != dim {
                return Err(Error::invalid(format!(
                    "segment {k} has dimension {}, expected {dim}",
                    seg.coefficients.dim()
                )));
            }
            if seg.start.is_nan() || seg.start == f64::INFINITY {
                return Err(Error::invalid(format!("segment {k} has an invalid start time")));
            }
            if k > 0 && seg.start <= segments[k - 1].start {
                return Err(Error::invalid(format!(
                    "segment start times must be strictly increasing (segment {k})"
                )));
            }
            if k > 0 && seg.start == f64::NEG_INFINITY {
                return Err(Error::invalid("only the first segment may start at -inf"));
            }
        }
        let largest = segments
            .iter()
            .map(|s| s.coefficients.max_abs_entry())
            .fold(0.0, f64::max);
        let bound_m = match bound_m {
            None => largest,
            Some(m) if !(m >= 0.0) || !m.is_finite() => {
                return Err(Error::invalid(format!("bound m = {m} must be finite and >= 0")));
            }
            Some(m) if largest > m => {
                return Err(Error::invalid(format!(
                    "coefficient entry {largest} exceeds the declared bound m = {m}"
                )));
            }
            Some(m) => m,
        };
        Ok(Self {
            dim,
            segments,
            bound_m,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_autonomous(&self) -> bool {
        self.segments.len() == 1
    }

    /// Earliest time covered by the schedule.
    pub fn domain_start(&self) -> f64 {
        self.segments[0].start
    }

    /// Coefficients in force at time `t`.
    pub fn at(&self, t: f64) -> Result<&Coefficients> {
        if t < self.domain_start() || t.is_nan() {
            return Err(Error::invalid(format!(
                "time {t} precedes the schedule start {}",
                self.domain_start()
            )));
        }
        let idx = self.segments.partition_point(|s| s.start <= t);
        Ok(&self.segments[idx - 1].coefficients)
    }

    /// The intervals `[a, b]` covering `[s, t]` on which the coefficients are
    /// constant, each paired with its coefficients.
    pub fn pieces(&self, s: f64, t: f64) -> Result<Vec<(f64, f64, &Coefficients)>> {
        self.at(s)?;
        let mut out = Vec::new();
        let mut a = s;
        let mut idx = self.segments.partition_point(|seg| seg.start <= s) - 1;
        loop {
            let end = self
                .segments
                .get(idx + 1)
                .map_or(f64::INFINITY, |seg| seg.start)
                .min(t);
            out.push((a, end, &self.segments[idx].coefficients));
            if end >= t {
                break;
            }
            a = end;
            idx += 1;
        }
        Ok(out)
    }

    /// Same system with `shift * I` added to every `A`.
    pub fn with_shifted_drift(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for seg in &mut out.segments {
            seg.coefficients.a = seg
                .coefficients
                .a
                .add(&Matrix::identity(self.dim).scale(shift));
        }
        out.bound_m = out
            .segments
            .iter()
            .map(|s| s.coefficients.max_abs_entry())
            .fold(out.bound_m, f64::max);
        out
    }
}

/// Mean vector `m` and raw second-moment matrix `S` of a square-integrable
/// random vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: Vec<f64>,
    pub s: Matrix,
}

impl MomentState {
    /// Validated state: `S` symmetric, `S ⪰ 0` and `S - m mᵀ ⪰ 0` up to
    /// [`PSD_TOL_INPUT`].
    pub fn new(m: Vec<f64>, s: Matrix) -> Result<Self> {
        let state = Self::new_unchecked(m, s)?;
        state.check_admissible(PSD_TOL_INPUT)?;
        Ok(state)
    }

    /// Shape-checked but not admissibility-checked state.
    pub fn new_unchecked(m: Vec<f64>, s: Matrix) -> Result<Self> {
        if !s.is_square() || s.rows() != m.len() {
            return Err(Error::invalid(format!(
                "mean has length {} but second moment is {}x{}",
                m.len(),
                s.rows(),
                s.cols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) || !s.is_finite() {
            return Err(Error::invalid("moment state has non-finite entries"));
        }
        Ok(Self { m, s })
    }

    /// Deterministic point mass at `x`: `m = x`, `S = x xᵀ`.
    pub fn deterministic(x: &[f64]) -> Self {
        Self {
            m: x.to_vec(),
            s: Matrix::outer(x, x),
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            m: vec![0.0; d],
            s: Matrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// `S - m mᵀ`.
    pub fn covariance(&self) -> Matrix {
        self.s.sub(&Matrix::outer(&self.m, &self.m))
    }

    pub fn check_admissible(&self, psd_tol: f64) -> Result<()> {
        let asym = self.s.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::Inadmissible(format!(
                "second moment asymmetric by {asym:e}"
            )));
        }
        let lam_s = symmetric_eigen(&self.s).0[0];
        if lam_s < -psd_tol {
            return Err(Error::Inadmissible(format!(
                "second moment has eigenvalue {lam_s:e}"
            )));
        }
        let lam_c = symmetric_eigen(&self.covariance()).0[0];
        if lam_c < -psd_tol {
            return Err(Error::Inadmissible(format!(
                "covariance S - m mᵀ has eigenvalue {lam_c:e}"
            )));
        }
        Ok(())
    }

    /// Lifted coordinates `(u, v) = (pack(m mᵀ), pack(S))`.
    pub fn lifted(&self) -> (Vec<f64>, Vec<f64>) {
        (
            pack_symmetric(&Matrix::outer(&self.m, &self.m)),
            pack_symmetric(&self.s),
        )
    }

    /// Lifted coordinates stacked as one vector of length `d(d+1)`.
    pub fn stacked(&self) -> Vec<f64> {
        let (mut u, v) = self.lifted();
        u.extend(v);
        u
    }
}

/// Upper-triangle index pairs `(i, j)`, `i <= j`, in row-major order
/// (0-based): `(0,0), (0,1), ..., (0,d-1), (1,1), ..., (d-1,d-1)`.
pub fn index_map(d: usize) -> Vec<(usize, usize)> {
    assert!(d >= 1, "dimension must be positive");
    (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect()
}

/// Number of upper-triangle entries of a `d x d` matrix.
pub fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of `(i, j)` (either order) in [`index_map`] ordering.
pub fn packed_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows 0..i contribute d + (d-1) + ... + (d-i+1) entries
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

pub fn pack_symmetric(m: &Matrix) -> Vec<f64> {
    let d = m.rows();
    index_map(d).into_iter().map(|(i, j)| m[(i, j)]).collect()
}

pub fn unpack_symmetric(v: &[f64], d: usize) -> Matrix {
    assert_eq!(v.len(), packed_len(d), "packed length mismatch");
    let mut m = Matrix::zeros(d, d);
    for (k, (i, j)) in index_map(d).into_iter().enumerate() {
        m[(i, j)] = v[k];
        m[(j, i)] = v[k];
    }
    m
}

/// The linear operator of the lifted moment ODE on stacked `(u, v)`.
///
/// `L_uv` is identically zero, so only the other three blocks are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOperator {
    pub d: usize,
    pub l_uu: Matrix,
    pub l_vu: Matrix,
    pub l_vv: Matrix,
}

impl LiftedOperator {
    pub fn dim(&self) -> usize {
        self.d * (self.d + 1)
    }

    /// Full `d(d+1) x d(d+1)` block lower-triangular matrix.
    pub fn to_matrix(&self) -> Matrix {
        let p = packed_len(self.d);
        let mut full = Matrix::zeros(2 * p, 2 * p);
        for i in 0..p {
            for j in 0..p {
                full[(i, j)] = self.l_uu[(i, j)];
                full[(p + i, j)] = self.l_vu[(i, j)];
                full[(p + i, p + j)] = self.l_vv[(i, j)];
            }
        }
        full
    }

    pub fn apply(&self, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let du = self.l_uu.matvec(u);
        let dv = self
            .l_vu
            .matvec(u)
            .iter()
            .zip(self.l_vv.matvec(v))
            .map(|(a, b)| a + b)
            .collect();
        (du, dv)
    }

    pub fn apply_stacked(&self, x: &[f64]) -> Vec<f64> {
        let p = packed_len(self.d);
        let (du, dv) = self.apply(&x[..p], &x[p..]);
        let mut out = du;
        out.extend(dv);
        out
    }
}

/// Lifted operator at time `t`.
pub fn build_lift(coeffs: &CoefficientSystem, t: f64) -> Result<LiftedOperator> {
    Ok(build_lift_from(coeffs.at(t)?))
}

/// Assembles the lift componentwise. For each output pair `(i, j)`, `i <= j`:
///
/// ```text
/// u'_ij = sum_k (a+b)_ik u_kj + (a+b)_jk u_ki
/// v'_ij = sum_k a_ik v_kj + a_jk v_ki + sum_mn c_im c_jn v_mn
///       + sum_k b_ik u_kj + b_jk u_ki
///       + sum_mn (c_im d_jn + c_jn d_im + d_im d_jn) u_mn
/// ```
///
/// with `u_kj` read from the packed slot of `(min(k,j), max(k,j))`, so an
/// off-diagonal slot collects the contributions of both `(m,n)` and `(n,m)`.
pub fn build_lift_from(c: &Coefficients) -> LiftedOperator {
    let d = c.dim();
    let p = packed_len(d);
    let pairs = index_map(d);
    let slot = |i: usize, j: usize| packed_index(d, i, j);
    let mut l_uu = Matrix::zeros(p, p);
    let mut l_vu = Matrix::zeros(p, p);
    let mut l_vv = Matrix::zeros(p, p);
    let (a, b, cc, dd) = (&c.a, &c.b, &c.c, &c.d);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        for k in 0..d {
            let ab_ik = a[(i, k)] + b[(i, k)];
            let ab_jk = a[(j, k)] + b[(j, k)];
            l_uu[(row, slot(k, j))] += ab_ik;
            l_uu[(row, slot(k, i))] += ab_jk;

            l_vv[(row, slot(k, j))] += a[(i, k)];
            l_vv[(row, slot(k, i))] += a[(j, k)];

            l_vu[(row, slot(k, j))] += b[(i, k)];
            l_vu[(row, slot(k, i))] += b[(j, k)];
        }
        for m in 0..d {
            for n in 0..d {
                l_vv[(row, slot(m, n))] += cc[(i, m)] * cc[(j, n)];
                l_vu[(row, slot(m, n))] += cc[(i, m)] * dd[(j, n)]
                    + cc[(j, n)] * dd[(i, m)]
                    + dd[(i, m)] * dd[(j, n)];
            }
        }
    }
    LiftedOperator { d, l_uu, l_vu, l_vv }
}

/// Time derivative `(m', S')` of the moments, in matrix form.
pub fn moment_rhs(
    coeffs: &CoefficientSystem,
    t: f64,
    state: &MomentState,
) -> Result<(Vec<f64>, Matrix)> {
    let c = coeffs.at(t)?;
    if state.dim() != c.dim() {
        return Err(Error::invalid(format!(
            "state dimension {} does not match system dimension {}",
            state.dim(),
            c.dim()
        )));
    }
    Ok(moment_rhs_from(c, &state.m, &state.s))
}

pub fn moment_rhs_from(c: &Coefficients, m: &[f64], s: &Matrix) -> (Vec<f64>, Matrix) {
    let dm = c.a.add(&c.b).matvec(m);
    let mm = Matrix::outer(m, m);
    let at = c.a.transpose();
    let ct = c.c.transpose();
    let dt = c.d.transpose();
    let ds = c
        .a
        .matmul(s)
        .add(&s.matmul(&at))
        .add(&c.c.matmul(s).matmul(&ct))
        .add(&c.b.matmul(&mm))
        .add(&mm.matmul(&c.b.transpose()))
        .add(&c.c.matmul(&mm).matmul(&dt))
        .add(&c.d.matmul(&mm).matmul(&ct))
        .add(&c.d.matmul(&mm).matmul(&dt));
    (dm, ds.symmetrized())
}

/// Allocation-light evaluation of the moment RHS on the packed state
/// `[m; pack(S)]`, used inside the integrator.
struct PackedRhs<'a> {
    c: &'a Coefficients,
    d: usize,
}

impl PackedRhs<'_> {
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let d = self.d;
        let m = &y[..d];
        let s = unpack_symmetric(&y[d..], d);
        let (dm, ds) = moment_rhs_from(self.c, m, &s);
        dy[..d].copy_from_slice(&dm);
        for (k, (i, j)) in index_map(d).into_iter().enumerate() {
            dy[d + k] = ds[(i, j)];
        }
    }
}

/// Moments at time `t` of the solution started from `initial` at time `s`.
pub fn propagate_moments(
    coeffs: &CoefficientSystem,
    s: f64,
    t: f64,
    initial: &MomentState,
    tol: Tolerances,
) -> Result<MomentState> {
    if t < s {
        return Err(Error::invalid(format!("end time {t} precedes start time {s}")));
    }
    let d = coeffs.dim();
    if initial.dim() != d {
        return Err(Error::invalid(format!(
            "state dimension {} does not match system dimension {d}",
            initial.dim()
        )));
    }
    let mut y: Vec<f64> = initial.m.clone();
    y.extend(pack_symmetric(&initial.s.symmetrized()));
    if t > s {
        for (a, b, c) in coeffs.pieces(s, t)? {
            if b <= a {
                continue;
            }
            let rhs = PackedRhs { c, d };
            let problem = OdeProblem::new(a, b, y, |_t, y: &[f64], dy: &mut [f64]| rhs.eval(y, dy));
            y = integrate_adaptive(&problem, tol)?;
        }
    }
    let m = y[..d].to_vec();
    let s_mat = unpack_symmetric(&y[d..], d).symmetrized();
    if t == s {
        return Ok(initial.clone());
    }
    MomentState::new_unchecked(m, s_mat)
}

/// Moments under continuously time-dependent coefficients given by a
/// callback, for library users whose coefficients are not piecewise constant.
pub fn propagate_moments_with<P>(
    provider: P,
    s: f64,
    t: f64,
    initial: &MomentState,
    tol: Tolerances,
) -> Result<MomentState>
where
    P: Fn(f64) -> Coefficients,
{
    if t < s {
        return Err(Error::invalid(format!("end time {t} precedes start time {s}")));
    }
    if t == s {
        return Ok(initial.clone());
    }
    let d = initial.dim();
    let mut y0 = initial.m.clone();
    y0.extend(pack_symmetric(&initial.s.symmetrized()));
    let problem = OdeProblem::new(s, t, y0, |time, y: &[f64], dy: &mut [f64]| {
        let c = provider(time);
        assert_eq!(c.dim(), d, "provider returned coefficients of the wrong dimension");
        PackedRhs { c: &c, d }.eval(y, dy);
    });
    let y = integrate_adaptive(&problem, tol)?;
    MomentState::new_unchecked(y[..d].to_vec(), unpack_symmetric(&y[d..], d).symmetrized())
}

/// Propagates an arbitrary stacked lifted vector `(u, v)` from `s` to `t`
/// under the lifted linear ODE.
pub fn propagate_lifted(
    coeffs: &CoefficientSystem,
    s: f64,
    t: f64,
    x: &[f64],
    tol: Tolerances,
) -> Result<Vec<f64>> {
    if t < s {
        return Err(Error::invalid(format!("end time {t} precedes start time {s}")));
    }
    if x.len() != coeffs.dim() * (coeffs.dim() + 1) {
        return Err(Error::invalid("lifted vector has the wrong length"));
    }
    let mut y = x.to_vec();
    if t == s {
        return Ok(y);
    }
    for (a, b, c) in coeffs.pieces(s, t)? {
        if b <= a {
            continue;
        }
        let full = build_lift_from(c).to_matrix();
        let problem = OdeProblem::new(a, b, y, |_t, y: &[f64], dy: &mut [f64]| dense_apply(&full, y, dy));
        y = integrate_adaptive(&problem, tol)?;
    }
    Ok(y)
}

/// `dy = L y` without allocating.
fn dense_apply(l: &Matrix, y: &[f64], dy: &mut [f64]) {
    let n = y.len();
    for (i, row) in l.as_slice().chunks_exact(n).enumerate() {
        dy[i] = row.iter().zip(y).map(|(a, b)| a * b).sum();
    }
}

/// Mean-square norm `sqrt(trace S) = sqrt(E|X|^2)`.
pub fn ms_norm(state: &MomentState) -> Result<f64> {
    let tr = state.s.trace();
    if tr < -PSD_TOL_INPUT {
        return Err(Error::Inadmissible(format!("trace of S is {tr:e}")));
    }
    Ok(tr.max(0.0).sqrt())
}

/// Random admissible state: `m ~ scale * N(0, I)`, `G ~ scale * N(0, I)`
/// entrywise, `S = m mᵀ + G Gᵀ`. Deterministic per seed.
pub fn sample_admissible(d: usize, seed: u64, scale: f64) -> MomentState {
    assert!(d >= 1, "dimension must be positive");
    let mut z = NormalStream::new(seed, 0);
    let m: Vec<f64> = (0..d).map(|_| scale * z.next_normal()).collect();
    let g_entries: Vec<f64> = (0..d * d).map(|_| scale * z.next_normal()).collect();
    let g = Matrix::new(d, d, g_entries).expect("finite normals");
    let s = Matrix::outer(&m, &m).add(&g.matmul(&g.transpose())).symmetrized();
    MomentState { m, s }
}

/// Membership of lifted coordinates in the admissible cone: `U ⪰ 0` with
/// rank at most one, `V ⪰ 0` and `V - U ⪰ 0`, each up to `tol`.
pub fn is_admissible(u: &[f64], v: &[f64], d: usize, tol: f64) -> bool {
    let p = packed_len(d);
    if u.len() != p || v.len() != p {
        return false;
    }
    let um = unpack_symmetric(u, d);
    let vm = unpack_symmetric(v, d);
    let (lu, _) = symmetric_eigen(&um);
    if lu[0] < -tol {
        return false;
    }
    // rank <= 1: everything but the largest eigenvalue vanishes
    if d >= 2 && lu[d - 2] > tol {
        return false;
    }
    if symmetric_eigen(&vm).0[0] < -tol {
        return false;
    }
    symmetric_eigen(&vm.sub(&um)).0[0] >= -tol
}
