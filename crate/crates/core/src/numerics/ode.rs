//! Explicit one-step integrators: classical RK4 on a uniform grid for
//! reference runs and the Dormand-Prince 5(4) pair with PI step control for
//! production runs.

use crate::error::{Error, Result};

/// Initial value problem `y' = rhs(t, y)`, `y(t0) = y0`, integrated up to `t1`.
///
/// The right-hand side writes the derivative into its output slice, which has
/// the same length as the state.
pub struct OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub rhs: F,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(t0: f64, t1: f64, y0: Vec<f64>, rhs: F) -> Self {
        Self { t0, t1, y0, rhs }
    }

    pub fn dimension(&self) -> usize {
        self.y0.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite()) {
            return Err(Error::invalid("integration bounds must be finite"));
        }
        if self.t1 < self.t0 {
            return Err(Error::invalid(format!(
                "integration end {} precedes start {}",
                self.t1, self.t0
            )));
        }
        if self.y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged { time: self.t0 });
        }
        Ok(())
    }
}

/// Tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v < 1.0;
        if !ok(rel_tol) || !ok(abs_tol) {
            return Err(Error::invalid(format!(
                "tolerances must lie in (0, 1), got rel {rel_tol}, abs {abs_tol}"
            )));
        }
        Ok(Self { rel_tol, abs_tol })
    }

    /// Tightens both tolerances by `factor` (clamped away from zero).
    pub fn tightened(self, factor: f64) -> Self {
        Self {
            rel_tol: (self.rel_tol / factor).max(1e-15),
            abs_tol: (self.abs_tol / factor).max(1e-300),
        }
    }
}

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationDiverged { time: t })
    }
}

/// Classical fourth-order Runge-Kutta on a uniform grid; the last step is
/// shortened to land exactly on `t1`.
pub fn integrate_fixed<F>(problem: &OdeProblem<F>, step: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    problem.validate()?;
    let span = problem.t1 - problem.t0;
    if span == 0.0 {
        return Ok(problem.y0.clone());
    }
    if !(step > 0.0 && step <= span) {
        return Err(Error::invalid(format!(
            "step {step} must lie in (0, {span}]"
        )));
    }

    let n = problem.dimension();
    let f = &problem.rhs;
    let mut y = problem.y0.clone();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];

    let mut rk4_step = |t: f64, h: f64, y: &mut [f64]| {
        let [k1, k2, k3, k4] = &mut k;
        f(t, y, k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        f(t + 0.5 * h, &tmp, k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &tmp, k3);
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        f(t + h, &tmp, k4);
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    };

    // grid points come from the step index so t does not drift
    let full_steps = (span / step).floor() as u64;
    for i in 0..full_steps {
        let t = problem.t0 + i as f64 * step;
        rk4_step(t, step, &mut y);
        check_finite(&y, t + step)?;
    }
    let t_last = problem.t0 + full_steps as f64 * step;
    let rest = problem.t1 - t_last;
    if rest > 1e-14 * span {
        rk4_step(t_last, rest, &mut y);
        check_finite(&y, problem.t1)?;
    }
    Ok(y)
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

/// Dormand-Prince 5(4) with PI step-size control and local extrapolation.
///
/// A step is accepted when the embedded error estimate satisfies
/// `|err_i| <= abs_tol + rel_tol * max(|y_i|, |y_new_i|)` for every component.
pub fn integrate_adaptive<F>(problem: &OdeProblem<F>, tol: Tolerances) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let mut y = problem.y0.clone();
    integrate_adaptive_in_place(problem, tol, &mut y)?;
    Ok(y)
}

fn integrate_adaptive_in_place<F>(
    problem: &OdeProblem<F>,
    tol: Tolerances,
    y: &mut Vec<f64>,
) -> Result<()>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    problem.validate()?;
    Tolerances::new(tol.rel_tol, tol.abs_tol)?;
    let span = problem.t1 - problem.t0;
    if span == 0.0 {
        return Ok(());
    }
    let n = problem.dimension();
    let f = &problem.rhs;
    let min_step = 1e-14 * span;

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut t = problem.t0;
    f(t, y, &mut k1);
    check_finite(&k1, t)?;
    let mut h = initial_step(f, t, y, &k1, tol, span);
    let mut err_prev = 1e-4f64;
    let mut rejected_last = false;

    while t < problem.t1 {
        if t + h >= problem.t1 || t + 1.01 * h >= problem.t1 {
            h = problem.t1 - t;
        }
        if h < min_step && t + h < problem.t1 {
            return Err(Error::Stiffness { time: t, step: h });
        }

        for j in 0..n {
            stage[j] = y[j] + h * A21 * k1[j];
        }
        f(t + C2 * h, &stage, &mut k2);
        for j in 0..n {
            stage[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j]);
        }
        f(t + C3 * h, &stage, &mut k3);
        for j in 0..n {
            stage[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j]);
        }
        f(t + C4 * h, &stage, &mut k4);
        for j in 0..n {
            stage[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j]);
        }
        f(t + C5 * h, &stage, &mut k5);
        for j in 0..n {
            stage[j] = y[j]
                + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]);
        }
        f(t + h, &stage, &mut k6);
        for j in 0..n {
            y_new[j] = y[j]
                + h * (A71 * k1[j] + A73 * k3[j] + A74 * k4[j] + A75 * k5[j] + A76 * k6[j]);
        }
        f(t + h, &y_new, &mut k7);

        let mut err = 0.0f64;
        let mut finite = true;
        for j in 0..n {
            let e = h
                * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
            let sc = tol.abs_tol + tol.rel_tol * y[j].abs().max(y_new[j].abs());
            let r = (e / sc).abs();
            if !r.is_finite() || !y_new[j].is_finite() {
                finite = false;
            }
            err = err.max(r);
        }

        if !finite {
            // shrink hard; a genuinely divergent solution ends in underflow or overflow
            if h <= min_step {
                return Err(Error::IntegrationDiverged { time: t + h });
            }
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            let mut fac = SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            let t_next = t + h;
            t = if (problem.t1 - t_next).abs() <= min_step {
                problem.t1
            } else {
                t_next
            };
            std::mem::swap(y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            check_finite(y, t)?;
            err_prev = err.max(1e-4);
            rejected_last = false;
            h *= fac;
        } else {
            let fac = (SAFETY * err.powf(-1.0 / 5.0)).max(FAC_MIN);
            h *= fac;
            rejected_last = true;
        }
    }
    Ok(())
}

/// Starting step after Hairer, Norsett & Wanner (II.4).
fn initial_step<F>(f: &F, t0: f64, y0: &[f64], f0: &[f64], tol: Tolerances, span: f64) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| tol.abs_tol + tol.rel_tol * y.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 || !d2.is_finite() {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates with the adaptive scheme and reports the state at each of the
/// given output times (which must be nondecreasing and start at or after
/// `t0`). The first output equals `y0` when the first time is `t0`.
pub fn integrate_adaptive_dense<F>(
    t0: f64,
    y0: &[f64],
    times: &[f64],
    rhs: F,
    tol: Tolerances,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut problem = OdeProblem::new(t0, t0, y0.to_vec(), rhs);
    for &next in times {
        if next < t {
            return Err(Error::invalid("output times must be nondecreasing"));
        }
        problem.t0 = t;
        problem.t1 = next;
        problem.y0.clone_from(&y);
        integrate_adaptive_in_place(&problem, tol, &mut y)?;
        out.push(y.clone());
        t = next;
    }
    Ok(out)
}
