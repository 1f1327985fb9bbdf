use msrds_core::moment::{propagate_moments, CoefficientSystem, Coefficients, MomentState};
use msrds_core::numerics::Tolerances;
use msrds_core::pitchfork::{
    absorbing_data, analytic_ms_norm_sq, bifurcation_sweep, classify, pullback_run,
    reduced_trajectory, steady_states, Classification, PitchforkParams, PullbackOptions,
    ReducedState,
};
use msrds_core::rng::NormalStream;
use proptest::prelude::*;

const GRID: [f64; 6] = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

#[test]
fn closed_form_matches_moment_propagation() {
    let tol = Tolerances::default();
    let mut worst: f64 = 0.0;
    for alpha in GRID {
        for beta in GRID {
            let params = PitchforkParams::new(alpha, beta).unwrap();
            let sys = CoefficientSystem::autonomous(Coefficients::scalar(alpha, beta, 1.0, 0.0));
            for tau in [0.5, 1.0, 2.0] {
                for mean in [0.0, 1.0] {
                    let init = MomentState::new(vec![mean], msrds_core::Matrix::diag(&[1.0])).unwrap();
                    let ode = propagate_moments(&sys, 0.0, tau, &init, tol).unwrap().s[(0, 0)];
                    let exact = analytic_ms_norm_sq(&params, 0.0, tau, 1.0, mean).unwrap();
                    worst = worst.max((ode - exact).abs() / exact);
                }
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn closed_form_examples() {
    let p = PitchforkParams::attractor(0.0).unwrap();
    let e = std::f64::consts::E;
    assert!((analytic_ms_norm_sq(&p, 0.0, 1.0, 1.0, 1.0).unwrap() - (2.0 * e * e - e)).abs() < 1e-12);
    assert_eq!(analytic_ms_norm_sq(&p, 2.0, 2.0, 0.7, 0.5).unwrap(), 0.7);
    let half = PitchforkParams::new(-0.2, 0.5).unwrap();
    let linear = (0.6f64 * 1.5).exp() * (1.0 + 1.5 * 0.25);
    assert!((analytic_ms_norm_sq(&half, 0.0, 1.5, 1.0, 0.5).unwrap() - linear).abs() < 1e-12);
    let near = PitchforkParams::new(-0.2, 0.5 + 1e-7).unwrap();
    assert!((analytic_ms_norm_sq(&near, 0.0, 1.5, 1.0, 0.5).unwrap() - linear).abs() < 1e-6);
    assert!(analytic_ms_norm_sq(&p, 0.0, 1.0, 0.5, 1.0).is_err());
}

#[test]
fn steady_state_and_absorbing_examples() {
    let states = steady_states(&PitchforkParams::attractor(-0.75).unwrap()).unwrap();
    let valid: Vec<_> = states.iter().filter(|s| s.1).map(|s| s.0).collect();
    assert_eq!(valid.len(), 3);
    assert!((valid[1].x - 0.353_553_4).abs() < 1e-7 && (valid[1].y - 0.25).abs() < 1e-15);
    assert!(!states[3].1 && (states[3].0.y + 0.25).abs() < 1e-15);
    let two = steady_states(&PitchforkParams::attractor(-2.0).unwrap()).unwrap();
    assert_eq!(two.iter().filter(|s| s.1).count(), 1);
    let (r, t) = absorbing_data(&PitchforkParams::attractor(-0.75).unwrap(), 10.0).unwrap();
    assert!((r - 1.658_312).abs() < 1e-6 && (t - 3.593_569).abs() < 1e-6);
    let (r, t) = absorbing_data(&PitchforkParams::attractor(0.0).unwrap(), 2.0).unwrap();
    assert!((r - 2f64.sqrt()).abs() < 1e-15 && (t - 2f64.ln()).abs() < 1e-15);
    assert!(steady_states(&PitchforkParams::new(0.0, 2.0).unwrap()).is_err());
}

#[test]
fn pullback_examples() {
    let opts = PullbackOptions::default();
    let p = PitchforkParams::attractor(-1.5).unwrap();
    let run = pullback_run(&p, |_| ReducedState { x: 1.0, y: 1.0 }, 0.0, &[-10.0, -20.0, -40.0], &opts).unwrap();
    let l = run.limits[2];
    assert!(l.x.hypot(l.y) < 5e-4);
    assert_eq!(run.converged_to, Classification::Trivial);
    assert!(run.monotone);

    let p = PitchforkParams::attractor(-0.75).unwrap();
    let run = pullback_run(&p, |_| ReducedState { x: 0.1, y: 0.5 }, 0.0, &[-60.0], &opts).unwrap();
    let l = run.limits[0];
    assert!((l.x - 0.125f64.sqrt()).abs() < 1e-6 && (l.y - 0.25).abs() < 1e-6);
    assert_eq!(run.converged_to, Classification::PositiveBranch);

    let rows = bifurcation_sweep(&[-1.5, -1.25, -0.75], ReducedState { x: 1.0, y: 1.0 }, 40.0, &opts).unwrap();
    assert_eq!(rows[0].classification, Classification::Trivial);
    assert!(rows[0].ms_norm < 1e-3 && rows[1].ms_norm < 1e-3);
    assert_eq!(rows[2].classification, Classification::PositiveBranch);
    let neg = bifurcation_sweep(&[-0.75], ReducedState { x: -1.0, y: 1.0 }, 40.0, &opts).unwrap();
    assert_eq!(neg[0].classification, Classification::NegativeBranch);
    assert!((neg[0].limit.x + 0.353_553_4).abs() < 1e-6);
}

fn random_admissible(z: &mut NormalStream, r: f64) -> ReducedState {
    // E X² = r², E X anywhere in [−r, r]
    ReducedState { x: r * (2.0 * z.next_uniform() - 1.0), y: r * r }
}

fn times(s: f64, t: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| s + (t - s) * k as f64 / n as f64).collect()
}

#[test]
fn absorbing_ball_is_entered_on_time() {
    let mut z = NormalStream::new(3, 0);
    for alpha in [-1.5, -0.75, 0.0, 0.5] {
        let p = PitchforkParams::attractor(alpha).unwrap();
        let (_, t_abs) = absorbing_data(&p, 10.0).unwrap();
        let level = alpha.abs() + 2.0;
        for _ in 0..50 {
            let start = random_admissible(&mut z, 10.0);
            let grid = times(t_abs, t_abs + 20.0, 400);
            let traj = reduced_trajectory(&p, start, 0.0, &grid, Tolerances::default()).unwrap();
            for (t, st) in grid.iter().zip(&traj) {
                assert!(st.y <= level + 1e-6, "alpha {alpha}, start {start:?}: y({t}) = {}", st.y);
            }
        }
    }
}

#[test]
fn decay_bound_below_minus_one() {
    let mut z = NormalStream::new(4, 0);
    for alpha in [-3.0, -2.0, -1.5, -1.1] {
        let p = PitchforkParams::attractor(alpha).unwrap();
        for _ in 0..20 {
            let r = 0.5 + 4.5 * z.next_uniform();
            let start = random_admissible(&mut z, r);
            let grid = times(0.0, 30.0, 300);
            let traj = reduced_trajectory(&p, start, 0.0, &grid, Tolerances::default()).unwrap();
            for (tau, st) in grid.iter().zip(&traj) {
                let bound = ((2.0 * alpha + 1.0) * tau).exp() * r * r
                    + 2.0 * ((alpha + 1.0) * tau).exp() * tau * r * r;
                assert!(st.y <= bound + 1e-9, "alpha {alpha}, tau {tau}: {} > {bound}", st.y);
            }
        }
    }
}

#[test]
fn classification_needs_unit_beta() {
    let p = PitchforkParams::new(-0.75, 0.9).unwrap();
    assert!(classify(&p, &ReducedState { x: 0.0, y: 0.0 }, 1e-4).is_err());
    assert!(pullback_run(&p, |_| ReducedState { x: 0.0, y: 0.0 }, 0.0, &[-1.0], &PullbackOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn constraint_and_sign_are_preserved(
        alpha in -2.0f64..1.0,
        x in -3.0f64..3.0,
        excess in 0.0f64..4.0,
    ) {
        let p = PitchforkParams::attractor(alpha).unwrap();
        let start = ReducedState { x, y: x * x + excess };
        let grid = times(0.0, 15.0, 150);
        let traj = reduced_trajectory(&p, start, 0.0, &grid, Tolerances::default()).unwrap();
        for st in &traj {
            prop_assert!(st.y >= st.x * st.x - 1e-8, "{:?}", st);
            prop_assert!(st.x * x >= 0.0);
            if x == 0.0 {
                prop_assert_eq!(st.x, 0.0);
            }
        }
    }

    #[test]
    fn lower_bound_for_nonnegative_beta(
        alpha in -2.0f64..2.0,
        beta in 0.0f64..3.0,
        tau in 0.0f64..3.0,
        norm in 0.01f64..5.0,
        frac in -1.0f64..1.0,
    ) {
        let p = PitchforkParams::new(alpha, beta).unwrap();
        let mean = frac * norm.sqrt();
        let v = analytic_ms_norm_sq(&p, 1.0, 1.0 + tau, norm, mean).unwrap();
        prop_assert!(v >= ((2.0 * alpha + 1.0) * tau).exp() * norm * (1.0 - 1e-14));
    }
}
