use msrds_core::moment::{CoefficientSystem, Coefficients};
use msrds_core::numerics::Tolerances;
use msrds_core::rng::NormalStream;
use msrds_core::spectrum::{
    autonomous_spectrum, finite_time_exponents, finite_time_spectrum, gamma_bound,
    EigenLiftOptions, Verdict,
};
use msrds_core::Matrix;
use proptest::prelude::*;

fn random_system(d: usize, m: f64, seed: u64) -> CoefficientSystem {
    let mut z = NormalStream::new(seed, 7);
    let mut mat = || {
        let e: Vec<f64> = (0..d * d).map(|_| m * (2.0 * z.next_uniform() - 1.0)).collect();
        Matrix::new(d, d, e).unwrap()
    };
    let (a, b, c, dd) = (mat(), mat(), mat(), mat());
    let coeffs = Coefficients::new(a, b, c, dd).unwrap();
    CoefficientSystem::piecewise(
        vec![msrds_core::moment::Segment {
            start: f64::NEG_INFINITY,
            coefficients: coeffs,
        }],
        Some(m),
    )
    .unwrap()
}

// with diagonal A and C = c I the pure-variance modes are the matrix units
// E_ij with rate (a_i + a_j + c²) / 2, worked out by hand
#[test]
fn eigen_lift_points_match_closed_form_for_diagonal_d2() {
    let a = Matrix::diag(&[-0.3, 0.4]);
    let b = Matrix::from_rows(&[vec![0.2, 0.0], vec![0.0, -0.1]]).unwrap();
    let c = Matrix::diag(&[0.5, 0.5]);
    let sys = CoefficientSystem::autonomous(
        Coefficients::new(a, b, c, Matrix::zeros(2, 2)).unwrap(),
    );
    let est = autonomous_spectrum(&sys, &EigenLiftOptions::default()).unwrap();
    let v_points = [(-0.6 + 0.25) / 2.0, (0.1 + 0.25) / 2.0, (0.8 + 0.25) / 2.0];
    let retained: Vec<f64> = est
        .candidates
        .iter()
        .filter(|c| c.verdict == Verdict::Retained)
        .map(|c| c.point)
        .collect();
    for p in [v_points[0], v_points[2]] {
        assert!(retained.iter().any(|r| (r - p).abs() < 1e-12), "{p} missing from {retained:?}");
    }
    // off-diagonal v-mode E_12 + E_21 is indefinite and must be rejected
    assert!(!retained.iter().any(|r| (r - v_points[1]).abs() < 1e-12));
}

#[test]
fn enclosure_cap_and_monotone_dims_on_random_systems() {
    let opts = EigenLiftOptions::default();
    let mut inconclusive = 0;
    for k in 0..200u64 {
        let d = 1 + (k % 3) as usize;
        let m = if k % 2 == 0 { 0.5 } else { 1.0 };
        let sys = random_system(d, m, k);
        let gamma = gamma_bound(&sys);
        let est = autonomous_spectrum(&sys, &opts).unwrap();
        assert!(est.intervals.len() <= d * (d + 1));
        for iv in &est.intervals {
            assert!(iv.lower >= -gamma && iv.upper <= gamma, "system {k}: {iv:?} vs {gamma}");
        }
        for w in est.intervals.windows(2) {
            assert!(w[0].upper < w[1].lower);
        }
        assert!(est.stable_dims.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(est.stable_dims.len(), est.intervals.len() + 1);
        assert!(!est.intervals.is_empty());
        if est.has_inconclusive() {
            inconclusive += 1;
        }
    }
    eprintln!("systems with inconclusive cone verdicts: {inconclusive}/200");
}

#[test]
fn finite_time_clusters_track_eigen_lift_points() {
    let opts = EigenLiftOptions::default();
    let mut checked = 0;
    for k in 0..40u64 {
        let d = 1 + (k % 2) as usize;
        let sys = random_system(d, 0.5, 1000 + k);
        let est = autonomous_spectrum(&sys, &opts).unwrap();
        if est.has_inconclusive() {
            continue;
        }
        checked += 1;
        let points: Vec<f64> = est.intervals.iter().map(|i| i.lower).collect();
        let samples = finite_time_exponents(&sys, 50.0, 64, k, Tolerances::default()).unwrap();
        let ft = finite_time_spectrum(&samples, 0.05).unwrap();
        for iv in &ft.intervals {
            let center = 0.5 * (iv.lower + iv.upper);
            assert!(
                points.iter().any(|p| (p - center).abs() <= 0.05),
                "system {k}: cluster {center} vs {points:?}"
            );
        }
        for p in &points {
            assert!(
                ft.intervals.iter().any(|iv| (0.5 * (iv.lower + iv.upper) - p).abs() <= 0.05),
                "system {k}: point {p} not hit by {:?}",
                ft.intervals
            );
        }
    }
    assert!(checked >= 20, "only {checked} conclusive systems");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn shift_covariance(d in 1usize..=3, seed in 0u64..10_000, shift in -1.0f64..1.0) {
        let sys = random_system(d, 0.5, seed);
        let opts = EigenLiftOptions::default();
        let base = autonomous_spectrum(&sys, &opts).unwrap();
        let shifted = autonomous_spectrum(&sys.with_shifted_drift(shift), &opts).unwrap();
        prop_assert_eq!(base.candidates.len(), shifted.candidates.len());
        for (a, b) in base.candidates.iter().zip(&shifted.candidates) {
            prop_assert!((b.point - a.point - shift).abs() < 1e-9);
        }
    }
}
