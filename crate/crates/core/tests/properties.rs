use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;

use qsteer::config::{ExperimentConfig, SchemeSpec, StateSpec};
use qsteer::fitquad::{fit, refine, PointCloud};
use qsteer::monogamy::{ckw_check, concurrence, mixed_monogamy_residual, pure_monogamy_residual, volumes};
use qsteer::pipeline::simulate;
use qsteer::qstate::{bell_diagonal, pauli, pauli_decompose, pauli_recompose, DensityMatrix};
use qsteer::random::{
    ball_vector, haar_pure, haar_qubit_unitary, random_mixed, random_rotation, random_separable, task_rng, unit_vector,
};
use qsteer::steer::{ellipsoid, normalized_volume, steer_with, MeasurementElement, SEPARABLE_VOLUME_BOUND};
use qsteer::tomosim::{
    even_allocation, icosahedron_directions, monte_carlo_errors, reconstruct, run_experiment, simulate_counts,
    subset_nine, ExperimentSettings, TomoError,
};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

fn two_qubit(seed: u64) -> DensityMatrix {
    let mut rng = task_rng(seed, 0);
    match seed % 3 {
        0 => haar_pure(2, &mut rng).unwrap().to_density(),
        1 => random_mixed(2, 2, &mut rng).unwrap(),
        _ => random_mixed(2, 4, &mut rng).unwrap(),
    }
}

/// SO(3) image of a qubit unitary: R_jk = ½ Tr[σ_j U σ_k U†].
fn bloch_rotation(u: &Matrix2<Complex64>) -> Matrix3<f64> {
    Matrix3::from_fn(|j, k| 0.5 * (pauli(j) * u * pauli(k) * u.adjoint()).trace().re)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_round_trips(seed in any::<u64>()) {
        let rho = two_qubit(seed);
        let back = pauli_recompose(&pauli_decompose(&rho).unwrap()).unwrap();
        prop_assert!((back.matrix() - rho.matrix()).camax() < 1e-12);
    }

    #[test]
    fn partial_trace_is_a_state(seed in any::<u64>(), keep in prop::sample::subsequence(vec![0usize, 1, 2], 1..=3)) {
        let rho = random_mixed(3, 3, &mut task_rng(seed, 1)).unwrap();
        let red = rho.partial_trace(&keep).unwrap();
        prop_assert_eq!(red.qubits(), keep.len());
        prop_assert!((red.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(red.eigenvalues().iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn steered_states_lie_in_the_ellipsoid(seed in any::<u64>()) {
        let rho = two_qubit(seed);
        let d = pauli_decompose(&rho).unwrap();
        let ell = ellipsoid(&d);
        prop_assume!(ell.rank == 3);
        let mut rng = task_rng(seed, 2);
        for _ in 0..20 {
            let s = steer_with(&d, &MeasurementElement::projective(unit_vector(&mut rng)).unwrap()).unwrap();
            prop_assert!((ell.quadric_residual(&s.bloch) - 1.0).abs() < 1e-8);
            prop_assert!(s.bloch.norm() <= 1.0 + 1e-10);
            let inner = MeasurementElement::new(0.5, ball_vector(&mut rng) * 0.5).unwrap();
            let s = steer_with(&d, &inner).unwrap();
            prop_assert!(ell.quadric_residual(&s.bloch) <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn volume_matches_shape_determinant(seed in any::<u64>()) {
        let d = pauli_decompose(&two_qubit(seed)).unwrap();
        let ell = ellipsoid(&d);
        prop_assume!(1.0 - d.a.norm_squared() > 1e-6);
        let v = normalized_volume(&d);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        prop_assert!((ell.shape.determinant().max(0.0).sqrt() - v).abs() < 1e-9);
        let prod: f64 = ell.semiaxes.iter().product();
        prop_assert!((prod - v).abs() < 1e-9);
    }

    #[test]
    fn separable_volumes_are_bounded(seed in any::<u64>(), terms in 1usize..8) {
        let rho = random_separable(terms, &mut task_rng(seed, 3)).unwrap();
        prop_assert!(normalized_volume(&pauli_decompose(&rho).unwrap()) <= SEPARABLE_VOLUME_BOUND + 1e-12);
    }

    #[test]
    fn local_unitaries_rotate_the_ellipsoid(seed in any::<u64>()) {
        let rho = two_qubit(seed);
        let mut rng = task_rng(seed, 4);
        let ua = haar_qubit_unitary(&mut rng);
        let ub = haar_qubit_unitary(&mut rng);
        let before = ellipsoid(&pauli_decompose(&rho).unwrap());
        let alice = ellipsoid(&pauli_decompose(&rho.apply_local(0, &ua).unwrap()).unwrap());
        prop_assert!((alice.volume - before.volume).abs() < 1e-9);
        prop_assert!((alice.center - before.center).norm() < 1e-9);
        let bob = ellipsoid(&pauli_decompose(&rho.apply_local(1, &ub).unwrap()).unwrap());
        let r = bloch_rotation(&ub);
        prop_assert!((bob.volume - before.volume).abs() < 1e-9);
        prop_assert!((bob.center - r * before.center).norm() < 1e-9);
        prop_assert!((bob.shape - r * before.shape * r.transpose()).amax() < 1e-9);
    }

    #[test]
    fn pure_states_obey_both_monogamy_relations(seed in any::<u64>()) {
        let rho = haar_pure(3, &mut task_rng(seed, 5)).unwrap().to_density();
        let (vb, vc) = volumes(&rho).unwrap();
        prop_assert!(pure_monogamy_residual(vb, vc) >= -1e-9);
        prop_assert!(ckw_check(&rho).unwrap().residual >= -1e-9);
    }

    #[test]
    fn mixed_states_obey_the_weaker_relation(seed in any::<u64>(), env in 2usize..6) {
        let rho = random_mixed(3, env, &mut task_rng(seed, 6)).unwrap();
        let (vb, vc) = volumes(&rho).unwrap();
        prop_assert!(mixed_monogamy_residual(vb, vc) >= -1e-9);
    }

    #[test]
    fn local_unitaries_preserve_volumes_and_concurrence(seed in any::<u64>()) {
        let mut rng = task_rng(seed, 7);
        let rho = haar_pure(3, &mut rng).unwrap().to_density();
        let mut moved = rho.clone();
        for q in 0..3 {
            moved = moved.apply_local(q, &haar_qubit_unitary(&mut rng)).unwrap();
        }
        let (b0, c0) = volumes(&rho).unwrap();
        let (b1, c1) = volumes(&moved).unwrap();
        prop_assert!((b0 - b1).abs() < 1e-9 && (c0 - c1).abs() < 1e-9);
        let ab0 = concurrence(&rho.partial_trace(&[0, 1]).unwrap()).unwrap();
        let ab1 = concurrence(&moved.partial_trace(&[0, 1]).unwrap()).unwrap();
        prop_assert!((ab0 - ab1).abs() < 1e-9);
    }

    #[test]
    fn noiseless_clouds_recover_the_analytic_ellipsoid(seed in any::<u64>()) {
        let d = pauli_decompose(&two_qubit(seed)).unwrap();
        let ell = ellipsoid(&d);
        prop_assume!(ell.semiaxes[2] > 0.05);
        let mut rng = task_rng(seed, 8);
        let cloud: PointCloud = (0..200)
            .map(|_| steer_with(&d, &MeasurementElement::projective(unit_vector(&mut rng)).unwrap()).unwrap().bloch)
            .collect();
        let f = fit(&cloud).unwrap();
        let got = f.recovered.unwrap();
        prop_assert!((got.volume - ell.volume).abs() < 1e-6);
        prop_assert!((got.center - ell.center).norm() < 1e-6);
        prop_assert!(f.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn fits_are_rigid_motion_equivariant(seed in any::<u64>()) {
        let mut rng = task_rng(seed, 9);
        let base: PointCloud = (0..60).map(|_| unit_vector(&mut rng).component_mul(&Vector3::new(0.5, 0.35, 0.2)) + ball_vector(&mut rng) * 0.003).collect();
        let r = random_rotation(&mut rng);
        let shift = ball_vector(&mut rng) * 0.3;
        let moved: PointCloud = base.points.iter().map(|p| r * p + shift).collect();
        let e0 = fit(&base).unwrap().recovered.unwrap();
        let e1 = fit(&moved).unwrap().recovered.unwrap();
        prop_assert!((e0.volume - e1.volume).abs() < 1e-9);
        prop_assert!((r * e0.center + shift - e1.center).norm() < 1e-9);
    }
}

#[test]
fn estimator_is_consistent() {
    let r = Vector3::new(0.3, -0.5, 0.6);
    for (k, total) in [1_000u64, 100_000, 10_000_000].into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..50 {
            let c = simulate_counts(&r, total, even_allocation(total), &mut task_rng(10 + k as u64, i)).unwrap();
            let est = reconstruct(&c).unwrap();
            for j in 0..3 {
                worst = worst.max((est.bloch_hat[j] - r[j]).abs() / est.stderr[j]);
            }
        }
        assert!(worst < 5.0, "N = {total}: worst deviation {worst} sigma");
    }
}

#[test]
fn icosahedron_noiseless_fits() {
    let rho = bell_diagonal([0.6, 0.1, 0.1, 0.2]).unwrap();
    let settings = ExperimentSettings {
        events_per_point: None,
        ..ExperimentSettings::default()
    };
    for run in 0..20 {
        let mut rng = task_rng(11, run);
        let dirs = icosahedron_directions(&random_rotation(&mut rng)).unwrap();
        let twelve = run_experiment(&rho, &dirs, &settings, run).unwrap().clouds[0].cloud();
        let v12 = fit(&twelve).unwrap().volume().unwrap();
        let nine_dirs = subset_nine(&dirs, &mut rng).unwrap();
        let nine = run_experiment(&rho, &nine_dirs, &settings, run).unwrap().clouds[0].cloud();
        let v9 = fit(&nine).unwrap().volume().unwrap();
        assert!((v12 - 0.096).abs() < 1e-6 && (v9 - 0.096).abs() < 1e-6, "{v12} {v9}");
    }
}

fn row_d(events: Option<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(StateSpec::Family {
        alpha: FRAC_PI_2,
        beta: FRAC_PI_4,
    });
    cfg.scheme = SchemeSpec::Uniform { n: 1000 };
    cfg.events_per_point = events;
    cfg
}

#[test]
fn refinement_barely_moves_row_d() {
    let out = simulate(&row_d(Some(50_000)), 12).unwrap();
    for p in &out.parties {
        let cloud = out.experiment.party(p.party).unwrap().cloud();
        let f = p.analysis.fit.as_ref().unwrap();
        let refined = refine(&cloud, f);
        let dv = (refined.volume().unwrap() - f.volume().unwrap()).abs();
        assert!(dv < 1e-3, "refinement moved the volume by {dv}");
        assert!(refined.r_squared > 0.995);
    }
}

#[test]
fn row_d_statistics() {
    let out = simulate(&row_d(Some(50_000)), 13).unwrap();
    for p in &out.parties {
        let f = p.analysis.fit.as_ref().unwrap();
        assert!(f.r_squared > 0.999, "R^2 {}", f.r_squared);
        assert!((p.analysis.fitted_volume.unwrap() - 0.25).abs() < 0.01);
    }
}

#[test]
fn monte_carlo_spread_scales_with_events() {
    let cfg_small = row_d(Some(50_000));
    let cfg_large = row_d(Some(100_000));
    let rho = cfg_small.prepared_state().unwrap();
    let dirs = qsteer::pipeline::directions(&cfg_small.scheme, 14).unwrap();
    let spread = |cfg: &ExperimentConfig| {
        monte_carlo_errors(60, 15, |s| {
            let exp = run_experiment(&rho, &dirs, &cfg.settings(), s)?;
            let v = fit(&exp.clouds[0].cloud())
                .map_err(|e| TomoError::Sample(e.to_string()))?
                .volume()
                .unwrap();
            Ok::<_, TomoError>(vec![v])
        })
        .unwrap()
        .std[0]
    };
    let (s1, s2) = (spread(&cfg_small), spread(&cfg_large));
    assert!((1e-4..1e-3).contains(&s1), "row d spread {s1}");
    let ratio = s1 / s2;
    assert!((ratio - 2f64.sqrt()).abs() < 0.35, "spread ratio {ratio}");
}
