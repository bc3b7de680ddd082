//! Closed-loop sampling checks: hand-computable rollouts, the sequential
//! factorization of the joint GP prior, revisit determinism, and the
//! linear-Gaussian ensemble oracle.

use std::sync::Arc;

use antler_core::gp::{GpState, InputProjection, KernelSpec};
use antler_core::laws::{ControlLawDef, GpMeanTrackingLaw, LinearFeedbackLaw, ParamBox, ReferenceProfile};
use antler_core::rng::rng_from_seed;
use antler_core::saa::StageCost;
use antler_core::world::{one_step_sample, PriorModel, RolloutDraws, SystemSpec, WorldModel};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

fn scalar_system(signal_variance: f64, noise_std: f64, horizon: usize) -> SystemSpec {
    SystemSpec {
        state_dim: 1,
        input_dim: 1,
        prior_model: PriorModel::SingleIntegrator,
        process_noise_std: vec![noise_std],
        kernel: KernelSpec::new(
            signal_variance,
            1.0,
            InputProjection::StateOnly { state_dim: 1 },
        )
        .unwrap(),
        horizon,
    }
}

fn feedback_law() -> ControlLawDef {
    ControlLawDef::new(
        Arc::new(LinearFeedbackLaw {
            state_dim: 1,
            input_dim: 1,
        }),
        ParamBox::new(vec![(-2.0, 2.0)]).unwrap(),
        "scalar feedback",
    )
    .unwrap()
}

fn regulation_cost() -> StageCost {
    StageCost::QuadraticRegulation {
        state_weight: 1.0,
        input_weight: 0.0,
    }
}

#[test]
fn one_step_sample_degenerate_cases() {
    // All stochastic terms vanish: next = f(x, u) = x + u = 0.
    let spec = scalar_system(0.0, 0.0, 3);
    let gps = vec![GpState::new(spec.kernel, 0.0).unwrap()];
    let x_aug = DVector::from_vec(vec![1.0, -1.0]);
    let (next, g) = one_step_sample(&gps, &spec, &x_aug, &[1.3], &[-0.4]).unwrap();
    assert_eq!(next[0], 0.0);
    assert_eq!(g[0], 0.0);

    // Prior draw: zero mean, unit prior standard deviation.
    let spec = scalar_system(1.0, 0.0, 3);
    let gps = vec![GpState::new(spec.kernel, 0.0).unwrap()];
    let (next, g) = one_step_sample(&gps, &spec, &x_aug, &[1.0], &[0.7]).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-12);
    assert!((next[0] - 1.0).abs() < 1e-12);
}

#[test]
fn one_step_resample_after_conditioning_is_deterministic() {
    let spec = scalar_system(1.0, 0.0, 3);
    let mut gp = GpState::new(spec.kernel, 0.0).unwrap();
    let x_aug = DVector::from_vec(vec![0.4, 0.1]);
    let (_, g) = one_step_sample(
        std::slice::from_ref(&gp),
        &spec,
        &x_aug,
        &[0.83],
        &[0.0],
    )
    .unwrap();
    gp = gp.condition_append(x_aug.as_slice(), g[0]).unwrap();

    // Any later draw at the same point reproduces the stored sample.
    for zeta in [-2.0, 0.0, 3.1] {
        let (_, g2) = one_step_sample(
            std::slice::from_ref(&gp),
            &spec,
            &x_aug,
            &[zeta],
            &[0.0],
        )
        .unwrap();
        assert!(
            (g2[0] - g[0]).abs() <= 1e-6,
            "revisit drifted: {} vs {}",
            g2[0],
            g[0]
        );
    }
}

#[test]
fn deterministic_contraction_rollout() {
    let spec = scalar_system(0.0, 0.0, 3);
    let world = WorldModel::new(spec).unwrap();
    let draws = RolloutDraws::sample(1, 3, 1, 1);
    let law = feedback_law();
    let traj = world
        .rollout_sample(
            &law,
            &[1.0],
            &regulation_cost(),
            draws.trajectory(0).unwrap(),
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap();
    let states: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
    assert_eq!(states, vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn scaled_gain_rollout_matches_hand_computation() {
    let spec = scalar_system(0.0, 0.0, 3);
    let world = WorldModel::new(spec).unwrap();
    let draws = RolloutDraws::sample(1, 3, 1, 1);
    let law = feedback_law();
    let traj = world
        .rollout_sample(
            &law,
            &[0.5],
            &regulation_cost(),
            draws.trajectory(0).unwrap(),
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap();
    let states: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
    for (s, expected) in states.iter().zip([1.0, 0.5, 0.25, 0.125]) {
        assert!((s - expected).abs() < 1e-14);
    }
}

#[test]
fn rollouts_are_bit_identical_under_repeated_evaluation() {
    let spec = scalar_system(1.0, 0.1, 12);
    let world = WorldModel::new(spec).unwrap();
    let draws = RolloutDraws::sample(2, 12, 1, 77);
    let law = ControlLawDef::new(
        Arc::new(GpMeanTrackingLaw {
            reference: ReferenceProfile::Sinusoid {
                dim: 1,
                amplitude: 1.0,
                period: 8.0,
                phase: 0.0,
            },
        }),
        ParamBox::new(vec![(-1.0, 2.0), (-1.0, 2.0)]).unwrap(),
        "tracking",
    )
    .unwrap();
    let cost = StageCost::QuadraticTracking {
        reference: ReferenceProfile::Sinusoid {
            dim: 1,
            amplitude: 1.0,
            period: 8.0,
            phase: 0.0,
        },
        input_weight: 0.0,
    };
    let x0 = DVector::from_vec(vec![0.0]);
    let a = world
        .rollout_sample(&law, &[0.9, 0.8], &cost, draws.trajectory(1).unwrap(), &x0)
        .unwrap();
    let b = world
        .rollout_sample(&law, &[0.9, 0.8], &cost, draws.trajectory(1).unwrap(), &x0)
        .unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.inputs, b.inputs);
    assert_eq!(a.stage_costs, b.stage_costs);
}

#[test]
fn dynamics_identity_is_recheckable() {
    let spec = scalar_system(0.8, 0.3, 20);
    let noise_std = spec.process_noise_std.clone();
    let world = WorldModel::new(spec).unwrap();
    let draws = RolloutDraws::sample(1, 20, 1, 5);
    let law = feedback_law();
    let traj = world
        .rollout_sample(
            &law,
            &[0.7],
            &regulation_cost(),
            draws.trajectory(0).unwrap(),
            &DVector::from_vec(vec![0.5]),
        )
        .unwrap();
    let slice = draws.trajectory(0).unwrap();
    for t in 0..traj.horizon() {
        let f = traj.states[t][0] + traj.inputs[t][0];
        let reconstructed = f + traj.g_samples[t][0] + noise_std[0] * slice.noise_draw(t, 0);
        assert!(
            (traj.states[t + 1][0] - reconstructed).abs() <= 1e-12,
            "identity violated at step {t}"
        );
    }
}

#[test]
fn world_targets_separate_function_samples_from_process_noise() {
    // With no process noise the learner's measured increments equal the
    // sampled function values exactly; with noise they differ by exactly
    // sigma_w * zeta.
    for noise_std in [0.0, 0.25] {
        let spec = scalar_system(1.0, noise_std, 10);
        let world = WorldModel::new(spec).unwrap();
        let draws = RolloutDraws::sample(1, 10, 1, 9);
        let law = ControlLawDef::new(
            Arc::new(GpMeanTrackingLaw {
                reference: ReferenceProfile::Zero { dim: 1 },
            }),
            ParamBox::new(vec![(-1.0, 2.0), (-1.0, 2.0)]).unwrap(),
            "tracking",
        )
        .unwrap();
        let traj = world
            .rollout_sample(
                &law,
                &[0.8, 0.0],
                &regulation_cost(),
                draws.trajectory(0).unwrap(),
                &DVector::from_vec(vec![0.3]),
            )
            .unwrap();
        let slice = draws.trajectory(0).unwrap();
        for t in 0..traj.horizon() {
            let increment = traj.states[t + 1][0] - (traj.states[t][0] + traj.inputs[t][0]);
            let expected_gap = noise_std * slice.noise_draw(t, 0);
            assert!(
                (increment - traj.g_samples[t][0] - expected_gap).abs() <= 1e-12,
                "separation violated at step {t}"
            );
        }
    }
}

#[test]
fn sequential_two_point_draws_match_the_joint_prior() {
    // Sampling g(z1) from the prior and g(z2) from the conditioned
    // one-step predictive must reproduce N(0, K) over the pair.
    let kernel = KernelSpec::squared_exponential(1.0, 1.0).unwrap();
    let z1 = [0.0];
    let z2 = [0.9];
    let k12 = kernel.eval(&z1, &z2).unwrap();

    let repetitions = 100_000;
    let mut rng = rng_from_seed(314);
    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    let mut sum_cross = 0.0f64;
    for _ in 0..repetitions {
        let gp = GpState::new(kernel, 0.0).unwrap();
        let za: f64 = StandardNormal.sample(&mut rng);
        let zb: f64 = StandardNormal.sample(&mut rng);
        let p1 = gp.posterior(&z1).unwrap();
        let g1 = p1.mean + p1.variance.sqrt() * za;
        let gp = gp.condition_append(&z1, g1).unwrap();
        let p2 = gp.posterior(&z2).unwrap();
        let g2 = p2.mean + p2.variance.sqrt() * zb;

        sum[0] += g1;
        sum[1] += g2;
        sum_sq[0] += g1 * g1;
        sum_sq[1] += g2 * g2;
        sum_cross += g1 * g2;
    }
    let n = repetitions as f64;
    let mean = [sum[0] / n, sum[1] / n];
    let var = [
        sum_sq[0] / n - mean[0] * mean[0],
        sum_sq[1] / n - mean[1] * mean[1],
    ];
    let cov = sum_cross / n - mean[0] * mean[1];

    assert!(mean[0].abs() < 0.02, "mean[0] {}", mean[0]);
    assert!(mean[1].abs() < 0.02, "mean[1] {}", mean[1]);
    assert!((var[0] - 1.0).abs() < 0.05, "var[0] {}", var[0]);
    assert!((var[1] - 1.0).abs() < 0.05, "var[1] {}", var[1]);
    assert!((cov - k12).abs() < 0.05, "cov {cov} vs {k12}");
}

#[test]
fn ensemble_statistics_trivial_cases() {
    // M = 1: the mean is the single trajectory and the variance vanishes.
    let spec = scalar_system(1.0, 0.2, 8);
    let world = WorldModel::new(spec).unwrap();
    let law = feedback_law();
    let cost = regulation_cost();
    let x0 = DVector::from_vec(vec![1.0]);
    let draws = RolloutDraws::sample(1, 8, 1, 21);
    let stats = world
        .expected_state_estimate(&law, &[0.6], &cost, &draws, &x0)
        .unwrap();
    let traj = world
        .rollout_sample(&law, &[0.6], &cost, draws.trajectory(0).unwrap(), &x0)
        .unwrap();
    for t in 0..=8 {
        assert!((stats.mean[t][0] - traj.states[t][0]).abs() < 1e-14);
        assert!(stats.variance[t][0] <= 1e-15);
    }

    // Deterministic system: zero variance across any number of samples.
    let spec = scalar_system(0.0, 0.0, 8);
    let world = WorldModel::new(spec).unwrap();
    let draws = RolloutDraws::sample(16, 8, 1, 22);
    let stats = world
        .expected_state_estimate(&law, &[0.6], &cost, &draws, &x0)
        .unwrap();
    for t in 0..=8 {
        assert!(stats.variance[t][0] <= 1e-15);
    }
}

#[test]
fn linear_gaussian_ensemble_matches_closed_form_recursion() {
    // sigma_k^2 = 0, x_{t+1} = (a - b k) x_t + w_t: the per-step state
    // variance follows v_{t+1} = phi^2 v_t + sigma_w^2 exactly.
    let a = 1.0;
    let b = 1.0;
    let gain = 0.6;
    let sigma_w = 0.3;
    let horizon = 12;
    let m = 10_000;

    let spec = SystemSpec {
        state_dim: 1,
        input_dim: 1,
        prior_model: PriorModel::LinearScalar { a, b },
        process_noise_std: vec![sigma_w],
        kernel: KernelSpec::squared_exponential(0.0, 1.0).unwrap(),
        horizon,
    };
    let world = WorldModel::new(spec).unwrap();
    let law = feedback_law();
    let cost = regulation_cost();
    let x0 = DVector::from_vec(vec![1.0]);
    let draws = RolloutDraws::sample(m, horizon, 1, 1234);
    let stats = world
        .expected_state_estimate(&law, &[gain], &cost, &draws, &x0)
        .unwrap();

    let phi: f64 = a - b * gain;
    let mut mean = 1.0;
    let mut var = 0.0;
    for t in 1..=horizon {
        mean *= phi;
        var = phi * phi * var + sigma_w * sigma_w;
        // Standard errors of the Monte Carlo estimators.
        let se_mean = (var / m as f64).sqrt();
        let se_var = var * (2.0 / m as f64).sqrt();
        assert!(
            (stats.mean[t][0] - mean).abs() <= 3.0 * se_mean + 1e-12,
            "mean off at t={t}: {} vs {mean}",
            stats.mean[t][0]
        );
        assert!(
            (stats.variance[t][0] - var).abs() <= 3.0 * se_var,
            "variance off at t={t}: {} vs {var}",
            stats.variance[t][0]
        );
    }
}

#[test]
fn diverging_rollout_reports_the_step() {
    let spec = scalar_system(0.0, 0.0, 40);
    let world = WorldModel::new(spec).unwrap();
    let draws = RolloutDraws::sample(1, 40, 1, 3);
    let law = feedback_law();
    // Gain -1 makes the loop x_{t+1} = 2 x_t.
    let err = world
        .rollout_sample(
            &law,
            &[-1.0],
            &regulation_cost(),
            draws.trajectory(0).unwrap(),
            &DVector::from_vec(vec![1.0]),
        )
        .unwrap_err();
    match err {
        antler_core::CoreError::Diverged { step, .. } => assert!(step > 0),
        other => panic!("unexpected error {other}"),
    }
}
