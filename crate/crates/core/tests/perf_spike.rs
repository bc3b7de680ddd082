//! Ignored-by-default timing probe for the benchmark-scale workload.
//! Run with: cargo test -p antler-core --test perf_spike -- --ignored --nocapture

use std::sync::Arc;
use std::time::Instant;

use antler_core::eval::{collect_prior_measurements, TrueSystemSpec, UnknownDynamics};
use antler_core::gp::{InputProjection, KernelSpec};
use antler_core::laws::{ControlLawDef, GpMeanTrackingLaw, ParamBox, ReferenceProfile};
use antler_core::saa::{SaaProblem, StageCost};
use antler_core::world::{PriorModel, RolloutDraws, SystemSpec, WorldModel};
use nalgebra::DVector;

#[test]
#[ignore]
fn time_benchmark_scale_cost_evaluation() {
    let reference = ReferenceProfile::Sinusoid {
        dim: 1,
        amplitude: 2.0,
        period: 75.0,
        phase: 0.0,
    };
    let kernel = KernelSpec::new(1.0, 0.5, InputProjection::StateOnly { state_dim: 1 }).unwrap();
    let true_spec = TrueSystemSpec {
        state_dim: 1,
        input_dim: 1,
        prior_model: PriorModel::SingleIntegrator,
        true_dynamics: UnknownDynamics::Sine {
            amplitude: 2.0,
            frequency: 1.5,
        },
        process_noise_std: vec![0.1],
        horizon: 150,
        x0: vec![0.0],
        stage_cost: StageCost::QuadraticTracking {
            reference: reference.clone(),
            input_weight: 0.0,
        },
    };
    let prior = collect_prior_measurements(&true_spec, 1.0, 100, 7).unwrap();

    let system = SystemSpec {
        state_dim: 1,
        input_dim: 1,
        prior_model: PriorModel::SingleIntegrator,
        process_noise_std: vec![0.1],
        kernel,
        horizon: 150,
    };
    let world = WorldModel::with_prior_measurements(system, &prior, true).unwrap();
    let law = ControlLawDef::new(
        Arc::new(GpMeanTrackingLaw { reference: reference.clone() }),
        ParamBox::new(vec![(-1.0, 2.0), (-1.0, 2.0)]).unwrap(),
        "tracking",
    )
    .unwrap();
    let m = 200;
    let draws = Arc::new(RolloutDraws::sample(m, 150, 1, 11));
    let problem = SaaProblem::new(
        world,
        law,
        StageCost::QuadraticTracking {
            reference,
            input_weight: 0.0,
        },
        DVector::from_vec(vec![0.0]),
        draws,
        m,
    )
    .unwrap();

    let t0 = Instant::now();
    let c = problem.saa_cost(&[1.0, 0.9]).unwrap();
    let dt = t0.elapsed();
    println!("saa_cost(M=200, N=150, 100 prior pts) = {c:.3} in {dt:?}");

    let t0 = Instant::now();
    let g = problem.saa_cost_gradient(&[1.0, 0.9]).unwrap();
    let dt = t0.elapsed();
    println!("gradient = {g:?} in {dt:?}");
}
