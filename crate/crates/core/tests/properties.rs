mod common;

use daenet::constraints::{
    penalty_term, project_latent, project_physical, ConstraintSpec, PenaltyConfig,
    ProjectionConfig, Solver,
};
use daenet::datagen::{
    generate_divergence_free_field, make_dataset, simulate_pendulum, PendulumConfig, Split,
};
use daenet::network::{forward, ConstraintMode};
use daenet::tensor::{Tape, Tensor};
use proptest::prelude::*;

fn chain(bodies: usize) -> ConstraintSpec {
    ConstraintSpec::chain_lengths(vec![1.0; bodies]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penalty_never_exceeds_cap(
        z in prop::collection::vec(-50.0f64..50.0, 8),
        k in prop::collection::vec(-2.0f64..2.0, 6 * 8),
        gamma in 0.0f64..1e4,
        cap in 0.01f64..0.5,
    ) {
        let tape = Tape::new();
        let zv = tape.constant(Tensor::vector(z));
        let kv = tape.constant(Tensor::matrix(6, 8, k).unwrap());
        let cfg = PenaltyConfig { gamma, relative_cap: cap };
        let term = penalty_term(&chain(3), &zv, &kv, &cfg).unwrap();
        prop_assert!(term.value().norm2() <= cap * zv.value().norm2() + 1e-12);
    }

    #[test]
    fn feasible_states_are_projection_fixed_points(seed in any::<u64>(), newton in any::<bool>()) {
        let mut rng = common::rng(seed);
        let y = common::feasible_chain(&mut rng, 4);
        let cfg = ProjectionConfig {
            solver: if newton { Solver::Newton } else { Solver::GradientDescent },
            ..ProjectionConfig::default()
        };
        let tape = Tape::new();
        let out = project_physical(&chain(4), &tape.constant(Tensor::vector(y.clone())), &cfg).unwrap();
        prop_assert_eq!(out.iters, 0);
        prop_assert_eq!(out.state.value().data(), &y[..]);
    }

    #[test]
    fn latent_projection_reaches_tolerance(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let clean = common::feasible_chain(&mut rng, 3);
        let y = common::perturb(&mut rng, &clean, 0.05);
        let tape = Tape::new();
        let z = tape.constant(Tensor::vector(y));
        let k = tape.constant(Tensor::identity(6));
        let cfg = ProjectionConfig { solver: Solver::Newton, tol: 1e-8, ..ProjectionConfig::default() };
        let out = project_latent(&chain(3), &z, &k, &cfg).unwrap();
        prop_assert!(out.converged);
        let (max, _) = chain(3).violation_metrics(out.state.value()).unwrap();
        prop_assert!(max < 1e-8);
    }

    #[test]
    fn zero_gamma_penalty_matches_no_constraint(seed in 0u64..1000) {
        let (spec, params) = common::chain_network(3, seed);
        let x = common::chain_input(seed + 1);
        let run = |mode: ConstraintMode| {
            let tape = Tape::new();
            let bound = common::bind_constant(&params, &tape);
            forward(&tape.constant(x.clone()), &bound, &mode, &spec).unwrap().y_pred.value().clone()
        };
        prop_assert_eq!(run(ConstraintMode::None), run(ConstraintMode::Penalty(PenaltyConfig::new(0.0))));
    }

    #[test]
    fn smooth_projection_output_is_feasible(seed in 0u64..1000) {
        let (spec, params) = common::chain_network(3, seed);
        let x = common::chain_input(seed + 7);
        let tape = Tape::new();
        let bound = common::bind_constant(&params, &tape);
        let mode = ConstraintMode::SmoothProjection {
            penalty: PenaltyConfig::new(1.0),
            eta: 0.0,
            projection: ProjectionConfig { solver: Solver::Newton, tol: 1e-9, ..ProjectionConfig::default() },
        };
        let report = forward(&tape.constant(x), &bound, &mode, &spec).unwrap();
        prop_assert!(report.converged);
        prop_assert_eq!(report.per_layer_violation.len(), 3);
        prop_assert!(report.per_layer_violation.iter().all(|v| *v < 1e-9));
    }

    #[test]
    fn generated_fields_are_divergence_free(seed in any::<u64>(), n in 8usize..24) {
        let field = generate_divergence_free_field(seed, n).unwrap();
        let (max, _) = field.constraint().unwrap().violation_metrics(&Tensor::vector(field.data.clone())).unwrap();
        prop_assert!(max <= 1e-12);
        prop_assert!((field.rms() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chain_jacobian_matches_autodiff(y in prop::collection::vec(-3.0f64..3.0, 8)) {
        let spec = ConstraintSpec::chain_lengths(vec![1.0, 0.5, 2.0, 1.5]).unwrap();
        // keep consecutive joints apart so the distance map is smooth
        prop_assume!(y.chunks(2).scan((0.0, 0.0), |prev, p| {
            let d = (p[0] - prev.0).hypot(p[1] - prev.1);
            *prev = (p[0], p[1]);
            Some(d)
        }).all(|d| d > 1e-3));
        let tape = Tape::new();
        let leaf = tape.leaf(Tensor::vector(y));
        let jac = spec.jacobian(&leaf).unwrap().value().clone();
        let c = spec.eval(&leaf).unwrap();
        for i in 0..4 {
            tape.zero_grad();
            tape.backward(&c.slice(i, 1).unwrap().sum()).unwrap();
            let row = tape.grad(&leaf).unwrap();
            for j in 0..8 {
                prop_assert!((row.data()[j] - jac.data()[i * 8 + j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn divergence_jacobian_matches_autodiff(seed in any::<u64>()) {
        let n = 4;
        let spec = ConstraintSpec::discrete_divergence(n, 1.0).unwrap();
        let mut rng = common::rng(seed);
        let tape = Tape::new();
        let leaf = tape.leaf(Tensor::vector(common::random_vector(&mut rng, 2 * n * n, 1.0)));
        let jac = spec.jacobian(&leaf).unwrap().value().clone();
        let c = spec.eval(&leaf).unwrap();
        let m = spec.num_constraints();
        for i in 0..m {
            tape.zero_grad();
            tape.backward(&c.slice(i, 1).unwrap().sum()).unwrap();
            let row = tape.grad(&leaf).unwrap();
            for j in 0..2 * n * n {
                prop_assert!((row.data()[j] - jac.data()[i * 2 * n * n + j]).abs() <= 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dataset_splits_are_deterministic_and_disjoint(seed in any::<u64>()) {
        let traj = simulate_pendulum(&PendulumConfig::uniform(2, 400, 1e-2), 3).unwrap();
        let a = make_dataset(&traj, 10, 50, 20, 30, seed).unwrap();
        let b = make_dataset(&traj, 10, 50, 20, 30, seed).unwrap();
        prop_assert_eq!(&a.x, &b.x);
        prop_assert_eq!(&a.y, &b.y);
        prop_assert_eq!(&a.splits, &b.splits);
        prop_assert_eq!((a.count(Split::Train), a.count(Split::Val), a.count(Split::Test)), (50, 20, 30));
        // each sample starts from a distinct frame
        let mut starts: Vec<Vec<u64>> = (0..a.len())
            .map(|i| a.x(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        starts.sort();
        starts.dedup();
        prop_assert_eq!(starts.len(), a.len());
    }
}
