#![allow(dead_code)]

use daenet::constraints::ConstraintSpec;
use daenet::network::{init_params, BoundParams, NetworkDims, NetworkParams};
use daenet::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Joint positions of a unit-length chain with random angles.
pub fn feasible_chain(rng: &mut impl Rng, bodies: usize) -> Vec<f64> {
    let (mut x, mut y) = (0.0, 0.0);
    let mut out = Vec::with_capacity(2 * bodies);
    for _ in 0..bodies {
        let a: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        x += a.sin();
        y -= a.cos();
        out.extend([x, y]);
    }
    out
}

/// Move every joint by a random offset of length at most `radius`.
pub fn perturb(rng: &mut impl Rng, state: &[f64], radius: f64) -> Vec<f64> {
    state
        .chunks(2)
        .flat_map(|p| {
            let r: f64 = rng.random_range(0.0..radius);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [p[0] + r * phi.cos(), p[1] + r * phi.sin()]
        })
        .collect()
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Two-body chain network: input is positions and velocities.
pub fn chain_network(layers: usize, seed: u64) -> (ConstraintSpec, NetworkParams) {
    let dims = NetworkDims {
        input: 8,
        latent: 12,
        hidden: 10,
        output: 4,
        layers,
    };
    let mut params = init_params(seed, dims, 0.1).unwrap();
    let mut r = rng(seed ^ 0xabc);
    for l in &mut params.layers {
        for v in l.b1.data_mut().iter_mut().chain(l.b2.data_mut()) {
            *v = r.random_range(-0.3..0.3);
        }
    }
    (
        ConstraintSpec::chain_lengths(vec![1.0, 1.0]).unwrap(),
        params,
    )
}

pub fn chain_input(seed: u64) -> Tensor {
    let mut r = rng(seed);
    let clean = feasible_chain(&mut r, 2);
    let pos = perturb(&mut r, &clean, 0.1);
    let mut x = pos;
    x.extend(random_vector(&mut r, 4, 0.2));
    Tensor::vector(x)
}

pub fn bind_constant(params: &NetworkParams, tape: &Tape) -> BoundParams {
    BoundParams::bind(params, tape, false).unwrap()
}
