//! RK4-stepped residual network: embedding `z₀ = K_o x`, `n` residual
//! layers each advanced by one classical Runge–Kutta step, and a linear
//! readout `y = K z_n`.

mod checkpoint;
mod forward;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    embed, forward, residual_block, rk4_step, rk4_step_with, BoundLayer, BoundParams,
    ConstraintMode, ForwardReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default number of residual layers.
pub const DEFAULT_LAYERS: usize = 8;
/// Default latent width.
pub const DEFAULT_LATENT: usize = 256;
/// Initial value of every learnable step size.
pub const DEFAULT_INITIAL_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkDims {
    pub input: usize,
    pub latent: usize,
    pub hidden: usize,
    pub output: usize,
    pub layers: usize,
}

impl NetworkDims {
    pub fn validate(&self) -> Result<()> {
        let NetworkDims {
            input,
            latent,
            hidden,
            output,
            layers,
        } = *self;
        if input == 0 || hidden == 0 || output == 0 || layers == 0 {
            return Err(Error::invalid(
                "network dims",
                format!("{self:?} has a zero extent"),
            ));
        }
        if latent < input || latent < output {
            return Err(Error::invalid(
                "network dims",
                format!("latent width {latent} must cover input {input} and output {output}"),
            ));
        }
        Ok(())
    }
}

/// Weights of one residual block `W2 · tanh(W1 z + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub dims: NetworkDims,
    /// `K_o`, `[latent, input]`.
    pub embed: Tensor,
    /// `K`, `[output, latent]`.
    pub readout: Tensor,
    pub layers: Vec<LayerParams>,
    /// One learnable step size per layer, `[layers]`.
    pub step_sizes: Tensor,
}

impl NetworkParams {
    /// All parameter tensors in declaration order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed, &self.readout];
        for l in &self.layers {
            out.extend([&l.w1, &l.b1, &l.w2, &l.b2]);
        }
        out.push(&self.step_sizes);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed, &mut self.readout];
        for l in &mut self.layers {
            out.extend([&mut l.w1, &mut l.b1, &mut l.w2, &mut l.b2]);
        }
        out.push(&mut self.step_sizes);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// A network with all weights zero, identity-block embedding and
    /// readout, and the given step size.
    pub fn zeros(dims: NetworkDims, initial_step: f64) -> Result<Self> {
        dims.validate()?;
        let layers = (0..dims.layers)
            .map(|_| LayerParams::zeros(dims.latent, dims.hidden))
            .collect();
        Ok(Self {
            dims,
            embed: identity_block(dims.latent, dims.input),
            readout: identity_block(dims.output, dims.latent),
            layers,
            step_sizes: Tensor::vector(vec![initial_step; dims.layers]),
        })
    }
}

/// `rows × cols` matrix with ones on the leading diagonal.
fn identity_block(rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(
        &[rows, cols],
        |i| if i / cols == i % cols { 1.0 } else { 0.0 },
    )
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Random residual-block weights (uniform, scale `1/√fan_in`), identity
/// block embedding and readout, and every step size set to `initial_step`.
///
/// With a small `initial_step` the untrained network returns (nearly) the
/// position block of its input.
pub fn init_params(seed: u64, dims: NetworkDims, initial_step: f64) -> Result<NetworkParams> {
    if !(initial_step > 0.0) {
        return Err(Error::invalid(
            "initial step",
            format!("{initial_step} must be > 0"),
        ));
    }
    let mut params = NetworkParams::zeros(dims, initial_step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        layer.w1 = uniform(&mut rng, &[dims.hidden, dims.latent], dims.latent);
        layer.b1 = uniform(&mut rng, &[dims.hidden], dims.latent);
        layer.w2 = uniform(&mut rng, &[dims.latent, dims.hidden], dims.hidden);
        layer.b2 = uniform(&mut rng, &[dims.latent], dims.hidden);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> NetworkDims {
        NetworkDims {
            input: 4,
            latent: 6,
            hidden: 5,
            output: 2,
            layers: 3,
        }
    }

    #[test]
    fn same_seed_same_params() {
        let a = init_params(7, dims(), 1e-2).unwrap();
        let b = init_params(7, dims(), 1e-2).unwrap();
        assert_eq!(a, b);
        let c = init_params(8, dims(), 1e-2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn embedding_and_readout_are_identity_blocks() {
        let p = init_params(1, dims(), 1e-2).unwrap();
        assert_eq!(p.embed.shape(), &[6, 4]);
        for i in 0..6 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(p.embed.data()[i * 4 + j], want);
            }
        }
        assert_eq!(p.readout.data()[0], 1.0);
        assert_eq!(p.readout.data()[6 + 1], 1.0);
        assert_eq!(p.step_sizes.data(), &[1e-2; 3]);
    }

    #[test]
    fn rejects_bad_dims_and_step() {
        let mut d = dims();
        d.latent = 3;
        assert!(init_params(1, d, 1e-2).is_err());
        assert!(init_params(1, dims(), 0.0).is_err());
    }

    #[test]
    fn weights_respect_fan_in_bound() {
        let p = init_params(3, dims(), 1e-2).unwrap();
        let bound = 1.0 / (6f64).sqrt();
        assert!(p.layers.iter().all(|l| l.w1.max_abs() <= bound));
    }
}
