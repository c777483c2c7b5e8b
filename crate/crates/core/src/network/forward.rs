use super::NetworkParams;
use crate::constraints::{
    penalty_term, project_latent, project_physical, ConstraintSpec, PenaltyConfig, ProjectionConfig,
};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// How the constraint enters a forward pass and its loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintMode {
    None,
    AuxLoss {
        eta: f64,
    },
    Penalty(PenaltyConfig),
    EndProjection {
        penalty: PenaltyConfig,
        eta: f64,
        projection: ProjectionConfig,
    },
    SmoothProjection {
        penalty: PenaltyConfig,
        eta: f64,
        projection: ProjectionConfig,
    },
}

impl ConstraintMode {
    /// Weight of the auxiliary loss term (zero when the mode has none).
    pub fn eta(&self) -> f64 {
        match *self {
            Self::AuxLoss { eta }
            | Self::EndProjection { eta, .. }
            | Self::SmoothProjection { eta, .. } => eta,
            Self::None | Self::Penalty(_) => 0.0,
        }
    }

    /// Penalty configuration, if the mode augments the residual blocks.
    pub fn penalty(&self) -> Option<&PenaltyConfig> {
        match self {
            Self::Penalty(p)
            | Self::EndProjection { penalty: p, .. }
            | Self::SmoothProjection { penalty: p, .. } => Some(p),
            Self::None | Self::AuxLoss { .. } => None,
        }
    }

    pub fn projection(&self) -> Option<&ProjectionConfig> {
        match self {
            Self::EndProjection { projection, .. } | Self::SmoothProjection { projection, .. } => {
                Some(projection)
            }
            _ => None,
        }
    }

    /// Short label used in file names and tables.
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::AuxLoss { .. } => "aux",
            Self::Penalty(_) => "penalty",
            Self::EndProjection { .. } => "end",
            Self::SmoothProjection { .. } => "smooth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(
                "constraint mode",
                format!("eta {eta} must be >= 0"),
            ));
        }
        if let Some(p) = self.penalty() {
            p.validate()?;
        }
        if let Some(p) = self.projection() {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardReport {
    pub y_pred: Var,
    /// Readout before any physical-space projection.
    pub y_raw: Var,
    /// `max |c(K z_k)|` after each layer; filled only in smooth-projection mode.
    pub per_layer_violation: Vec<f64>,
    pub projection_iters: usize,
    /// False if any projection stopped before reaching its tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct BoundLayer {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Network parameters placed on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub embed: Var,
    pub readout: Var,
    pub layers: Vec<BoundLayer>,
    pub step_sizes: Var,
    steps: Vec<Var>,
}

impl BoundParams {
    /// Bind as gradient-tracked leaves (`trainable`) or as constants.
    pub fn bind(params: &NetworkParams, tape: &Tape, trainable: bool) -> Result<Self> {
        let put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let step_sizes = put(&params.step_sizes);
        let steps = (0..params.layers.len())
            .map(|k| step_sizes.slice(k, 1))
            .collect::<Result<_>>()?;
        Ok(Self {
            embed: put(&params.embed),
            readout: put(&params.readout),
            layers: params
                .layers
                .iter()
                .map(|l| BoundLayer {
                    w1: put(&l.w1),
                    b1: put(&l.b1),
                    w2: put(&l.w2),
                    b2: put(&l.b2),
                })
                .collect(),
            step_sizes,
            steps,
        })
    }

    /// Leaves in the same order as [`NetworkParams::tensors`].
    pub fn vars(&self) -> Vec<&Var> {
        let mut out = vec![&self.embed, &self.readout];
        for l in &self.layers {
            out.extend([&l.w1, &l.b1, &l.w2, &l.b2]);
        }
        out.push(&self.step_sizes);
        out
    }

    /// Accumulated gradients in declaration order; zeros where none flowed.
    pub fn grads(&self) -> Vec<Tensor> {
        self.vars()
            .into_iter()
            .map(|v| v.tape().grad(v).unwrap_or_else(|| Tensor::zeros(v.shape())))
            .collect()
    }
}

pub fn embed(x: &Var, params: &BoundParams) -> Result<Var> {
    params.embed.matmul(x)
}

/// `W2 · tanh(W1 z + b1) + b2`.
pub fn residual_block(z: &Var, theta: &BoundLayer) -> Result<Var> {
    let hidden = theta.w1.matmul(z)?.add(&theta.b1)?.tanh();
    theta.w2.matmul(&hidden)?.add(&theta.b2)
}

/// One classical RK4 step of `ż = f(z)` with step `h` (a one-element var).
pub fn rk4_step_with<F>(z: &Var, h: &Var, f: F) -> Result<Var>
where
    F: Fn(&Var) -> Result<Var>,
{
    let half = h.scale(0.5);
    let k1 = f(z)?;
    let k2 = f(&z.add(&k1.mul(&half)?)?)?;
    let k3 = f(&z.add(&k2.mul(&half)?)?)?;
    let k4 = f(&z.add(&k3.mul(h)?)?)?;
    let sum = k1.add(&k2.scale(2.0))?.add(&k3.scale(2.0))?.add(&k4)?;
    z.add(&sum.mul(h)?.scale(1.0 / 6.0))
}

pub fn rk4_step(z: &Var, theta: &BoundLayer, h: &Var) -> Result<Var> {
    rk4_step_with(z, h, |z| residual_block(z, theta))
}

fn wrap_layer(layer: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Layer {
        layer,
        source: Box::new(e),
    }
}

pub fn forward(
    x: &Var,
    params: &BoundParams,
    mode: &ConstraintMode,
    spec: &ConstraintSpec,
) -> Result<ForwardReport> {
    let output_len = params.readout.shape()[0];
    if spec.state_len() != output_len {
        return Err(Error::Shape {
            op: "forward",
            left: vec![output_len],
            right: vec![spec.state_len()],
        });
    }
    let penalty = mode.penalty().filter(|p| p.gamma != 0.0);
    let smooth = match mode {
        ConstraintMode::SmoothProjection { projection, .. } => Some(projection),
        _ => None,
    };

    let mut z = embed(x, params)?;
    let mut per_layer_violation = Vec::new();
    let mut projection_iters = 0;
    let mut converged = true;
    for (k, (theta, h)) in params.layers.iter().zip(&params.steps).enumerate() {
        z = match penalty {
            None => rk4_step(&z, theta, h),
            Some(p) => rk4_step_with(&z, h, |z| {
                residual_block(z, theta)?.add(&penalty_term(spec, z, &params.readout, p)?)
            }),
        }
        .map_err(wrap_layer(k))?;
        if let Some(cfg) = smooth {
            let out = project_latent(spec, &z, &params.readout, cfg).map_err(wrap_layer(k))?;
            projection_iters += out.iters;
            converged &= out.converged;
            per_layer_violation.push(out.max_violation);
            z = out.state;
        }
    }

    let y_raw = params.readout.matmul(&z)?;
    let y_pred = match mode {
        ConstraintMode::EndProjection { projection, .. } => {
            let out = project_physical(spec, &y_raw, projection)
                .map_err(wrap_layer(params.layers.len()))?;
            projection_iters += out.iters;
            converged &= out.converged;
            out.state
        }
        _ => y_raw.clone(),
    };
    Ok(ForwardReport {
        y_pred,
        y_raw,
        per_layer_violation,
        projection_iters,
        converged,
    })
}
