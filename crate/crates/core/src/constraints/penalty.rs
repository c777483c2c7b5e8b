use super::ConstraintSpec;
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// Strength and cap of the stabilizing penalty `−γ Kᵀ Jᵀ c(K z)` (`H = I`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub gamma: f64,
    /// Largest allowed `‖term‖ / ‖z‖`.
    pub relative_cap: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            relative_cap: 0.10,
        }
    }
}

impl PenaltyConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(
                "penalty",
                format!("gamma {} must be >= 0", self.gamma),
            ));
        }
        if !(self.relative_cap > 0.0) {
            return Err(Error::invalid(
                "penalty",
                format!("relative cap {} must be > 0", self.relative_cap),
            ));
        }
        Ok(())
    }
}

/// Penalty flow term for latent state `z` and readout `K`, rescaled so its
/// norm never exceeds `relative_cap · ‖z‖`.
pub fn penalty_term(
    spec: &ConstraintSpec,
    z: &Var,
    readout: &Var,
    cfg: &PenaltyConfig,
) -> Result<Var> {
    cfg.validate()?;
    let tape = z.tape();
    if cfg.gamma == 0.0 {
        return Ok(tape.constant(Tensor::zeros(z.shape())));
    }
    let y = readout.matmul(z)?;
    let c = spec.eval(&y)?;
    let jt_c = spec.jacobian_transpose_apply(&y, &c)?;
    let kt_jt_c = jt_c
        .reshape(&[1, jt_c.numel()])?
        .matmul(readout)?
        .reshape(z.shape())?;
    let raw = kt_jt_c.scale(-cfg.gamma);

    let raw_norm = raw.value().norm2();
    let limit = cfg.relative_cap * z.value().norm2();
    if raw_norm > limit {
        let ratio = z.norm2().scale(cfg.relative_cap).div(&raw.norm2())?;
        raw.mul(&ratio)
    } else {
        Ok(raw)
    }
}
