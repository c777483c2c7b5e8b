use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::tensor::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaseLoss {
    #[default]
    Mse,
    Mae,
}

impl std::str::FromStr for BaseLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Self::Mse),
            "mae" => Ok(Self::Mae),
            other => Err(Error::Config(format!("unknown base loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossConfig {
    pub base: BaseLoss,
    /// Auxiliary constraint weight η.
    pub eta: f64,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(
                "loss",
                format!("eta {} must be >= 0", self.eta),
            ));
        }
        Ok(())
    }
}

/// Base loss on `(y_pred, target)` plus `(η/2)·c(y_raw)ᵀ c(y_raw)`.
pub fn loss_with_aux(
    y_pred: &Var,
    y_raw: &Var,
    target: &Var,
    spec: &ConstraintSpec,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let diff = y_pred.sub(target)?;
    if diff.shape() != y_pred.shape() {
        return Err(Error::Shape {
            op: "loss",
            left: y_pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let base = match cfg.base {
        BaseLoss::Mse => diff.mul(&diff)?.mean(),
        BaseLoss::Mae => diff.abs().mean(),
    };
    if cfg.eta == 0.0 {
        return Ok(base);
    }
    let c = spec.eval(y_raw)?;
    base.add(&c.mul(&c)?.sum().scale(cfg.eta / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    fn spec() -> ConstraintSpec {
        ConstraintSpec::chain_lengths(vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn aux_term_value() {
        // c = [0.1, −0.2]: first link 1.1 long, second link 0.8 long
        let tape = Tape::new();
        let y_raw = tape.constant(Tensor::vector(vec![0.0, -1.1, 0.0, -1.9]));
        let y = tape.constant(Tensor::vector(vec![0.0, -1.0, 0.0, -2.0]));
        let cfg = LossConfig {
            base: BaseLoss::Mse,
            eta: 3.0,
        };
        let l = loss_with_aux(&y, &y_raw, &y, &spec(), &cfg).unwrap();
        assert!((l.item() - 0.075).abs() < 1e-15, "{}", l.item());
    }

    #[test]
    fn zero_eta_is_base_loss() {
        let tape = Tape::new();
        let y = tape.constant(Tensor::vector(vec![0.0, -1.2, 0.0, -2.0]));
        let t = tape.constant(Tensor::vector(vec![0.0, -1.0, 0.0, -2.0]));
        let l = loss_with_aux(&y, &y, &t, &spec(), &LossConfig::default()).unwrap();
        assert!((l.item() - 0.04 / 4.0).abs() < 1e-15);
        let mae = LossConfig {
            base: BaseLoss::Mae,
            eta: 0.0,
        };
        let l = loss_with_aux(&y, &y, &t, &spec(), &mae).unwrap();
        assert!((l.item() - 0.2 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_feasible_prediction_has_zero_loss() {
        let tape = Tape::new();
        let y = tape.constant(Tensor::vector(vec![0.0, -1.0, 0.0, -2.0]));
        let cfg = LossConfig {
            base: BaseLoss::Mse,
            eta: 3.0,
        };
        assert_eq!(
            loss_with_aux(&y, &y, &y, &spec(), &cfg).unwrap().item(),
            0.0
        );
    }

    #[test]
    fn shape_mismatch() {
        let tape = Tape::new();
        let y = tape.constant(Tensor::vector(vec![0.0, -1.0, 0.0, -2.0]));
        let t = tape.constant(Tensor::vector(vec![0.0, -1.0]));
        assert!(loss_with_aux(&y, &y, &t, &spec(), &LossConfig::default()).is_err());
    }
}
