use super::ConstraintSpec;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Update rule for the projection iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// `z ← z − Kᵀ Jᵀ c`
    GradientDescent,
    /// `z ← z − Kᵀ Jᵀ (J K Kᵀ Jᵀ)⁻¹ c`
    Newton,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" | "gradient_descent" => Ok(Self::GradientDescent),
            "newton" => Ok(Self::Newton),
            other => Err(Error::Config(format!(
                "unknown projection solver {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GradientDescent => "gradient_descent",
            Self::Newton => "newton",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub max_iters: usize,
    /// Stop once `max |c| < tol`.
    pub tol: f64,
    pub solver: Solver,
    /// Number of step halvings allowed when a step increases `‖c‖²`;
    /// zero disables the safeguard.
    pub step_safeguard: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-4,
            solver: Solver::GradientDescent,
            step_safeguard: 4,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("projection", "max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(
                "projection",
                format!("tol {} must be > 0", self.tol),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub state: Var,
    /// Number of updates applied.
    pub iters: usize,
    pub max_violation: f64,
    pub converged: bool,
}

/// Project a physical state onto `c(y) = 0` (the readout is the identity).
pub fn project_physical(
    spec: &ConstraintSpec,
    y0: &Var,
    cfg: &ProjectionConfig,
) -> Result<ProjectionOutcome> {
    project(spec, y0, None, cfg)
}

/// Project a latent state so that `c(K z) = 0`.
pub fn project_latent(
    spec: &ConstraintSpec,
    z0: &Var,
    readout: &Var,
    cfg: &ProjectionConfig,
) -> Result<ProjectionOutcome> {
    project(spec, z0, Some(readout), cfg)
}

impl ProjectionOutcome {
    /// Plain-value convenience for callers that do not differentiate.
    pub fn into_tensor(self) -> Tensor {
        self.state.value().clone()
    }
}

fn read(readout: Option<&Var>, z: &Var) -> Result<Var> {
    match readout {
        Some(k) => k.matmul(z),
        None => Ok(z.clone()),
    }
}

/// `Kᵀ w` without materializing the transpose.
fn read_adjoint(readout: Option<&Var>, w: &Var) -> Result<Var> {
    match readout {
        Some(k) => w
            .reshape(&[1, w.numel()])?
            .matmul(k)?
            .reshape(&[k.shape()[1]]),
        None => Ok(w.clone()),
    }
}

fn sq_norm(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum()
}

fn project(
    spec: &ConstraintSpec,
    z0: &Var,
    readout: Option<&Var>,
    cfg: &ProjectionConfig,
) -> Result<ProjectionOutcome> {
    cfg.validate()?;
    if !z0.value().is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let probe = Tape::new();
    let k_value = readout.map(|k| probe.constant(k.value().clone()));

    let mut z = z0.clone();
    let mut iters = 0;
    loop {
        let y = read(readout, &z)?;
        let c = spec.eval(&y)?;
        if !c.value().is_finite() {
            return Err(Error::NonFinite { iteration: iters });
        }
        let violation = c.value().max_abs();
        if violation < cfg.tol || iters == cfg.max_iters {
            return Ok(ProjectionOutcome {
                state: z,
                iters,
                max_violation: violation,
                converged: violation < cfg.tol,
            });
        }

        let direction = match cfg.solver {
            Solver::GradientDescent => {
                read_adjoint(readout, &spec.jacobian_transpose_apply(&y, &c)?)?
            }
            Solver::Newton => {
                // rows of JK span the correction; λ solves (JK)(JK)ᵀ λ = c
                let jk = match readout {
                    Some(k) => spec.jacobian_times(&y, k)?,
                    None => spec.jacobian(&y)?,
                };
                let jk_t = jk.transpose()?;
                let gram = jk.matmul(&jk_t)?;
                let lambda = gram.solve_spd(&c)?;
                jk_t.matmul(&lambda)?
            }
        };
        if !direction.value().is_finite() {
            return Err(Error::NonFinite { iteration: iters });
        }

        let mut step = 1.0;
        if cfg.step_safeguard > 0 {
            let current = sq_norm(c.value());
            let trial = |alpha: f64| -> Result<f64> {
                let zt = probe
                    .constant(z.value().clone())
                    .sub(&probe.constant(direction.value().clone()).scale(alpha))?;
                let yt = read(k_value.as_ref(), &zt)?;
                Ok(sq_norm(spec.eval(&yt)?.value()))
            };
            let mut halvings = 0;
            loop {
                let next = trial(step)?;
                if next.is_finite() && next <= current {
                    break;
                }
                if halvings == cfg.step_safeguard {
                    // no admissible step; keep the current iterate
                    return Ok(ProjectionOutcome {
                        state: z,
                        iters,
                        max_violation: violation,
                        converged: false,
                    });
                }
                step *= 0.5;
                halvings += 1;
            }
        }
        z = if step == 1.0 {
            z.sub(&direction)?
        } else {
            z.sub(&direction.scale(step))?
        };
        iters += 1;
        if !z.value().is_finite() {
            return Err(Error::NonFinite { iteration: iters });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn circle() -> ConstraintSpec {
        ConstraintSpec::chain_lengths(vec![1.0]).unwrap()
    }

    fn gd(max_iters: usize, tol: f64) -> ProjectionConfig {
        ProjectionConfig {
            max_iters,
            tol,
            solver: Solver::GradientDescent,
            step_safeguard: 4,
        }
    }

    #[test]
    fn radial_projection_lands_on_circle_in_one_step() {
        let tape = Tape::new();
        let y0 = tape.constant(Tensor::vector(vec![0.0, -2.0]));
        let out = project_physical(&circle(), &y0, &gd(10, 1e-12)).unwrap();
        assert_eq!(out.iters, 1);
        assert_eq!(out.max_violation, 0.0);
        assert_eq!(out.state.value().data(), &[0.0, -1.0]);
    }

    #[test]
    fn feasible_input_is_a_fixed_point() {
        let tape = Tape::new();
        let y0 = tape.constant(Tensor::vector(vec![0.6, -0.8]));
        for solver in [Solver::GradientDescent, Solver::Newton] {
            let cfg = ProjectionConfig {
                solver,
                ..gd(10, 1e-6)
            };
            let out = project_physical(&circle(), &y0, &cfg).unwrap();
            assert_eq!(out.iters, 0);
            assert_eq!(out.state.value(), y0.value());
            let k = tape.constant(Tensor::identity(2));
            let out = project_latent(&circle(), &y0, &k, &cfg).unwrap();
            assert_eq!(out.iters, 0);
            assert_eq!(out.state.value(), y0.value());
        }
    }

    #[test]
    fn latent_newton_with_identity_readout() {
        let tape = Tape::new();
        let z0 = tape.constant(Tensor::vector(vec![0.0, -2.0]));
        let k = tape.constant(Tensor::identity(2));
        let cfg = ProjectionConfig {
            solver: Solver::Newton,
            ..gd(10, 1e-12)
        };
        let out = project_latent(&circle(), &z0, &k, &cfg).unwrap();
        assert!(out.converged && out.iters <= 2);
        assert!((out.state.value().data()[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_reported() {
        let tape = Tape::new();
        let y0 = tape.constant(Tensor::vector(vec![f64::NAN, -2.0]));
        assert!(matches!(
            project_physical(&circle(), &y0, &gd(10, 1e-6)),
            Err(Error::NonFinite { iteration: 0 })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let tape = Tape::new();
        let y0 = tape.constant(Tensor::vector(vec![0.0, -2.0]));
        assert!(project_physical(&circle(), &y0, &gd(0, 1e-6)).is_err());
        assert!(project_physical(&circle(), &y0, &gd(5, 0.0)).is_err());
    }
}
