//! Algebraic constraints `c(y) = 0`, their Jacobian actions, projections
//! onto the constraint manifold and the stabilizing penalty term.
//!
//! All Jacobian products are expressed with tape operations so that
//! projections and penalties can be differentiated by unrolling.

mod maps;
mod penalty;
mod projection;

pub use penalty::{penalty_term, PenaltyConfig};
pub use projection::{
    project_latent, project_physical, ProjectionConfig, ProjectionOutcome, Solver,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use maps::{DivergenceStencil, GroupRepeat, GroupSum, Incidence, JacobianScatter};

/// Which constraint family a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `‖r_i − r_{i−1}‖ − l_i` in 2-D, with `r_0` at the origin.
    ChainLengths,
    /// `‖r_i − r_j‖ − l_ij` in 3-D for listed pairs.
    PairDistances,
    /// Forward-difference divergence of a 2-D vector field on an `n × n` grid.
    DiscreteDivergence,
}

/// Declarative description of a constraint function.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Distances(Arc<Distances>),
    Divergence(Arc<Divergence>),
}

#[derive(Debug)]
struct Distances {
    kind: ConstraintKind,
    dim: usize,
    particles: usize,
    /// Second index `None` means the fixed anchor at the origin.
    pairs: Vec<(usize, Option<usize>)>,
    lengths: Vec<f64>,
    incidence: Arc<dyn crate::tensor::LinearMap>,
    group_sum: Arc<dyn crate::tensor::LinearMap>,
    group_repeat: Arc<dyn crate::tensor::LinearMap>,
    scatter: Arc<dyn crate::tensor::LinearMap>,
}

#[derive(Debug)]
struct Divergence {
    n: usize,
    spacing: f64,
    stencil: Arc<dyn crate::tensor::LinearMap>,
}

impl ConstraintSpec {
    /// A planar chain of `lengths.len()` links hanging from the origin.
    pub fn chain_lengths(lengths: Vec<f64>) -> Result<Self> {
        check_lengths(&lengths)?;
        let pairs = (0..lengths.len())
            .map(|i| (i, i.checked_sub(1)))
            .collect::<Vec<_>>();
        let particles = lengths.len();
        Ok(Self::distances(
            ConstraintKind::ChainLengths,
            2,
            particles,
            pairs,
            lengths,
        ))
    }

    /// Distances between listed pairs of 3-D particles.
    pub fn pair_distances(
        particles: usize,
        pairs: Vec<(usize, usize)>,
        lengths: Vec<f64>,
    ) -> Result<Self> {
        check_lengths(&lengths)?;
        if pairs.len() != lengths.len() {
            return Err(Error::invalid(
                "pair distances",
                format!("{} pairs but {} lengths", pairs.len(), lengths.len()),
            ));
        }
        for &(i, j) in &pairs {
            if i == j || i >= particles || j >= particles {
                return Err(Error::invalid(
                    "pair distances",
                    format!("pair ({i}, {j}) invalid for {particles} particles"),
                ));
            }
        }
        let pairs = pairs.into_iter().map(|(i, j)| (i, Some(j))).collect();
        Ok(Self::distances(
            ConstraintKind::PairDistances,
            3,
            particles,
            pairs,
            lengths,
        ))
    }

    /// Zero divergence of `(u, v)` on an `n × n` grid with the given spacing.
    pub fn discrete_divergence(n: usize, spacing: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("divergence grid", format!("n = {n} < 2")));
        }
        if !(spacing > 0.0) {
            return Err(Error::invalid(
                "divergence grid",
                format!("spacing {spacing}"),
            ));
        }
        Ok(Self {
            inner: Inner::Divergence(Arc::new(Divergence {
                n,
                spacing,
                stencil: Arc::new(DivergenceStencil::new(n, spacing)),
            })),
        })
    }

    fn distances(
        kind: ConstraintKind,
        dim: usize,
        particles: usize,
        pairs: Vec<(usize, Option<usize>)>,
        lengths: Vec<f64>,
    ) -> Self {
        let m = pairs.len();
        Self {
            inner: Inner::Distances(Arc::new(Distances {
                kind,
                dim,
                particles,
                incidence: Arc::new(Incidence::new(dim, particles, pairs.clone())),
                group_sum: Arc::new(GroupSum::new(m, dim)),
                group_repeat: Arc::new(GroupRepeat::new(m, dim)),
                scatter: Arc::new(JacobianScatter::new(dim, particles, pairs.clone())),
                pairs,
                lengths,
            })),
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        match &self.inner {
            Inner::Distances(d) => d.kind,
            Inner::Divergence(_) => ConstraintKind::DiscreteDivergence,
        }
    }

    /// Length of the flattened physical state `y`.
    pub fn state_len(&self) -> usize {
        match &self.inner {
            Inner::Distances(d) => d.dim * d.particles,
            Inner::Divergence(d) => 2 * d.n * d.n,
        }
    }

    pub fn num_constraints(&self) -> usize {
        match &self.inner {
            Inner::Distances(d) => d.pairs.len(),
            Inner::Divergence(d) => d.n * d.n,
        }
    }

    /// Grid size and spacing of a divergence constraint.
    pub fn grid(&self) -> Option<(usize, f64)> {
        match &self.inner {
            Inner::Divergence(d) => Some((d.n, d.spacing)),
            Inner::Distances(_) => None,
        }
    }

    /// Target lengths (empty for the divergence constraint).
    pub fn lengths(&self) -> &[f64] {
        match &self.inner {
            Inner::Distances(d) => &d.lengths,
            Inner::Divergence(_) => &[],
        }
    }

    /// The same constraint for a state expressed in units `factor` times
    /// smaller: `c_scaled(y / factor) = c(y) / factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        match &self.inner {
            Inner::Distances(d) => {
                let lengths: Vec<f64> = d.lengths.iter().map(|l| l / factor).collect();
                check_lengths(&lengths)?;
                Ok(Self::distances(
                    d.kind,
                    d.dim,
                    d.particles,
                    d.pairs.clone(),
                    lengths,
                ))
            }
            Inner::Divergence(_) => Ok(self.clone()),
        }
    }

    fn check_state(&self, y: &Var) -> Result<()> {
        if y.numel() != self.state_len() {
            return Err(Error::Shape {
                op: "constraint",
                left: y.shape().to_vec(),
                right: vec![self.state_len()],
            });
        }
        Ok(())
    }

    /// `c(y)`, one entry per constraint.
    pub fn eval(&self, y: &Var) -> Result<Var> {
        self.check_state(y)?;
        let y = flat(y)?;
        match &self.inner {
            Inner::Distances(d) => {
                let norms = d.norms(&y)?;
                norms.sub(&y.tape().constant(Tensor::vector(d.lengths.clone())))
            }
            Inner::Divergence(d) => y.linear(d.stencil.clone()),
        }
    }

    /// `J(y)ᵀ w` in state space.
    pub fn jacobian_transpose_apply(&self, y: &Var, w: &Var) -> Result<Var> {
        self.check_state(y)?;
        if w.numel() != self.num_constraints() {
            return Err(Error::Shape {
                op: "jacobian_transpose_apply",
                left: w.shape().to_vec(),
                right: vec![self.num_constraints()],
            });
        }
        let (y, w) = (flat(y)?, flat(w)?);
        match &self.inner {
            Inner::Distances(d) => {
                let units = d.unit_vectors(&y)?;
                let weights = w.linear(d.group_repeat.clone())?;
                let per_pair = units.mul(&weights)?;
                per_pair.linear(Arc::new(crate::tensor::Transposed(d.incidence.clone())))
            }
            Inner::Divergence(d) => {
                w.linear(Arc::new(crate::tensor::Transposed(d.stencil.clone())))
            }
        }
    }

    /// Dense Jacobian `J(y)`, `[m, state_len]`.
    pub fn jacobian(&self, y: &Var) -> Result<Var> {
        self.check_state(y)?;
        let y = flat(y)?;
        match &self.inner {
            Inner::Distances(d) => d
                .unit_vectors(&y)?
                .linear(d.scatter.clone())?
                .reshape(&[d.pairs.len(), self.state_len()]),
            Inner::Divergence(d) => {
                let eye = y.tape().constant(Tensor::identity(self.state_len()));
                eye.linear(d.stencil.clone())
            }
        }
    }

    /// `J(y) K` for a readout matrix `K` of shape `[state_len, latent]`.
    pub fn jacobian_times(&self, y: &Var, readout: &Var) -> Result<Var> {
        match &self.inner {
            Inner::Distances(_) => self.jacobian(y)?.matmul(readout),
            Inner::Divergence(d) => {
                self.check_state(y)?;
                readout.linear(d.stencil.clone())
            }
        }
    }

    /// `c(y)` on plain values.
    pub fn eval_tensor(&self, y: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        Ok(self.eval(&tape.constant(y.clone()))?.value().clone())
    }

    /// `J(y)ᵀ w` on plain values.
    pub fn jacobian_transpose_apply_tensor(&self, y: &Tensor, w: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let out =
            self.jacobian_transpose_apply(&tape.constant(y.clone()), &tape.constant(w.clone()))?;
        Ok(out.value().clone())
    }

    /// `(max |c_i|, mean |c_i|)` at `y`, in the units of the constraint.
    pub fn violation_metrics(&self, y: &Tensor) -> Result<(f64, f64)> {
        Ok(violation_of(&self.eval_tensor(y)?))
    }
}

/// `(max |c_i|, mean |c_i|)` of a constraint value vector.
pub fn violation_of(c: &Tensor) -> (f64, f64) {
    let n = c.numel();
    if n == 0 {
        return (0.0, 0.0);
    }
    let (max, sum) = c
        .data()
        .iter()
        .fold((0.0f64, 0.0), |(m, s), v| (m.max(v.abs()), s + v.abs()));
    (max, sum / n as f64)
}

impl Distances {
    fn differences(&self, y: &Var) -> Result<Var> {
        y.linear(self.incidence.clone())
    }

    fn norms(&self, y: &Var) -> Result<Var> {
        let diff = self.differences(y)?;
        Ok(diff.mul(&diff)?.linear(self.group_sum.clone())?.sqrt())
    }

    /// Unit vectors along each constrained pair, flattened `[m * dim]`.
    fn unit_vectors(&self, y: &Var) -> Result<Var> {
        let diff = self.differences(y)?;
        let norms = diff.mul(&diff)?.linear(self.group_sum.clone())?.sqrt();
        if let Some(k) = norms.value().data().iter().position(|n| *n == 0.0) {
            let (a, b) = self.pairs[k];
            // the anchor is reported as index `particles`
            return Err(Error::DegenerateGeometry {
                first: a,
                second: b.unwrap_or(self.particles),
            });
        }
        let inv = y.tape().scalar(1.0).div(&norms)?;
        diff.mul(&inv.linear(self.group_repeat.clone())?)
    }
}

fn flat(v: &Var) -> Result<Var> {
    if v.shape().len() == 1 {
        Ok(v.clone())
    } else {
        v.reshape(&[v.numel()])
    }
}

fn check_lengths(lengths: &[f64]) -> Result<()> {
    if lengths.is_empty() {
        return Err(Error::invalid("constraint lengths", "no constraints given"));
    }
    if let Some(l) = lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid(
            "constraint lengths",
            format!("length {l} is not strictly positive"),
        ));
    }
    Ok(())
}
