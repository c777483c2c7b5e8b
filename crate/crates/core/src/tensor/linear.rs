use std::fmt::Debug;
use std::sync::Arc;

/// A fixed linear operator with a known adjoint.
///
/// Recorded on the tape by [`Var::linear`](super::Var::linear); the backward
/// rule is `apply_transpose`. Used for stencils, incidence matrices and other
/// sparse structure that would be wasteful as a dense matmul.
pub trait LinearMap: Debug + Send + Sync {
    fn in_len(&self) -> usize;
    fn out_len(&self) -> usize;
    /// `out = A x`; `out` arrives zeroed.
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = Aᵀ y`; `out` arrives zeroed.
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);
}

/// The adjoint of another map.
#[derive(Debug, Clone)]
pub struct Transposed(pub Arc<dyn LinearMap>);

impl LinearMap for Transposed {
    fn in_len(&self) -> usize {
        self.0.out_len()
    }

    fn out_len(&self) -> usize {
        self.0.in_len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.0.apply_transpose(x, out)
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        self.0.apply(y, out)
    }
}
