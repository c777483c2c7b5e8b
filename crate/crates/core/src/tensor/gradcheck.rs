use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compare the tape gradient of a scalar function with central differences.
///
/// Returns `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-12)`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(
            "step",
            format!("h must be positive, got {h}"),
        ));
    }
    let tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let out = f(&leaf)?;
    if out.numel() != 1 {
        return Err(Error::invalid(
            "function",
            format!("expected a scalar output, got shape {:?}", out.shape()),
        ));
    }
    let analytic = if out.requires_grad() {
        tape.backward(&out)?;
        tape.grad(&leaf).expect("leaf has a gradient")
    } else {
        Tensor::zeros(x.shape())
    };

    let eval = |probe: Tensor| -> Result<f64> {
        let tape = Tape::new();
        Ok(f(&tape.constant(probe))?.item())
    };
    let mut numeric = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * h));
    }
    let numeric = Tensor::vector(numeric);
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(diff / analytic.norm2().max(numeric.norm2()).max(1e-12))
}
