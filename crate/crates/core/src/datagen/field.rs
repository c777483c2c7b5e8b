use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};

/// Box-blur passes applied to the random stream function.
pub const BLUR_PASSES: usize = 3;

/// Two-component field on an `n × n` grid, stored `[u, v]`, each row-major
/// with the row index along y.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub n: usize,
    pub data: Vec<f64>,
    /// Noise level added on top of a clean field, if any.
    pub sigma: Option<f64>,
}

impl VectorField {
    pub fn u(&self) -> &[f64] {
        &self.data[..self.n * self.n]
    }

    pub fn v(&self) -> &[f64] {
        &self.data[self.n * self.n..]
    }

    pub fn is_clean(&self) -> bool {
        self.sigma.is_none()
    }

    /// `sqrt(mean(u² + v²))`
    pub fn rms(&self) -> f64 {
        let nn = self.n * self.n;
        (self.data.iter().map(|x| x * x).sum::<f64>() / nn as f64).sqrt()
    }

    /// Unit-spacing divergence constraint for fields of this size.
    pub fn constraint(&self) -> Result<ConstraintSpec> {
        ConstraintSpec::discrete_divergence(self.n, 1.0)
    }
}

fn box_blur(src: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (mut sum, mut count) = (0.0, 0.0);
            for di in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                for dj in j.saturating_sub(1)..=(j + 1).min(n - 1) {
                    sum += src[di * n + dj];
                    count += 1.0;
                }
            }
            out[i * n + j] = sum / count;
        }
    }
    out
}

/// Forward difference along an axis with the last entry repeating the
/// preceding one-sided difference, as in the divergence stencil.
fn diff(psi: &[f64], n: usize, along_rows: bool) -> Vec<f64> {
    let pair = |i: usize| if i + 1 < n { (i + 1, i) } else { (i, i - 1) };
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = if along_rows {
                let (hi, lo) = pair(i);
                psi[hi * n + j] - psi[lo * n + j]
            } else {
                let (hi, lo) = pair(j);
                psi[i * n + hi] - psi[i * n + lo]
            };
        }
    }
    out
}

/// Field from a stream function: `u = ∂ψ/∂y`, `v = −∂ψ/∂x` with the
/// stencil's own differences, so its discrete divergence vanishes.
pub fn field_from_stream(psi: &[f64], n: usize) -> Result<VectorField> {
    if n < 2 || psi.len() != n * n {
        return Err(Error::invalid(
            "stream function",
            format!("{} values for n = {n}", psi.len()),
        ));
    }
    let mut data = diff(psi, n, true);
    data.extend(diff(psi, n, false).into_iter().map(|d| -d));
    Ok(VectorField {
        n,
        data,
        sigma: None,
    })
}

/// Smooth random divergence-free field with unit RMS.
pub fn generate_divergence_free_field(seed: u64, n: usize) -> Result<VectorField> {
    if n < 8 {
        return Err(Error::invalid("field", format!("grid size {n} < 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi: Vec<f64> = (0..n * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for _ in 0..BLUR_PASSES {
        psi = box_blur(&psi, n);
    }
    let mut field = field_from_stream(&psi, n)?;
    let rms = field.rms();
    field.data.iter_mut().for_each(|x| *x /= rms);
    Ok(field)
}

/// `field + σ·noise` with independent standard-normal noise per entry.
pub fn add_noise(field: &VectorField, sigma: f64, seed: u64) -> Result<VectorField> {
    Ok(VectorField {
        n: field.n,
        data: noisy(&field.data, sigma, seed)?,
        sigma: Some(field.sigma.unwrap_or(0.0).hypot(sigma)),
    })
}

/// Flat-slice form of [`add_noise`].
pub fn noisy(values: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(
            "noise",
            format!("sigma {sigma} must be >= 0"),
        ));
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(values
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x + sigma * z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn clean_field_has_zero_divergence() {
        let f = generate_divergence_free_field(5, 16).unwrap();
        let c = f
            .constraint()
            .unwrap()
            .eval_tensor(&Tensor::vector(f.data.clone()))
            .unwrap();
        assert!(c.max_abs() <= 1e-12, "{}", c.max_abs());
        assert!((f.rms() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_stream_gives_zero_field() {
        let f = field_from_stream(&[2.5; 64], 8).unwrap();
        assert!(f.data.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let f = generate_divergence_free_field(1, 64).unwrap();
        let a = add_noise(&f, 1.0, 7).unwrap();
        let b = add_noise(&f, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let diffs: Vec<f64> = a.data.iter().zip(&f.data).map(|(x, y)| x - y).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((0.9..=1.1).contains(&var), "{var}");
        assert_eq!(add_noise(&f, 0.0, 7).unwrap().data, f.data);
        assert!(add_noise(&f, -1.0, 7).is_err());
    }

    #[test]
    fn small_grid_rejected() {
        assert!(generate_divergence_free_field(0, 4).is_err());
    }
}
