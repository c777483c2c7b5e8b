use crate::tensor::LinearMap;

/// `r ↦ (r_a − r_b)` for each pair; `b = None` is the origin.
#[derive(Debug)]
pub(super) struct Incidence {
    dim: usize,
    particles: usize,
    pairs: Vec<(usize, Option<usize>)>,
}

impl Incidence {
    pub(super) fn new(dim: usize, particles: usize, pairs: Vec<(usize, Option<usize>)>) -> Self {
        Self {
            dim,
            particles,
            pairs,
        }
    }
}

impl LinearMap for Incidence {
    fn in_len(&self) -> usize {
        self.dim * self.particles
    }

    fn out_len(&self) -> usize {
        self.dim * self.pairs.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            for k in 0..d {
                let rb = b.map_or(0.0, |b| x[b * d + k]);
                out[i * d + k] = x[a * d + k] - rb;
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            for k in 0..d {
                out[a * d + k] += y[i * d + k];
                if let Some(b) = b {
                    out[b * d + k] -= y[i * d + k];
                }
            }
        }
    }
}

/// Sums consecutive groups of `size` entries.
#[derive(Debug)]
pub(super) struct GroupSum {
    groups: usize,
    size: usize,
}

impl GroupSum {
    pub(super) fn new(groups: usize, size: usize) -> Self {
        Self { groups, size }
    }
}

impl LinearMap for GroupSum {
    fn in_len(&self) -> usize {
        self.groups * self.size
    }

    fn out_len(&self) -> usize {
        self.groups
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, chunk) in out.iter_mut().zip(x.chunks(self.size)) {
            *o = chunk.iter().sum();
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (chunk, v) in out.chunks_mut(self.size).zip(y) {
            chunk.iter_mut().for_each(|o| *o = *v);
        }
    }
}

/// Repeats each entry `size` times; adjoint of [`GroupSum`].
#[derive(Debug)]
pub(super) struct GroupRepeat(GroupSum);

impl GroupRepeat {
    pub(super) fn new(groups: usize, size: usize) -> Self {
        Self(GroupSum::new(groups, size))
    }
}

impl LinearMap for GroupRepeat {
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

/// Places per-pair unit vectors `u_i` into Jacobian rows:
/// `+u_i` at particle `a`, `−u_i` at particle `b`. Output is the flattened
/// `[pairs, dim * particles]` matrix.
#[derive(Debug)]
pub(super) struct JacobianScatter {
    inner: Incidence,
}

impl JacobianScatter {
    pub(super) fn new(dim: usize, particles: usize, pairs: Vec<(usize, Option<usize>)>) -> Self {
        Self {
            inner: Incidence::new(dim, particles, pairs),
        }
    }
}

impl LinearMap for JacobianScatter {
    fn in_len(&self) -> usize {
        self.inner.out_len()
    }

    fn out_len(&self) -> usize {
        self.inner.pairs.len() * self.inner.in_len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.inner.dim;
        let width = self.inner.in_len();
        for (i, &(a, b)) in self.inner.pairs.iter().enumerate() {
            let row = &mut out[i * width..(i + 1) * width];
            for k in 0..d {
                row[a * d + k] = x[i * d + k];
                if let Some(b) = b {
                    row[b * d + k] = -x[i * d + k];
                }
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let d = self.inner.dim;
        let width = self.inner.in_len();
        for (i, &(a, b)) in self.inner.pairs.iter().enumerate() {
            let row = &y[i * width..(i + 1) * width];
            for k in 0..d {
                out[i * d + k] += row[a * d + k];
                if let Some(b) = b {
                    out[i * d + k] -= row[b * d + k];
                }
            }
        }
    }
}

/// Discrete divergence of `(u, v)` stored as two row-major `n × n` grids
/// (row index along y, column index along x).
///
/// Forward differences, except the last column (for `∂u/∂x`) and last row
/// (for `∂v/∂y`) which repeat the preceding one-sided difference.
#[derive(Debug)]
pub(super) struct DivergenceStencil {
    n: usize,
    inv_spacing: f64,
}

impl DivergenceStencil {
    pub(super) fn new(n: usize, spacing: f64) -> Self {
        Self {
            n,
            inv_spacing: 1.0 / spacing,
        }
    }

    /// Index pair `(hi, lo)` of the difference used at position `i`.
    fn pair(&self, i: usize) -> (usize, usize) {
        if i + 1 < self.n {
            (i + 1, i)
        } else {
            (i, i - 1)
        }
    }
}

impl LinearMap for DivergenceStencil {
    fn in_len(&self) -> usize {
        2 * self.n * self.n
    }

    fn out_len(&self) -> usize {
        self.n * self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (u, v) = x.split_at(n * n);
        for i in 0..n {
            let (ri_hi, ri_lo) = self.pair(i);
            for j in 0..n {
                let (cj_hi, cj_lo) = self.pair(j);
                let du = u[i * n + cj_hi] - u[i * n + cj_lo];
                let dv = v[ri_hi * n + j] - v[ri_lo * n + j];
                out[i * n + j] = (du + dv) * self.inv_spacing;
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (u, v) = out.split_at_mut(n * n);
        for i in 0..n {
            let (ri_hi, ri_lo) = self.pair(i);
            for j in 0..n {
                let (cj_hi, cj_lo) = self.pair(j);
                let w = y[i * n + j] * self.inv_spacing;
                u[i * n + cj_hi] += w;
                u[i * n + cj_lo] -= w;
                v[ri_hi * n + j] += w;
                v[ri_lo * n + j] -= w;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `⟨A x, y⟩ = ⟨x, Aᵀ y⟩` on random vectors.
    fn check_adjoint(map: &dyn LinearMap, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..map.in_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let y: Vec<f64> = (0..map.out_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut ax = vec![0.0; map.out_len()];
        map.apply(&x, &mut ax);
        let mut aty = vec![0.0; map.in_len()];
        map.apply_transpose(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn adjoints_are_consistent() {
        let chain: Vec<_> = (0..4usize).map(|i| (i, i.checked_sub(1))).collect();
        check_adjoint(&Incidence::new(2, 4, chain.clone()), 1);
        check_adjoint(&JacobianScatter::new(2, 4, chain), 2);
        check_adjoint(&Incidence::new(3, 3, vec![(0, Some(1)), (2, Some(0))]), 3);
        check_adjoint(&GroupSum::new(5, 3), 4);
        check_adjoint(&GroupRepeat::new(5, 3), 5);
        check_adjoint(&DivergenceStencil::new(5, 0.5), 6);
    }
}
