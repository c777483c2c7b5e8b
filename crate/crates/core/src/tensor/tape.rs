use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use super::linalg::Cholesky;
use super::linear::LinearMap;
use super::Tensor;
use crate::error::{Error, Result};

/// Records operations for one reverse pass. Cheap to clone (shared handle).
///
/// A tape is single-threaded; independent tapes may live on different
/// threads.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<Inner>>,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
}

struct Node {
    rule: Rule,
    numel: usize,
    /// Accumulated gradient; only leaves carry one.
    grad: Option<Vec<f64>>,
}

type Id = Option<usize>;

enum Rule {
    Leaf,
    Add(Id, Id),
    Sub(Id, Id),
    Mul(Id, Id, Rc<Tensor>, Rc<Tensor>),
    Div(Id, Id, Rc<Tensor>, Rc<Tensor>),
    MatMul(Id, Id, Rc<Tensor>, Rc<Tensor>),
    Transpose(Id, usize, usize),
    Sum(Id),
    Mean(Id),
    Norm2(Id, Rc<Tensor>, f64),
    Tanh(Id, Rc<Tensor>),
    Relu(Id, Rc<Tensor>),
    Abs(Id, Rc<Tensor>),
    Sqrt(Id, Rc<Tensor>),
    Scale(Id, f64),
    Slice(Id, usize),
    Concat(Vec<(Id, usize)>),
    Reshape(Id),
    Linear(Id, Arc<dyn LinearMap>, usize),
    Solve(Id, Id, Rc<Cholesky>, Rc<Tensor>),
}

/// A tensor value participating (possibly) in a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: Id,
    value: Rc<Tensor>,
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A leaf that requires a gradient.
    pub fn leaf(&self, value: Tensor) -> Var {
        let numel = value.numel();
        let id = self.push(Rule::Leaf, numel);
        self.inner.borrow_mut().nodes[id].grad = Some(vec![0.0; numel]);
        Var {
            tape: self.clone(),
            id: Some(id),
            value: Rc::new(value),
        }
    }

    /// A value that never requires a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        Var {
            tape: self.clone(),
            id: None,
            value: Rc::new(value),
        }
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Number of recorded operations, leaves included.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Accumulated gradient of a leaf.
    pub fn grad(&self, var: &Var) -> Option<Tensor> {
        let id = var.id?;
        let inner = self.inner.borrow();
        let g = inner.nodes.get(id)?.grad.as_ref()?;
        Some(
            Tensor::new(var.value.shape().to_vec(), g.clone())
                .expect("gradient has the leaf's shape"),
        )
    }

    pub fn zero_grad(&self) {
        for node in self.inner.borrow_mut().nodes.iter_mut() {
            if let Some(g) = node.grad.as_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    fn push(&self, rule: Rule, numel: usize) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            rule,
            numel,
            grad: None,
        });
        inner.nodes.len() - 1
    }

    fn record(&self, rule: Rule, tracked: bool, value: Tensor) -> Var {
        let id = tracked.then(|| self.push(rule, value.numel()));
        Var {
            tape: self.clone(),
            id,
            value: Rc::new(value),
        }
    }

    /// Reverse pass from a one-element output. Leaf gradients accumulate
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&self, output: &Var) -> Result<()> {
        if output.value.numel() != 1 {
            return Err(Error::Backward("output is not a scalar"));
        }
        let root = output
            .id
            .ok_or(Error::Backward("output is detached from the tape"))?;
        let mut inner = self.inner.borrow_mut();
        let nodes = &mut inner.nodes;
        let sizes: Vec<usize> = nodes.iter().map(|n| n.numel).collect();
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root).map(|_| None).collect();
        adj[root] = Some(vec![1.0]);

        for i in (0..=root).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &mut nodes[i];
            if let Rule::Leaf = node.rule {
                if let Some(acc) = node.grad.as_mut() {
                    acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                continue;
            }
            propagate(&node.rule, &g, &mut adj, |id| sizes[id]);
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: Id, g: Vec<f64>) {
    let Some(id) = id else { return };
    match adj[id].as_mut() {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => adj[id] = Some(g),
    }
}

/// Sum `g` down to `numel` elements (scalar broadcast) or pass through.
fn reduce_to(g: Vec<f64>, numel: usize) -> Vec<f64> {
    if g.len() == numel {
        g
    } else {
        debug_assert_eq!(numel, 1);
        vec![g.iter().sum()]
    }
}

fn at(t: &Tensor, i: usize) -> f64 {
    let d = t.data();
    if d.len() == 1 {
        d[0]
    } else {
        d[i]
    }
}

fn propagate(rule: &Rule, g: &[f64], adj: &mut [Option<Vec<f64>>], numel: impl Fn(usize) -> usize) {
    let size = |id: &Id| id.map(&numel).unwrap_or(0);
    match rule {
        Rule::Leaf => {}
        Rule::Add(a, b) => {
            if a.is_some() {
                accumulate(adj, *a, reduce_to(g.to_vec(), size(a)));
            }
            if b.is_some() {
                accumulate(adj, *b, reduce_to(g.to_vec(), size(b)));
            }
        }
        Rule::Sub(a, b) => {
            if a.is_some() {
                accumulate(adj, *a, reduce_to(g.to_vec(), size(a)));
            }
            if b.is_some() {
                accumulate(adj, *b, reduce_to(g.iter().map(|v| -v).collect(), size(b)));
            }
        }
        Rule::Mul(a, b, av, bv) => {
            if a.is_some() {
                let ga = g.iter().enumerate().map(|(i, v)| v * at(bv, i)).collect();
                accumulate(adj, *a, reduce_to(ga, size(a)));
            }
            if b.is_some() {
                let gb = g.iter().enumerate().map(|(i, v)| v * at(av, i)).collect();
                accumulate(adj, *b, reduce_to(gb, size(b)));
            }
        }
        Rule::Div(a, b, av, bv) => {
            if a.is_some() {
                let ga = g.iter().enumerate().map(|(i, v)| v / at(bv, i)).collect();
                accumulate(adj, *a, reduce_to(ga, size(a)));
            }
            if b.is_some() {
                let gb = g
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let d = at(bv, i);
                        -v * at(av, i) / (d * d)
                    })
                    .collect();
                accumulate(adj, *b, reduce_to(gb, size(b)));
            }
        }
        Rule::MatMul(a, b, av, bv) => {
            let (m, k) = av.dims2().expect("matmul lhs is 2-D");
            let n = if bv.shape().len() == 2 {
                bv.shape()[1]
            } else {
                1
            };
            if a.is_some() {
                // dA = G Bᵀ
                let bd = bv.data();
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bd[p * n + j];
                        }
                        ga[i * k + p] = s;
                    }
                }
                accumulate(adj, *a, ga);
            }
            if b.is_some() {
                // dB = Aᵀ G
                let ad = av.data();
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                accumulate(adj, *b, gb);
            }
        }
        Rule::Transpose(a, rows, cols) => {
            // output is cols × rows
            let mut ga = vec![0.0; rows * cols];
            for i in 0..*rows {
                for j in 0..*cols {
                    ga[i * cols + j] = g[j * rows + i];
                }
            }
            accumulate(adj, *a, ga);
        }
        Rule::Sum(a) => accumulate(adj, *a, vec![g[0]; size(a)]),
        Rule::Mean(a) => {
            let n = size(a);
            accumulate(adj, *a, vec![g[0] / n as f64; n]);
        }
        Rule::Norm2(a, av, norm) => {
            let ga = if *norm == 0.0 {
                vec![0.0; av.numel()]
            } else {
                av.data().iter().map(|x| g[0] * x / norm).collect()
            };
            accumulate(adj, *a, ga);
        }
        Rule::Tanh(a, out) => {
            let ga = g
                .iter()
                .zip(out.data())
                .map(|(v, t)| v * (1.0 - t * t))
                .collect();
            accumulate(adj, *a, ga);
        }
        Rule::Relu(a, av) => {
            let ga = g
                .iter()
                .zip(av.data())
                .map(|(v, x)| if *x > 0.0 { *v } else { 0.0 })
                .collect();
            accumulate(adj, *a, ga);
        }
        Rule::Abs(a, av) => {
            // subgradient 0 at the kink
            let ga = g
                .iter()
                .zip(av.data())
                .map(|(v, x)| v * x.signum() * f64::from(*x != 0.0))
                .collect();
            accumulate(adj, *a, ga);
        }
        Rule::Sqrt(a, out) => {
            let ga = g
                .iter()
                .zip(out.data())
                .map(|(v, s)| if *s == 0.0 { 0.0 } else { v / (2.0 * s) })
                .collect();
            accumulate(adj, *a, ga);
        }
        Rule::Scale(a, f) => accumulate(adj, *a, g.iter().map(|v| v * f).collect()),
        Rule::Slice(a, start) => {
            let mut ga = vec![0.0; size(a)];
            ga[*start..*start + g.len()].copy_from_slice(g);
            accumulate(adj, *a, ga);
        }
        Rule::Concat(parts) => {
            let mut offset = 0;
            for (id, len) in parts {
                if id.is_some() {
                    accumulate(adj, *id, g[offset..offset + len].to_vec());
                }
                offset += len;
            }
        }
        Rule::Reshape(a) => accumulate(adj, *a, g.to_vec()),
        Rule::Linear(a, map, cols) => {
            let ga = apply_columns(g, *cols, map.out_len(), map.in_len(), |x, out| {
                map.apply_transpose(x, out)
            });
            accumulate(adj, *a, ga);
        }
        Rule::Solve(a, b, chol, x) => {
            // x = A⁻¹ b  ⇒  b̄ = A⁻¹ x̄ (A symmetric), Ā = −b̄ xᵀ
            let gb = chol.solve(g);
            if a.is_some() {
                let n = x.numel();
                let xd = x.data();
                let mut ga = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        ga[i * n + j] = -gb[i] * xd[j];
                    }
                }
                accumulate(adj, *a, ga);
            }
            if b.is_some() {
                accumulate(adj, *b, gb);
            }
        }
    }
}

/// Apply a vector map to each column of a row-major `rows × cols` matrix.
fn apply_columns(
    data: &[f64],
    cols: usize,
    rows_in: usize,
    rows_out: usize,
    f: impl Fn(&[f64], &mut [f64]),
) -> Vec<f64> {
    if cols == 1 {
        let mut out = vec![0.0; rows_out];
        f(data, &mut out);
        return out;
    }
    let mut out = vec![0.0; rows_out * cols];
    let mut col = vec![0.0; rows_in];
    let mut res = vec![0.0; rows_out];
    for j in 0..cols {
        for i in 0..rows_in {
            col[i] = data[i * cols + j];
        }
        res.iter_mut().for_each(|v| *v = 0.0);
        f(&col, &mut res);
        for i in 0..rows_out {
            out[i * cols + j] = res[i];
        }
    }
    out
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn item(&self) -> f64 {
        self.value.item()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Whether this value depends on a leaf that requires a gradient.
    pub fn requires_grad(&self) -> bool {
        self.id.is_some()
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var {
        Var {
            tape: self.tape.clone(),
            id: None,
            value: self.value.clone(),
        }
    }

    fn record(&self, rule: Rule, tracked: bool, value: Tensor) -> Var {
        self.tape.record(rule, tracked, value)
    }

    fn elementwise(
        &self,
        other: &Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (a, b) = (&*self.value, &*other.value);
        let shape = if a.shape() == b.shape()
            || (b.numel() == 1 && (a.numel() != 1 || a.shape().len() >= b.shape().len()))
        {
            a.shape()
        } else if a.numel() == 1 {
            b.shape()
        } else {
            return Err(Error::Shape {
                op,
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        };
        let n = a.numel().max(b.numel());
        let data = (0..n).map(|i| f(at(a, i), at(b, i))).collect();
        Tensor::new(shape.to_vec(), data)
    }

    fn tracked2(&self, other: &Var) -> bool {
        self.id.is_some() || other.id.is_some()
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        let value = self.elementwise(other, "add", |a, b| a + b)?;
        Ok(self.record(Rule::Add(self.id, other.id), self.tracked2(other), value))
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        let value = self.elementwise(other, "sub", |a, b| a - b)?;
        Ok(self.record(Rule::Sub(self.id, other.id), self.tracked2(other), value))
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        let value = self.elementwise(other, "mul", |a, b| a * b)?;
        let rule = Rule::Mul(self.id, other.id, self.value.clone(), other.value.clone());
        Ok(self.record(rule, self.tracked2(other), value))
    }

    pub fn div(&self, other: &Var) -> Result<Var> {
        let value = self.elementwise(other, "div", |a, b| a / b)?;
        let rule = Rule::Div(self.id, other.id, self.value.clone(), other.value.clone());
        Ok(self.record(rule, self.tracked2(other), value))
    }

    /// `[m,k] × [k,n] → [m,n]` or `[m,k] × [k] → [m]`.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let (a, b) = (&*self.value, &*other.value);
        let mismatch = || Error::Shape {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        };
        let (m, k) = a.dims2().ok_or_else(mismatch)?;
        let (kb, n, out_shape) = match b.shape() {
            [kb] => (*kb, 1, vec![m]),
            [kb, n] => (*kb, *n, vec![m, *n]),
            _ => return Err(mismatch()),
        };
        if kb != k {
            return Err(mismatch());
        }
        let (ad, bd) = (a.data(), b.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, bv) in row.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let rule = Rule::MatMul(self.id, other.id, self.value.clone(), other.value.clone());
        Ok(self.record(rule, self.tracked2(other), value))
    }

    pub fn transpose(&self) -> Result<Var> {
        let (r, c) = self.value.dims2().ok_or_else(|| Error::Shape {
            op: "transpose",
            left: self.shape().to_vec(),
            right: vec![],
        })?;
        let d = self.value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        Ok(self.record(Rule::Transpose(self.id, r, c), self.id.is_some(), value))
    }

    pub fn sum(&self) -> Var {
        let value = Tensor::scalar(self.value.data().iter().sum());
        self.record(Rule::Sum(self.id), self.id.is_some(), value)
    }

    pub fn mean(&self) -> Var {
        let n = self.numel().max(1) as f64;
        let value = Tensor::scalar(self.value.data().iter().sum::<f64>() / n);
        self.record(Rule::Mean(self.id), self.id.is_some(), value)
    }

    /// Euclidean norm of all elements.
    pub fn norm2(&self) -> Var {
        let norm = self.value.norm2();
        let rule = Rule::Norm2(self.id, self.value.clone(), norm);
        self.record(rule, self.id.is_some(), Tensor::scalar(norm))
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(
            self.shape().to_vec(),
            self.value.data().iter().map(|v| f(*v)).collect(),
        )
        .expect("same shape")
    }

    pub fn tanh(&self) -> Var {
        let out = Rc::new(self.map(f64::tanh));
        let rule = Rule::Tanh(self.id, out.clone());
        self.record(rule, self.id.is_some(), (*out).clone())
    }

    pub fn relu(&self) -> Var {
        let value = self.map(|v| v.max(0.0));
        self.record(
            Rule::Relu(self.id, self.value.clone()),
            self.id.is_some(),
            value,
        )
    }

    pub fn abs(&self) -> Var {
        let value = self.map(f64::abs);
        self.record(
            Rule::Abs(self.id, self.value.clone()),
            self.id.is_some(),
            value,
        )
    }

    pub fn sqrt(&self) -> Var {
        let out = Rc::new(self.map(f64::sqrt));
        let rule = Rule::Sqrt(self.id, out.clone());
        self.record(rule, self.id.is_some(), (*out).clone())
    }

    /// Multiply by a constant.
    pub fn scale(&self, factor: f64) -> Var {
        let value = self.map(|v| v * factor);
        self.record(Rule::Scale(self.id, factor), self.id.is_some(), value)
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    /// Contiguous range of the flattened data, as a vector.
    pub fn slice(&self, start: usize, len: usize) -> Result<Var> {
        if start + len > self.numel() {
            return Err(Error::Shape {
                op: "slice",
                left: self.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let value = Tensor::vector(self.value.data()[start..start + len].to_vec());
        Ok(self.record(Rule::Slice(self.id, start), self.id.is_some(), value))
    }

    /// Flatten and join vectors end to end.
    pub fn concat(parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Shape {
            op: "concat",
            left: vec![],
            right: vec![],
        })?;
        let mut data = Vec::with_capacity(parts.iter().map(Var::numel).sum());
        for p in parts {
            data.extend_from_slice(p.value.data());
        }
        let tracked = parts.iter().any(|p| p.id.is_some());
        let rule = Rule::Concat(parts.iter().map(|p| (p.id, p.numel())).collect());
        Ok(first.record(rule, tracked, Tensor::vector(data)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let value = (*self.value).clone().reshape(shape)?;
        Ok(self.record(Rule::Reshape(self.id), self.id.is_some(), value))
    }

    /// Apply a linear map to a vector `[in]`, or to each column of `[in, c]`.
    pub fn linear(&self, map: Arc<dyn LinearMap>) -> Result<Var> {
        let (rows, cols) = match self.shape() {
            [r] => (*r, 1),
            [r, c] => (*r, *c),
            _ => (0, 0),
        };
        if rows != map.in_len() {
            return Err(Error::Shape {
                op: "linear",
                left: self.shape().to_vec(),
                right: vec![map.in_len()],
            });
        }
        let out = apply_columns(
            self.value.data(),
            cols,
            map.in_len(),
            map.out_len(),
            |x, o| map.apply(x, o),
        );
        let shape = if self.shape().len() == 1 {
            vec![map.out_len()]
        } else {
            vec![map.out_len(), cols]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.record(Rule::Linear(self.id, map, cols), self.id.is_some(), value))
    }

    /// Solve `self · x = rhs` for a symmetric positive (semi-)definite
    /// `self`; near-singular systems get a small diagonal shift.
    pub fn solve_spd(&self, rhs: &Var) -> Result<Var> {
        let n = rhs.numel();
        if self.value.dims2() != Some((n, n)) {
            return Err(Error::Shape {
                op: "solve",
                left: self.shape().to_vec(),
                right: rhs.shape().to_vec(),
            });
        }
        let chol = Rc::new(Cholesky::factor(&self.value)?);
        let x = Rc::new(Tensor::vector(chol.solve(rhs.value.data())));
        let rule = Rule::Solve(self.id, rhs.id, chol, x.clone());
        Ok(self.record(rule, self.tracked2(rhs), (*x).clone()))
    }
}
