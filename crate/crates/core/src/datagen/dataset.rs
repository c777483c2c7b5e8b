use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Trajectory, VectorField};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"CNNDS1\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        Self::ALL.get(label as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

/// Paired samples `(x_i, y_i)` with a split label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Prediction horizon in frames (0 for denoising).
    pub k: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// `[samples, input_dim]`
    pub x: Vec<f64>,
    /// `[samples, output_dim]`
    pub y: Vec<f64>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(
        k: usize,
        input_dim: usize,
        output_dim: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n = splits.len();
        if input_dim == 0
            || output_dim == 0
            || x.len() != n * input_dim
            || y.len() != n * output_dim
        {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "{n} samples with {} x values (dim {input_dim}) and {} y values (dim {output_dim})",
                    x.len(),
                    y.len()
                ),
            ));
        }
        Ok(Self {
            k,
            input_dim,
            output_dim,
            x,
            y,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    /// Multiply the position block of `x` and all of `y` by
    /// `position_scale`, and the remaining input entries by
    /// `velocity_scale`.
    pub fn rescale(&mut self, position_scale: f64, velocity_scale: f64) {
        let (d_in, d_out) = (self.input_dim, self.output_dim);
        for (j, v) in self.x.iter_mut().enumerate() {
            *v *= if j % d_in < d_out {
                position_scale
            } else {
                velocity_scale
            };
        }
        self.y.iter_mut().for_each(|v| *v *= position_scale);
    }

    /// Keep only the first `n` training samples; other splits unchanged.
    pub fn limit_train(&self, n: usize) -> Result<Self> {
        if n > self.count(Split::Train) {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "{n} training samples requested, {} available",
                    self.count(Split::Train)
                ),
            ));
        }
        let mut seen = 0;
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                if self.splits[i] != Split::Train {
                    return true;
                }
                seen += 1;
                seen <= n
            })
            .collect();
        Self::new(
            self.k,
            self.input_dim,
            self.output_dim,
            keep.iter()
                .flat_map(|&i| self.x(i).iter().copied())
                .collect(),
            keep.iter()
                .flat_map(|&i| self.y(i).iter().copied())
                .collect(),
            keep.iter().map(|&i| self.splits[i]).collect(),
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + 8 * (self.x.len() + self.y.len()) + self.len());
        buf.extend_from_slice(DATASET_MAGIC);
        for count in [self.len(), self.input_dim, self.output_dim, self.k] {
            let count = u32::try_from(count)
                .map_err(|_| Error::invalid("dataset", format!("count {count} overflows u32")))?;
            buf.extend_from_slice(&count.to_le_bytes());
        }
        for v in self.x.iter().chain(&self.y) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend(self.splits.iter().map(|s| s.label()));
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let format = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        if bytes.len() < 24 || &bytes[..8] != DATASET_MAGIC {
            return Err(format("missing CNNDS1 header".into()));
        }
        let count = |i: usize| {
            let at = 8 + 4 * i;
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
        };
        let (n, d_in, d_out, k) = (count(0), count(1), count(2), count(3));
        let reals = n * (d_in + d_out);
        let expected = 24 + 8 * reals + n;
        if bytes.len() != expected {
            return Err(format(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[24..24 + 8 * reals]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let splits = bytes[24 + 8 * reals..]
            .iter()
            .map(|b| Split::from_label(*b).ok_or_else(|| format(format!("bad split label {b}"))))
            .collect::<Result<_>>()?;
        let (x, y) = values.split_at(n * d_in);
        Self::new(k, d_in, d_out, x.to_vec(), y.to_vec(), splits).map_err(|e| format(e.to_string()))
    }

    /// Human-readable mirror: `split,x0..,y0..` per row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("split");
        (0..self.input_dim).for_each(|j| write!(out, ",x{j}").expect("string write"));
        (0..self.output_dim).for_each(|j| write!(out, ",y{j}").expect("string write"));
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(self.splits[i].name());
            for v in self.x(i).iter().chain(self.y(i)) {
                write!(out, ",{v}").expect("string write");
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Pair `state(i) = (r_i, v_i)` with `r_{i+k}` at randomly drawn start
/// frames, assigned in draw order to train, validation and test.
pub fn make_dataset<T: Trajectory + ?Sized>(
    traj: &T,
    k: usize,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<Dataset> {
    let total = n_train + n_val + n_test;
    let frames = traj.frames();
    let starts = frames.saturating_sub(k);
    if total == 0 || starts < total {
        return Err(Error::InsufficientFrames {
            required: total + k,
            available: frames,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, starts, total);
    let d = traj.position_dim();
    let mut x = Vec::with_capacity(total * 2 * d);
    let mut y = Vec::with_capacity(total * d);
    for i in picks.iter() {
        x.extend_from_slice(traj.position(i));
        x.extend_from_slice(traj.velocity(i));
        y.extend_from_slice(traj.position(i + k));
    }
    let splits = split_labels(n_train, n_val, n_test);
    Dataset::new(k, 2 * d, d, x, y, splits)
}

/// Clean fields as both input and target, assigned in order.
pub fn field_dataset(
    fields: &[VectorField],
    n_train: usize,
    n_val: usize,
    n_test: usize,
) -> Result<Dataset> {
    let total = n_train + n_val + n_test;
    if fields.len() != total || total == 0 {
        return Err(Error::invalid(
            "field dataset",
            format!("{} fields for splits totalling {total}", fields.len()),
        ));
    }
    let dim = fields[0].data.len();
    if fields.iter().any(|f| f.data.len() != dim) {
        return Err(Error::invalid("field dataset", "fields differ in size"));
    }
    let values: Vec<f64> = fields.iter().flat_map(|f| f.data.iter().copied()).collect();
    Dataset::new(
        0,
        dim,
        dim,
        values.clone(),
        values,
        split_labels(n_train, n_val, n_test),
    )
}

fn split_labels(n_train: usize, n_val: usize, n_test: usize) -> Vec<Split> {
    std::iter::repeat_n(Split::Train, n_train)
        .chain(std::iter::repeat_n(Split::Val, n_val))
        .chain(std::iter::repeat_n(Split::Test, n_test))
        .collect()
}
