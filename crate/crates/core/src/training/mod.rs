//! Losses, optimizer, training loop and evaluation metrics.

mod loss;
mod optim;

pub use loss::{loss_with_aux, BaseLoss, LossConfig};
pub use optim::{clip_global_norm, global_norm, Adam};

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{violation_of, ConstraintSpec};
use crate::datagen::{noisy, Dataset, Split};
use crate::error::{Error, Result};
use crate::network::{forward, BoundParams, ConstraintMode, NetworkParams};
use crate::tensor::{Tape, Tensor, Var};

/// Gaussian noise added to inputs, reproducible per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNoise {
    pub sigma: f64,
    pub seed: u64,
}

impl InputNoise {
    fn apply(&self, x: &[f64], parts: &[u64]) -> Result<Vec<f64>> {
        let mut key = vec![self.seed];
        key.extend_from_slice(parts);
        noisy(x, self.sigma, mix_seed(&key))
    }
}

/// Combine seed components into one well-spread seed (splitmix64 chain).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for p in parts {
        state ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Independent runs per configuration (used by the experiment layer).
    pub repeats: usize,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Noise applied to training inputs, fresh per epoch.
    pub input_noise: Option<InputNoise>,
    /// Noise applied to inputs when evaluating.
    pub eval_noise: Option<InputNoise>,
    /// Model units → reported units for MAE and CV.
    pub report_scale: f64,
    /// Write wall-clock times into the metrics; off keeps output
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 10,
            learning_rate: 1e-3,
            repeats: 3,
            seed: 0,
            clip_norm: Some(10.0),
            input_noise: None,
            eval_noise: None,
            report_scale: 1.0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("training", "batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid(
                "training",
                format!("learning rate {}", self.learning_rate),
            ));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::invalid("training", "clip norm must be > 0"));
        }
        if !(self.report_scale > 0.0) {
            return Err(Error::invalid("training", "report scale must be > 0"));
        }
        Ok(())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            report_scale: self.report_scale,
            noise: self.eval_noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub report_scale: f64,
    pub noise: Option<InputNoise>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            report_scale: 1.0,
            noise: None,
        }
    }
}

/// Metrics over one split. MAE and CV are in reported units, MSE in
/// reported units squared.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: Split,
    pub samples: usize,
    pub mae: f64,
    pub mse: f64,
    /// Mean over samples of `mean |c|` on the prediction.
    pub cv_mean: f64,
    /// Max over samples of `max |c|` on the prediction.
    pub cv_max: f64,
    /// As above on the readout before any physical-space projection.
    pub raw_cv_mean: f64,
    pub raw_cv_max: f64,
    /// Mean training objective in model units.
    pub loss: f64,
    /// Samples whose projections all reached tolerance.
    pub converged: usize,
    pub mean_projection_iters: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub report: EvalReport,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub curves: Vec<EpochRecord>,
    /// Mean batch loss of the final epoch.
    pub final_train_loss: f64,
}

fn sample_loss(
    bound: &BoundParams,
    tape: &Tape,
    x: Vec<f64>,
    y: &[f64],
    mode: &ConstraintMode,
    spec: &ConstraintSpec,
    loss_cfg: &LossConfig,
) -> Result<(Var, crate::network::ForwardReport)> {
    let x = tape.constant(Tensor::vector(x));
    let target = tape.constant(Tensor::vector(y.to_vec()));
    let report = forward(&x, bound, mode, spec)?;
    let loss = loss_with_aux(&report.y_pred, &report.y_raw, &target, spec, loss_cfg)?;
    Ok((loss, report))
}

/// Forward every sample of `split` without recording gradients.
pub fn evaluate(
    params: &NetworkParams,
    dataset: &Dataset,
    split: Split,
    mode: &ConstraintMode,
    spec: &ConstraintSpec,
    loss_cfg: &LossConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape, false)?;
    let indices = dataset.indices(split);
    let s = opts.report_scale;
    let mut acc = EvalReport {
        split,
        samples: indices.len(),
        mae: 0.0,
        mse: 0.0,
        cv_mean: 0.0,
        cv_max: 0.0,
        raw_cv_mean: 0.0,
        raw_cv_max: 0.0,
        loss: 0.0,
        converged: 0,
        mean_projection_iters: 0.0,
    };
    if indices.is_empty() {
        return Ok(acc);
    }
    for &i in &indices {
        let x = match &opts.noise {
            Some(n) => n.apply(dataset.x(i), &[i as u64])?,
            None => dataset.x(i).to_vec(),
        };
        let (loss, report) = sample_loss(&bound, &tape, x, dataset.y(i), mode, spec, loss_cfg)?;
        let (mut abs, mut sq) = (0.0, 0.0);
        for (p, t) in report.y_pred.value().data().iter().zip(dataset.y(i)) {
            abs += (p - t).abs();
            sq += (p - t) * (p - t);
        }
        let d = dataset.output_dim as f64;
        acc.mae += abs / d;
        acc.mse += sq / d;
        let (max, mean) = violation_of(&spec.eval_tensor(report.y_pred.value())?);
        acc.cv_mean += mean;
        acc.cv_max = acc.cv_max.max(max);
        let (raw_max, raw_mean) = violation_of(&spec.eval_tensor(report.y_raw.value())?);
        acc.raw_cv_mean += raw_mean;
        acc.raw_cv_max = acc.raw_cv_max.max(raw_max);
        acc.loss += loss.item();
        acc.converged += usize::from(report.converged);
        acc.mean_projection_iters += report.projection_iters as f64;
    }
    let n = indices.len() as f64;
    acc.mae *= s / n;
    acc.mse *= s * s / n;
    acc.cv_mean *= s / n;
    acc.cv_max *= s;
    acc.raw_cv_mean *= s / n;
    acc.raw_cv_max *= s;
    acc.loss /= n;
    acc.mean_projection_iters /= n;
    Ok(acc)
}

/// Mini-batch Adam training. Train and validation metrics are logged after
/// every epoch. Batches are shuffled from `cfg.seed`, so a fixed
/// configuration reproduces bit-identical parameters.
pub fn train(
    initial: NetworkParams,
    dataset: &Dataset,
    mode: &ConstraintMode,
    spec: &ConstraintSpec,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    mode.validate()?;
    loss_cfg.validate()?;
    let mut train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::invalid(
            "training",
            "dataset has no training samples",
        ));
    }
    if dataset.input_dim != initial.dims.input || dataset.output_dim != initial.dims.output {
        return Err(Error::Shape {
            op: "train",
            left: vec![dataset.input_dim, dataset.output_dim],
            right: vec![initial.dims.input, initial.dims.output],
        });
    }

    let start = Instant::now();
    let mut params = initial;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x5348_5546]));
    let mut curves = Vec::new();
    let mut final_train_loss = f64::NAN;
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let batches = train_idx.chunks(cfg.batch_size).count();
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            let abort = |params: &NetworkParams| Error::TrainingAborted {
                epoch,
                batch: b,
                last_good: Box::new(params.clone()),
            };
            let tape = Tape::new();
            let bound = BoundParams::bind(&params, &tape, true)?;
            let mut total: Option<Var> = None;
            for &i in batch {
                let x = match &cfg.input_noise {
                    Some(n) => n.apply(dataset.x(i), &[epoch as u64, i as u64])?,
                    None => dataset.x(i).to_vec(),
                };
                let (loss, _) =
                    match sample_loss(&bound, &tape, x, dataset.y(i), mode, spec, loss_cfg) {
                        Ok(v) => v,
                        Err(Error::NonFinite { .. }) => return Err(abort(&params)),
                        Err(Error::Layer { source, .. })
                            if matches!(*source, Error::NonFinite { .. }) =>
                        {
                            return Err(abort(&params))
                        }
                        Err(e) => return Err(e),
                    };
                total = Some(match total {
                    None => loss,
                    Some(t) => t.add(&loss)?,
                });
            }
            let batch_loss = total
                .expect("chunks are nonempty")
                .scale(1.0 / batch.len() as f64);
            if !batch_loss.item().is_finite() {
                return Err(abort(&params));
            }
            tape.backward(&batch_loss)?;
            let mut grads = bound.grads();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(abort(&params));
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            let before = params.clone();
            adam.step(&mut params, &grads)?;
            if !params.is_finite() {
                return Err(abort(&before));
            }
            epoch_loss += batch_loss.item();
        }
        final_train_loss = epoch_loss / batches as f64;
        log::debug!("epoch {epoch}: mean batch loss {final_train_loss:.6e}");

        for split in [Split::Train, Split::Val] {
            if dataset.count(split) == 0 {
                continue;
            }
            let report = evaluate(
                &params,
                dataset,
                split,
                mode,
                spec,
                loss_cfg,
                &cfg.eval_options(),
            )?;
            curves.push(EpochRecord {
                epoch,
                report,
                wall_time_s: cfg.record_wall_time.then(|| start.elapsed().as_secs_f64()),
            });
        }
    }
    Ok(TrainOutcome {
        params,
        curves,
        final_train_loss,
    })
}

pub const METRICS_HEADER: &str = "epoch,split,mae,mse,cv_mean,cv_max,loss,wall_time_s";

pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in records {
        let e = &r.report;
        let wall = r.wall_time_s.map(|t| format!("{t:.3}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            e.split.name(),
            e.mae,
            e.mse,
            e.cv_mean,
            e.cv_max,
            e.loss,
            wall
        )
        .expect("string write");
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, metrics_csv(records))?;
    Ok(())
}

pub const EVAL_HEADER: &str =
    "split,samples,mae,mse,cv_mean,cv_max,raw_cv_mean,raw_cv_max,loss,converged,mean_projection_iters";

pub fn eval_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for e in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.split.name(),
            e.samples,
            e.mae,
            e.mse,
            e.cv_mean,
            e.cv_max,
            e.raw_cv_mean,
            e.raw_cv_max,
            e.loss,
            e.converged,
            e.mean_projection_iters
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, NetworkDims};

    fn toy() -> (Dataset, ConstraintSpec, NetworkParams) {
        // single pendulum: x = (r, v), y = r rotated slightly
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let a = -1.5 + 0.15 * i as f64;
            x.extend([a.sin(), -a.cos(), 0.0, 0.0]);
            let b = a * 0.9;
            y.extend([b.sin(), -b.cos()]);
        }
        let splits = (0..20)
            .map(|i| {
                if i < 10 {
                    Split::Train
                } else if i < 15 {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect();
        let data = Dataset::new(1, 4, 2, x, y, splits).unwrap();
        let spec = ConstraintSpec::chain_lengths(vec![1.0]).unwrap();
        let dims = NetworkDims {
            input: 4,
            latent: 6,
            hidden: 6,
            output: 2,
            layers: 2,
        };
        (data, spec, init_params(3, dims, 1e-2).unwrap())
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_runs_are_reproducible() {
        let (data, spec, p) = toy();
        let lc = LossConfig::default();
        let before = evaluate(
            &p,
            &data,
            Split::Train,
            &ConstraintMode::None,
            &spec,
            &lc,
            &EvalOptions::default(),
        )
        .unwrap();
        let a = train(p.clone(), &data, &ConstraintMode::None, &spec, &cfg(5), &lc).unwrap();
        let b = train(p, &data, &ConstraintMode::None, &spec, &cfg(5), &lc).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(metrics_csv(&a.curves), metrics_csv(&b.curves));
        let after = &a
            .curves
            .iter()
            .rev()
            .find(|r| r.report.split == Split::Train)
            .unwrap()
            .report;
        assert!(
            after.loss < before.loss,
            "{} !< {}",
            after.loss,
            before.loss
        );
        assert_eq!(a.curves.len(), 10);
    }

    #[test]
    fn perfect_predictor_has_zero_mae() {
        let (mut data, spec, p) = toy();
        // identity targets: the untrained net is near identity, zero weights exactly
        let mut exact = NetworkParams::zeros(p.dims, 1e-2).unwrap();
        exact.step_sizes = Tensor::vector(vec![1e-2; 2]);
        for i in 0..data.len() {
            let xi = data.x(i)[..2].to_vec();
            data.y[2 * i..2 * i + 2].copy_from_slice(&xi);
        }
        let r = evaluate(
            &exact,
            &data,
            Split::Test,
            &ConstraintMode::None,
            &spec,
            &LossConfig::default(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.mae, 0.0);
        assert!(r.cv_max < 1e-15);
    }

    #[test]
    fn report_scale_multiplies_mae_and_cv() {
        let (data, spec, p) = toy();
        let lc = LossConfig::default();
        let one = evaluate(
            &p,
            &data,
            Split::Val,
            &ConstraintMode::None,
            &spec,
            &lc,
            &EvalOptions::default(),
        )
        .unwrap();
        let opts = EvalOptions {
            report_scale: 100.0,
            noise: None,
        };
        let cm = evaluate(
            &p,
            &data,
            Split::Val,
            &ConstraintMode::None,
            &spec,
            &lc,
            &opts,
        )
        .unwrap();
        assert!((cm.mae - 100.0 * one.mae).abs() <= 1e-12 * cm.mae);
        assert!((cm.cv_max - 100.0 * one.cv_max).abs() <= 1e-12 * cm.cv_max);
        assert_eq!(cm.loss, one.loss);
    }

    #[test]
    fn non_finite_loss_aborts_with_last_good_params() {
        let (mut data, spec, p) = toy();
        data.y[0] = f64::NAN;
        let err = train(
            p.clone(),
            &data,
            &ConstraintMode::None,
            &spec,
            &cfg(1),
            &LossConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::TrainingAborted {
                epoch, last_good, ..
            } => {
                assert_eq!(epoch, 1);
                assert!(last_good.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wall_time_column_empty_by_default() {
        let (data, spec, p) = toy();
        let out = train(
            p,
            &data,
            &ConstraintMode::None,
            &spec,
            &cfg(1),
            &LossConfig::default(),
        )
        .unwrap();
        let csv = metrics_csv(&out.curves);
        assert!(csv.starts_with(METRICS_HEADER));
        assert!(csv.lines().skip(1).all(|l| l.ends_with(',')));
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_eq!(mix_seed(&[1, 2]), mix_seed(&[1, 2]));
    }
}
