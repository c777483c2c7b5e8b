use super::config::{ExperimentConfig, Problem};
use crate::constraints::ConstraintSpec;
use crate::datagen::{
    field_dataset, generate_divergence_free_field, make_dataset, simulate_pendulum,
    simulate_toy_molecules, Dataset, MoleculeConfig, PendulumConfig,
};
use crate::error::Result;
use crate::network::NetworkDims;
use crate::training::{mix_seed, InputNoise};

/// Picometres per model length unit for molecules.
pub const MOLECULE_MODEL_UNIT: f64 = 100.0;

const SPLIT_TAG: u64 = 0x5350_4c49;
const FIELD_TAG: u64 = 0x4649_454c;
const TRAIN_NOISE_TAG: u64 = 0x544e_4f49;
const EVAL_NOISE_TAG: u64 = 0x454e_4f49;

/// Unit conversions and constraint for one problem.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Constraint on model-unit outputs.
    pub spec: ConstraintSpec,
    /// Data units → model units for positions.
    pub model_scale: f64,
    /// Data units → model units for the velocity block of the input.
    pub velocity_scale: f64,
    /// Model units → reported units.
    pub report_scale: f64,
    pub report_unit: &'static str,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.problem {
            Problem::Pendulum => Self {
                spec: PendulumConfig::uniform(cfg.bodies, 0, cfg.h).constraint()?,
                model_scale: 1.0,
                // velocities become displacements over the prediction horizon
                velocity_scale: cfg.k as f64 * cfg.h,
                report_scale: 100.0,
                report_unit: "cm",
            },
            Problem::Molecules => {
                let frame = cfg.h * cfg.substeps as f64;
                Self {
                    spec: MoleculeConfig::new(cfg.molecules, 0)
                        .constraint()?
                        .rescaled(MOLECULE_MODEL_UNIT)?,
                    model_scale: 1.0 / MOLECULE_MODEL_UNIT,
                    velocity_scale: cfg.k as f64 * frame / MOLECULE_MODEL_UNIT,
                    report_scale: MOLECULE_MODEL_UNIT,
                    report_unit: "pm",
                }
            }
            Problem::Denoise => Self {
                spec: ConstraintSpec::discrete_divergence(cfg.grid, 1.0)?,
                model_scale: 1.0,
                velocity_scale: 1.0,
                report_scale: 1.0,
                report_unit: "field",
            },
        })
    }

    /// Convert a data-unit dataset to model units.
    pub fn to_model_units(&self, data: &mut Dataset) {
        data.rescale(self.model_scale, self.velocity_scale);
    }
}

pub fn network_dims(cfg: &ExperimentConfig, data: &Dataset) -> NetworkDims {
    NetworkDims {
        input: data.input_dim,
        latent: cfg.latent,
        hidden: cfg.hidden,
        output: data.output_dim,
        layers: cfg.layers,
    }
}

/// Ground-truth dataset in data units, sized for the largest `n_train`.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let n_train = cfg.max_n_train();
    let split_seed = mix_seed(&[cfg.data_seed, SPLIT_TAG]);
    match cfg.problem {
        Problem::Pendulum => {
            let mut p = PendulumConfig::uniform(cfg.bodies, cfg.steps, cfg.h);
            p.substeps = cfg.substeps;
            let traj = simulate_pendulum(&p, cfg.data_seed)?;
            log::info!("pendulum energy drift {:.3e}", traj.energy_drift);
            make_dataset(&traj, cfg.k, n_train, cfg.n_val, cfg.n_test, split_seed)
        }
        Problem::Molecules => {
            let mut m = MoleculeConfig::new(cfg.molecules, cfg.steps);
            m.h = cfg.h;
            m.save_every = cfg.substeps;
            m.temperature = cfg.temperature;
            let traj = simulate_toy_molecules(&m, cfg.data_seed)?;
            make_dataset(&traj, cfg.k, n_train, cfg.n_val, cfg.n_test, split_seed)
        }
        Problem::Denoise => {
            let total = n_train + cfg.n_val + cfg.n_test;
            let fields = (0..total as u64)
                .map(|i| {
                    generate_divergence_free_field(
                        mix_seed(&[cfg.data_seed, FIELD_TAG, i]),
                        cfg.grid,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            field_dataset(&fields, n_train, cfg.n_val, cfg.n_test)
        }
    }
}

/// Training-input noise for one run (denoising only).
pub fn train_noise(cfg: &ExperimentConfig, seed: u64) -> Option<InputNoise> {
    (cfg.problem == Problem::Denoise).then(|| InputNoise {
        sigma: cfg.sigma,
        seed: mix_seed(&[seed, TRAIN_NOISE_TAG]),
    })
}

/// Evaluation noise at level `sigma`. The draw depends only on the data
/// seed, so different noise levels scale the same standard-normal sample.
pub fn eval_noise(cfg: &ExperimentConfig, sigma: f64) -> Option<InputNoise> {
    (cfg.problem == Problem::Denoise).then(|| InputNoise {
        sigma,
        seed: mix_seed(&[cfg.data_seed, EVAL_NOISE_TAG]),
    })
}
