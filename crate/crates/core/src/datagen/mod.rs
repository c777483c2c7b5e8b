//! Ground-truth data: a chaotic planar pendulum chain, toy three-site
//! molecules with approximate bond constraints, and divergence-free
//! vector fields for denoising.

mod dataset;
mod field;
mod molecules;
mod pendulum;

pub use dataset::{field_dataset, make_dataset, Dataset, Split, DATASET_MAGIC};
pub use field::{
    add_noise, field_from_stream, generate_divergence_free_field, noisy, VectorField, BLUR_PASSES,
};
pub use molecules::{
    hh_length, simulate_toy_molecules, simulate_toy_molecules_from, MolecularTrajectory,
    MoleculeConfig, BOLTZMANN, HOH_ANGLE_DEG, OH_LENGTH,
};
pub use pendulum::{
    pendulum_energy, simulate_pendulum, simulate_pendulum_from, PendulumConfig, PendulumTrajectory,
    DRIFT_LIMIT, GRAVITY,
};

/// Sequence of frames with positions and velocities of equal length.
pub trait Trajectory {
    fn frames(&self) -> usize;
    fn position_dim(&self) -> usize;
    fn position(&self, i: usize) -> &[f64];
    fn velocity(&self, i: usize) -> &[f64];
}
