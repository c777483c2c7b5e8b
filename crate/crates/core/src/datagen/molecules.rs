//! Rigid-ish three-site "water" molecules: stiff harmonic O–H and H–H
//! springs, a soft repulsion between sites of different molecules, and a
//! soft spherical wall. Units: pm, fs, amu.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Trajectory;
use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};

/// O–H rest length, pm.
pub const OH_LENGTH: f64 = 95.7;
/// H–O–H angle, degrees.
pub const HOH_ANGLE_DEG: f64 = 104.5;
/// Boltzmann constant in amu·pm²/(fs²·K).
pub const BOLTZMANN: f64 = 8.314_462_618e-3;
pub const OXYGEN_MASS: f64 = 15.999;
pub const HYDROGEN_MASS: f64 = 1.008;

/// H–H distance implied by the O–H length and the bond angle.
pub fn hh_length() -> f64 {
    2.0 * OH_LENGTH * (HOH_ANGLE_DEG.to_radians() / 2.0).sin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeConfig {
    pub molecules: usize,
    /// Integration step, fs.
    pub h: f64,
    /// Integration steps between stored frames.
    pub save_every: usize,
    /// Number of stored frames after the initial one.
    pub frames: usize,
    /// K
    pub temperature: f64,
    /// O–H spring constant, amu/fs².
    pub k_oh: f64,
    /// H–H spring constant, amu/fs².
    pub k_hh: f64,
    /// Repulsion `A (r_c − r)²` between sites of different molecules.
    pub repulsion: f64,
    pub cutoff: f64,
    /// Sites beyond this radius feel `A_w (r − R)²`.
    pub wall_radius: f64,
    pub wall_stiffness: f64,
    pub placement_attempts: usize,
}

impl MoleculeConfig {
    pub fn new(molecules: usize, frames: usize) -> Self {
        Self {
            molecules,
            h: 0.1,
            save_every: 10,
            frames,
            temperature: 300.0,
            k_oh: 0.46,
            k_hh: 0.2,
            repulsion: 0.01,
            cutoff: 250.0,
            wall_radius: 250.0 * 1.5 * (molecules as f64).cbrt(),
            wall_stiffness: 0.01,
            placement_attempts: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.molecules == 0 {
            return Err(Error::invalid("molecules", "need at least one molecule"));
        }
        if !(self.h > 0.0) || self.save_every == 0 {
            return Err(Error::invalid(
                "molecules",
                format!("step {} / save_every {}", self.h, self.save_every),
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid(
                "molecules",
                format!("temperature {}", self.temperature),
            ));
        }
        Ok(())
    }

    pub fn particles(&self) -> usize {
        3 * self.molecules
    }

    /// The three intra-molecular distances of every molecule, pm.
    pub fn constraint(&self) -> Result<ConstraintSpec> {
        let mut pairs = Vec::new();
        let mut lengths = Vec::new();
        for m in 0..self.molecules {
            let (o, h1, h2) = (3 * m, 3 * m + 1, 3 * m + 2);
            pairs.extend([(o, h1), (o, h2), (h1, h2)]);
            lengths.extend([OH_LENGTH, OH_LENGTH, hh_length()]);
        }
        ConstraintSpec::pair_distances(self.particles(), pairs, lengths)
    }

    fn masses(&self) -> Vec<f64> {
        (0..self.molecules)
            .flat_map(|_| [OXYGEN_MASS, HYDROGEN_MASS, HYDROGEN_MASS])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MolecularTrajectory {
    pub molecules: usize,
    /// Time between stored frames, fs.
    pub frame_interval: f64,
    pub bonds: Vec<(usize, usize, f64)>,
    /// `[frames, 3 * particles]`, pm.
    pub positions: Vec<f64>,
    /// pm/fs
    pub velocities: Vec<f64>,
}

impl Trajectory for MolecularTrajectory {
    fn frames(&self) -> usize {
        self.positions.len() / self.position_dim()
    }

    fn position_dim(&self) -> usize {
        9 * self.molecules
    }

    fn position(&self, i: usize) -> &[f64] {
        let d = self.position_dim();
        &self.positions[i * d..(i + 1) * d]
    }

    fn velocity(&self, i: usize) -> &[f64] {
        let d = self.position_dim();
        &self.velocities[i * d..(i + 1) * d]
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // uniform unit quaternion
    let mut q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= n);
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Rest-geometry sites of one molecule, oxygen at the origin.
fn rest_geometry() -> [[f64; 3]; 3] {
    let half = HOH_ANGLE_DEG.to_radians() / 2.0;
    [
        [0.0, 0.0, 0.0],
        [OH_LENGTH * half.sin(), OH_LENGTH * half.cos(), 0.0],
        [-OH_LENGTH * half.sin(), OH_LENGTH * half.cos(), 0.0],
    ]
}

fn place(cfg: &MoleculeConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let sites = rest_geometry();
    let inner = (cfg.wall_radius - OH_LENGTH).max(0.0);
    for _ in 0..cfg.placement_attempts {
        let mut pos = Vec::with_capacity(3 * cfg.particles());
        for _ in 0..cfg.molecules {
            let centre = loop {
                let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-inner..=inner));
                if c.iter().map(|v| v * v).sum::<f64>() <= inner * inner {
                    break c;
                }
            };
            let rot = random_rotation(rng);
            for s in &sites {
                for (k, row) in rot.iter().enumerate() {
                    pos.push(centre[k] + row[0] * s[0] + row[1] * s[1] + row[2] * s[2]);
                }
            }
        }
        let clear = (0..cfg.particles()).all(|a| {
            (a + 1..cfg.particles())
                .filter(|b| a / 3 != b / 3)
                .all(|b| distance(&pos, a, b) >= cfg.cutoff)
        });
        if clear {
            return Ok(pos);
        }
    }
    Err(Error::Overlap {
        molecules: cfg.molecules,
        attempts: cfg.placement_attempts,
    })
}

fn distance(pos: &[f64], a: usize, b: usize) -> f64 {
    (0..3)
        .map(|k| (pos[3 * a + k] - pos[3 * b + k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

struct Springs {
    /// `(a, b, rest, stiffness)`
    bonds: Vec<(usize, usize, f64, f64)>,
}

fn add_pair_force(
    pos: &[f64],
    force: &mut [f64],
    a: usize,
    b: usize,
    magnitude: impl Fn(f64) -> f64,
) {
    let r = distance(pos, a, b);
    if r == 0.0 {
        return;
    }
    // positive magnitude pushes the pair apart
    let f = magnitude(r);
    if f == 0.0 {
        return;
    }
    for k in 0..3 {
        let u = (pos[3 * a + k] - pos[3 * b + k]) / r;
        force[3 * a + k] += f * u;
        force[3 * b + k] -= f * u;
    }
}

fn forces(cfg: &MoleculeConfig, springs: &Springs, pos: &[f64], force: &mut [f64]) {
    force.iter_mut().for_each(|f| *f = 0.0);
    for &(a, b, rest, k) in &springs.bonds {
        add_pair_force(pos, force, a, b, |r| -k * (r - rest));
    }
    let n = cfg.particles();
    for a in 0..n {
        for b in a + 1..n {
            if a / 3 != b / 3 {
                add_pair_force(pos, force, a, b, |r| {
                    if r < cfg.cutoff {
                        2.0 * cfg.repulsion * (cfg.cutoff - r)
                    } else {
                        0.0
                    }
                });
            }
        }
        let r = (0..3).map(|k| pos[3 * a + k].powi(2)).sum::<f64>().sqrt();
        if r > cfg.wall_radius {
            let f = -2.0 * cfg.wall_stiffness * (r - cfg.wall_radius);
            for k in 0..3 {
                force[3 * a + k] += f * pos[3 * a + k] / r;
            }
        }
    }
}

/// Maxwell–Boltzmann velocities, centre-of-mass motion removed, rescaled
/// to exactly `temperature`.
fn thermal_velocities(cfg: &MoleculeConfig, masses: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut vel = vec![0.0; 3 * masses.len()];
    if cfg.temperature == 0.0 {
        return vel;
    }
    for (i, m) in masses.iter().enumerate() {
        let s = (BOLTZMANN * cfg.temperature / m).sqrt();
        for k in 0..3 {
            let z: f64 = StandardNormal.sample(rng);
            vel[3 * i + k] = s * z;
        }
    }
    let total: f64 = masses.iter().sum();
    for k in 0..3 {
        let p: f64 = masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * vel[3 * i + k])
            .sum();
        for i in 0..masses.len() {
            vel[3 * i + k] -= p / total;
        }
    }
    let kinetic: f64 = masses
        .iter()
        .enumerate()
        .map(|(i, m)| 0.5 * m * (0..3).map(|k| vel[3 * i + k].powi(2)).sum::<f64>())
        .sum();
    let target = 0.5 * (3 * masses.len()) as f64 * BOLTZMANN * cfg.temperature;
    if kinetic > 0.0 {
        let s = (target / kinetic).sqrt();
        vel.iter_mut().for_each(|v| *v *= s);
    }
    vel
}

/// Velocity-Verlet run from a random non-overlapping placement at rest
/// geometry. Stores `cfg.frames + 1` frames.
pub fn simulate_toy_molecules(cfg: &MoleculeConfig, seed: u64) -> Result<MolecularTrajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = place(cfg, &mut rng)?;
    let masses = cfg.masses();
    let vel = thermal_velocities(cfg, &masses, &mut rng);
    simulate_toy_molecules_from(cfg, pos, vel)
}

pub fn simulate_toy_molecules_from(
    cfg: &MoleculeConfig,
    mut pos: Vec<f64>,
    mut vel: Vec<f64>,
) -> Result<MolecularTrajectory> {
    cfg.validate()?;
    let n = cfg.particles();
    if pos.len() != 3 * n || vel.len() != 3 * n {
        return Err(Error::invalid(
            "molecules",
            "initial state length differs from site count",
        ));
    }
    let masses = cfg.masses();
    let mut springs = Springs { bonds: Vec::new() };
    let mut bonds = Vec::new();
    for m in 0..cfg.molecules {
        let (o, h1, h2) = (3 * m, 3 * m + 1, 3 * m + 2);
        springs.bonds.extend([
            (o, h1, OH_LENGTH, cfg.k_oh),
            (o, h2, OH_LENGTH, cfg.k_oh),
            (h1, h2, hh_length(), cfg.k_hh),
        ]);
        bonds.extend([
            (o, h1, OH_LENGTH),
            (o, h2, OH_LENGTH),
            (h1, h2, hh_length()),
        ]);
    }

    let mut traj = MolecularTrajectory {
        molecules: cfg.molecules,
        frame_interval: cfg.h * cfg.save_every as f64,
        bonds,
        positions: Vec::with_capacity((cfg.frames + 1) * 3 * n),
        velocities: Vec::with_capacity((cfg.frames + 1) * 3 * n),
    };
    let mut force = vec![0.0; 3 * n];
    forces(cfg, &springs, &pos, &mut force);
    let h = cfg.h;
    for frame in 0..=cfg.frames {
        if frame > 0 {
            for _ in 0..cfg.save_every {
                for i in 0..3 * n {
                    vel[i] += 0.5 * h * force[i] / masses[i / 3];
                    pos[i] += h * vel[i];
                }
                forces(cfg, &springs, &pos, &mut force);
                for i in 0..3 * n {
                    vel[i] += 0.5 * h * force[i] / masses[i / 3];
                }
            }
            if pos.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { iteration: frame });
            }
        }
        traj.positions.extend_from_slice(&pos);
        traj.velocities.extend_from_slice(&vel);
    }
    Ok(traj)
}
