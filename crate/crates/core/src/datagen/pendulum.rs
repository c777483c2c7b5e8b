use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Trajectory;
use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;
/// Relative energy drift above which a simulation is rejected.
pub const DRIFT_LIMIT: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumConfig {
    /// Stored-frame interval, s.
    pub h: f64,
    pub steps: usize,
    /// Link lengths, m; the chain has `lengths.len()` bodies.
    pub lengths: Vec<f64>,
    /// Point masses, kg.
    pub masses: Vec<f64>,
    pub g: f64,
    /// RK4 steps taken per stored frame.
    pub substeps: usize,
}

impl PendulumConfig {
    /// `n` unit links with unit masses.
    pub fn uniform(n: usize, steps: usize, h: f64) -> Self {
        Self {
            h,
            steps,
            lengths: vec![1.0; n],
            masses: vec![1.0; n],
            g: GRAVITY,
            substeps: 1,
        }
    }

    pub fn bodies(&self) -> usize {
        self.lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bodies();
        if n == 0 || self.masses.len() != n {
            return Err(Error::invalid(
                "pendulum",
                format!("{n} lengths and {} masses", self.masses.len()),
            ));
        }
        if !(self.h > 0.0) || self.substeps == 0 {
            return Err(Error::invalid(
                "pendulum",
                format!("step {} / substeps {}", self.h, self.substeps),
            ));
        }
        if self.lengths.iter().chain(&self.masses).any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("pendulum", "lengths and masses must be > 0"));
        }
        Ok(())
    }

    pub fn constraint(&self) -> Result<ConstraintSpec> {
        ConstraintSpec::chain_lengths(self.lengths.clone())
    }

    /// `μ_i = Σ_{k ≥ i} m_k`, the mass hanging from joint `i`.
    fn suffix_masses(&self) -> Vec<f64> {
        let mut mu = self.masses.clone();
        for i in (0..mu.len().saturating_sub(1)).rev() {
            mu[i] += mu[i + 1];
        }
        mu
    }

    /// `Σ_i μ_i g l_i`: the energy released by a chain falling from
    /// horizontal to hanging straight down.
    pub fn energy_scale(&self) -> f64 {
        self.suffix_masses()
            .iter()
            .zip(&self.lengths)
            .map(|(mu, l)| mu * self.g * l)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct PendulumTrajectory {
    pub bodies: usize,
    pub h: f64,
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub g: f64,
    /// `[frames, bodies]`
    pub angles: Vec<f64>,
    pub angular_velocities: Vec<f64>,
    /// `[frames, 2 * bodies]`, `(x, y)` per body, m, pivot at origin, y up.
    pub positions: Vec<f64>,
    /// m/s, same layout as `positions`.
    pub velocities: Vec<f64>,
    /// Largest `|E(t) − E(0)|` relative to [`Self::energy_reference`].
    pub energy_drift: f64,
    pub energy_reference: f64,
}

impl Trajectory for PendulumTrajectory {
    fn frames(&self) -> usize {
        self.angles.len() / self.bodies
    }

    fn position_dim(&self) -> usize {
        2 * self.bodies
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

impl PendulumTrajectory {
    pub fn energy(&self, i: usize) -> f64 {
        pendulum_energy(self.position(i), self.velocity(i), &self.masses, self.g)
    }
}

/// Kinetic plus potential energy, datum at the pivot.
pub fn pendulum_energy(positions: &[f64], velocities: &[f64], masses: &[f64], g: f64) -> f64 {
    masses
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (vx, vy) = (velocities[2 * i], velocities[2 * i + 1]);
            0.5 * m * (vx * vx + vy * vy) + m * g * positions[2 * i + 1]
        })
        .sum()
}

struct Dynamics {
    lengths: Vec<f64>,
    /// `μ_{max(i,j)}`
    coupling: DMatrix<f64>,
    mu: Vec<f64>,
    g: f64,
}

impl Dynamics {
    fn new(cfg: &PendulumConfig) -> Self {
        let mu = cfg.suffix_masses();
        let n = mu.len();
        Self {
            lengths: cfg.lengths.clone(),
            coupling: DMatrix::from_fn(n, n, |i, j| mu[i.max(j)]),
            mu,
            g: cfg.g,
        }
    }

    /// Angular accelerations from `M(θ) θ̈ = f(θ, ω)`.
    fn accel(&self, theta: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        let n = theta.len();
        let l = &self.lengths;
        let mass = DMatrix::from_fn(n, n, |i, j| {
            self.coupling[(i, j)] * l[i] * l[j] * (theta[i] - theta[j]).cos()
        });
        let rhs = DVector::from_fn(n, |i, _| {
            let coriolis: f64 = (0..n)
                .map(|j| {
                    self.coupling[(i, j)]
                        * l[i]
                        * l[j]
                        * (theta[i] - theta[j]).sin()
                        * omega[j]
                        * omega[j]
                })
                .sum();
            -coriolis - self.mu[i] * self.g * l[i] * theta[i].sin()
        });
        let chol = mass.cholesky().ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    fn rk4(&self, theta: &mut [f64], omega: &mut [f64], h: f64) -> Result<()> {
        let n = theta.len();
        let shift = |base: &[f64], d: &[f64], s: f64| -> Vec<f64> {
            base.iter().zip(d).map(|(b, d)| b + s * d).collect()
        };
        let (t0, w0) = (theta.to_vec(), omega.to_vec());
        let a1 = self.accel(&t0, &w0)?;
        let (t2, w2) = (shift(&t0, &w0, h / 2.0), shift(&w0, &a1, h / 2.0));
        let a2 = self.accel(&t2, &w2)?;
        let (t3, w3) = (shift(&t0, &w2, h / 2.0), shift(&w0, &a2, h / 2.0));
        let a3 = self.accel(&t3, &w3)?;
        let (t4, w4) = (shift(&t0, &w3, h), shift(&w0, &a3, h));
        let a4 = self.accel(&t4, &w4)?;
        for i in 0..n {
            theta[i] += h / 6.0 * (w0[i] + 2.0 * w2[i] + 2.0 * w3[i] + w4[i]);
            omega[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        Ok(())
    }

    /// Cartesian positions and velocities of each body.
    fn cartesian(&self, theta: &[f64], omega: &[f64], pos: &mut Vec<f64>, vel: &mut Vec<f64>) {
        let (mut x, mut y, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        for ((t, w), l) in theta.iter().zip(omega).zip(&self.lengths) {
            let (s, c) = t.sin_cos();
            x += l * s;
            y -= l * c;
            vx += l * c * w;
            vy += l * s * w;
            pos.extend([x, y]);
            vel.extend([vx, vy]);
        }
    }
}

/// Integrate from random angles in `[−π, π]`, at rest.
pub fn simulate_pendulum(cfg: &PendulumConfig, seed: u64) -> Result<PendulumTrajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0: Vec<f64> = (0..cfg.bodies())
        .map(|_| rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI))
        .collect();
    simulate_pendulum_from(cfg, &theta0, &vec![0.0; cfg.bodies()])
}

/// Integrate from explicit initial angles and angular velocities.
/// Stores `cfg.steps + 1` frames including the initial state.
pub fn simulate_pendulum_from(
    cfg: &PendulumConfig,
    theta0: &[f64],
    omega0: &[f64],
) -> Result<PendulumTrajectory> {
    cfg.validate()?;
    let n = cfg.bodies();
    if theta0.len() != n || omega0.len() != n {
        return Err(Error::invalid(
            "pendulum",
            "initial state length differs from body count",
        ));
    }
    let dynamics = Dynamics::new(cfg);
    let frames = cfg.steps + 1;
    let mut traj = PendulumTrajectory {
        bodies: n,
        h: cfg.h,
        masses: cfg.masses.clone(),
        lengths: cfg.lengths.clone(),
        g: cfg.g,
        angles: Vec::with_capacity(frames * n),
        angular_velocities: Vec::with_capacity(frames * n),
        positions: Vec::with_capacity(frames * 2 * n),
        velocities: Vec::with_capacity(frames * 2 * n),
        energy_drift: 0.0,
        energy_reference: 0.0,
    };
    let (mut theta, mut omega) = (theta0.to_vec(), omega0.to_vec());
    let dt = cfg.h / cfg.substeps as f64;
    for step in 0..frames {
        if step > 0 {
            for _ in 0..cfg.substeps {
                dynamics.rk4(&mut theta, &mut omega, dt)?;
            }
            if theta.iter().chain(&omega).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { iteration: step });
            }
        }
        traj.angles.extend_from_slice(&theta);
        traj.angular_velocities.extend_from_slice(&omega);
        dynamics.cartesian(&theta, &omega, &mut traj.positions, &mut traj.velocities);
    }

    let e0 = traj.energy(0);
    // a start near the zero-energy level would make the ratio meaningless
    let reference = e0.abs().max(1e-2 * cfg.energy_scale());
    let drift = (0..frames)
        .map(|i| (traj.energy(i) - e0).abs())
        .fold(0.0, f64::max)
        / reference;
    traj.energy_drift = drift;
    traj.energy_reference = reference;
    if drift > DRIFT_LIMIT {
        return Err(Error::EnergyDrift {
            drift,
            limit: DRIFT_LIMIT,
        });
    }
    Ok(traj)
}
