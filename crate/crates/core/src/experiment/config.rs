use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::constraints::{PenaltyConfig, ProjectionConfig, Solver};
use crate::error::{Error, Result};
use crate::network::ConstraintMode;
use crate::training::BaseLoss;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Pendulum,
    Molecules,
    Denoise,
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(Self::Pendulum),
            "molecules" => Ok(Self::Molecules),
            "denoise" => Ok(Self::Denoise),
            other => Err(Error::Config(format!("unknown problem {other:?}"))),
        }
    }
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pendulum => "pendulum",
            Self::Molecules => "molecules",
            Self::Denoise => "denoise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Paper => "paper",
        }
    }
}

/// Constraint regime selected by name; strengths come from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeKind {
    None,
    Aux,
    Penalty,
    End,
    Smooth,
}

impl ModeKind {
    pub const ALL: [ModeKind; 5] = [
        Self::None,
        Self::Aux,
        Self::Penalty,
        Self::End,
        Self::Smooth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Aux => "aux",
            Self::Penalty => "penalty",
            Self::End => "end",
            Self::Smooth => "smooth",
        }
    }
}

impl FromStr for ModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Gamma,
    Eta,
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Self::Gamma),
            "eta" => Ok(Self::Eta),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gamma => "gamma",
            Self::Eta => "eta",
        }
    }
}

/// Fully resolved experiment settings. Lengths and tolerances are in the
/// data's own units: m (pendulum), pm (molecules), field units (denoise).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub profile: Profile,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub record_wall_time: bool,

    /// Pendulum bodies.
    pub bodies: usize,
    /// Pendulum integration steps, or stored molecular frames.
    pub steps: usize,
    /// Pendulum frame interval, s; molecular integration step, fs.
    pub h: f64,
    /// Pendulum RK4 substeps per frame, or molecular steps per frame.
    pub substeps: usize,
    pub molecules: usize,
    pub temperature: f64,
    pub grid: usize,
    pub sigma: f64,
    pub sigma_test: f64,
    pub k: usize,
    pub n_train: Vec<usize>,
    pub n_val: usize,
    pub n_test: usize,

    pub latent: usize,
    pub hidden: usize,
    pub layers: usize,
    pub initial_step: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub base_loss: BaseLoss,

    pub modes: Vec<ModeKind>,
    pub gamma: f64,
    pub eta: f64,
    pub relative_cap: f64,
    /// Solver for end projection.
    pub solver: Solver,
    /// Solver for the per-layer latent projection of smooth mode.
    pub latent_solver: Solver,
    pub max_iters: usize,
    pub tol: f64,
    pub safeguard: usize,

    pub sweep_parameter: SweepParameter,
    pub sweep_values: Vec<f64>,
}

impl ExperimentConfig {
    /// Profile defaults for a problem.
    pub fn defaults(problem: Problem, profile: Profile) -> Self {
        let desk = profile == Profile::Desk;
        let mut c = Self {
            problem,
            profile,
            out: PathBuf::from("results").join(problem.name()),
            seeds: vec![0, 1, 2],
            data_seed: 42,
            record_wall_time: false,
            bodies: 5,
            steps: 100_000,
            h: 1e-3,
            substeps: 2,
            molecules: 3,
            temperature: 300.0,
            grid: 64,
            sigma: 1.0,
            sigma_test: 10.0,
            k: 100,
            n_train: vec![100],
            n_val: 100,
            n_test: 1000,
            latent: if desk { 64 } else { 256 },
            hidden: if desk { 64 } else { 256 },
            layers: 8,
            initial_step: 1e-2,
            epochs: if desk { 30 } else { 100 },
            batch_size: 10,
            learning_rate: 1e-3,
            clip_norm: Some(10.0),
            base_loss: BaseLoss::Mse,
            modes: ModeKind::ALL.to_vec(),
            gamma: 3.0,
            eta: 3.0,
            relative_cap: 0.10,
            solver: Solver::GradientDescent,
            latent_solver: Solver::Newton,
            max_iters: 200,
            tol: 1e-4,
            safeguard: 4,
            sweep_parameter: SweepParameter::Gamma,
            sweep_values: vec![0.1, 1.0, 10.0, 100.0],
        };
        if !desk {
            c.n_train = vec![100, 1000, 10_000];
        }
        match problem {
            Problem::Pendulum => {}
            Problem::Molecules => {
                c.steps = if desk { 5000 } else { 20_000 };
                c.h = 0.1;
                c.substeps = 10;
                c.molecules = if desk { 3 } else { 16 };
                c.k = 50;
                c.gamma = 1.0;
                c.eta = 1.0;
                c.max_iters = 100;
                c.tol = 5e-2;
            }
            Problem::Denoise => {
                c.grid = if desk { 8 } else { 64 };
                c.k = 0;
                c.n_train = vec![100];
                c.n_val = 100;
                c.n_test = 100;
                c.latent = 2 * c.grid * c.grid;
                c.hidden = c.latent;
                c.layers = if desk { 4 } else { 8 };
                c.gamma = 1.0;
                c.eta = 1.0;
                c.solver = Solver::Newton;
                c.max_iters = 100;
                c.tol = 1e-3;
            }
        }
        c
    }

    pub fn max_n_train(&self) -> usize {
        self.n_train.iter().copied().max().unwrap_or(0)
    }

    pub fn penalty(&self, gamma: f64) -> PenaltyConfig {
        PenaltyConfig {
            gamma,
            relative_cap: self.relative_cap,
        }
    }

    /// Projection settings with the tolerance converted to model units.
    pub fn projection(&self, solver: Solver, model_scale: f64) -> ProjectionConfig {
        ProjectionConfig {
            max_iters: self.max_iters,
            tol: self.tol * model_scale,
            solver,
            step_safeguard: self.safeguard,
        }
    }

    pub fn mode(&self, kind: ModeKind, model_scale: f64) -> ConstraintMode {
        self.mode_with(kind, self.gamma, self.eta, model_scale)
    }

    pub fn mode_with(
        &self,
        kind: ModeKind,
        gamma: f64,
        eta: f64,
        model_scale: f64,
    ) -> ConstraintMode {
        match kind {
            ModeKind::None => ConstraintMode::None,
            ModeKind::Aux => ConstraintMode::AuxLoss { eta },
            ModeKind::Penalty => ConstraintMode::Penalty(self.penalty(gamma)),
            ModeKind::End => ConstraintMode::EndProjection {
                penalty: self.penalty(gamma),
                eta,
                projection: self.projection(self.solver, model_scale),
            },
            ModeKind::Smooth => ConstraintMode::SmoothProjection {
                penalty: self.penalty(gamma),
                eta,
                projection: self.projection(self.latent_solver, model_scale),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return bad("n_train must list positive counts");
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.layers == 0 {
            return bad("epochs, batch_size and layers must be positive");
        }
        if !(self.gamma >= 0.0 && self.eta >= 0.0) {
            return bad("gamma and eta must be >= 0");
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return bad("projection needs tol > 0 and max_iters >= 1");
        }
        if !(self.sigma >= 0.0) || !(self.sigma_test >= 0.0) {
            return bad("noise levels must be >= 0");
        }
        if !(self.learning_rate > 0.0) || !(self.initial_step > 0.0) || !(self.h > 0.0) {
            return bad("learning_rate, initial_step and h must be > 0");
        }
        if self.sweep_values.iter().any(|v| !(*v >= 0.0)) {
            return bad("sweep values must be >= 0");
        }
        Ok(())
    }

    /// Parse INI text; keys absent from the text keep the profile defaults
    /// (`profile_override` takes precedence over the file's profile).
    pub fn parse(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut entries: BTreeMap<(String, String), String> = BTreeMap::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("experiment").to_string();
            for (k, v) in props.iter() {
                entries.insert((section.clone(), k.to_string()), v.trim().to_string());
            }
        }
        let mut take =
            |section: &str, key: &str| entries.remove(&(section.to_string(), key.to_string()));

        let problem: Problem = take("experiment", "problem")
            .ok_or_else(|| Error::Config("missing experiment.problem".into()))?
            .parse()?;
        let file_profile = take("experiment", "profile")
            .map(|p| p.parse())
            .transpose()?;
        let profile = profile_override.or(file_profile).unwrap_or(Profile::Desk);
        let mut c = Self::defaults(problem, profile);

        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse(key, s))
                .collect()
        }
        macro_rules! set {
            ($section:literal, $key:literal, $field:expr) => {
                if let Some(v) = take($section, $key) {
                    $field = parse($key, &v)?;
                }
            };
        }
        macro_rules! set_list {
            ($section:literal, $key:literal, $field:expr) => {
                if let Some(v) = take($section, $key) {
                    $field = list($key, &v)?;
                }
            };
        }

        if let Some(v) = take("experiment", "out") {
            c.out = PathBuf::from(v);
        }
        set_list!("experiment", "seeds", c.seeds);
        set!("experiment", "data_seed", c.data_seed);
        set!("experiment", "record_wall_time", c.record_wall_time);

        set!("data", "bodies", c.bodies);
        set!("data", "steps", c.steps);
        set!("data", "h", c.h);
        set!("data", "substeps", c.substeps);
        set!("data", "molecules", c.molecules);
        set!("data", "temperature", c.temperature);
        set!("data", "grid", c.grid);
        set!("data", "sigma", c.sigma);
        set!("data", "sigma_test", c.sigma_test);
        set!("data", "k", c.k);
        set_list!("data", "n_train", c.n_train);
        set!("data", "n_val", c.n_val);
        set!("data", "n_test", c.n_test);

        set!("model", "latent", c.latent);
        set!("model", "hidden", c.hidden);
        set!("model", "layers", c.layers);
        set!("model", "initial_step", c.initial_step);

        set!("train", "epochs", c.epochs);
        set!("train", "batch_size", c.batch_size);
        set!("train", "learning_rate", c.learning_rate);
        if let Some(v) = take("train", "clip_norm") {
            c.clip_norm = match v.as_str() {
                "none" | "off" => None,
                v => Some(parse("clip_norm", v)?),
            };
        }
        set!("train", "base_loss", c.base_loss);

        set_list!("constraint", "mode", c.modes);
        let gamma_given = take("constraint", "gamma");
        let eta_given = take("constraint", "eta");
        if c.modes.iter().all(|m| *m == ModeKind::None)
            && (gamma_given.is_some() || eta_given.is_some())
        {
            log::warn!("mode none takes no constraint strengths; ignoring gamma/eta");
        } else {
            if let Some(v) = gamma_given {
                c.gamma = parse("gamma", &v)?;
            }
            if let Some(v) = eta_given {
                c.eta = parse("eta", &v)?;
            }
        }
        set!("constraint", "relative_cap", c.relative_cap);
        set!("constraint", "solver", c.solver);
        set!("constraint", "latent_solver", c.latent_solver);
        set!("constraint", "max_iters", c.max_iters);
        set!("constraint", "tol", c.tol);
        set!("constraint", "safeguard", c.safeguard);

        set!("sweep", "parameter", c.sweep_parameter);
        set_list!("sweep", "values", c.sweep_values);

        if let Some(((section, key), _)) = entries.into_iter().next() {
            return Err(Error::Config(format!("unknown key {section}.{key}")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, profile_override: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text, profile_override)
    }

    /// Every setting as INI text; parses back to an equal config.
    pub fn to_ini(&self) -> String {
        fn join<T: std::fmt::Display>(v: &[T]) -> String {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, "[experiment]").unwrap();
        writeln!(w, "problem = {}", self.problem.name()).unwrap();
        writeln!(w, "profile = {}", self.profile.name()).unwrap();
        writeln!(w, "out = {}", self.out.display()).unwrap();
        writeln!(w, "seeds = {}", join(&self.seeds)).unwrap();
        writeln!(w, "data_seed = {}", self.data_seed).unwrap();
        writeln!(w, "record_wall_time = {}", self.record_wall_time).unwrap();
        writeln!(w, "\n[data]").unwrap();
        writeln!(w, "bodies = {}", self.bodies).unwrap();
        writeln!(w, "steps = {}", self.steps).unwrap();
        writeln!(w, "h = {}", self.h).unwrap();
        writeln!(w, "substeps = {}", self.substeps).unwrap();
        writeln!(w, "molecules = {}", self.molecules).unwrap();
        writeln!(w, "temperature = {}", self.temperature).unwrap();
        writeln!(w, "grid = {}", self.grid).unwrap();
        writeln!(w, "sigma = {}", self.sigma).unwrap();
        writeln!(w, "sigma_test = {}", self.sigma_test).unwrap();
        writeln!(w, "k = {}", self.k).unwrap();
        writeln!(w, "n_train = {}", join(&self.n_train)).unwrap();
        writeln!(w, "n_val = {}", self.n_val).unwrap();
        writeln!(w, "n_test = {}", self.n_test).unwrap();
        writeln!(w, "\n[model]").unwrap();
        writeln!(w, "latent = {}", self.latent).unwrap();
        writeln!(w, "hidden = {}", self.hidden).unwrap();
        writeln!(w, "layers = {}", self.layers).unwrap();
        writeln!(w, "initial_step = {}", self.initial_step).unwrap();
        writeln!(w, "\n[train]").unwrap();
        writeln!(w, "epochs = {}", self.epochs).unwrap();
        writeln!(w, "batch_size = {}", self.batch_size).unwrap();
        writeln!(w, "learning_rate = {}", self.learning_rate).unwrap();
        match self.clip_norm {
            Some(c) => writeln!(w, "clip_norm = {c}").unwrap(),
            None => writeln!(w, "clip_norm = none").unwrap(),
        }
        let base = match self.base_loss {
            BaseLoss::Mse => "mse",
            BaseLoss::Mae => "mae",
        };
        writeln!(w, "base_loss = {base}").unwrap();
        writeln!(w, "\n[constraint]").unwrap();
        let modes: Vec<&str> = self.modes.iter().map(|m| m.name()).collect();
        writeln!(w, "mode = {}", modes.join(",")).unwrap();
        writeln!(w, "gamma = {}", self.gamma).unwrap();
        writeln!(w, "eta = {}", self.eta).unwrap();
        writeln!(w, "relative_cap = {}", self.relative_cap).unwrap();
        writeln!(w, "solver = {}", self.solver).unwrap();
        writeln!(w, "latent_solver = {}", self.latent_solver).unwrap();
        writeln!(w, "max_iters = {}", self.max_iters).unwrap();
        writeln!(w, "tol = {}", self.tol).unwrap();
        writeln!(w, "safeguard = {}", self.safeguard).unwrap();
        writeln!(w, "\n[sweep]").unwrap();
        writeln!(w, "parameter = {}", self.sweep_parameter.name()).unwrap();
        writeln!(w, "values = {}", join(&self.sweep_values)).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_profile_defaults() {
        let c = ExperimentConfig::parse("[experiment]\nproblem = pendulum\n", None).unwrap();
        assert_eq!(
            c,
            ExperimentConfig::defaults(Problem::Pendulum, Profile::Desk)
        );
        assert_eq!(c.latent, 64);
        assert_eq!(c.epochs, 30);
    }

    #[test]
    fn round_trips_through_text() {
        for problem in [Problem::Pendulum, Problem::Molecules, Problem::Denoise] {
            for profile in [Profile::Desk, Profile::Paper] {
                let mut c = ExperimentConfig::defaults(problem, profile);
                c.clip_norm = None;
                c.learning_rate = 3.3e-4;
                c.modes = vec![ModeKind::Smooth, ModeKind::None];
                let back = ExperimentConfig::parse(&c.to_ini(), None).unwrap();
                assert_eq!(back, c);
            }
        }
    }

    #[test]
    fn lists_and_overrides() {
        let text =
            "[experiment]\nproblem = pendulum\nprofile = paper\n[data]\nn_train = 100, 1000\n\
                    [constraint]\nmode = none,smooth\ngamma = 10\nsolver = newton\n";
        let c = ExperimentConfig::parse(text, Some(Profile::Desk)).unwrap();
        assert_eq!(c.profile, Profile::Desk);
        assert_eq!(c.n_train, vec![100, 1000]);
        assert_eq!(c.modes, vec![ModeKind::None, ModeKind::Smooth]);
        assert_eq!(c.gamma, 10.0);
        assert_eq!(c.solver, Solver::Newton);
    }

    #[test]
    fn gamma_ignored_for_mode_none() {
        let text = "[experiment]\nproblem = pendulum\n[constraint]\nmode = none\ngamma = 7\n";
        let c = ExperimentConfig::parse(text, None).unwrap();
        assert_eq!(c.gamma, 3.0);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let base = "[experiment]\nproblem = pendulum\n";
        assert!(matches!(
            ExperimentConfig::parse("[experiment]\n", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse(&format!("{base}[train]\nepoch = 3\n"), None),
            Err(Error::Config(_))
        ));
        assert!(
            ExperimentConfig::parse(&format!("{base}[train]\nepochs = three\n"), None).is_err()
        );
        assert!(
            ExperimentConfig::parse(&format!("{base}[constraint]\nmode = bogus\n"), None).is_err()
        );
        assert!(ExperimentConfig::parse(&format!("{base}[constraint]\neta = -1\n"), None).is_err());
    }
}
