//! Experiment configuration: JSON schema, loading and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use brl_core::constructions::{chain_mdp, random_lowrank_mdp, random_mdp};
use brl_core::mdp::compute_occupancy;
use brl_core::{Algorithm, ClassSpec, DataDistribution, DeterministicPolicy, Table, TabularMdp};
use serde::{Deserialize, Serialize};

/// Where the model comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    File {
        path: PathBuf,
    },
    Random {
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
    LowRank {
        num_states: usize,
        num_actions: usize,
        latent_dim: usize,
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
    Chain {
        length: usize,
        gamma: f64,
    },
}

/// Where the data distribution comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MuSource {
    Uniform,
    /// `(1 - mix) d_pi + mix * uniform`; `mix = 0` needs a fully supported occupancy.
    Occupancy {
        policy: Vec<usize>,
        #[serde(default)]
        mix: f64,
    },
    Random {
        #[serde(default = "default_floor")]
        floor: f64,
        #[serde(default)]
        seed: u64,
    },
    /// JSON `S x A` table.
    File {
        path: PathBuf,
    },
}

fn default_floor() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Empirical,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub mu: MuSource,
    pub q_class: ClassSpec,
    /// Helper class for MSBO; the Q-class is reused when absent.
    #[serde(default)]
    pub f_class: Option<ClassSpec>,
    pub w_class: ClassSpec,
    pub algorithms: Vec<Algorithm>,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub mode: Mode,
    #[serde(default = "default_iterations")]
    pub fqi_iterations: usize,
    #[serde(default)]
    pub fqi_init: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_iterations() -> usize {
    20
}

fn default_t_max() -> usize {
    50
}

/// A config that failed to load; each entry is `field.path: message`.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid experiment config:")?;
        for problem in &self.0 {
            write!(f, "\n  {problem}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(vec![format!("config: cannot read {}: {e}", path.display())]))?;
        Self::from_json_str(&text, path.parent())
    }

    /// Parses and validates; relative file paths resolve against `base`.
    pub fn from_json_str(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            ConfigError(vec![format!("{field}: {}", e.inner())])
        })?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MdpSource::File { path } = &mut self.mdp {
            fix(path);
        }
        if let MuSource::File { path } = &mut self.mu {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n: must be at least 1".to_string());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            problems.push(format!("delta: {} is not in (0, 1)", self.delta));
        }
        if self.algorithms.is_empty() {
            problems.push("algorithms: at least one of fqi, msbo, mabo is required".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("seeds: at least one seed is required".to_string());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, s) in self.seeds.iter().enumerate() {
            if !seen.insert(s) {
                problems.push(format!("seeds[{i}]: duplicate seed {s}"));
            }
        }
        match &self.mdp {
            MdpSource::File { path } if !path.is_file() => {
                problems.push(format!("mdp.path: {} does not exist", path.display()));
            }
            MdpSource::Random { gamma, .. }
            | MdpSource::LowRank { gamma, .. }
            | MdpSource::Chain { gamma, .. }
                if !(*gamma > 0.0 && *gamma < 1.0) =>
            {
                problems.push(format!("mdp.gamma: {gamma} is not in (0, 1)"));
            }
            _ => {}
        }
        match &self.mu {
            MuSource::File { path } if !path.is_file() => {
                problems.push(format!("mu.path: {} does not exist", path.display()));
            }
            MuSource::Occupancy { mix, .. } if !(0.0..=1.0).contains(mix) => {
                problems.push(format!("mu.mix: {mix} is not in [0, 1]"));
            }
            MuSource::Random { floor, .. } if !(*floor >= 0.0) => {
                problems.push(format!("mu.floor: {floor} is negative"));
            }
            _ => {}
        }
        for (field, spec) in [("q_class", Some(&self.q_class)), ("f_class", self.f_class.as_ref())] {
            if let Some(spec) = spec {
                if !describes_q(spec) {
                    problems.push(format!("{field}.type: not a Q-class generator"));
                }
            }
        }
        if !describes_w(&self.w_class) {
            problems.push("w_class.type: not a weight-class generator".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(problems))
        }
    }
}

fn describes_q(spec: &ClassSpec) -> bool {
    matches!(
        spec,
        ClassSpec::Explicit { .. }
            | ClassSpec::Grid { .. }
            | ClassSpec::Perturbed { .. }
            | ClassSpec::Linear { .. }
    )
}

fn describes_w(spec: &ClassSpec) -> bool {
    matches!(
        spec,
        ClassSpec::Explicit { .. }
            | ClassSpec::Indicator { .. }
            | ClassSpec::ImportanceWeights
            | ClassSpec::Constant { .. }
    )
}

impl MdpSource {
    pub fn build(&self) -> brl_core::Result<TabularMdp> {
        Ok(match self {
            MdpSource::File { path } => TabularMdp::load(path)?,
            MdpSource::Random {
                num_states,
                num_actions,
                gamma,
                seed,
            } => random_mdp(*num_states, *num_actions, *gamma, *seed)?,
            MdpSource::LowRank {
                num_states,
                num_actions,
                latent_dim,
                gamma,
                seed,
            } => random_lowrank_mdp(*num_states, *num_actions, *latent_dim, *gamma, *seed)?.1,
            MdpSource::Chain { length, gamma } => chain_mdp(*length, *gamma)?.0,
        })
    }
}

impl MuSource {
    pub fn build(&self, mdp: &TabularMdp) -> brl_core::Result<DataDistribution> {
        let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
        match self {
            MuSource::Uniform => Ok(DataDistribution::uniform(s_n, a_n)),
            MuSource::Occupancy { policy, mix } => {
                let pi = DeterministicPolicy::new(policy.clone(), a_n)?;
                let d = compute_occupancy(mdp, &pi)?;
                let u = 1.0 / (s_n * a_n) as f64;
                DataDistribution::new(d.dist.map(|p| (1.0 - mix) * p + mix * u))
            }
            MuSource::Random { floor, seed } => Ok(DataDistribution::random(s_n, a_n, *floor, *seed)),
            MuSource::File { path } => {
                let text = std::fs::read_to_string(path)?;
                let table: Table = serde_json::from_str(&text)?;
                table.check_shape(s_n, a_n)?;
                DataDistribution::new(table)
            }
        }
    }
}
