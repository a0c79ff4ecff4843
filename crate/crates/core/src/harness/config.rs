//! Experiment configuration as flat `section.key = value` text.
//!
//! The text is TOML, so both dotted keys and `[section]` tables parse.
//! Every key is optional; missing keys take the defaults below.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{AngleLaw, GainLaw, MultipathSpec, SteeringConfig};
use crate::ddpg::{AgentConfig, NoiseConfig, NoiseKind};
use crate::env::{ChannelSource, EpisodeConfig};
use crate::neural::{Activation, NetworkShape};
use crate::noma::{LinkBudget, OracleGrid};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    /// Total transmit power over noise power, in dB; noise variance is 1.
    pub snr_db: f64,
    pub min_rate1: f64,
    pub min_rate2: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            snr_db: 30.0,
            min_rate1: 1.0,
            min_rate2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub n_antennas: usize,
    pub n_paths: usize,
    pub dominant_variance: f64,
    pub secondary_variance: f64,
    /// When set, every step sees the one pair drawn from this seed.
    pub fixed_seed: Option<u64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            n_antennas: 16,
            n_paths: 3,
            dominant_variance: 1.0,
            secondary_variance: 0.1,
            fixed_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorOutput {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    Gaussian,
    Ou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseLaw,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub ou_theta: f64,
    pub ou_dt: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: NoiseLaw::Gaussian,
            sigma_start: 0.2,
            sigma_end: 0.02,
            ou_theta: 0.15,
            ou_dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub score_window: usize,
    pub hidden_width: usize,
    pub actor_hidden_layers: usize,
    pub critic_hidden_layers: usize,
    pub actor_output: ActorOutput,
    pub final_init_range: f64,
    pub noise: NoiseSection,
}

impl Default for AgentSection {
    fn default() -> Self {
        let agent = AgentConfig::default();
        let shape = NetworkShape::default();
        Self {
            gamma: agent.gamma,
            actor_lr: agent.actor_lr,
            critic_lr: agent.critic_lr,
            tau: agent.tau,
            batch_size: agent.batch_size,
            buffer_capacity: agent.buffer_capacity,
            episodes: agent.episodes,
            steps_per_episode: 250,
            score_window: agent.score_window,
            hidden_width: shape.hidden_width,
            actor_hidden_layers: shape.actor_hidden_layers,
            critic_hidden_layers: shape.critic_hidden_layers,
            actor_output: ActorOutput::Identity,
            final_init_range: shape.final_init_range,
            noise: NoiseSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Paired channel draws per evaluation point.
    pub draws: usize,
    pub oracle_points: usize,
    /// Zoom refinement on top of the plain grid.
    pub oracle_refine: bool,
    /// Draws used by `oracle-check`, which is far costlier per draw.
    pub oracle_draws: usize,
    /// Largest array for which the oracle is run.
    pub oracle_max_antennas: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            draws: 1000,
            oracle_points: 41,
            oracle_refine: true,
            oracle_draws: 200,
            oracle_max_antennas: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub min_rate: Vec<f64>,
    /// Train a point whose checkpoint is missing instead of failing.
    pub train_if_missing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            min_rate: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            train_if_missing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub link: LinkSection,
    pub channel: ChannelSection,
    pub agent: AgentSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// One `section.key = value` line per setting, sorted by key.
    pub fn to_flat_string(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.episode_config().map_err(|e| invalid(e.to_string()))?;
        self.agent_config().validate().map_err(|e| invalid(e.to_string()))?;
        if self.eval.draws == 0 || self.eval.oracle_draws == 0 {
            return Err(invalid("evaluation needs at least one draw".into()));
        }
        if self.eval.oracle_points < 3 {
            return Err(invalid("oracle grid needs at least 3 points".into()));
        }
        if self.agent.actor_hidden_layers == 0 || self.agent.critic_hidden_layers == 0 {
            return Err(invalid("networks need at least one hidden layer".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> Result<LinkBudget<f64>, crate::noma::NomaError> {
        LinkBudget::from_snr_db(self.link.snr_db, (self.link.min_rate1, self.link.min_rate2))
    }

    pub fn multipath(&self) -> MultipathSpec<f64> {
        MultipathSpec {
            n_paths: self.channel.n_paths,
            gains: GainLaw::ComplexGaussian {
                dominant_variance: self.channel.dominant_variance,
                secondary_variance: self.channel.secondary_variance,
            },
            angles: AngleLaw::Uniform {
                low: 0.0,
                high: std::f64::consts::PI,
            },
        }
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig<f64>, crate::env::EnvError> {
        let steering = SteeringConfig::new(self.channel.n_antennas)?;
        let spec = self.multipath();
        let source = match self.channel.fixed_seed {
            Some(seed) => ChannelSource::Fixed(crate::channel::sample_ordered_pair_seeded(&spec, &steering, seed)?),
            None => ChannelSource::Fresh,
        };
        let cfg = EpisodeConfig {
            steps_per_episode: self.agent.steps_per_episode,
            budget: self.budget()?,
            spec,
            steering,
            source,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.agent;
        AgentConfig {
            gamma: a.gamma,
            actor_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            tau: a.tau,
            batch_size: a.batch_size,
            buffer_capacity: a.buffer_capacity,
            noise: NoiseConfig {
                kind: match a.noise.kind {
                    NoiseLaw::Gaussian => NoiseKind::Gaussian,
                    NoiseLaw::Ou => NoiseKind::OrnsteinUhlenbeck {
                        theta: a.noise.ou_theta,
                        dt: a.noise.ou_dt,
                    },
                },
                sigma_start: a.noise.sigma_start,
                sigma_end: a.noise.sigma_end,
            },
            episodes: a.episodes,
            score_window: a.score_window,
            network: NetworkShape {
                hidden_width: a.hidden_width,
                actor_hidden_layers: a.actor_hidden_layers,
                critic_hidden_layers: a.critic_hidden_layers,
                actor_output: match a.actor_output {
                    ActorOutput::Identity => Activation::Identity,
                    ActorOutput::Tanh => Activation::Tanh,
                },
                final_init_range: a.final_init_range,
            },
        }
    }

    pub fn oracle_grid(&self) -> OracleGrid {
        if self.eval.oracle_refine {
            OracleGrid {
                points: self.eval.oracle_points,
                ..OracleGrid::default()
            }
        } else {
            OracleGrid::plain(self.eval.oracle_points)
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push(format!("{prefix} = {other}")),
    }
}
