//! Experiment configuration: a strict JSON document, validated on load.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::WeightMode;
use crate::deep_sea::DeepSeaSpec;
use crate::explore::ExplorationParams;
use crate::linear::FeatureKind;
use crate::network::Topology;
use crate::qtable::{InitDistribution, StepSchedule};

/// Which standing condition of the convergence argument a field violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    StepSizes,
    Initialization,
    Reachability,
    BoundedRewards,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::StepSizes => "step-size condition: steps must sum to infinity with summable squares",
            Condition::Initialization => {
                "initialization condition: estimates start i.i.d. from a zero-mean bounded distribution"
            }
            Condition::Reachability => "reachability condition: every state set must reach every other",
            Condition::BoundedRewards => "bounded-reward condition: rewards must lie in a finite interval",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{field}: {message}{}", .condition.map(|c| format!(" ({c})")).unwrap_or_default())]
    Invalid { field: String, message: String, condition: Option<Condition> },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into(), condition: None }
}

fn violates(field: &str, message: impl Into<String>, condition: Condition) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into(), condition: Some(condition) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    DeepSea {
        depth: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        move_right_cost: Option<f64>,
        #[serde(default = "one")]
        treasure_reward: f64,
    },
    RandomMdp {
        states: usize,
        actions: usize,
        sparsity: f64,
        /// Generator seed; the same MDP is used by every replication.
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl EnvironmentConfig {
    pub fn depth(&self) -> Option<usize> {
        match self {
            EnvironmentConfig::DeepSea { depth, .. } => Some(*depth),
            EnvironmentConfig::RandomMdp { .. } => None,
        }
    }

    pub fn deep_sea_spec(&self, gamma: f64) -> Option<DeepSeaSpec> {
        match *self {
            EnvironmentConfig::DeepSea { depth, move_right_cost, treasure_reward } => {
                Some(DeepSeaSpec { depth, move_right_cost, treasure_reward, discount: gamma })
            }
            EnvironmentConfig::RandomMdp { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            EnvironmentConfig::DeepSea { depth, .. } => format!("deep_sea-h{depth}"),
            EnvironmentConfig::RandomMdp { states, actions, .. } => format!("random_mdp-s{states}a{actions}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: Topology,
    pub agents: usize,
    #[serde(default = "yes")]
    pub self_inclusive: bool,
    #[serde(default)]
    pub extra_edge_prob: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    GeaDiscrete,
    GeaContinuous {
        #[serde(default = "default_features")]
        features: FeatureKind,
    },
    Gucb {
        #[serde(default = "default_beta_const")]
        beta_const: f64,
        #[serde(default = "one")]
        iota: f64,
        #[serde(default)]
        w_mode: WeightMode,
        /// Start every non-terminal estimate at `H * r_max` instead of
        /// drawing from `init`.
        #[serde(default = "yes")]
        optimistic_init: bool,
    },
    EpsilonGreedy {
        epsilon: f64,
    },
}

fn default_features() -> FeatureKind {
    FeatureKind::OneHot
}

fn default_beta_const() -> f64 {
    0.01
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::GeaDiscrete => "gea_discrete",
            AlgorithmConfig::GeaContinuous { .. } => "gea_continuous",
            AlgorithmConfig::Gucb { .. } => "gucb",
            AlgorithmConfig::EpsilonGreedy { .. } => "epsilon_greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub episodes: usize,
    /// Episode length for MDPs without a natural horizon.
    #[serde(default = "default_max_steps")]
    pub max_steps_per_episode: usize,
    #[serde(default = "one_usize")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Episodes between exact policy evaluations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_cadence: Option<usize>,
    #[serde(default = "one_u64")]
    pub coverage_threshold: u64,
}

fn default_max_steps() -> usize {
    100
}

fn one_usize() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub emit_traces: bool,
}

fn default_directory() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: default_directory(), emit_traces: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentConfig,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub graph: GraphConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub init: InitDistribution,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub exploration: ExplorationParams,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_gamma() -> f64 {
    0.99
}

impl RunConfig {
    /// Deep sea, 5-agent self-inclusive ring, tabular GEA.
    pub fn deep_sea_default(depth: usize, episodes: usize) -> Self {
        Self {
            environment: EnvironmentConfig::DeepSea { depth, move_right_cost: None, treasure_reward: 1.0 },
            gamma: default_gamma(),
            graph: GraphConfig { kind: Topology::Ring, agents: 5, self_inclusive: true, extra_edge_prob: 0.0 },
            algorithm: AlgorithmConfig::GeaDiscrete,
            init: InitDistribution::default(),
            schedule: StepSchedule::default(),
            exploration: ExplorationParams::default(),
            run: RunBlock {
                episodes,
                max_steps_per_episode: default_max_steps(),
                replications: 1,
                base_seed: 0,
                eval_cadence: None,
                coverage_threshold: 1,
            },
            output: OutputBlock::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Steps per episode: the depth for deep sea, the configured cap otherwise.
    pub fn episode_length(&self) -> usize {
        self.environment.depth().unwrap_or(self.run.max_steps_per_episode)
    }

    pub fn eval_cadence(&self) -> usize {
        self.run.eval_cadence.unwrap_or(match self.environment.depth() {
            Some(h) if h > 10 => 5,
            _ => 1,
        })
    }

    pub fn run_id(&self) -> String {
        format!("{}-{}", self.algorithm.name(), self.environment.label())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("discount must lie in (0, 1), got {}", self.gamma)));
        }
        match self.environment {
            EnvironmentConfig::DeepSea { depth, move_right_cost, treasure_reward } => {
                if depth < 2 {
                    return Err(invalid("environment.depth", format!("must be at least 2, got {depth}")));
                }
                if let Some(c) = move_right_cost {
                    if !(c.is_finite() && c >= 0.0) {
                        return Err(violates(
                            "environment.move_right_cost",
                            format!("must be finite and >= 0, got {c}"),
                            Condition::BoundedRewards,
                        ));
                    }
                }
                if !treasure_reward.is_finite() {
                    return Err(violates("environment.treasure_reward", "must be finite", Condition::BoundedRewards));
                }
            }
            EnvironmentConfig::RandomMdp { states, actions, sparsity, .. } => {
                if states < 2 || actions < 2 {
                    return Err(violates(
                        "environment",
                        format!("random MDPs need at least 2 states and 2 actions, got {states}x{actions}"),
                        Condition::Reachability,
                    ));
                }
                if !(0.0..=1.0).contains(&sparsity) {
                    return Err(invalid("environment.sparsity", format!("must lie in [0, 1], got {sparsity}")));
                }
                if self.run.max_steps_per_episode == 0 {
                    return Err(invalid("run.max_steps_per_episode", "must be at least 1"));
                }
            }
        }
        if self.graph.agents < self.graph.kind.min_agents() {
            return Err(invalid(
                "graph.agents",
                format!(
                    "{} needs at least {} agents, got {}",
                    self.graph.kind,
                    self.graph.kind.min_agents(),
                    self.graph.agents
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.graph.extra_edge_prob) {
            return Err(invalid(
                "graph.extra_edge_prob",
                format!("must lie in [0, 1], got {}", self.graph.extra_edge_prob),
            ));
        }
        match &self.algorithm {
            AlgorithmConfig::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                return Err(invalid("algorithm.epsilon", format!("must lie in [0, 1], got {epsilon}")));
            }
            AlgorithmConfig::Gucb { beta_const, iota, .. } => {
                if !(beta_const.is_finite() && *beta_const > 0.0) {
                    return Err(invalid("algorithm.beta_const", format!("must be positive, got {beta_const}")));
                }
                if !(iota.is_finite() && *iota > 0.0) {
                    return Err(invalid("algorithm.iota", format!("must be positive, got {iota}")));
                }
            }
            AlgorithmConfig::GeaContinuous { features: FeatureKind::DeepSeaTiles { tilings, width } } => {
                if self.environment.depth().is_none() {
                    return Err(invalid("algorithm.features", "deep_sea_tiles requires the deep_sea environment"));
                }
                if *tilings == 0 || *width == 0 {
                    return Err(invalid("algorithm.features", "tilings and width must be at least 1"));
                }
            }
            _ => {}
        }
        let scale = self.init.scale();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(violates(
                "init.scale",
                format!("must be positive and finite, got {scale}"),
                Condition::Initialization,
            ));
        }
        self.schedule.validate().map_err(|m| violates("schedule", m, Condition::StepSizes))?;
        let ex = &self.exploration;
        if !(ex.alpha_clamp > 0.0 && ex.alpha_clamp <= 0.25) {
            return Err(invalid("exploration.alpha_clamp", format!("must lie in (0, 1/4], got {}", ex.alpha_clamp)));
        }
        if !(ex.sigma_floor.is_finite() && ex.sigma_floor > 0.0) {
            return Err(invalid("exploration.sigma_floor", format!("must be positive, got {}", ex.sigma_floor)));
        }
        if self.run.replications == 0 {
            return Err(invalid("run.replications", "must be at least 1"));
        }
        if self.run.eval_cadence == Some(0) {
            return Err(invalid("run.eval_cadence", "must be at least 1"));
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
    RunConfig::from_json(&text)
}
