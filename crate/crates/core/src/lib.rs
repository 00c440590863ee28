//! Networked multi-agent Q-learning where each agent sets its Boltzmann
//! temperature from the disagreement of its neighbours' estimates.
//!
//! The crate contains the environments (a generic sparse tabular MDP and
//! the deep-sea chain), communication graphs, the exploration rule, tabular
//! and linear learners, two comparison learners, exact regret and coverage
//! metrics, and a harness that turns a JSON config into CSV artefacts.

pub mod baselines;
pub mod config;
pub mod deep_sea;
pub mod error;
pub mod explore;
pub mod gea;
pub mod linear;
pub mod mdp;
pub mod metrics;
pub mod network;
pub mod output;
pub mod qtable;
pub mod runner;

pub use config::{parse_config, AlgorithmConfig, ConfigError, EnvironmentConfig, RunConfig};
pub use deep_sea::DeepSeaSpec;
pub use error::{Error, Result};
pub use explore::{explore, Beta, ExplorationParams, ExplorationSnapshot};
pub use gea::{gea_continuous_step, gea_discrete_step, StepContext, StepOutcome};
pub use mdp::{policy_evaluation, value_iteration, TabularMdp};
pub use network::{build_topology, Graph, Topology};
pub use output::{run_experiment, sweep, RunOptions};
pub use qtable::{InitDistribution, QTable, StepSchedule};
pub use runner::{run_replication, Simulation};
