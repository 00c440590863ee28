//! Experiment orchestration.
//!
//! A replication builds the environment, the graph and one learner per
//! agent, then runs episodes of lockstep iterations. In every iteration all
//! agents first read their neighbours' published estimates at their own
//! current state (read phase), then act and update their own estimates
//! (write phase). Each agent draws from its own random stream, so the
//! result does not depend on how agents or replications are scheduled.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{
    epsilon_greedy_policy, epsilon_greedy_step, gucb_policy, gucb_step, optimistic_table, GucbParams,
};
use crate::config::{AlgorithmConfig, EnvironmentConfig, RunConfig};
use crate::error::Result;
use crate::explore::ExplorationSnapshot;
use crate::gea::{gea_continuous_step, gea_discrete_step, StepContext, StepOutcome};
use crate::linear::{DeepSeaTiles, FeatureKind, FeatureMap, LinearQ};
use crate::mdp::{random_mdp, value_iteration, DeterministicPolicy, OptimalSolution, StochasticPolicy, TabularMdp};
use crate::metrics::{coverage_report, interpolate, snapshot_policy, AgentVisits, RegretLedger, VisitCounter};
use crate::network::{build_topology, Graph};
use crate::qtable::QTable;

/// Tolerance of the dynamic-programming oracle and of policy evaluation.
pub const DP_TOL: f64 = 1e-10;

const STREAM_GRAPH: u64 = 0;
const STREAM_AGENT_INIT: u64 = 1 << 32;
const STREAM_AGENT_ACT: u64 = 2 << 32;

/// Independent ChaCha stream `id` under `seed`.
pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn replication_seed(cfg: &RunConfig, replication: usize) -> u64 {
    cfg.run.base_seed.wrapping_add(replication as u64)
}

/// Environment built from a config.
pub fn build_environment(cfg: &RunConfig) -> Result<TabularMdp> {
    Ok(match cfg.environment {
        EnvironmentConfig::DeepSea { .. } => cfg.environment.deep_sea_spec(cfg.gamma).expect("deep sea").build()?,
        EnvironmentConfig::RandomMdp { states, actions, sparsity, seed } => {
            random_mdp(states, actions, sparsity, cfg.gamma, seed)?
        }
    })
}

/// Non-terminal states reachable from `start`, ascending.
pub fn reachable_states(mdp: &TabularMdp, start: usize) -> Vec<usize> {
    let mut seen = vec![false; mdp.num_states()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(s) = queue.pop_front() {
        for a in 0..mdp.num_actions() {
            for o in mdp.outcomes(s, a) {
                if !seen[o.next] {
                    seen[o.next] = true;
                    queue.push_back(o.next);
                }
            }
        }
    }
    (0..mdp.num_states()).filter(|&s| seen[s] && !mdp.is_terminal(s)).collect()
}

enum Learners {
    Tabular(Vec<QTable>),
    Linear(Vec<LinearQ>),
}

/// One decision of one agent, handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub step: u64,
    pub episode: usize,
    pub agent: usize,
    pub state: usize,
    /// `c_k(s)` including this visit.
    pub state_visits: u64,
    pub outcome: &'a StepOutcome,
    pub snapshot: Option<&'a ExplorationSnapshot>,
}

/// Everything a replication produces, before any I/O.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub ledger: RegretLedger,
    /// `(step, coverage_fraction, min_count)` at every evaluation point.
    pub coverage: Vec<(u64, f64, u64)>,
    pub greedy: Vec<DeterministicPolicy>,
    pub visits: VisitCounter,
    pub steps: u64,
}

/// Mutable state of one replication.
pub struct Simulation {
    cfg: RunConfig,
    mdp: TabularMdp,
    graph: Graph,
    optimal: OptimalSolution,
    learners: Learners,
    visits: Vec<AgentVisits>,
    rngs: Vec<ChaCha8Rng>,
    states: Vec<usize>,
    sigma_q_sq: f64,
    coverage_states: Vec<usize>,
    step: u64,
}

impl Simulation {
    pub fn new(cfg: &RunConfig, replication: usize) -> Result<Self> {
        cfg.validate()?;
        let seed = replication_seed(cfg, replication);
        let mdp = build_environment(cfg)?;
        let graph_seed = rng_stream(seed, STREAM_GRAPH).next_u64();
        let graph = build_topology(
            cfg.graph.kind,
            cfg.graph.agents,
            cfg.graph.extra_edge_prob,
            graph_seed,
            cfg.graph.self_inclusive,
        )?;
        let optimal = value_iteration(&mdp, DP_TOL)?;
        let k = graph.num_agents();
        let mut init_rngs: Vec<ChaCha8Rng> = (0..k as u64).map(|a| rng_stream(seed, STREAM_AGENT_INIT + a)).collect();
        let learners = match &cfg.algorithm {
            AlgorithmConfig::GeaContinuous { features } => {
                Learners::Linear(match *features {
                    // same draws as the tabular learner, terminal rows included
                    FeatureKind::OneHot => init_rngs
                        .iter_mut()
                        .map(|rng| LinearQ::from_table(&QTable::random(&mdp, &cfg.init, rng)))
                        .collect(),
                    FeatureKind::DeepSeaTiles { tilings, width } => {
                        let spec = cfg.environment.deep_sea_spec(cfg.gamma).expect("validated deep sea");
                        let map: Arc<dyn FeatureMap> = Arc::new(DeepSeaTiles::new(spec, tilings, width)?);
                        init_rngs.iter_mut().map(|rng| LinearQ::random(Arc::clone(&map), &cfg.init, rng)).collect()
                    }
                })
            }
            AlgorithmConfig::Gucb { optimistic_init: true, .. } => {
                Learners::Tabular(vec![optimistic_table(&mdp, cfg.episode_length()); k])
            }
            _ => Learners::Tabular(init_rngs.iter_mut().map(|rng| QTable::random(&mdp, &cfg.init, rng)).collect()),
        };
        let coverage_states = reachable_states(&mdp, mdp.initial_state());
        Ok(Self {
            visits: vec![AgentVisits::new(mdp.num_states(), mdp.num_actions()); k],
            rngs: (0..k as u64).map(|a| rng_stream(seed, STREAM_AGENT_ACT + a)).collect(),
            states: vec![mdp.initial_state(); k],
            sigma_q_sq: cfg.init.variance(),
            cfg: cfg.clone(),
            mdp,
            graph,
            optimal,
            learners,
            coverage_states,
            step: 0,
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn optimal(&self) -> &OptimalSolution {
        &self.optimal
    }

    pub fn visits(&self) -> &[AgentVisits] {
        &self.visits
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn gucb_params(&self, agent: usize) -> Option<GucbParams> {
        match self.cfg.algorithm {
            AlgorithmConfig::Gucb { beta_const, iota, w_mode, .. } => {
                let n = self.graph.neighbourhood(agent).expect("agent in range").len();
                Some(GucbParams {
                    beta_const,
                    horizon: self.cfg.episode_length(),
                    iota,
                    weight: w_mode.weight(n, self.graph.num_agents()),
                })
            }
            _ => None,
        }
    }

    /// Current estimate row of agent `k` at `s`.
    pub fn estimates(&self, k: usize, s: usize) -> Result<Vec<f64>> {
        Ok(match &self.learners {
            Learners::Tabular(tables) => tables[k].row(s).to_vec(),
            Learners::Linear(models) => models[k].row(s)?,
        })
    }

    /// Greedy policy of every agent with respect to its own estimates.
    pub fn greedy_policies(&self) -> Result<Vec<DeterministicPolicy>> {
        let (ns, na) = (self.mdp.num_states(), self.mdp.num_actions());
        (0..self.graph.num_agents())
            .map(|k| {
                let mut values = Vec::with_capacity(ns * na);
                for s in 0..ns {
                    values.extend(self.estimates(k, s)?);
                }
                Ok(QTable::from_values(na, values).greedy_policy())
            })
            .collect()
    }

    pub fn reset_episode(&mut self) {
        self.states.fill(self.mdp.initial_state());
    }

    /// One lockstep iteration; `observe` sees every agent's decision.
    pub fn iterate(&mut self, episode: usize, observe: &mut dyn FnMut(&StepRecord<'_>)) -> Result<()> {
        let k_total = self.graph.num_agents();
        let ctx = StepContext {
            mdp: &self.mdp,
            schedule: self.cfg.schedule,
            params: self.cfg.exploration,
            sigma_q_sq: self.sigma_q_sq,
        };
        let gucb: Vec<Option<GucbParams>> = (0..k_total).map(|k| self.gucb_params(k)).collect();
        let outcomes: Vec<StepOutcome> = match &mut self.learners {
            Learners::Tabular(tables) => {
                // read phase: copy every neighbourhood row before any write
                let published: Vec<Vec<Vec<f64>>> = (0..k_total)
                    .map(|k| {
                        let s = self.states[k];
                        let n = self.graph.neighbourhood(k).expect("agent in range");
                        n.iter().map(|&l| tables[l].row(s).to_vec()).collect()
                    })
                    .collect();
                let counts: Vec<Vec<Vec<u64>>> = if gucb[0].is_some() {
                    (0..k_total)
                        .map(|k| {
                            let s = self.states[k];
                            let n = self.graph.neighbourhood(k).expect("agent in range");
                            n.iter().map(|&l| self.visits[l].row(s).to_vec()).collect()
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let mut outcomes = Vec::with_capacity(k_total);
                for k in 0..k_total {
                    let s = self.states[k];
                    let (q, visits, rng) = (&mut tables[k], &mut self.visits[k], &mut self.rngs[k]);
                    let out = match &self.cfg.algorithm {
                        AlgorithmConfig::GeaDiscrete => {
                            let rows: Vec<&[f64]> = published[k].iter().map(Vec::as_slice).collect();
                            gea_discrete_step(q, visits, &rows, s, &ctx, rng)?
                        }
                        AlgorithmConfig::Gucb { .. } => {
                            let rows: Vec<&[u64]> = counts[k].iter().map(Vec::as_slice).collect();
                            gucb_step(q, visits, &rows, s, &ctx, gucb[k].as_ref().expect("gucb params"), rng)?
                        }
                        AlgorithmConfig::EpsilonGreedy { epsilon } => {
                            epsilon_greedy_step(q, visits, s, &ctx, *epsilon, rng)?
                        }
                        AlgorithmConfig::GeaContinuous { .. } => unreachable!("linear learners"),
                    };
                    outcomes.push(out);
                }
                outcomes
            }
            Learners::Linear(models) => {
                let published: Vec<Vec<f64>> = models.iter().map(|m| m.weights.clone()).collect();
                let mut outcomes = Vec::with_capacity(k_total);
                for (k, model) in models.iter_mut().enumerate() {
                    let s = self.states[k];
                    let n = self.graph.neighbourhood(k).expect("agent in range");
                    let weights: Vec<&[f64]> = n.iter().map(|&l| published[l].as_slice()).collect();
                    outcomes.push(gea_continuous_step(
                        model,
                        &mut self.visits[k],
                        &weights,
                        s,
                        &ctx,
                        &mut self.rngs[k],
                    )?);
                }
                outcomes
            }
        };
        for (k, out) in outcomes.iter().enumerate() {
            let state = self.states[k];
            observe(&StepRecord {
                step: self.step,
                episode,
                agent: k,
                state,
                state_visits: self.visits[k].state(state),
                outcome: out,
                snapshot: out.snapshot.as_ref(),
            });
            self.states[k] = out.next_state;
        }
        self.step += 1;
        Ok(())
    }

    /// Behaviour policy of agent `k` at every state, frozen now. States the
    /// start state cannot reach do not affect its value and get the uniform
    /// row.
    pub fn behaviour_policy(&self, k: usize) -> Result<StochasticPolicy> {
        let (ns, na) = (self.mdp.num_states(), self.mdp.num_actions());
        let mut relevant = vec![false; ns];
        for &s in &self.coverage_states {
            relevant[s] = true;
        }
        Ok(match (&self.cfg.algorithm, &self.learners) {
            (AlgorithmConfig::EpsilonGreedy { epsilon }, Learners::Tabular(tables)) => {
                epsilon_greedy_policy(&tables[k], *epsilon)
            }
            (AlgorithmConfig::Gucb { .. }, Learners::Tabular(tables)) => {
                let params = self.gucb_params(k).expect("gucb params");
                let n = self.graph.neighbourhood(k)?;
                gucb_policy(
                    &tables[k],
                    |s| {
                        let rows: Vec<&[u64]> = n.iter().map(|&l| self.visits[l].row(s)).collect();
                        crate::baselines::aggregate_counts(&rows, na)
                    },
                    &params,
                )
            }
            _ => {
                let n = self.graph.neighbourhood(k)?;
                let uniform = vec![1.0 / na as f64; na];
                snapshot_policy(
                    ns,
                    na,
                    |s| {
                        if !relevant[s] {
                            return Ok((uniform.clone(), vec![uniform.clone(); n.len()]));
                        }
                        let own = self.estimates(k, s).map_err(into_explore)?;
                        let rows = n
                            .iter()
                            .map(|&l| self.estimates(l, s).map_err(into_explore))
                            .collect::<std::result::Result<Vec<_>, _>>()?;
                        Ok((own, rows))
                    },
                    self.sigma_q_sq,
                    &self.cfg.exploration,
                    &self.visits[k],
                )?
            }
        })
    }

    pub fn coverage(&self) -> (f64, u64) {
        let counter = VisitCounter { agents: self.visits.clone() };
        let report = coverage_report(&counter, self.cfg.run.coverage_threshold, &self.coverage_states);
        (report.fraction, report.min_count)
    }
}

fn into_explore(e: crate::error::Error) -> crate::explore::ExploreError {
    match e {
        crate::error::Error::Explore(e) => e,
        other => crate::explore::ExploreError::Shape(other.to_string()),
    }
}

/// Runs one replication in memory.
pub fn run_replication(cfg: &RunConfig, replication: usize) -> Result<ReplicationResult> {
    run_replication_with(cfg, replication, &mut |_| {})
}

/// Runs one replication, passing every decision to `observe`.
pub fn run_replication_with(
    cfg: &RunConfig,
    replication: usize,
    observe: &mut dyn FnMut(&StepRecord<'_>),
) -> Result<ReplicationResult> {
    let mut sim = Simulation::new(cfg, replication)?;
    let k_total = sim.graph.num_agents();
    let episodes = cfg.run.episodes;
    let cadence = cfg.eval_cadence();
    let s0 = sim.mdp.initial_state();
    let mut ledger = RegretLedger::new(k_total, DP_TOL);
    let mut points: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k_total];
    let mut coverage = Vec::new();
    for episode in 0..episodes {
        if episode % cadence == 0 || episode + 1 == episodes {
            for (k, agent_points) in points.iter_mut().enumerate() {
                let eta = sim.behaviour_policy(k)?;
                let gap = ledger.instant_regret(&sim.mdp, &eta, &sim.optimal.values, s0)?;
                agent_points.push((episode, gap));
            }
            let (fraction, min_count) = sim.coverage();
            coverage.push((sim.step, fraction, min_count));
        }
        sim.reset_episode();
        for _ in 0..cfg.episode_length() {
            sim.iterate(episode, observe)?;
        }
    }
    if episodes > 0 {
        let series: Vec<Vec<f64>> = points.iter().map(|p| interpolate(p, episodes)).collect();
        for e in 0..episodes {
            ledger.push_episode(series.iter().map(|s| s[e]).collect());
        }
    }
    Ok(ReplicationResult {
        replication,
        seed: replication_seed(cfg, replication),
        ledger,
        coverage,
        greedy: sim.greedy_policies()?,
        visits: VisitCounter { agents: sim.visits.clone() },
        steps: sim.step,
    })
}
