//! Visit counts, exact regret accounting and coverage diagnostics.

use log::warn;

use crate::explore::{explore, ExplorationParams, ExploreError};
use crate::mdp::{policy_evaluation, MdpError, StochasticPolicy, TabularMdp};

/// `c_k(s, a)` and `c_k(s)` for one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentVisits {
    num_actions: usize,
    sa: Vec<u64>,
    s: Vec<u64>,
}

impl AgentVisits {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self { num_actions, sa: vec![0; num_states * num_actions], s: vec![0; num_states] }
    }

    /// Counts one decision; returns the updated `c(s, a)`.
    pub fn record(&mut self, s: usize, a: usize) -> u64 {
        self.s[s] += 1;
        let c = &mut self.sa[s * self.num_actions + a];
        *c += 1;
        *c
    }

    pub fn state(&self, s: usize) -> u64 {
        self.s[s]
    }

    pub fn state_action(&self, s: usize, a: usize) -> u64 {
        self.sa[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[u64] {
        &self.sa[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn num_states(&self) -> usize {
        self.s.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `c(s) == sum_a c(s, a)` for every state.
    pub fn is_consistent(&self) -> bool {
        self.s.iter().enumerate().all(|(s, c)| *c == self.row(s).iter().sum::<u64>())
    }
}

/// Visit counts of every agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitCounter {
    pub agents: Vec<AgentVisits>,
}

impl VisitCounter {
    pub fn new(num_agents: usize, num_states: usize, num_actions: usize) -> Self {
        Self { agents: vec![AgentVisits::new(num_states, num_actions); num_agents] }
    }
}

/// Coverage of `(agent, state, action)` triples over a set of states.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Fraction of triples whose count reaches the threshold.
    pub fraction: f64,
    pub min_count: u64,
    pub mean_count: f64,
    /// Per state, visits summed over agents.
    pub state_histogram: Vec<u64>,
}

pub fn coverage_report(counter: &VisitCounter, threshold: u64, states: &[usize]) -> CoverageReport {
    let mut covered = 0usize;
    let mut total = 0usize;
    let mut sum = 0u64;
    let mut min_count = u64::MAX;
    for agent in &counter.agents {
        for &s in states {
            for &c in agent.row(s) {
                total += 1;
                sum += c;
                min_count = min_count.min(c);
                covered += usize::from(c >= threshold);
            }
        }
    }
    let num_states = counter.agents.first().map_or(0, AgentVisits::num_states);
    let state_histogram = (0..num_states).map(|s| counter.agents.iter().map(|a| a.state(s)).sum()).collect();
    if total == 0 {
        return CoverageReport { fraction: 0.0, min_count: 0, mean_count: 0.0, state_histogram };
    }
    CoverageReport {
        fraction: covered as f64 / total as f64,
        min_count,
        mean_count: sum as f64 / total as f64,
        state_histogram,
    }
}

/// Materializes the behaviour policy at every state from the current
/// estimates. `rows_at(s)` returns the agent's own row and its
/// neighbourhood rows at `s`; the visit cap uses the count the agent would
/// have on its next visit.
pub fn snapshot_policy<F>(
    num_states: usize,
    num_actions: usize,
    mut rows_at: F,
    sigma_q_sq: f64,
    params: &ExplorationParams,
    visits: &AgentVisits,
) -> Result<StochasticPolicy, ExploreError>
where
    F: FnMut(usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), ExploreError>,
{
    let mut probs = Vec::with_capacity(num_states * num_actions);
    for s in 0..num_states {
        let (own, neighbours) = rows_at(s)?;
        let refs: Vec<&[f64]> = neighbours.iter().map(Vec::as_slice).collect();
        let snap = explore(&own, &refs, sigma_q_sq, params, visits.state(s) + 1)?;
        probs.extend(snap.policy);
    }
    StochasticPolicy::from_rows(num_actions, probs).map_err(|e| ExploreError::Shape(e.to_string()))
}

/// Per-agent, per-episode regret `V*(s0) - V^eta(s0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    num_agents: usize,
    instants: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
    tol: f64,
}

impl RegretLedger {
    pub fn new(num_agents: usize, tol: f64) -> Self {
        Self { num_agents, instants: Vec::new(), cumulative: vec![0.0; num_agents], tol }
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Exact instantaneous regret of one agent's frozen policy.
    pub fn instant_regret(
        &self,
        mdp: &TabularMdp,
        eta: &StochasticPolicy,
        v_star: &[f64],
        s0: usize,
    ) -> Result<f64, MdpError> {
        let v = policy_evaluation(mdp, eta, self.tol)?;
        Ok(self.clip(v_star[s0] - v[s0]))
    }

    fn clip(&self, gap: f64) -> f64 {
        if gap < -2.0 * self.tol {
            warn!("negative regret {gap:e} beyond tolerance {:e}; clipped to 0", 2.0 * self.tol);
        }
        gap.max(0.0)
    }

    /// Appends one episode of per-agent instantaneous regrets.
    pub fn push_episode(&mut self, instants: Vec<f64>) {
        assert_eq!(instants.len(), self.num_agents, "one regret per agent");
        let instants: Vec<f64> = instants.into_iter().map(|g| self.clip(g)).collect();
        for (c, g) in self.cumulative.iter_mut().zip(&instants) {
            *c += g;
        }
        self.instants.push(instants);
    }

    /// Evaluates every agent's snapshot and appends the episode.
    pub fn regret_update(
        &mut self,
        mdp: &TabularMdp,
        etas: &[StochasticPolicy],
        v_star: &[f64],
        s0: usize,
    ) -> Result<(), MdpError> {
        let instants =
            etas.iter().map(|eta| self.instant_regret(mdp, eta, v_star, s0)).collect::<Result<Vec<_>, _>>()?;
        self.push_episode(instants);
        Ok(())
    }

    pub fn episodes(&self) -> usize {
        self.instants.len()
    }

    pub fn instant(&self, episode: usize, agent: usize) -> f64 {
        self.instants[episode][agent]
    }

    /// Per-agent cumulative sums after each episode.
    pub fn cumulative_by_agent(&self) -> Vec<Vec<f64>> {
        let mut running = vec![0.0; self.num_agents];
        self.instants
            .iter()
            .map(|row| {
                for (c, g) in running.iter_mut().zip(row) {
                    *c += g;
                }
                running.clone()
            })
            .collect()
    }

    /// `Regret(T)` after each episode: mean over agents of the cumulative sums.
    pub fn curve(&self) -> Vec<f64> {
        self.cumulative_by_agent().iter().map(|row| row.iter().sum::<f64>() / self.num_agents as f64).collect()
    }

    /// `Regret(T)` at the last recorded episode.
    pub fn total(&self) -> f64 {
        self.cumulative.iter().sum::<f64>() / self.num_agents as f64
    }
}

/// Fills a per-episode series from values evaluated at sorted `points`,
/// interpolating linearly in between. Episodes past the last point take its
/// value.
pub fn interpolate(points: &[(usize, f64)], episodes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(episodes);
    let mut j = 0;
    for e in 0..episodes {
        while j + 1 < points.len() && points[j + 1].0 <= e {
            j += 1;
        }
        let (e0, v0) = points[j];
        let value = match points.get(j + 1) {
            Some(&(e1, v1)) if e > e0 => v0 + (v1 - v0) * (e - e0) as f64 / (e1 - e0) as f64,
            _ => v0,
        };
        out.push(value);
    }
    out
}
