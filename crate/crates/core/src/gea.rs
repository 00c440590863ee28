//! One decision of a GEA agent, tabular and linear.
//!
//! Both steps follow the same order so that they consume identical random
//! draws: build the behaviour policy from the neighbourhood estimates at the
//! current state, sample the action, count the visit, step the environment,
//! then apply the TD update with the step size keyed on `c_k(s, a)`.

use rand::Rng;

use crate::error::Result;
use crate::explore::{explore, sample_action, ExplorationParams, ExplorationSnapshot};
use crate::linear::{linear_update, LinearQ};
use crate::mdp::TabularMdp;
use crate::metrics::AgentVisits;
use crate::qtable::{QTable, StepSchedule};

/// Shared, read-only inputs of a step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub mdp: &'a TabularMdp,
    pub schedule: StepSchedule,
    pub params: ExplorationParams,
    /// Variance of the initial estimates.
    pub sigma_q_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub delta: f64,
    /// Present for learners that use the exploration rule.
    pub snapshot: Option<ExplorationSnapshot>,
}

fn bootstrap(mdp: &TabularMdp, next: usize, max_next: impl FnOnce() -> Result<f64>) -> Result<f64> {
    if mdp.is_terminal(next) {
        Ok(0.0)
    } else {
        max_next()
    }
}

/// Tabular step. `neighbours` holds the published rows `Q_l(s, .)` for
/// every `l` in `N_k`.
pub fn gea_discrete_step<R: Rng + ?Sized>(
    q: &mut QTable,
    visits: &mut AgentVisits,
    neighbours: &[&[f64]],
    s: usize,
    ctx: &StepContext<'_>,
    rng: &mut R,
) -> Result<StepOutcome> {
    let snapshot = explore(q.row(s), neighbours, ctx.sigma_q_sq, &ctx.params, visits.state(s) + 1)?;
    let action = sample_action(&snapshot.policy, rng);
    let alpha = ctx.schedule.rate(visits.record(s, action));
    let (next_state, reward) = ctx.mdp.step(s, action, rng)?;
    let next_value = bootstrap(ctx.mdp, next_state, || Ok(q.max_row(next_state)))?;
    let delta = q.td_update(s, action, reward, next_value, alpha, ctx.mdp.discount());
    Ok(StepOutcome { action, reward, next_state, delta, snapshot: Some(snapshot) })
}

/// Linear step. Each neighbour contributes only its weight vector; the
/// estimates at `s` are rebuilt through the shared feature map.
pub fn gea_continuous_step<R: Rng + ?Sized>(
    lq: &mut LinearQ,
    visits: &mut AgentVisits,
    neighbour_weights: &[&[f64]],
    s: usize,
    ctx: &StepContext<'_>,
    rng: &mut R,
) -> Result<StepOutcome> {
    let own = lq.row(s)?;
    let rows = neighbour_weights.iter().map(|v| lq.row_with(v, s)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let snapshot = explore(&own, &refs, ctx.sigma_q_sq, &ctx.params, visits.state(s) + 1)?;
    let action = sample_action(&snapshot.policy, rng);
    let alpha = ctx.schedule.rate(visits.record(s, action));
    let (next_state, reward) = ctx.mdp.step(s, action, rng)?;
    let next_value =
        bootstrap(ctx.mdp, next_state, || Ok(lq.row(next_state)?.into_iter().fold(f64::NEG_INFINITY, f64::max)))?;
    let delta = reward + ctx.mdp.discount() * next_value - own[action];
    let features = lq.features.features(s, action);
    linear_update(&mut lq.weights, delta, alpha, &features)?;
    Ok(StepOutcome { action, reward, next_state, delta, snapshot: Some(snapshot) })
}
