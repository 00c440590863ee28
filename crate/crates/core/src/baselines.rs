//! Comparison learners: a count-based graph UCB and independent ε-greedy
//! Q-learning.
//!
//! The UCB learner is Q-learning whose action selection adds the bonus
//! `beta sqrt(H^3 iota / (w_k c))`, with `c` the visits of `(s, a)` summed
//! over the agent's neighbourhood. It reproduces the bonus and its
//! graph weighting, not the episodic machinery of the original method.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gea::{StepContext, StepOutcome};
use crate::mdp::{argmax, StochasticPolicy, TabularMdp};
use crate::metrics::AgentVisits;
use crate::qtable::QTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GucbParams {
    pub beta_const: f64,
    pub horizon: usize,
    pub iota: f64,
    /// Graph weight `w_k` of this agent.
    pub weight: f64,
}

/// How `w_k` is derived from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `|N_k| / K`.
    #[default]
    Neighbourhood,
    Unit,
}

impl WeightMode {
    pub fn weight(self, neighbourhood_size: usize, num_agents: usize) -> f64 {
        match self {
            WeightMode::Neighbourhood => neighbourhood_size as f64 / num_agents as f64,
            WeightMode::Unit => 1.0,
        }
    }
}

impl GucbParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.beta_const) || !positive(self.iota) || !positive(self.weight) || self.horizon == 0 {
            return Err(format!("UCB parameters must all be positive: {self:?}"));
        }
        Ok(())
    }
}

/// Count bonus; a zero count is treated as one.
pub fn gucb_bonus(p: &GucbParams, count: u64) -> f64 {
    let h = p.horizon as f64;
    p.beta_const * (h * h * h * p.iota / (p.weight * count.max(1) as f64)).sqrt()
}

/// Optimistic action at one state. Untried actions (aggregate count 0) come
/// first, lowest index on ties.
pub fn gucb_action(q_row: &[f64], counts: &[u64], p: &GucbParams) -> usize {
    if let Some(a) = counts.iter().position(|c| *c == 0) {
        return a;
    }
    let scores: Vec<f64> = q_row.iter().zip(counts).map(|(q, c)| q + gucb_bonus(p, *c)).collect();
    argmax(&scores)
}

/// Sums the neighbourhood count rows at one state.
pub fn aggregate_counts(rows: &[&[u64]], num_actions: usize) -> Vec<u64> {
    let mut total = vec![0u64; num_actions];
    for row in rows {
        for (t, c) in total.iter_mut().zip(row.iter()) {
            *t += c;
        }
    }
    total
}

/// `neighbour_counts` holds `c_l(s, .)` for every `l` in `N_k`, as published
/// at the start of the iteration.
pub fn gucb_step<R: Rng + ?Sized>(
    q: &mut QTable,
    visits: &mut AgentVisits,
    neighbour_counts: &[&[u64]],
    s: usize,
    ctx: &StepContext<'_>,
    params: &GucbParams,
    rng: &mut R,
) -> Result<StepOutcome> {
    let counts = aggregate_counts(neighbour_counts, q.num_actions());
    let action = gucb_action(q.row(s), &counts, params);
    finish_step(q, visits, s, action, ctx, rng)
}

pub fn epsilon_greedy_step<R: Rng + ?Sized>(
    q: &mut QTable,
    visits: &mut AgentVisits,
    s: usize,
    ctx: &StepContext<'_>,
    epsilon: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let action = if rng.random::<f64>() < epsilon { rng.random_range(0..q.num_actions()) } else { argmax(q.row(s)) };
    finish_step(q, visits, s, action, ctx, rng)
}

fn finish_step<R: Rng + ?Sized>(
    q: &mut QTable,
    visits: &mut AgentVisits,
    s: usize,
    action: usize,
    ctx: &StepContext<'_>,
    rng: &mut R,
) -> Result<StepOutcome> {
    let alpha = ctx.schedule.rate(visits.record(s, action));
    let (next_state, reward) = ctx.mdp.step(s, action, rng)?;
    let next_value = if ctx.mdp.is_terminal(next_state) { 0.0 } else { q.max_row(next_state) };
    let delta = q.td_update(s, action, reward, next_value, alpha, ctx.mdp.discount());
    Ok(StepOutcome { action, reward, next_state, delta, snapshot: None })
}

/// Table holding `horizon * r_max` at every non-terminal state, the usual
/// optimistic start of count-based Q-learning.
pub fn optimistic_table(mdp: &TabularMdp, horizon: usize) -> QTable {
    let (_, r_max) = mdp.reward_bounds();
    let value = horizon as f64 * r_max.max(0.0);
    let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)) {
        q.row_mut(s).fill(value);
    }
    q
}

/// Behaviour policy of the UCB learner at every state.
pub fn gucb_policy(q: &QTable, counts_at: impl Fn(usize) -> Vec<u64>, params: &GucbParams) -> StochasticPolicy {
    let na = q.num_actions();
    let mut probs = vec![0.0; q.num_states() * na];
    for s in 0..q.num_states() {
        probs[s * na + gucb_action(q.row(s), &counts_at(s), params)] = 1.0;
    }
    StochasticPolicy::from_rows(na, probs).expect("one-hot rows are normalized")
}

/// `(1 - eps)` on the greedy action plus `eps / A` everywhere.
pub fn epsilon_greedy_policy(q: &QTable, epsilon: f64) -> StochasticPolicy {
    let na = q.num_actions();
    let mut probs = Vec::with_capacity(q.values().len());
    for s in 0..q.num_states() {
        let greedy = argmax(q.row(s));
        probs.extend((0..na).map(|a| epsilon / na as f64 + if a == greedy { 1.0 - epsilon } else { 0.0 }));
    }
    StochasticPolicy::from_rows(na, probs).expect("mixture rows are normalized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::ExplorationParams;
    use crate::mdp::random_mdp;
    use crate::qtable::StepSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> GucbParams {
        GucbParams { beta_const: 1.0, horizon: 3, iota: 1.0, weight: 1.0 }
    }

    #[test]
    fn bonus_hand_value() {
        assert!((gucb_bonus(&params(), 4) - (27.0f64 / 4.0).sqrt()).abs() < 1e-12);
        assert!((gucb_bonus(&params(), 4) - 2.5981).abs() < 1e-4);
        assert_eq!(gucb_bonus(&params(), 0), gucb_bonus(&params(), 1));
        assert!(gucb_bonus(&params(), 1 << 40) < 1e-5);
    }

    #[test]
    fn doubling_weight_scales_bonus() {
        let p = params();
        let doubled = GucbParams { weight: 2.0, ..p };
        assert!((gucb_bonus(&doubled, 7) - gucb_bonus(&p, 7) / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bonus_strictly_decreasing() {
        let p = params();
        assert!((1..1000).all(|c| gucb_bonus(&p, c + 1) < gucb_bonus(&p, c)));
    }

    #[test]
    fn action_selection_rules() {
        let p = params();
        assert_eq!(gucb_action(&[0.5, 0.5], &[3, 3], &p), 0);
        let big = GucbParams { beta_const: 100.0, ..p };
        assert_eq!(gucb_action(&[10.0, 0.0, 5.0], &[4, 0, 4], &big), 1);
        assert_eq!(gucb_action(&[10.0, 0.0], &[4, 4], &p), 0);
        assert_eq!(gucb_action(&[0.0, 0.0], &[100, 1], &p), 1);
        assert_eq!(aggregate_counts(&[&[1, 2], &[3, 4]], 2), vec![4, 6]);
    }

    fn ctx(mdp: &crate::mdp::TabularMdp) -> StepContext<'_> {
        StepContext {
            mdp,
            schedule: StepSchedule::default(),
            params: ExplorationParams::default(),
            sigma_q_sq: 1.0 / 3.0,
        }
    }

    #[test]
    fn epsilon_frequencies() {
        let mdp = random_mdp(3, 2, 0.5, 0.9, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        for (eps, expected_greedy) in [(1.0, 0.5), (0.5, 0.75), (0.0, 1.0)] {
            let mut greedy = 0;
            for _ in 0..draws {
                let mut q = QTable::from_values(2, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
                let mut visits = AgentVisits::new(3, 2);
                let out = epsilon_greedy_step(&mut q, &mut visits, 0, &ctx(&mdp), eps, &mut rng).unwrap();
                greedy += usize::from(out.action == 1);
            }
            let freq = greedy as f64 / draws as f64;
            assert!((freq - expected_greedy).abs() < 0.02, "eps {eps}: {freq}");
        }
    }

    #[test]
    fn policies_are_normalized() {
        let q = QTable::from_values(2, vec![0.0, 1.0, 2.0, 2.0]);
        let eg = epsilon_greedy_policy(&q, 0.1);
        for (got, want) in eg.row(0).iter().chain(eg.row(1)).zip([0.05, 0.95, 0.95, 0.05]) {
            assert!((got - want).abs() < 1e-15);
        }
        let ucb = gucb_policy(&q, |_| vec![0, 3], &params());
        assert_eq!(ucb.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn optimistic_start_on_deep_sea() {
        let mdp = crate::deep_sea::DeepSeaSpec::new(3, 0.99).build().unwrap();
        let q = optimistic_table(&mdp, 3);
        assert_eq!(q.row(0), &[3.0, 3.0]);
        assert_eq!(q.row(mdp.num_states() - 1), &[0.0, 0.0]);
    }

    #[test]
    fn gucb_trajectory_is_reproducible() {
        let mdp = random_mdp(5, 2, 0.5, 0.9, 8).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut tables = [QTable::zeros(5, 2), QTable::zeros(5, 2)];
            let mut visits = [AgentVisits::new(5, 2), AgentVisits::new(5, 2)];
            let mut states = [0, 0];
            let mut trace = Vec::new();
            for _ in 0..300 {
                let published = visits.clone();
                for k in 0..2 {
                    let s = states[k];
                    let rows: Vec<&[u64]> = published.iter().map(|v| v.row(s)).collect();
                    let out =
                        gucb_step(&mut tables[k], &mut visits[k], &rows, s, &ctx(&mdp), &params(), &mut rng).unwrap();
                    states[k] = out.next_state;
                    trace.push((out.action, out.next_state));
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
