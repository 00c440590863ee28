//! Finite MDPs, stationary policies and the exact dynamic-programming oracle.

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

/// Tolerance on transition-row and policy-row normalization.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("index out of range: {what} {index} (limit {limit})")]
    Index { what: &'static str, index: usize, limit: usize },
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("linear solve for policy evaluation failed")]
    Singular,
}

/// A single outgoing transition `(next_state, probability, reward)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// Explicit finite MDP.
///
/// Transitions are stored sparsely per `(s, a)`; only outcomes with positive
/// probability are kept. Rewards are attached to the `(s, a, s')` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<Outcome>>,
    discount: f64,
    initial_state: usize,
    terminal: Vec<bool>,
}

impl TabularMdp {
    /// Builds an MDP from sparse rows indexed by `s * A + a`.
    pub fn from_rows(
        num_states: usize,
        num_actions: usize,
        rows: Vec<Vec<Outcome>>,
        discount: f64,
        initial_state: usize,
        terminal_states: &[usize],
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 {
            return Err(MdpError::Invalid("state and action counts must be positive".into()));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(MdpError::Invalid(format!("discount must lie in (0, 1), got {discount}")));
        }
        if rows.len() != num_states * num_actions {
            return Err(MdpError::Invalid(format!(
                "expected {} transition rows, got {}",
                num_states * num_actions,
                rows.len()
            )));
        }
        if initial_state >= num_states {
            return Err(MdpError::Index { what: "initial state", index: initial_state, limit: num_states });
        }
        let mut terminal = vec![false; num_states];
        for &t in terminal_states {
            if t >= num_states {
                return Err(MdpError::Index { what: "terminal state", index: t, limit: num_states });
            }
            terminal[t] = true;
        }
        let mut rows = rows;
        for (idx, row) in rows.iter_mut().enumerate() {
            row.retain(|o| o.prob != 0.0);
            let (s, a) = (idx / num_actions, idx % num_actions);
            let mut total = 0.0;
            for o in row.iter() {
                if o.next >= num_states {
                    return Err(MdpError::Index { what: "next state", index: o.next, limit: num_states });
                }
                if !(o.prob.is_finite() && o.prob > 0.0) {
                    return Err(MdpError::Invalid(format!("negative or non-finite probability at ({s}, {a})")));
                }
                if !o.reward.is_finite() {
                    return Err(MdpError::Invalid(format!("non-finite reward at ({s}, {a})")));
                }
                total += o.prob;
            }
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::Invalid(format!("row ({s}, {a}) sums to {total}")));
            }
            if terminal[s] && !(row.len() == 1 && row[0].next == s && row[0].reward == 0.0) {
                return Err(MdpError::Invalid(format!("terminal state {s} must be absorbing with zero reward")));
            }
        }
        Ok(Self { num_states, num_actions, rows, discount, initial_state, terminal })
    }

    /// Builds an MDP from dense `S x A x S` transition and reward tensors.
    pub fn from_dense(
        num_states: usize,
        num_actions: usize,
        transition: &[f64],
        reward: &[f64],
        discount: f64,
        initial_state: usize,
        terminal_states: &[usize],
    ) -> Result<Self, MdpError> {
        let n = num_states * num_actions * num_states;
        if transition.len() != n || reward.len() != n {
            return Err(MdpError::Invalid(format!("dense tensors must have {n} entries")));
        }
        if let Some(p) = transition.iter().find(|p| **p < 0.0) {
            return Err(MdpError::Invalid(format!("negative transition probability {p}")));
        }
        let rows = (0..num_states * num_actions)
            .map(|sa| {
                (0..num_states)
                    .filter_map(|next| {
                        let i = sa * num_states + next;
                        (transition[i] > 0.0).then(|| Outcome { next, prob: transition[i], reward: reward[i] })
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(num_states, num_actions, rows, discount, initial_state, terminal_states)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&s| self.terminal[s]).collect()
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.rows[s * self.num_actions + a]
    }

    /// `P(s'|s,a)`.
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.outcomes(s, a).iter().filter(|o| o.next == next).map(|o| o.prob).sum()
    }

    /// Smallest and largest reward attached to any reachable transition.
    pub fn reward_bounds(&self) -> (f64, f64) {
        self.rows
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.reward), hi.max(o.reward)))
    }

    fn check_indices(&self, s: usize, a: usize) -> Result<(), MdpError> {
        if s >= self.num_states {
            return Err(MdpError::Index { what: "state", index: s, limit: self.num_states });
        }
        if a >= self.num_actions {
            return Err(MdpError::Index { what: "action", index: a, limit: self.num_actions });
        }
        Ok(())
    }

    /// Samples `s' ~ P(.|s,a)` and returns it with `r(s,a,s')`.
    ///
    /// Deterministic rows do not consume randomness. Terminal states return
    /// `(s, 0)`.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(usize, f64), MdpError> {
        self.check_indices(s, a)?;
        if self.terminal[s] {
            return Ok((s, 0.0));
        }
        let row = self.outcomes(s, a);
        if let [only] = row {
            return Ok((only.next, only.reward));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for o in row {
            acc += o.prob;
            if u < acc {
                return Ok((o.next, o.reward));
            }
        }
        // u landed in the rounding gap at the top of the cumulative sum
        let last = row.last().expect("rows are non-empty after validation");
        Ok((last.next, last.reward))
    }

    /// One-step lookahead `sum_s' P(s'|s,a) (r + gamma V(s'))`.
    pub fn backup(&self, values: &[f64], s: usize, a: usize) -> f64 {
        self.outcomes(s, a).iter().map(|o| o.prob * (o.reward + self.discount * values[o.next])).sum()
    }
}

/// Action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy(pub Vec<usize>);

impl DeterministicPolicy {
    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn to_stochastic(&self, num_actions: usize) -> StochasticPolicy {
        let mut probs = vec![0.0; self.0.len() * num_actions];
        for (s, &a) in self.0.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        StochasticPolicy { num_actions, probs }
    }
}

/// Row-major `pi(a|s)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn from_rows(num_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if num_actions == 0 || !probs.len().is_multiple_of(num_actions) {
            return Err(MdpError::Policy("probability matrix shape does not match action count".into()));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(MdpError::Policy(format!("row {s} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::Policy(format!("row {s} sums to {total}")));
            }
        }
        Ok(Self { num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self { num_actions, probs: vec![1.0 / num_actions as f64; num_states * num_actions] }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub values: Vec<f64>,
    /// Row-major `Q*(s, a)`.
    pub q_values: Vec<f64>,
    pub policy: DeterministicPolicy,
}

impl OptimalSolution {
    pub fn num_actions(&self) -> usize {
        self.q_values.len() / self.values.len()
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q_values[s * self.num_actions() + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        let na = self.num_actions();
        &self.q_values[s * na..(s + 1) * na]
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Bellman-optimality fixed point to sup-norm residual `<= tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<OptimalSolution, MdpError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(MdpError::Tolerance(tol));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut values = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            let best = (0..na).map(|a| mdp.backup(&values, s, a)).fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((best - values[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut values, &mut next);
        // the swapped-in iterate has residual <= gamma * residual
        if residual <= tol {
            break;
        }
    }
    let q_values: Vec<f64> =
        (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| mdp.backup(&values, s, a)).collect();
    let policy = DeterministicPolicy(q_values.chunks(na).map(argmax).collect());
    Ok(OptimalSolution { values, q_values, policy })
}

fn check_policy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<(), MdpError> {
    if policy.num_actions() != mdp.num_actions() || policy.num_states() != mdp.num_states() {
        return Err(MdpError::Policy(format!(
            "policy shape {}x{} does not match MDP {}x{}",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

/// Expected one-step backup of `values` under `policy` at `s`.
fn policy_backup(mdp: &TabularMdp, policy: &StochasticPolicy, values: &[f64], s: usize) -> f64 {
    policy.row(s).iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(a, p)| p * mdp.backup(values, s, a)).sum()
}

/// Iterative policy evaluation: solves `V = r_pi + gamma P_pi V` to sup-norm
/// residual `<= tol`.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &StochasticPolicy, tol: f64) -> Result<Vec<f64>, MdpError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(MdpError::Tolerance(tol));
    }
    check_policy(mdp, policy)?;
    let ns = mdp.num_states();
    let mut values = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            next[s] = policy_backup(mdp, policy, &values, s);
            residual = residual.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= tol {
            return Ok(values);
        }
    }
}

/// Policy evaluation by a direct LU solve of `(I - gamma P_pi) V = r_pi`.
pub fn policy_evaluation_direct(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Vec<f64>, MdpError> {
    check_policy(mdp, policy)?;
    let ns = mdp.num_states();
    let mut system = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for (a, p) in policy.row(s).iter().enumerate() {
            for o in mdp.outcomes(s, a) {
                system[(s, o.next)] -= mdp.discount() * p * o.prob;
                rhs[s] += p * o.prob * o.reward;
            }
        }
    }
    let solution = system.lu().solve(&rhs).ok_or(MdpError::Singular)?;
    Ok(solution.iter().copied().collect())
}

/// Random MDP with strictly positive Dirichlet(1) transition rows.
///
/// Every state reaches every other state in one step. A `reward_sparsity`
/// fraction of `(s, a)` pairs carry a reward drawn from `U[0, 1)`; the rest
/// pay zero. The reward depends on `(s, a)` only.
pub fn random_mdp(
    num_states: usize,
    num_actions: usize,
    reward_sparsity: f64,
    discount: f64,
    seed: u64,
) -> Result<TabularMdp, MdpError> {
    if num_states < 2 || num_actions < 2 {
        return Err(MdpError::Invalid("random MDPs need at least 2 states and 2 actions".into()));
    }
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(MdpError::Invalid(format!("reward sparsity must lie in [0, 1], got {reward_sparsity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = num_states * num_actions;
    let rewarded = (reward_sparsity * pairs as f64).round() as usize;
    let mut order: Vec<usize> = (0..pairs).collect();
    order.shuffle(&mut rng);
    let mut rewards = vec![0.0; pairs];
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    for &sa in &order[..rewarded] {
        rewards[sa] = unit.sample(&mut rng);
    }
    let rows = (0..pairs)
        .map(|sa| {
            let weights: Vec<f64> = (0..num_states)
                .map(|_| {
                    let w: f64 = Exp1.sample(&mut rng);
                    w.max(f64::MIN_POSITIVE)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            weights.iter().enumerate().map(|(next, w)| Outcome { next, prob: w / total, reward: rewards[sa] }).collect()
        })
        .collect();
    TabularMdp::from_rows(num_states, num_actions, rows, discount, 0, &[])
}
