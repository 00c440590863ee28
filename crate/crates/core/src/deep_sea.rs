//! Deep-sea sparse-reward grid.
//!
//! The agent starts in the top-left cell of an `H x H` grid and descends one
//! row per step. `RIGHT` shifts one column right and pays a small cost, `LEFT`
//! shifts one column left (floored at the wall) for free. Every bottom-row
//! cell leads to an absorbing terminal state; only `RIGHT` from the
//! bottom-right cell collects the treasure, so exactly one of the `2^H`
//! action sequences is rewarded.

use serde::{Deserialize, Serialize};

use crate::mdp::{MdpError, Outcome, TabularMdp};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepSeaSpec {
    pub depth: usize,
    /// Defaults to `0.01 / depth`.
    pub move_right_cost: Option<f64>,
    pub treasure_reward: f64,
    pub discount: f64,
}

impl DeepSeaSpec {
    pub fn new(depth: usize, discount: f64) -> Self {
        Self { depth, move_right_cost: None, treasure_reward: 1.0, discount }
    }

    pub fn right_cost(&self) -> f64 {
        self.move_right_cost.unwrap_or(0.01 / self.depth as f64)
    }

    pub fn num_states(&self) -> usize {
        self.depth * self.depth + 1
    }

    pub fn terminal_state(&self) -> usize {
        self.depth * self.depth
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.depth + col
    }

    /// `(row, col)` of a grid state, `None` for the terminal.
    pub fn coords(&self, s: usize) -> Option<(usize, usize)> {
        (s < self.depth * self.depth).then(|| (s / self.depth, s % self.depth))
    }

    /// Grid states visited by the always-`RIGHT` trajectory.
    pub fn diagonal(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.cell(i, i)).collect()
    }

    pub fn build(&self) -> Result<TabularMdp, MdpError> {
        let h = self.depth;
        if h < 2 {
            return Err(MdpError::Invalid(format!("deep sea depth must be at least 2, got {h}")));
        }
        let cost = self.right_cost();
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(MdpError::Invalid(format!("move_right_cost must be finite and >= 0, got {cost}")));
        }
        let terminal = self.terminal_state();
        let mut rows = Vec::with_capacity(self.num_states() * 2);
        for row in 0..h {
            for col in 0..h {
                if row + 1 == h {
                    let treasure = if col + 1 == h { self.treasure_reward } else { 0.0 };
                    rows.push(vec![Outcome { next: terminal, prob: 1.0, reward: 0.0 }]);
                    rows.push(vec![Outcome { next: terminal, prob: 1.0, reward: treasure }]);
                } else {
                    let left = self.cell(row + 1, col.saturating_sub(1));
                    let right = self.cell(row + 1, (col + 1).min(h - 1));
                    rows.push(vec![Outcome { next: left, prob: 1.0, reward: 0.0 }]);
                    rows.push(vec![Outcome { next: right, prob: 1.0, reward: -cost }]);
                }
            }
        }
        for _ in 0..2 {
            rows.push(vec![Outcome { next: terminal, prob: 1.0, reward: 0.0 }]);
        }
        TabularMdp::from_rows(self.num_states(), 2, rows, self.discount, self.cell(0, 0), &[terminal])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{policy_evaluation, value_iteration, DeterministicPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Discounted return of an open-loop action sequence, rolled out by hand.
    fn rollout(spec: &DeepSeaSpec, actions: &[usize]) -> f64 {
        let h = spec.depth;
        let (mut row, mut col) = (0usize, 0usize);
        let mut ret = 0.0;
        let mut discount = 1.0;
        for &a in actions {
            let reward = if row + 1 == h {
                if a == RIGHT && col + 1 == h {
                    spec.treasure_reward
                } else {
                    0.0
                }
            } else if a == RIGHT {
                -spec.right_cost()
            } else {
                0.0
            };
            ret += discount * reward;
            discount *= spec.discount;
            if row + 1 == h {
                break;
            }
            row += 1;
            col = if a == RIGHT { (col + 1).min(h - 1) } else { col.saturating_sub(1) };
        }
        ret
    }

    fn constant_policy(spec: &DeepSeaSpec, action: usize) -> DeterministicPolicy {
        DeterministicPolicy(vec![action; spec.num_states()])
    }

    #[test]
    fn state_count() {
        let spec = DeepSeaSpec::new(3, 0.99);
        assert_eq!(spec.build().unwrap().num_states(), 10);
    }

    #[test]
    fn rejects_shallow_grid() {
        assert!(matches!(DeepSeaSpec::new(1, 0.9).build(), Err(MdpError::Invalid(_))));
    }

    #[test]
    fn always_right_matches_rollout() {
        let spec = DeepSeaSpec::new(3, 0.99);
        let mdp = spec.build().unwrap();
        let pi = constant_policy(&spec, RIGHT).to_stochastic(2);
        let v = policy_evaluation(&mdp, &pi, 1e-13).unwrap();
        let expected = rollout(&spec, &[RIGHT; 3]);
        let c = 0.01 / 3.0;
        assert!((expected - (-c - 0.99 * c + 0.99f64.powi(2))).abs() < 1e-15);
        assert!((v[mdp.initial_state()] - expected).abs() < 1e-12);
    }

    #[test]
    fn always_left_returns_zero() {
        let spec = DeepSeaSpec::new(3, 0.99);
        let mdp = spec.build().unwrap();
        let v = policy_evaluation(&mdp, &constant_policy(&spec, LEFT).to_stochastic(2), 1e-13).unwrap();
        assert_eq!(v[mdp.initial_state()], 0.0);
    }

    #[test]
    fn value_iteration_agrees_with_enumeration() {
        for h in 2..=5 {
            for gamma in [0.9, 0.99] {
                let spec = DeepSeaSpec::new(h, gamma);
                let mdp = spec.build().unwrap();
                let mut best = (f64::NEG_INFINITY, Vec::new());
                let mut rewarded = 0;
                for mask in 0..(1u32 << h) {
                    let actions: Vec<usize> = (0..h).map(|i| ((mask >> i) & 1) as usize).collect();
                    let ret = rollout(&spec, &actions);
                    rewarded += usize::from(ret > 0.0);
                    if ret > best.0 {
                        best = (ret, actions);
                    }
                }
                assert_eq!(rewarded, 1, "exactly one sequence reaches the treasure");
                assert_eq!(best.1, vec![RIGHT; h]);
                let sol = value_iteration(&mdp, 1e-12).unwrap();
                for s in spec.diagonal() {
                    assert_eq!(sol.policy.action(s), RIGHT, "h={h} state {s}");
                }
                assert!((sol.values[mdp.initial_state()] - best.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transitions_are_deterministic() {
        let spec = DeepSeaSpec::new(4, 0.99);
        let mdp = spec.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut s, mut steps) = (mdp.initial_state(), 0);
        while !mdp.is_terminal(s) {
            let (next, _) = mdp.step(s, RIGHT, &mut rng).unwrap();
            s = next;
            steps += 1;
        }
        assert_eq!(steps, 4);
        for s in 0..mdp.num_states() {
            for a in 0..2 {
                assert_eq!(mdp.outcomes(s, a).len(), 1);
            }
        }
    }
}
