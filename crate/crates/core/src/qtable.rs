//! Tabular value estimates, their random initialization and step sizes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::mdp::{argmax, DeterministicPolicy, TabularMdp};

/// Truncation of the Gaussian initializer, in units of `scale`.
pub const GAUSSIAN_TRUNCATION: f64 = 2.0;

/// Zero-mean, bounded distribution of the initial estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitDistribution {
    /// `U[-scale, scale]`.
    UniformSymmetric { scale: f64 },
    /// `N(0, scale^2)` truncated to `[-2 scale, 2 scale]`.
    GaussianTruncated { scale: f64 },
}

impl Default for InitDistribution {
    fn default() -> Self {
        InitDistribution::UniformSymmetric { scale: 1.0 }
    }
}

impl InitDistribution {
    pub fn scale(&self) -> f64 {
        match *self {
            InitDistribution::UniformSymmetric { scale } | InitDistribution::GaussianTruncated { scale } => scale,
        }
    }

    /// Largest magnitude the distribution can produce.
    pub fn support_bound(&self) -> f64 {
        match *self {
            InitDistribution::UniformSymmetric { scale } => scale,
            InitDistribution::GaussianTruncated { scale } => GAUSSIAN_TRUNCATION * scale,
        }
    }

    /// Closed-form variance.
    pub fn variance(&self) -> f64 {
        match *self {
            InitDistribution::UniformSymmetric { scale } => scale * scale / 3.0,
            InitDistribution::GaussianTruncated { scale } => {
                let t = GAUSSIAN_TRUNCATION;
                let density = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let mass = erf(t / std::f64::consts::SQRT_2);
                scale * scale * (1.0 - 2.0 * t * density / mass)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitDistribution::UniformSymmetric { scale } => rng.random_range(-scale..=scale),
            InitDistribution::GaussianTruncated { scale } => {
                let normal = Normal::new(0.0, scale).expect("scale validated positive");
                let bound = GAUSSIAN_TRUNCATION * scale;
                loop {
                    let x: f64 = normal.sample(rng);
                    if x.abs() <= bound {
                        return x;
                    }
                }
            }
        }
    }
}

/// Polynomial step size `c0 / (c1 + n)^p`, `n >= 1` counting the current
/// visit of `(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSchedule {
    pub c0: f64,
    pub c1: f64,
    pub p: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { c0: 1.0, c1: 1.0, p: 0.8 }
    }
}

impl StepSchedule {
    pub fn rate(&self, visits: u64) -> f64 {
        self.c0 / (self.c1 + visits.max(1) as f64).powf(self.p)
    }

    /// Checks the Robbins-Monro form and that every step lies in `(0, 1]`.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(format!("c0 must be positive, got {}", self.c0));
        }
        if !(self.c1.is_finite() && self.c1 >= 0.0) {
            return Err(format!("c1 must be >= 0, got {}", self.c1));
        }
        if !(self.p > 0.5 && self.p <= 1.0) {
            return Err(format!(
                "exponent p must lie in (0.5, 1] so that the steps sum to infinity with finite squares, got {}",
                self.p
            ));
        }
        if self.rate(1) > 1.0 {
            return Err(format!("first step c0 / (c1 + 1)^p = {} exceeds 1", self.rate(1)));
        }
        Ok(())
    }
}

/// Row-major `S x A` table of estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn from_values(num_actions: usize, values: Vec<f64>) -> Self {
        assert!(num_actions > 0 && values.len().is_multiple_of(num_actions), "values must form whole rows");
        Self { num_actions, values }
    }

    /// Draws every non-terminal entry i.i.d. from `init`; terminal rows stay
    /// at zero, their known value.
    pub fn random<R: Rng + ?Sized>(mdp: &TabularMdp, init: &InitDistribution, rng: &mut R) -> Self {
        let mut table = Self::zeros(mdp.num_states(), mdp.num_actions());
        for s in (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)) {
            for v in table.row_mut(s) {
                *v = init.sample(rng);
            }
        }
        table
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        let na = self.num_actions;
        &mut self.values[s * na..(s + 1) * na]
    }

    pub fn max_row(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy policy, lowest index on ties.
    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy(self.values.chunks(self.num_actions).map(argmax).collect())
    }

    /// Moves `Q(s, a)` towards `r + gamma next_value`; returns the TD error.
    pub fn td_update(&mut self, s: usize, a: usize, reward: f64, next_value: f64, alpha: f64, gamma: f64) -> f64 {
        let idx = s * self.num_actions + a;
        let delta = reward + gamma * next_value - self.values[idx];
        self.values[idx] += alpha * delta;
        delta
    }

    /// One Q-learning update bootstrapping on `max_b Q(s', b)`; only the
    /// `(s, a)` cell changes.
    pub fn q_update(&mut self, s: usize, a: usize, reward: f64, next: usize, alpha: f64, gamma: f64) -> f64 {
        let next_value = self.max_row(next);
        self.td_update(s, a, reward, next_value, alpha, gamma)
    }
}
