//! Neighbourhood-variance exploration: the uncertainty bonus, the adaptive
//! inverse temperature and the Boltzmann behaviour policy built from them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExploreError {
    #[error("sample variance needs at least 2 neighbour estimates, got {0}")]
    InsufficientNeighbours(usize),
    #[error("invalid exploration config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Inverse temperature of the behaviour policy. `Uniform` is emitted when
/// every adjusted value at the state is equal, where any finite temperature
/// gives the same distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    Uniform,
}

impl Beta {
    /// Numeric value for logging; the uniform sentinel is reported as 0.
    pub fn value(self) -> f64 {
        match self {
            Beta::Finite(b) => b,
            Beta::Uniform => 0.0,
        }
    }
}

/// Knobs of the exploration rule shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationParams {
    /// Base of the clamped logarithm, in `(0, 1/4]`.
    #[serde(default = "default_alpha_clamp")]
    pub alpha_clamp: f64,
    /// Lower bound applied to every sampled variance.
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
    /// Cap `|beta| D(s) <= ln c(s)` so that every action keeps probability at
    /// least `1 / (A c(s))`.
    #[serde(default = "default_visitation_cap")]
    pub visitation_cap: bool,
}

fn default_alpha_clamp() -> f64 {
    0.25
}

fn default_sigma_floor() -> f64 {
    1e-12
}

fn default_visitation_cap() -> bool {
    true
}

impl Default for ExplorationParams {
    fn default() -> Self {
        Self { alpha_clamp: default_alpha_clamp(), sigma_floor: default_sigma_floor(), visitation_cap: true }
    }
}

impl ExplorationParams {
    pub fn validate(&self) -> Result<(), ExploreError> {
        if !(self.alpha_clamp > 0.0 && self.alpha_clamp <= 0.25) {
            return Err(ExploreError::InvalidConfig(format!(
                "alpha_clamp must lie in (0, 1/4], got {}",
                self.alpha_clamp
            )));
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return Err(ExploreError::InvalidConfig(format!("sigma_floor must be positive, got {}", self.sigma_floor)));
        }
        Ok(())
    }
}

/// Unbiased sample variance and mean of the neighbourhood estimates.
pub fn sample_variance(values: &[f64]) -> Result<(f64, f64), ExploreError> {
    let n = values.len();
    if n < 2 {
        return Err(ExploreError::InsufficientNeighbours(n));
    }
    // deviations from the first sample keep identical inputs exactly at 0
    let shift = values[0];
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - shift - offset).powi(2)).sum();
    Ok((ss / (n - 1) as f64, shift + offset))
}

/// Span `max - min` of the adjusted values at one state.
pub fn d_span(q_tilde: &[f64]) -> f64 {
    let (lo, hi) = q_tilde.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if q_tilde.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Adaptive inverse temperature.
///
/// `L = sum_b log_alpha(N_k max(sigma^2_b, floor) / sigma_q^2)` grows without
/// bound as the neighbourhood estimates agree. `L` is clamped from below at
/// `alpha` and `beta = ln(max(L, alpha)) / span`. The sum of logarithms is the
/// logarithm of the product over actions, without the underflow.
pub fn beta_schedule(
    sigma_sq: &[f64],
    n_k: usize,
    sigma_q_sq: f64,
    alpha_clamp: f64,
    span: f64,
    sigma_floor: f64,
) -> Result<Beta, ExploreError> {
    if !(sigma_q_sq.is_finite() && sigma_q_sq > 0.0) {
        return Err(ExploreError::InvalidConfig(format!("initial variance must be positive, got {sigma_q_sq}")));
    }
    if !(alpha_clamp > 0.0 && alpha_clamp <= 0.25) {
        return Err(ExploreError::InvalidConfig(format!("alpha_clamp must lie in (0, 1/4], got {alpha_clamp}")));
    }
    if sigma_sq.len() < 2 {
        return Err(ExploreError::InvalidConfig(format!("need at least 2 actions, got {}", sigma_sq.len())));
    }
    if span == 0.0 {
        return Ok(Beta::Uniform);
    }
    let log_base = alpha_clamp.ln();
    let nk = n_k as f64;
    let level: f64 = sigma_sq.iter().map(|s| (nk * s.max(sigma_floor) / sigma_q_sq).ln() / log_base).sum();
    Ok(Beta::Finite(level.max(alpha_clamp).ln() / span))
}

/// Limits `|beta|` to `ln(visits) / span`.
pub fn cap_for_visits(beta: Beta, span: f64, state_visits: u64) -> Beta {
    match beta {
        Beta::Finite(b) if span > 0.0 => {
            let limit = (state_visits.max(1) as f64).ln() / span;
            // adding 0.0 turns a clamped -0.0 into 0.0
            Beta::Finite(b.clamp(-limit, limit) + 0.0)
        }
        other => other,
    }
}

/// Boltzmann distribution `exp(beta q) / sum exp(beta q)` with a max shift.
pub fn boltzmann_policy(q_tilde: &[f64], beta: Beta) -> Vec<f64> {
    let n = q_tilde.len();
    let b = match beta {
        Beta::Uniform => return vec![1.0 / n as f64; n],
        Beta::Finite(b) => b,
    };
    if b == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let shift = q_tilde.iter().map(|q| b * q).fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = q_tilde.iter().map(|q| (b * q - shift).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Inverse-CDF draw from a probability vector; consumes exactly one uniform.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Everything the behaviour policy computed at one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationSnapshot {
    pub sigma: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub beta: Beta,
    pub d_span: f64,
    pub policy: Vec<f64>,
}

impl ExplorationSnapshot {
    pub fn sigma_mean(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

/// Builds the behaviour policy at one state.
///
/// `own` is the agent's estimate row `Q_k(s, .)`; `neighbours` holds one row
/// per member of `N_k` (including the agent itself when the graph is
/// self-inclusive). `state_visits` is `c_k(s)` counting the current visit.
pub fn explore(
    own: &[f64],
    neighbours: &[&[f64]],
    sigma_q_sq: f64,
    params: &ExplorationParams,
    state_visits: u64,
) -> Result<ExplorationSnapshot, ExploreError> {
    let na = own.len();
    if let Some(row) = neighbours.iter().find(|r| r.len() != na) {
        return Err(ExploreError::Shape(format!("neighbour row has {} actions, expected {na}", row.len())));
    }
    let mut column = vec![0.0; neighbours.len()];
    let mut sigma_sq = Vec::with_capacity(na);
    for a in 0..na {
        for (slot, row) in column.iter_mut().zip(neighbours) {
            *slot = row[a];
        }
        sigma_sq.push(sample_variance(&column)?.0);
    }
    let sigma: Vec<f64> = sigma_sq.iter().map(|v| v.sqrt()).collect();
    let q_tilde: Vec<f64> = own.iter().zip(&sigma).map(|(q, s)| q + s).collect();
    let span = d_span(&q_tilde);
    let mut beta =
        beta_schedule(&sigma_sq, neighbours.len(), sigma_q_sq, params.alpha_clamp, span, params.sigma_floor)?;
    if params.visitation_cap {
        beta = cap_for_visits(beta, span, state_visits);
    }
    let policy = boltzmann_policy(&q_tilde, beta);
    Ok(ExplorationSnapshot { sigma, q_tilde, beta, d_span: span, policy })
}
