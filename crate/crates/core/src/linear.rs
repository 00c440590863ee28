//! Linear value models `Q(s, a) = f(s, a) . v` and the feature maps shipped
//! with them.
//!
//! Every feature vector has unit Euclidean norm (zero for terminal states),
//! so i.i.d. weights with variance `sigma^2` give initial estimates with the
//! same variance as the tabular learner.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deep_sea::DeepSeaSpec;
use crate::explore::ExploreError;
use crate::qtable::{InitDistribution, QTable};

pub trait FeatureMap: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Writes `f(s, a)` into `out`, which has length [`FeatureMap::dim`].
    fn write(&self, s: usize, a: usize, out: &mut [f64]);

    fn features(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write(s, a, &mut out);
        out
    }
}

/// Indicator of the `(s, a)` cell; reproduces the tabular learner exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    pub num_states: usize,
    pub num_actions: usize,
}

impl FeatureMap for OneHot {
    fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn write(&self, s: usize, a: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[s * self.num_actions + a] = 1.0;
    }
}

/// Tile coding over the deep-sea `(row, column)` coordinates.
///
/// Tiling `t` shifts the grid of `width x width` tiles by `t` cells along both
/// axes. Each action owns a disjoint block of weights. Active tiles carry
/// `1 / sqrt(tilings)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepSeaTiles {
    spec: DeepSeaSpec,
    tilings: usize,
    width: usize,
    per_axis: usize,
}

impl DeepSeaTiles {
    pub fn new(spec: DeepSeaSpec, tilings: usize, width: usize) -> Result<Self, ExploreError> {
        if tilings == 0 || width == 0 {
            return Err(ExploreError::InvalidConfig("tile coding needs at least one tiling of width >= 1".into()));
        }
        let per_axis = (spec.depth + tilings - 1) / width + 1;
        Ok(Self { spec, tilings, width, per_axis })
    }

    fn block(&self) -> usize {
        self.tilings * self.per_axis * self.per_axis
    }
}

impl FeatureMap for DeepSeaTiles {
    fn dim(&self) -> usize {
        2 * self.block()
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn write(&self, s: usize, a: usize, out: &mut [f64]) {
        out.fill(0.0);
        let Some((row, col)) = self.spec.coords(s) else {
            return;
        };
        let value = 1.0 / (self.tilings as f64).sqrt();
        let tiles = self.per_axis * self.per_axis;
        for t in 0..self.tilings {
            let (tr, tc) = ((row + t) / self.width, (col + t) / self.width);
            out[a * self.block() + t * tiles + tr * self.per_axis + tc] = value;
        }
    }
}

/// Which feature map a linear learner uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureKind {
    OneHot,
    DeepSeaTiles { tilings: usize, width: usize },
}

/// Weight vector plus the shared feature map.
#[derive(Debug, Clone)]
pub struct LinearQ {
    pub weights: Vec<f64>,
    pub features: Arc<dyn FeatureMap>,
}

impl LinearQ {
    pub fn zeros(features: Arc<dyn FeatureMap>) -> Self {
        Self { weights: vec![0.0; features.dim()], features }
    }

    pub fn random<R: Rng + ?Sized>(features: Arc<dyn FeatureMap>, init: &InitDistribution, rng: &mut R) -> Self {
        let weights = (0..features.dim()).map(|_| init.sample(rng)).collect();
        Self { weights, features }
    }

    /// One-hot model carrying the same values as `table`.
    pub fn from_table(table: &QTable) -> Self {
        let features = Arc::new(OneHot { num_states: table.num_states(), num_actions: table.num_actions() });
        Self { weights: table.values().to_vec(), features }
    }

    pub fn predict(&self, s: usize, a: usize) -> Result<f64, ExploreError> {
        linear_predict(&self.weights, &self.features.features(s, a))
    }

    /// Estimates for every action at `s` under an arbitrary weight vector.
    pub fn row_with(&self, weights: &[f64], s: usize) -> Result<Vec<f64>, ExploreError> {
        let mut buf = vec![0.0; self.features.dim()];
        (0..self.features.num_actions())
            .map(|a| {
                self.features.write(s, a, &mut buf);
                linear_predict(weights, &buf)
            })
            .collect()
    }

    pub fn row(&self, s: usize) -> Result<Vec<f64>, ExploreError> {
        self.row_with(&self.weights, s)
    }
}

/// Inner product `v . f`.
pub fn linear_predict(weights: &[f64], features: &[f64]) -> Result<f64, ExploreError> {
    if weights.len() != features.len() {
        return Err(ExploreError::Shape(format!(
            "feature dimension {} does not match {} weights",
            features.len(),
            weights.len()
        )));
    }
    Ok(weights.iter().zip(features).map(|(w, f)| w * f).sum())
}

/// Semi-gradient step `v += alpha delta f`.
pub fn linear_update(weights: &mut [f64], delta: f64, alpha: f64, features: &[f64]) -> Result<(), ExploreError> {
    if weights.len() != features.len() {
        return Err(ExploreError::Shape(format!(
            "feature dimension {} does not match {} weights",
            features.len(),
            weights.len()
        )));
    }
    let scale = alpha * delta;
    for (w, f) in weights.iter_mut().zip(features) {
        *w += scale * f;
    }
    Ok(())
}
