//! Synthetic classification task: multinomial logistic regression over
//! Gaussian class clusters, with label-skewed client shards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub features: usize,
    pub classes: usize,
    /// Standard deviation of the class centres; larger means easier.
    pub class_separation: f64,
    /// Multiplies every feature; smaller values make SGD converge more slowly.
    pub feature_scale: f64,
    pub dirichlet_alpha: f64,
    pub samples_per_client: usize,
    pub eval_samples: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            features: 32,
            classes: 10,
            class_separation: 0.45,
            feature_scale: 1.0,
            dirichlet_alpha: 0.5,
            samples_per_client: 64,
            eval_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Flat parameter vector: class-major weight matrix followed by biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn add_assign(&mut self, delta: &ModelParams) {
        for (w, d) in self.weights.iter_mut().zip(&delta.weights) {
            *w += d;
        }
    }

    pub fn diff(&self, base: &ModelParams) -> ModelParams {
        ModelParams {
            weights: self.weights.iter().zip(&base.weights).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogisticModel {
    pub features: usize,
    pub classes: usize,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn logits(&self, params: &ModelParams, x: &[f64]) -> Vec<f64> {
        let (d, k) = (self.features, self.classes);
        let bias = &params.weights[k * d..];
        (0..k)
            .map(|c| {
                let row = &params.weights[c * d..(c + 1) * d];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + bias[c]
            })
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Mean cross-entropy over `batch`.
    pub fn loss(&self, params: &ModelParams, batch: &[&Sample]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|s| {
                let logits = self.logits(params, &s.features);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                lse - logits[s.label]
            })
            .sum();
        total / batch.len() as f64
    }

    /// Gradient of [`Self::loss`].
    pub fn gradient(&self, params: &ModelParams, batch: &[&Sample]) -> ModelParams {
        let (d, k) = (self.features, self.classes);
        let mut grad = vec![0.0; self.dim()];
        let scale = 1.0 / batch.len() as f64;
        for s in batch {
            let mut p = Self::softmax(&self.logits(params, &s.features));
            p[s.label] -= 1.0;
            for c in 0..k {
                let g = p[c] * scale;
                for (gw, xi) in grad[c * d..(c + 1) * d].iter_mut().zip(&s.features) {
                    *gw += g * xi;
                }
                grad[k * d + c] += g;
            }
        }
        ModelParams { weights: grad }
    }

    pub fn sgd_step(&self, params: &mut ModelParams, batch: &[&Sample], lr: f64) {
        let g = self.gradient(params, batch);
        for (w, gi) in params.weights.iter_mut().zip(&g.weights) {
            *w -= lr * gi;
        }
    }

    pub fn predict(&self, params: &ModelParams, x: &[f64]) -> usize {
        let logits = self.logits(params, x);
        let mut best = 0;
        for (c, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, params: &ModelParams, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples
            .iter()
            .filter(|s| self.predict(params, &s.features) == s.label)
            .count();
        hits as f64 / samples.len() as f64
    }
}

/// Class centres plus the generator for labelled samples.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub model: LogisticModel,
    centres: Vec<Vec<f64>>,
    config: TaskConfig,
}

impl SyntheticTask {
    pub fn new(config: &TaskConfig, rng: &mut ChaCha8Rng) -> Result<Self, SimError> {
        if config.features == 0 || config.classes < 2 {
            return Err(SimError::Config("task needs features >= 1 and classes >= 2".into()));
        }
        if !(config.dirichlet_alpha > 0.0) || config.samples_per_client == 0 {
            return Err(SimError::Config(
                "task needs dirichlet_alpha > 0 and samples_per_client >= 1".into(),
            ));
        }
        if !(config.feature_scale > 0.0 && config.feature_scale.is_finite()) {
            return Err(SimError::Config("task needs feature_scale > 0".into()));
        }
        let centres = (0..config.classes)
            .map(|_| {
                (0..config.features)
                    .map(|_| config.class_separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Ok(Self {
            model: LogisticModel {
                features: config.features,
                classes: config.classes,
            },
            centres,
            config: config.clone(),
        })
    }

    pub fn sample(&self, label: usize, rng: &mut ChaCha8Rng) -> Sample {
        let features = self.centres[label]
            .iter()
            .map(|c| self.config.feature_scale * (c + rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Sample { features, label }
    }

    /// Label-balanced held-out set.
    pub fn eval_set(&self, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        (0..self.config.eval_samples)
            .map(|i| self.sample(i % self.config.classes, rng))
            .collect()
    }

    /// A client shard whose label mix is drawn from a symmetric Dirichlet.
    pub fn shard(&self, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        // symmetric Dirichlet via normalised Gamma(alpha, 1) draws
        let gamma = Gamma::new(self.config.dirichlet_alpha, 1.0).expect("alpha validated positive");
        let mix: Vec<f64> = (0..self.config.classes).map(|_| gamma.sample(rng)).collect();
        // degenerate mixes (all mass underflowed) fall back to uniform labels
        let labels = WeightedIndex::new(&mix)
            .or_else(|_| WeightedIndex::new(vec![1.0; self.config.classes]))
            .expect("uniform weights are valid");
        (0..self.config.samples_per_client)
            .map(|_| {
                let label = labels.sample(rng);
                self.sample(label, rng)
            })
            .collect()
    }
}

/// Sample-count-weighted mean of client deltas.
pub fn fedavg_aggregate(updates: &[(ModelParams, usize)]) -> Result<ModelParams, SimError> {
    let Some((first, _)) = updates.first() else {
        return Err(SimError::EmptyAggregation);
    };
    let dim = first.dim();
    if let Some((bad, _)) = updates.iter().find(|(u, _)| u.dim() != dim) {
        return Err(SimError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(SimError::EmptyAggregation);
    }
    let mut acc = vec![0.0; dim];
    for (u, n) in updates {
        let w = *n as f64 / total as f64;
        for (a, x) in acc.iter_mut().zip(&u.weights) {
            *a += w * x;
        }
    }
    Ok(ModelParams { weights: acc })
}
