//! Trainable readouts over reservoir spike rasters: count-and-binned
//! feature extraction, a delta-rule softmax classifier trained online, and a
//! one-vs-rest linear SVM baseline trained by deterministic subgradient
//! descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::SpikeRaster;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("raster length {steps} is not divisible by {n_bins} bins")]
    IndivisibleBins { steps: usize, n_bins: usize },
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set is missing classes {0:?}")]
    MissingClasses(Vec<usize>),
    #[error("label {label} is outside the {n_classes}-class range")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

// ---------------------------------------------------------------------------
// Count-and-binned features
// ---------------------------------------------------------------------------

/// Per-bin spike counts of a raster, flattened row-major
/// (`counts[row * n_bins + bin]`), with the class label attached by the
/// caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub counts: Vec<u32>,
    pub n_bins: usize,
    pub label: usize,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Counts spikes per row per equal-width time bin. The raster length must
/// divide evenly into `n_bins`.
pub fn bin_spike_counts(
    raster: &SpikeRaster,
    n_bins: usize,
) -> Result<FeatureVector, ReadoutError> {
    if n_bins == 0 || !raster.steps().is_multiple_of(n_bins) {
        return Err(ReadoutError::IndivisibleBins {
            steps: raster.steps(),
            n_bins,
        });
    }
    let bin_len = raster.steps() / n_bins;
    let mut counts = Vec::with_capacity(raster.rows() * n_bins);
    for r in 0..raster.rows() {
        for b in 0..n_bins {
            counts.push(raster.count_range(r, b * bin_len, (b + 1) * bin_len) as u32);
        }
    }
    Ok(FeatureVector {
        counts,
        n_bins,
        label: 0,
    })
}

// ---------------------------------------------------------------------------
// Softmax + delta rule
// ---------------------------------------------------------------------------

/// Numerically safe softmax: exponentials are taken after subtracting the
/// max, so arbitrarily large logits cannot overflow. Entries are positive
/// and sum to 1.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the largest entry, ties broken by the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Single-layer softmax classifier trained by the delta rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    /// Row-major `[n_classes x n_features]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub alpha: f64,
    pub n_classes: usize,
    pub n_features: usize,
}

impl SoftmaxModel {
    pub fn zeros(n_classes: usize, n_features: usize, alpha: f64) -> Self {
        Self {
            weights: vec![0.0; n_classes * n_features],
            bias: vec![0.0; n_classes],
            alpha,
            n_classes,
            n_features,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|k| {
                let row = &self.weights[k * self.n_features..(k + 1) * self.n_features];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias[k]
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Predicted class: argmax of the softmax output, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ReadoutError> {
        if x.len() != self.n_features {
            return Err(ReadoutError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(argmax(&self.probabilities(x)))
    }

    /// Cross-entropy loss of one sample.
    pub fn ce_loss(&self, x: &[f64], class: usize) -> f64 {
        -self.probabilities(x)[class].ln()
    }
}

/// One delta-rule step with target distribution `y` (usually one-hot):
/// `W += alpha * (y - p) * x^T`, `b += alpha * (y - p)` where
/// `p = softmax(Wx + b)`. With softmax outputs this is exactly a
/// cross-entropy gradient step.
pub fn delta_update(model: &mut SoftmaxModel, x: &[f64], y: &[f64]) {
    assert_eq!(x.len(), model.n_features, "feature dimension mismatch");
    assert_eq!(y.len(), model.n_classes, "target dimension mismatch");
    let p = model.probabilities(x);
    for k in 0..model.n_classes {
        let err = model.alpha * (y[k] - p[k]);
        let row = &mut model.weights[k * model.n_features..(k + 1) * model.n_features];
        for (w, &xi) in row.iter_mut().zip(x) {
            *w += err * xi;
        }
        model.bias[k] += err;
    }
}

/// Delta-rule training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaTrainConfig {
    pub n_classes: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub batch: usize,
    pub seed: u64,
}

fn check_training_set(train: &[FeatureVector], n_classes: usize) -> Result<usize, ReadoutError> {
    if train.is_empty() {
        return Err(ReadoutError::EmptyTrainingSet);
    }
    if let Some(fv) = train.iter().find(|fv| fv.label >= n_classes) {
        return Err(ReadoutError::LabelOutOfRange {
            label: fv.label,
            n_classes,
        });
    }
    let mut present = vec![false; n_classes];
    for fv in train {
        present[fv.label] = true;
    }
    let missing: Vec<usize> = present
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(c, _)| c)
        .collect();
    if !missing.is_empty() {
        return Err(ReadoutError::MissingClasses(missing));
    }
    let dim = train[0].dim();
    if let Some(fv) = train.iter().find(|fv| fv.dim() != dim) {
        return Err(ReadoutError::DimensionMismatch {
            expected: dim,
            got: fv.dim(),
        });
    }
    Ok(dim)
}

/// Trains a softmax model by per-sample (or mini-batch) delta updates,
/// shuffling the order each epoch. Returns the model and the per-epoch mean
/// cross-entropy loss over the training set. Deterministic given the seed.
pub fn train_delta_softmax(
    train: &[FeatureVector],
    cfg: &DeltaTrainConfig,
) -> Result<(SoftmaxModel, Vec<f64>), ReadoutError> {
    if cfg.batch == 0 {
        return Err(ReadoutError::InvalidConfig("batch must be >= 1".into()));
    }
    let dim = check_training_set(train, cfg.n_classes)?;
    let features: Vec<Vec<f64>> = train.iter().map(FeatureVector::to_f64).collect();
    let mut model = SoftmaxModel::zeros(cfg.n_classes, dim, cfg.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    let mut grad_w = vec![0.0; cfg.n_classes * dim];
    let mut grad_b = vec![0.0; cfg.n_classes];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() == 1 {
                let i = chunk[0];
                let mut y = vec![0.0; cfg.n_classes];
                y[train[i].label] = 1.0;
                delta_update(&mut model, &features[i], &y);
                continue;
            }
            // Mini-batch: mean gradient over the chunk, one update.
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                let p = model.probabilities(&features[i]);
                for k in 0..cfg.n_classes {
                    let err =
                        (f64::from(u8::from(k == train[i].label)) - p[k]) / chunk.len() as f64;
                    for (g, &xi) in grad_w[k * dim..(k + 1) * dim].iter_mut().zip(&features[i]) {
                        *g += err * xi;
                    }
                    grad_b[k] += err;
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w += cfg.alpha * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b += cfg.alpha * g;
            }
        }
        let mean_loss = train
            .iter()
            .zip(&features)
            .map(|(fv, x)| model.ce_loss(x, fv.label))
            .sum::<f64>()
            / train.len() as f64;
        loss_curve.push(mean_loss);
    }
    Ok((model, loss_curve))
}

// ---------------------------------------------------------------------------
// Linear SVM baseline
// ---------------------------------------------------------------------------

/// One-vs-rest linear hinge-loss classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// Row-major `[n_classes x n_features]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub reg_c: f64,
    pub n_classes: usize,
    pub n_features: usize,
}

impl LinearSvmModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|k| {
                let row = &self.weights[k * self.n_features..(k + 1) * self.n_features];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias[k]
            })
            .collect()
    }

    /// Predicted class by max margin score, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ReadoutError> {
        if x.len() != self.n_features {
            return Err(ReadoutError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(argmax(&self.scores(x)))
    }
}

/// SVM training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmTrainConfig {
    pub n_classes: usize,
    pub reg_c: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Trains one-vs-rest linear classifiers with hinge loss by projected
/// subgradient descent (step 1/(lambda t), lambda = 1/(C n)). All class
/// machines share the same per-epoch sample order, so relabeling classes
/// permutes the learned rows exactly. Deterministic given the seed.
pub fn train_linear_svm(
    train: &[FeatureVector],
    cfg: &SvmTrainConfig,
) -> Result<LinearSvmModel, ReadoutError> {
    if !cfg.reg_c.is_finite() || cfg.reg_c <= 0.0 {
        return Err(ReadoutError::InvalidConfig(format!(
            "regularization strength must be positive, got {}",
            cfg.reg_c
        )));
    }
    let dim = check_training_set(train, cfg.n_classes)?;
    let features: Vec<Vec<f64>> = train.iter().map(FeatureVector::to_f64).collect();
    let lambda = 1.0 / (cfg.reg_c * train.len() as f64);

    let mut model = LinearSvmModel {
        weights: vec![0.0; cfg.n_classes * dim],
        bias: vec![0.0; cfg.n_classes],
        reg_c: cfg.reg_c,
        n_classes: cfg.n_classes,
        n_features: dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut t = 0u64;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let shrink = 1.0 - eta * lambda;
            let x = &features[i];
            for k in 0..cfg.n_classes {
                let y = if train[i].label == k { 1.0 } else { -1.0 };
                let row = &mut model.weights[k * dim..(k + 1) * dim];
                let margin =
                    y * (row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + model.bias[k]);
                if margin < 1.0 {
                    for (w, &xi) in row.iter_mut().zip(x) {
                        *w = shrink * *w + eta * y * xi;
                    }
                    model.bias[k] += eta * y;
                } else {
                    for w in row.iter_mut() {
                        *w *= shrink;
                    }
                }
            }
        }
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
