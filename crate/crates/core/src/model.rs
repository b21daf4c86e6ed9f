//! Logistic regression: probabilities, per-sample cross-entropy, gradients,
//! SGD updates, the covariance fairness penalty, and checkpoints.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of probability `p` against label `y`.
pub fn cross_entropy(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Strength `μ` of the `|Cov(z, ŷ)|` penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub mu: f64,
}

impl PenaltyConfig {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!("penalty strength {mu} must be >= 0")));
        }
        Ok(PenaltyConfig { mu })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Gradient {
    pub fn zeros(m: usize) -> Self {
        Gradient {
            weights: vec![0.0; m],
            bias: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub learning_rate: f64,
}

impl LinearModel {
    /// All-zero parameters.
    pub fn zeros(m: usize, learning_rate: f64) -> Result<Self> {
        LinearModel::new(vec![0.0; m], 0.0, learning_rate)
    }

    pub fn new(weights: Vec<f64>, bias: f64, learning_rate: f64) -> Result<Self> {
        let model = LinearModel {
            weights,
            bias,
            learning_rate,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidModel("no weights".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, d: &Dataset) -> Result<()> {
        if d.n_features() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d.n_features(),
            });
        }
        Ok(())
    }

    pub fn logit_row(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn proba_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit_row(x))
    }

    /// `sigmoid(w·x + b)` for every row of a row-major `n × m` matrix.
    pub fn predict_proba_matrix(&self, features: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim();
        if !features.len().is_multiple_of(m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: features.len() % m,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(features.chunks_exact(m).map(|x| self.proba_row(x)).collect())
    }

    pub fn predict_proba(&self, d: &Dataset) -> Result<Vec<f64>> {
        self.check_dim(d)?;
        Ok((0..d.len()).map(|i| self.proba_row(d.row(i))).collect())
    }

    /// Hard predictions at threshold 0.5.
    pub fn predict(&self, d: &Dataset) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(d)?
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect())
    }

    /// Cross-entropy of every sample, in dataset order.
    pub fn per_sample_loss(&self, d: &Dataset) -> Result<Vec<f64>> {
        self.check_dim(d)?;
        Ok((0..d.len())
            .map(|i| cross_entropy(self.proba_row(d.row(i)), d.label(i)))
            .collect())
    }

    /// Mean (or weighted mean) cross-entropy over `batch`.
    pub fn batch_loss(&self, d: &Dataset, batch: &[usize], weights: Option<&[f64]>) -> Result<f64> {
        self.check_dim(d)?;
        let w = normalized_weights(batch, weights)?;
        Ok(batch
            .iter()
            .zip(&w)
            .map(|(&i, wi)| wi * cross_entropy(self.proba_row(d.row(i)), d.label(i)))
            .sum())
    }

    /// Gradient of the weighted mean cross-entropy over `batch`.
    /// `weights`, when given, has one nonnegative entry per batch position and
    /// is normalized by its sum.
    pub fn gradient(&self, d: &Dataset, batch: &[usize], weights: Option<&[f64]>) -> Result<Gradient> {
        self.check_dim(d)?;
        let w = normalized_weights(batch, weights)?;
        let mut g = Gradient::zeros(self.dim());
        for (&i, wi) in batch.iter().zip(&w) {
            let x = d.row(i);
            let r = wi * (self.proba_row(x) - f64::from(d.label(i)));
            for (gj, xj) in g.weights.iter_mut().zip(x) {
                *gj += r * xj;
            }
            g.bias += r;
        }
        Ok(g)
    }

    /// Mean loss plus `μ·|Cov(z, p)|` over the batch, with `p` the predicted
    /// probability. A batch with constant `z` has zero covariance.
    pub fn penalty_loss(&self, d: &Dataset, batch: &[usize], cfg: PenaltyConfig) -> Result<f64> {
        let base = self.batch_loss(d, batch, None)?;
        let probs: Vec<f64> = batch.iter().map(|&i| self.proba_row(d.row(i))).collect();
        Ok(base + cfg.mu * covariance_z(d, batch, &probs).abs())
    }

    /// Gradient of [`LinearModel::penalty_loss`]. At zero covariance the
    /// subgradient 0 is used for the absolute value.
    pub fn penalty_gradient(&self, d: &Dataset, batch: &[usize], cfg: PenaltyConfig) -> Result<Gradient> {
        let mut g = self.gradient(d, batch, None)?;
        if cfg.mu == 0.0 {
            return Ok(g);
        }
        let probs: Vec<f64> = batch.iter().map(|&i| self.proba_row(d.row(i))).collect();
        let cov = covariance_z(d, batch, &probs);
        if cov == 0.0 {
            return Ok(g);
        }
        let nb = batch.len() as f64;
        let z_mean = batch.iter().map(|&i| f64::from(d.sensitive()[i])).sum::<f64>() / nb;
        let scale = cfg.mu * cov.signum() / nb;
        for (&i, p) in batch.iter().zip(&probs) {
            let r = scale * (f64::from(d.sensitive()[i]) - z_mean) * p * (1.0 - p);
            for (gj, xj) in g.weights.iter_mut().zip(d.row(i)) {
                *gj += r * xj;
            }
            g.bias += r;
        }
        Ok(g)
    }

    /// `θ ← θ − lr·g`. A non-finite gradient is rejected and leaves the model unchanged.
    pub fn sgd_step(&mut self, g: &Gradient) -> Result<()> {
        if g.weights.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: g.weights.len(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        for (w, gj) in self.weights.iter_mut().zip(&g.weights) {
            *w -= self.learning_rate * gj;
        }
        self.bias -= self.learning_rate * g.bias;
        Ok(())
    }

    /// Little-endian `f64` sequence: `m, bias, lr, w_1..w_m`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.flat().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::Checkpoint(format!("{} bytes is not a multiple of 8", bytes.len())));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_flat(&flat)
    }

    /// The same sequence as [`LinearModel::to_bytes`], as a JSON number array.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.flat()).expect("finite floats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let flat: Vec<f64> = serde_json::from_str(text)?;
        Self::from_flat(&flat)
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.dim());
        v.push(self.dim() as f64);
        v.push(self.bias);
        v.push(self.learning_rate);
        v.extend_from_slice(&self.weights);
        v
    }

    fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() < 3 {
            return Err(Error::Checkpoint("header needs 3 values".into()));
        }
        let m = flat[0];
        if m.fract() != 0.0 || m < 1.0 || m as usize != flat.len() - 3 {
            return Err(Error::Checkpoint(format!(
                "header declares {m} weights but {} follow",
                flat.len() - 3
            )));
        }
        LinearModel::new(flat[3..].to_vec(), flat[1], flat[2])
    }
}

fn normalized_weights(batch: &[usize], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    match weights {
        None => Ok(vec![1.0 / batch.len() as f64; batch.len()]),
        Some(w) => {
            if w.len() != batch.len() {
                return Err(Error::DimensionMismatch {
                    expected: batch.len(),
                    got: w.len(),
                });
            }
            if let Some(&neg) = w.iter().find(|v| v.is_nan() || **v < 0.0) {
                return Err(Error::NegativeWeight(neg));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 || !total.is_finite() {
                return Err(Error::EmptyBatch);
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

/// Population covariance between `z` and `probs` over the batch.
fn covariance_z(d: &Dataset, batch: &[usize], probs: &[f64]) -> f64 {
    let nb = batch.len() as f64;
    let z: Vec<f64> = batch.iter().map(|&i| f64::from(d.sensitive()[i])).collect();
    let z_mean = z.iter().sum::<f64>() / nb;
    let p_mean = probs.iter().sum::<f64>() / nb;
    z.iter()
        .zip(probs)
        .map(|(zi, pi)| (zi - z_mean) * (pi - p_mean))
        .sum::<f64>()
        / nb
}
