//! Downstream classifiers consuming learned representations.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::CoreError;
use crate::neural::{sigmoid, Activation, Mlp, MlpConfig, Optimizer, OptimizerConfig};
use crate::representation::{reparameterize, RepresentationModel};
use crate::util::derive_seed;
use crate::Result;

/// How rows are mapped into latent space for downstream use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    /// Posterior means (deterministic; the default).
    Mean,
    /// One reparameterized sample per row.
    Sample,
}

/// Map a dataset into latent space with a trained encoder.
pub fn embed(
    model: &RepresentationModel,
    d: &Dataset,
    mode: EmbedMode,
    seed: u64,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((d.n(), model.latent_dim()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunk = 4096;
    let mut start = 0;
    while start < d.n() {
        let end = (start + chunk).min(d.n());
        let idx: Vec<usize> = (start..end).collect();
        let x = d.features().select(Axis(0), &idx);
        let s = &d.sensitive()[start..end];
        let post = model.encode(&x, s)?;
        let z = match mode {
            EmbedMode::Mean => post.mu.clone(),
            EmbedMode::Sample => {
                let noise = crate::representation::draw_noise(
                    &mut rng,
                    post.n(),
                    post.latent_dim(),
                );
                reparameterize(&post, &noise)?
            }
        };
        out.slice_mut(ndarray::s![start..end, ..]).assign(&z);
        start = end;
    }
    Ok(out)
}

/// Architecture and training hyperparameters of the downstream classifier:
/// one hidden layer by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownstreamConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    /// Decision threshold on the sigmoid of the score.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            hidden: 32,
            epochs: 40,
            batch_size: 256,
            step_size: 3e-3,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl DownstreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::config(
                "hidden, epochs, batch_size must be >= 1".to_string(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CoreError::config(format!(
                "decision threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// A trained downstream model: scores in logit space, thresholded decisions
/// on the sigmoid.
pub struct DownstreamModel {
    net: Mlp,
    threshold: f64,
}

impl DownstreamModel {
    /// Raw scores (logits), one per row.
    pub fn scores(&self, z: &Array2<f64>) -> Result<Vec<f64>> {
        let (out, _) = self.net.forward(z)?;
        Ok(out.column(0).to_vec())
    }

    /// Thresholded decisions: 1 when `sigmoid(score) >= threshold`.
    pub fn predict(&self, z: &Array2<f64>) -> Result<Vec<u8>> {
        Ok(self
            .scores(z)?
            .into_iter()
            .map(|s| u8::from(sigmoid(s) >= self.threshold))
            .collect())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub(crate) fn net(&self) -> &Mlp {
        &self.net
    }
}

/// Train the one-hidden-layer downstream classifier with binary
/// cross-entropy; deterministic per seed. Errors when `y` has one class.
pub fn train_downstream(
    z: &Array2<f64>,
    y: &[u8],
    config: &DownstreamConfig,
) -> Result<DownstreamModel> {
    config.validate()?;
    if z.nrows() != y.len() {
        return Err(CoreError::shape(format!(
            "{} embeddings vs {} labels",
            z.nrows(),
            y.len()
        )));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(CoreError::data(
            "downstream training needs both classes".to_string(),
        ));
    }
    let cfg = MlpConfig::new(
        vec![z.ncols(), config.hidden, 1],
        vec![Activation::Relu, Activation::Identity],
        derive_seed(config.seed, 7),
    );
    let mut net = Mlp::new(cfg)?;
    let mut optimizer = Optimizer::new(OptimizerConfig::with_step_size(config.step_size))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 8));
    let n = z.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xb = z.select(Axis(0), batch);
            let yb: Vec<f64> = batch.iter().map(|&i| y[i] as f64).collect();
            net.zero_grad();
            let (out, cache) = net.forward(&xb)?;
            // mean BCE: d/d logit = (sigmoid - y) / batch
            let bf = batch.len() as f64;
            let grad = Array2::from_shape_fn(out.raw_dim(), |(i, _)| {
                (sigmoid(out[[i, 0]]) - yb[i]) / bf
            });
            net.backward(&cache, &grad)?;
            let mut params = net.params_mut();
            optimizer.step(&mut params)?;
        }
    }
    Ok(DownstreamModel {
        net,
        threshold: config.threshold,
    })
}

/// Mean binary cross-entropy of raw scores against labels (used by the
/// gradient-check suite).
pub(crate) fn bce_loss(scores: &Array1<f64>, y: &[f64]) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(y)
        .map(|(&t, &yv)| {
            // -log p stably via softplus
            let softplus = |v: f64| v.max(0.0) + (-v.abs()).exp().ln_1p();
            yv * softplus(-t) + (1.0 - yv) * softplus(t)
        })
        .sum::<f64>()
        / n
}
