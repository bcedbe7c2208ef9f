//! The representation model: a Gaussian encoder `q(Z|X,S)`, a factorized
//! decoder `p(X|Z,S)`, reparameterized sampling, and the per-example KL
//! values whose mean is the tractable mutual-information surrogate.
//!
//! The per-example KL divergence between the posterior and the standard
//! normal prior plays a double role: summed into the ELBO it is the usual
//! rate term, and averaged over an i.i.d. dataset it is an unbiased estimate
//! of the upper bound on `I(Z;S)` that the fairness machinery certifies.

mod train;

pub use train::{vae_train, EpochStats, TrainConfig};

pub(crate) use train::{draw_noise, epoch_stats, run_epoch};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::error::CoreError;
use crate::neural::{Activation, Mlp, MlpCache, MlpConfig, ParamTensor};
use crate::util::derive_seed;
use crate::Result;

/// Clamp range for the encoder's log-variance output; keeps `exp` tame
/// while leaving sigma in `[e^-5, e^5]`.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Reconstruction likelihood for the decoder output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Decoder outputs per-feature Bernoulli logits; features must be 0/1.
    Bernoulli,
    /// Decoder outputs per-feature means with fixed unit variance.
    GaussianUnitVariance,
}

impl Likelihood {
    pub fn for_features(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::Binary => Likelihood::Bernoulli,
            FeatureKind::Continuous => Likelihood::GaussianUnitVariance,
        }
    }
}

/// Architecture of the encoder/decoder pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        RepresentationConfig {
            latent_dim: 32,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl RepresentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(CoreError::config("latent_dim must be >= 1".to_string()));
        }
        if self.encoder_hidden.iter().any(|&h| h == 0)
            || self.decoder_hidden.iter().any(|&h| h == 0)
        {
            return Err(CoreError::config("zero-width hidden layer".to_string()));
        }
        Ok(())
    }
}

/// Per-example Gaussian posterior parameters over a batch.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    /// Means, one row per example.
    pub mu: Array2<f64>,
    /// Log-variances after clamping to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
    pub logvar: Array2<f64>,
    /// 1.0 where the raw log-variance was strictly inside the clamp range
    /// (gradient flows), 0.0 where it saturated.
    pub(crate) clamp_mask: Array2<f64>,
}

impl GaussianPosterior {
    pub fn n(&self) -> usize {
        self.mu.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.ncols()
    }
}

/// Encoder (phi) and decoder (theta) pair.
pub struct RepresentationModel {
    encoder: Mlp,
    decoder: Mlp,
    input_dim: usize,
    n_groups: usize,
    latent_dim: usize,
    likelihood: Likelihood,
    config: RepresentationConfig,
}

/// One-hot encode sensitive codes into an `n x k` matrix.
pub fn one_hot_groups(sensitive: &[usize], n_groups: usize) -> Array2<f64> {
    let mut out = Array2::zeros((sensitive.len(), n_groups));
    for (i, &s) in sensitive.iter().enumerate() {
        out[[i, s]] = 1.0;
    }
    out
}

impl RepresentationModel {
    pub fn new(
        input_dim: usize,
        n_groups: usize,
        likelihood: Likelihood,
        config: RepresentationConfig,
    ) -> Result<Self> {
        config.validate()?;
        let l = config.latent_dim;
        let mut enc_sizes = vec![input_dim + n_groups];
        enc_sizes.extend_from_slice(&config.encoder_hidden);
        enc_sizes.push(2 * l);
        let mut enc_acts = vec![Activation::Tanh; config.encoder_hidden.len()];
        enc_acts.push(Activation::Identity);
        let mut enc_cfg = MlpConfig::new(enc_sizes, enc_acts, derive_seed(config.seed, 0));
        enc_cfg.init_scale = config.init_scale;
        let encoder = Mlp::new(enc_cfg)?;

        let mut dec_sizes = vec![l + n_groups];
        dec_sizes.extend_from_slice(&config.decoder_hidden);
        dec_sizes.push(input_dim);
        let mut dec_acts = vec![Activation::Tanh; config.decoder_hidden.len()];
        dec_acts.push(Activation::Identity);
        let mut dec_cfg = MlpConfig::new(dec_sizes, dec_acts, derive_seed(config.seed, 1));
        dec_cfg.init_scale = config.init_scale;
        let decoder = Mlp::new(dec_cfg)?;

        Ok(RepresentationModel {
            encoder,
            decoder,
            input_dim,
            n_groups,
            latent_dim: l,
            likelihood,
            config,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    pub fn config(&self) -> &RepresentationConfig {
        &self.config
    }

    pub(crate) fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub(crate) fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub(crate) fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub(crate) fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    /// All parameters, encoder first, in stable order.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = self.encoder.params();
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.decoder.zero_grad();
    }

    fn check_batch(&self, x: &Array2<f64>, sensitive: &[usize]) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(CoreError::shape(format!(
                "batch has {} feature columns, model expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        if x.nrows() != sensitive.len() {
            return Err(CoreError::shape(format!(
                "{} rows vs {} sensitive codes",
                x.nrows(),
                sensitive.len()
            )));
        }
        if let Some(&bad) = sensitive.iter().find(|&&s| s >= self.n_groups) {
            return Err(CoreError::shape(format!(
                "sensitive code {bad} out of range for {} groups",
                self.n_groups
            )));
        }
        Ok(())
    }

    /// Posterior parameters for a batch; deterministic in the inputs.
    pub fn encode(&self, x: &Array2<f64>, sensitive: &[usize]) -> Result<GaussianPosterior> {
        let (post, _) = self.encode_cached(x, sensitive)?;
        Ok(post)
    }

    pub(crate) fn encode_cached(
        &self,
        x: &Array2<f64>,
        sensitive: &[usize],
    ) -> Result<(GaussianPosterior, MlpCache)> {
        self.check_batch(x, sensitive)?;
        let input = concat_features_groups(x, sensitive, self.n_groups);
        let (raw, cache) = self.encoder.forward(&input)?;
        let l = self.latent_dim;
        let mu = raw.slice(ndarray::s![.., ..l]).to_owned();
        let raw_logvar = raw.slice(ndarray::s![.., l..]).to_owned();
        let logvar = raw_logvar.mapv(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        let clamp_mask = raw_logvar.mapv(|v| f64::from(v.abs() < LOGVAR_CLAMP));
        Ok((
            GaussianPosterior {
                mu,
                logvar,
                clamp_mask,
            },
            cache,
        ))
    }

    /// Decode latent codes to per-feature logits (Bernoulli) or means
    /// (Gaussian).
    pub fn decode(&self, z: &Array2<f64>, sensitive: &[usize]) -> Result<Array2<f64>> {
        let (out, _) = self.decode_cached(z, sensitive)?;
        Ok(out)
    }

    pub(crate) fn decode_cached(
        &self,
        z: &Array2<f64>,
        sensitive: &[usize],
    ) -> Result<(Array2<f64>, MlpCache)> {
        if z.ncols() != self.latent_dim {
            return Err(CoreError::shape(format!(
                "latent batch has {} columns, model expects {}",
                z.ncols(),
                self.latent_dim
            )));
        }
        let input = concat_features_groups(z, sensitive, self.n_groups);
        self.decoder.forward(&input)
    }

    /// Per-example reconstruction log-probability `log p(x | z, s)`.
    pub fn reconstruction_log_prob(
        &self,
        x: &Array2<f64>,
        z: &Array2<f64>,
        sensitive: &[usize],
    ) -> Result<Array1<f64>> {
        self.check_batch(x, sensitive)?;
        let out = self.decode(z, sensitive)?;
        reconstruction_log_prob_from_output(self.likelihood, x, &out)
    }

    /// Mean and per-example values of the mutual-information surrogate over
    /// a dataset: `per_example[i] = KL(q(Z|x_i,s_i) || N(0,I))`.
    ///
    /// The per-example values are exactly the i.i.d. unbiased estimates the
    /// confidence bounds consume (`m =` dataset size).
    pub fn estimate_i1(&self, d: &Dataset) -> Result<(f64, Vec<f64>)> {
        let mut per_example = Vec::with_capacity(d.n());
        // chunked to bound peak memory on large tables
        let chunk = 4096;
        let mut start = 0;
        while start < d.n() {
            let end = (start + chunk).min(d.n());
            let idx: Vec<usize> = (start..end).collect();
            let x = d.features().select(Axis(0), &idx);
            let s = &d.sensitive()[start..end];
            let post = self.encode(&x, s)?;
            per_example.extend(kl_to_prior(&post).into_iter());
            start = end;
        }
        let mean = per_example.iter().sum::<f64>() / per_example.len() as f64;
        Ok((mean, per_example))
    }
}

pub(crate) fn concat_features_groups(
    x: &Array2<f64>,
    sensitive: &[usize],
    n_groups: usize,
) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let mut out = Array2::zeros((n, d + n_groups));
    out.slice_mut(ndarray::s![.., ..d]).assign(x);
    for (i, &s) in sensitive.iter().enumerate() {
        out[[i, d + s]] = 1.0;
    }
    out
}

/// `z = mu + exp(logvar / 2) * noise`, elementwise over the batch.
pub fn reparameterize(post: &GaussianPosterior, noise: &Array2<f64>) -> Result<Array2<f64>> {
    if noise.raw_dim() != post.mu.raw_dim() {
        return Err(CoreError::shape(format!(
            "noise shape {:?} does not match posterior shape {:?}",
            noise.shape(),
            post.mu.shape()
        )));
    }
    Ok(&post.mu + &(post.logvar.mapv(|lv| (0.5 * lv).exp()) * noise))
}

/// Per-example KL divergence to the standard normal prior:
/// `1/2 sum_i (mu_i^2 + exp(logvar_i) - 1 - logvar_i)`; nonnegative, zero
/// exactly when the posterior equals the prior.
pub fn kl_to_prior(post: &GaussianPosterior) -> Array1<f64> {
    let mut out = Array1::zeros(post.n());
    for i in 0..post.n() {
        let mut acc = 0.0;
        for j in 0..post.latent_dim() {
            let mu = post.mu[[i, j]];
            let lv = post.logvar[[i, j]];
            acc += mu * mu + lv.exp() - 1.0 - lv;
        }
        out[i] = 0.5 * acc;
    }
    out
}

/// Stable `log(1 + e^t)`.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Per-example reconstruction log-likelihood from decoder outputs.
pub(crate) fn reconstruction_log_prob_from_output(
    likelihood: Likelihood,
    x: &Array2<f64>,
    out: &Array2<f64>,
) -> Result<Array1<f64>> {
    if x.raw_dim() != out.raw_dim() {
        return Err(CoreError::shape(format!(
            "decoder output shape {:?} vs data shape {:?}",
            out.shape(),
            x.shape()
        )));
    }
    match likelihood {
        Likelihood::Bernoulli => {
            if x.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(CoreError::data(
                    "Bernoulli reconstruction needs 0/1 features; mark continuous \
                     columns with continuous=true in the schema to use the \
                     unit-variance Gaussian likelihood"
                        .to_string(),
                ));
            }
            let mut ll = Array1::zeros(x.nrows());
            for i in 0..x.nrows() {
                let mut acc = 0.0;
                for j in 0..x.ncols() {
                    let t = out[[i, j]];
                    let xv = x[[i, j]];
                    // log sigma(t) = -softplus(-t); log(1 - sigma(t)) = -softplus(t)
                    acc -= xv * softplus(-t) + (1.0 - xv) * softplus(t);
                }
                ll[i] = acc;
            }
            Ok(ll)
        }
        Likelihood::GaussianUnitVariance => {
            let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
            let mut ll = Array1::zeros(x.nrows());
            for i in 0..x.nrows() {
                let mut acc = 0.0;
                for j in 0..x.ncols() {
                    let r = x[[i, j]] - out[[i, j]];
                    acc += -0.5 * r * r - half_ln_2pi;
                }
                ll[i] = acc;
            }
            Ok(ll)
        }
    }
}
