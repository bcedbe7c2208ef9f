//! Stochastic training of the representation model.
//!
//! One shared step serves every trainer in the toolkit. The objective is
//! always `mean(-log p(x|z,s)) + mean(KL) + sum_j w_j KL_j` where the
//! optional per-example weights `w` inject constraint gradients: zero for
//! the vanilla autoencoder, the confidence-bound derivative scaled by the
//! Lagrange multiplier during candidate selection, a flat penalty for the
//! calibration sweep.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::CoreError;
use crate::neural::{MlpCache, Optimizer, OptimizerConfig};
use crate::representation::{
    kl_to_prior, reconstruction_log_prob_from_output, reparameterize, GaussianPosterior,
    Likelihood, RepresentationConfig, RepresentationModel,
};
use crate::util::derive_seed;
use crate::Result;

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            step_size: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::config(
                "epochs and batch_size must be >= 1".to_string(),
            ));
        }
        OptimizerConfig::with_step_size(self.step_size).validate()
    }
}

/// Full-dataset objective values logged once per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean reconstruction log-likelihood (one sampled z per example).
    pub recon_ll: f64,
    /// Mean KL to the prior.
    pub kl: f64,
    /// `recon_ll - kl`.
    pub elbo: f64,
}

/// Everything the backward pass needs from one forward evaluation.
pub(crate) struct ForwardPass {
    pub post: GaussianPosterior,
    pub z: Array2<f64>,
    pub noise: Array2<f64>,
    pub dec_out: Array2<f64>,
    /// Per-example reconstruction log-likelihood.
    pub recon_ll: Array1<f64>,
    /// Per-example KL to the prior.
    pub kl: Array1<f64>,
    enc_cache: MlpCache,
    dec_cache: MlpCache,
}

impl RepresentationModel {
    /// One stochastic forward evaluation of the objective pieces.
    pub(crate) fn forward_pass(
        &self,
        x: &Array2<f64>,
        sensitive: &[usize],
        noise: Array2<f64>,
    ) -> Result<ForwardPass> {
        let (post, enc_cache) = self.encode_cached(x, sensitive)?;
        let z = reparameterize(&post, &noise)?;
        let (dec_out, dec_cache) = self.decode_cached(&z, sensitive)?;
        let recon_ll = reconstruction_log_prob_from_output(self.likelihood(), x, &dec_out)?;
        let kl = kl_to_prior(&post);
        Ok(ForwardPass {
            post,
            z,
            noise,
            dec_out,
            recon_ll,
            kl,
            enc_cache,
            dec_cache,
        })
    }

    /// Accumulate gradients of
    /// `mean(-recon_ll) + mean(KL) + sum_j kl_weights_j * KL_j`
    /// into the encoder and decoder parameters.
    pub(crate) fn backward_pass(
        &mut self,
        fp: &ForwardPass,
        x: &Array2<f64>,
        sensitive: &[usize],
        kl_weights: Option<&Array1<f64>>,
    ) -> Result<()> {
        let n = x.nrows() as f64;
        let loss_probe = -fp.recon_ll.sum() / n + fp.kl.sum() / n;
        if !loss_probe.is_finite() {
            return Err(CoreError::training(format!(
                "non-finite objective value {loss_probe}"
            )));
        }
        // d mean(-recon_ll) / d decoder_output
        let d_out = match self.likelihood() {
            Likelihood::Bernoulli => {
                ndarray::Zip::from(&fp.dec_out)
                    .and(x)
                    .map_collect(|&t, &xv| (crate::neural::sigmoid(t) - xv) / n)
            }
            Likelihood::GaussianUnitVariance => {
                ndarray::Zip::from(&fp.dec_out)
                    .and(x)
                    .map_collect(|&m, &xv| (m - xv) / n)
            }
        };
        let d_dec_input = self.decoder_mut().backward(&fp.dec_cache, &d_out)?;
        let l = self.latent_dim();
        let dz = d_dec_input.slice(ndarray::s![.., ..l]).to_owned();

        // reparameterization: z = mu + exp(logvar/2) * eps
        let d_mu_recon = dz.clone();
        let half_sigma = fp.post.logvar.mapv(|lv| 0.5 * (0.5 * lv).exp());
        let d_logvar_recon = &dz * &fp.noise * &half_sigma;

        // KL term: coefficient 1/n from the mean plus any per-example weight
        let mut coeff = Array1::from_elem(fp.kl.len(), 1.0 / n);
        if let Some(w) = kl_weights {
            if w.len() != fp.kl.len() {
                return Err(CoreError::shape(format!(
                    "{} kl weights for {} examples",
                    w.len(),
                    fp.kl.len()
                )));
            }
            coeff += w;
        }
        let coeff_col = coeff.view().insert_axis(Axis(1));
        let d_mu_kl = &fp.post.mu * &coeff_col;
        let d_logvar_kl = fp.post.logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0)) * &coeff_col;

        let d_mu = d_mu_recon + d_mu_kl;
        // clamped log-variance passes no gradient where it saturated
        let d_logvar = (d_logvar_recon + d_logvar_kl) * &fp.post.clamp_mask;

        let mut d_enc_out = Array2::zeros((x.nrows(), 2 * l));
        d_enc_out.slice_mut(ndarray::s![.., ..l]).assign(&d_mu);
        d_enc_out.slice_mut(ndarray::s![.., l..]).assign(&d_logvar);
        self.encoder_mut().backward(&fp.enc_cache, &d_enc_out)?;
        Ok(())
    }
}

pub(crate) fn draw_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Evaluate full-dataset epoch statistics with one sampled z per example.
pub(crate) fn epoch_stats(
    model: &RepresentationModel,
    d: &Dataset,
    epoch: usize,
    eval_seed: u64,
) -> Result<EpochStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    let chunk = 4096;
    let mut start = 0;
    while start < d.n() {
        let end = (start + chunk).min(d.n());
        let idx: Vec<usize> = (start..end).collect();
        let x = d.features().select(Axis(0), &idx);
        let s = &d.sensitive()[start..end];
        let noise = draw_noise(&mut rng, x.nrows(), model.latent_dim());
        let fp = model.forward_pass(&x, s, noise)?;
        recon_sum += fp.recon_ll.sum();
        kl_sum += fp.kl.sum();
        start = end;
    }
    let n = d.n() as f64;
    let (recon_ll, kl) = (recon_sum / n, kl_sum / n);
    Ok(EpochStats {
        epoch,
        recon_ll,
        kl,
        elbo: recon_ll - kl,
    })
}

/// Iterate minibatches of shuffled row indices, calling `step` with the
/// gathered batch and a fresh noise draw. Shared by every trainer.
pub(crate) fn run_epoch<F>(
    model: &mut RepresentationModel,
    d: &Dataset,
    batch_size: usize,
    shuffle_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
    mut step: F,
) -> Result<()>
where
    F: FnMut(&mut RepresentationModel, &Array2<f64>, &[usize], Array2<f64>) -> Result<()>,
{
    let mut order: Vec<usize> = (0..d.n()).collect();
    order.shuffle(shuffle_rng);
    for batch in order.chunks(batch_size) {
        let x = d.features().select(Axis(0), batch);
        let s: Vec<usize> = batch.iter().map(|&i| d.sensitive()[i]).collect();
        let noise = draw_noise(noise_rng, x.nrows(), model.latent_dim());
        step(model, &x, &s, noise)?;
    }
    Ok(())
}

/// Train a plain variational autoencoder on the ELBO alone — the baseline
/// with no fairness term. Deterministic per seed.
pub fn vae_train(
    d: &Dataset,
    model_cfg: &RepresentationConfig,
    train: &TrainConfig,
) -> Result<(RepresentationModel, Vec<EpochStats>)> {
    train.validate()?;
    let mut model = RepresentationModel::new(
        d.dim(),
        d.n_groups(),
        Likelihood::for_features(d.feature_kind()),
        model_cfg.clone(),
    )?;
    let mut optimizer = Optimizer::new(OptimizerConfig::with_step_size(train.step_size))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(train.seed, 1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(train.seed, 2));
    let mut trace = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        run_epoch(
            &mut model,
            d,
            train.batch_size,
            &mut shuffle_rng,
            &mut noise_rng,
            |m, x, s, noise| {
                m.zero_grad();
                let fp = m.forward_pass(x, s, noise)?;
                m.backward_pass(&fp, x, s, None)?;
                let mut params = m.params_mut();
                optimizer.step(&mut params)
            },
        )?;
        trace.push(epoch_stats(
            &model,
            d,
            epoch,
            derive_seed(train.seed, 3_000_000 + epoch as u64),
        )?);
    }
    Ok((model, trace))
}
