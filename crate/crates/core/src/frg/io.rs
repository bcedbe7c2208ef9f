//! Pipeline-output files.
//!
//! Layout under the shared framing (`magic "FRGO" | version | body |
//! sha256`):
//!
//! ```text
//! tag u32 (0 = solution, 1 = NSF)
//! config_fingerprint str | schema_hash str | info str (free-form JSON)
//! threshold f64
//! certificate: upper f64 | mean f64 | std f64 | m u64 | width f64
//! solution only:
//!   guaranteed u32 | has_dp_bound u32 | dp_bound f64
//!   input_dim u64 | n_groups u64 | likelihood u32
//!   representation config str (JSON)
//!   encoder tensor block | decoder tensor block  (see neural::serialize)
//! NSF only:
//!   reason str | u_value f64
//! ```

use std::path::Path;

use crate::error::CoreError;
use crate::frg::{FrgOutput, NsfDiagnostics};
use crate::neural::serialize::{decode_tensors, encode_tensors};
use crate::representation::{Likelihood, RepresentationConfig, RepresentationModel};
use crate::stats::BoundResult;
use crate::util::{BinReader, BinWriter};
use crate::Result;

const MAGIC: &[u8; 4] = b"FRGO";
const VERSION: u32 = 1;

/// Provenance carried alongside the output: the schema hash of the training
/// data and a free-form JSON blob of training metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelMetadata {
    pub schema_hash: String,
    pub info: String,
}

fn put_certificate(w: &mut BinWriter, c: &BoundResult) {
    w.put_f64(c.upper);
    w.put_f64(c.sample_mean);
    w.put_f64(c.sample_std);
    w.put_u64(c.m as u64);
    w.put_f64(c.width);
}

fn get_certificate(r: &mut BinReader) -> Result<BoundResult> {
    Ok(BoundResult {
        upper: r.get_f64()?,
        sample_mean: r.get_f64()?,
        sample_std: r.get_f64()?,
        m: r.get_u64()? as usize,
        width: r.get_f64()?,
    })
}

pub fn save_output(path: &Path, output: &FrgOutput, meta: &ModelMetadata) -> Result<()> {
    let mut w = BinWriter::new();
    match output {
        FrgOutput::Solution {
            model,
            certificate,
            threshold,
            implied_dp_bound,
            guaranteed,
            config_fingerprint,
        } => {
            w.put_u32(0);
            w.put_str(config_fingerprint);
            w.put_str(&meta.schema_hash);
            w.put_str(&meta.info);
            w.put_f64(*threshold);
            put_certificate(&mut w, certificate);
            w.put_u32(u32::from(*guaranteed));
            w.put_u32(u32::from(implied_dp_bound.is_some()));
            w.put_f64(implied_dp_bound.unwrap_or(0.0));
            w.put_u64(model.input_dim() as u64);
            w.put_u64(model.n_groups() as u64);
            w.put_u32(match model.likelihood() {
                Likelihood::Bernoulli => 0,
                Likelihood::GaussianUnitVariance => 1,
            });
            w.put_str(
                &serde_json::to_string(model.config())
                    .map_err(|e| CoreError::serialization(e.to_string()))?,
            );
            encode_tensors(&mut w, &model.encoder().params());
            encode_tensors(&mut w, &model.decoder().params());
        }
        FrgOutput::Nsf {
            reason,
            diagnostics,
            config_fingerprint,
        } => {
            w.put_u32(1);
            w.put_str(config_fingerprint);
            w.put_str(&meta.schema_hash);
            w.put_str(&meta.info);
            w.put_f64(diagnostics.threshold);
            put_certificate(&mut w, &diagnostics.certificate);
            w.put_str(reason);
            w.put_f64(diagnostics.u_value);
        }
    }
    w.write_to(path, MAGIC, VERSION)
}

pub fn load_output(path: &Path) -> Result<(FrgOutput, ModelMetadata)> {
    let mut r = BinReader::open(path, MAGIC, VERSION)?;
    let tag = r.get_u32()?;
    let config_fingerprint = r.get_str()?;
    let meta = ModelMetadata {
        schema_hash: r.get_str()?,
        info: r.get_str()?,
    };
    let threshold = r.get_f64()?;
    let certificate = get_certificate(&mut r)?;
    match tag {
        0 => {
            let guaranteed = r.get_u32()? != 0;
            let has_bound = r.get_u32()? != 0;
            let bound_value = r.get_f64()?;
            let input_dim = r.get_u64()? as usize;
            let n_groups = r.get_u64()? as usize;
            let likelihood = match r.get_u32()? {
                0 => Likelihood::Bernoulli,
                1 => Likelihood::GaussianUnitVariance,
                other => {
                    return Err(CoreError::serialization(format!(
                        "unknown likelihood tag {other}"
                    )))
                }
            };
            let config: RepresentationConfig = serde_json::from_str(&r.get_str()?)
                .map_err(|e| CoreError::serialization(e.to_string()))?;
            let enc_tensors = decode_tensors(&mut r)?;
            let dec_tensors = decode_tensors(&mut r)?;
            let mut model =
                RepresentationModel::new(input_dim, n_groups, likelihood, config)?;
            let enc_values: Vec<_> = enc_tensors.into_iter().map(|t| t.values).collect();
            model.encoder_mut().load_params(&enc_values)?;
            let dec_values: Vec<_> = dec_tensors.into_iter().map(|t| t.values).collect();
            model.decoder_mut().load_params(&dec_values)?;
            Ok((
                FrgOutput::Solution {
                    model,
                    certificate,
                    threshold,
                    implied_dp_bound: has_bound.then_some(bound_value),
                    guaranteed,
                    config_fingerprint,
                },
                meta,
            ))
        }
        1 => {
            let reason = r.get_str()?;
            let u_value = r.get_f64()?;
            Ok((
                FrgOutput::Nsf {
                    reason,
                    diagnostics: NsfDiagnostics {
                        u_value,
                        certificate,
                        threshold,
                    },
                    config_fingerprint,
                },
                meta,
            ))
        }
        other => Err(CoreError::serialization(format!(
            "unknown output tag {other}"
        ))),
    }
}
