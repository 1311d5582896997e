//! Training objectives: multi-resolution STFT loss, singer perceptual loss
//! and the least-squares joint conditional/unconditional adversarial losses.

use serde::{Deserialize, Serialize};

use crate::autograd::{sum_all, Tensor, Var};
use crate::dsp::{stft_magnitude_var, AudioSignal, MelExtractor, Stft, StftParams};
use crate::model::Bound;
use crate::speaker_encoder::SpeakerEncoder;
use crate::{Error, Result};

/// Floor inside the log-magnitude difference.
pub const LOG_MAG_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftLossConfig {
    pub resolutions: Vec<StftParams>,
}

impl Default for StftLossConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![
                StftParams::new(1024, 120, 600),
                StftParams::new(2048, 240, 1200),
                StftParams::new(512, 50, 240),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_adv: f64,
    /// Weight of the perceptual plus STFT sum.
    pub aux_mix: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_adv: 10.0,
            aux_mix: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_adv > 0.0 && self.aux_mix > 0.0) {
            return Err(Error::Config("loss weights must be positive".into()));
        }
        Ok(())
    }
}

fn check_pair(x: &Var, y: &Var) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "loss inputs differ in shape: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(())
}

/// `‖|X| − |Y|‖_F / ‖|X|‖_F` from precomputed magnitudes.
fn sc_from_mags(mx: &Var, my: &Var) -> Result<Var> {
    let denom = mx.l2_norm();
    if denom.value().item() == 0.0 {
        return Err(Error::InvalidInput("spectral convergence of an all-zero reference".into()));
    }
    Ok(mx.sub(my).l2_norm().div(&denom))
}

fn mag_from_mags(mx: &Var, my: &Var) -> Var {
    let lx = mx.clamp_min(LOG_MAG_FLOOR).ln();
    let ly = my.clamp_min(LOG_MAG_FLOOR).ln();
    lx.sub(&ly).abs().mean()
}

/// Spectral convergence of `y` against reference `x`, both `[B, T]`.
pub fn spectral_convergence(x: &Var, y: &Var, stft: &Stft) -> Result<Var> {
    check_pair(x, y)?;
    sc_from_mags(&stft_magnitude_var(x, stft)?, &stft_magnitude_var(y, stft)?)
}

/// Mean absolute difference of floored natural-log magnitudes.
pub fn log_stft_magnitude_loss(x: &Var, y: &Var, stft: &Stft) -> Result<Var> {
    check_pair(x, y)?;
    Ok(mag_from_mags(&stft_magnitude_var(x, stft)?, &stft_magnitude_var(y, stft)?))
}

/// STFT plans for every configured resolution.
#[derive(Clone, Debug)]
pub struct MultiResStftLoss {
    stfts: Vec<Stft>,
}

impl MultiResStftLoss {
    pub fn new(cfg: &StftLossConfig) -> Result<Self> {
        if cfg.resolutions.is_empty() {
            return Err(Error::Config("at least one STFT resolution required".into()));
        }
        Ok(Self {
            stfts: cfg.resolutions.iter().map(|&p| Stft::new(p)).collect::<Result<_>>()?,
        })
    }

    pub fn stfts(&self) -> &[Stft] {
        &self.stfts
    }

    /// `(spectral convergence, log magnitude)` per resolution.
    pub fn components(&self, x: &Var, y: &Var) -> Result<Vec<(Var, Var)>> {
        check_pair(x, y)?;
        self.stfts
            .iter()
            .map(|s| {
                let (mx, my) = (stft_magnitude_var(x, s)?, stft_magnitude_var(y, s)?);
                Ok((sc_from_mags(&mx, &my)?, mag_from_mags(&mx, &my)))
            })
            .collect()
    }

    /// Mean over resolutions of spectral convergence plus log magnitude.
    pub fn forward(&self, x: &Var, y: &Var) -> Result<Var> {
        let terms: Vec<Var> = self.components(x, y)?.into_iter().map(|(sc, mag)| sc.add(&mag)).collect();
        Ok(sum_all(&terms).scale(1.0 / terms.len() as f64))
    }
}

fn row(signal: &AudioSignal) -> Var {
    Var::constant(Tensor::new(vec![1, signal.len()], signal.samples().to_vec()))
}

/// Plain-value multi-resolution STFT loss between two signals.
pub fn multi_res_stft_loss(x: &AudioSignal, y: &AudioSignal, cfg: &StftLossConfig) -> Result<f64> {
    Ok(MultiResStftLoss::new(cfg)?.forward(&row(x), &row(y))?.value().item())
}

/// Sum over encoder layers of the L2 distance between the hidden-state
/// sequences of `x` and `y` (`[B, T]`), averaged over the batch.
///
/// `p` should bind the encoder as constants so that only `y` receives
/// gradient.
pub fn singer_perceptual_loss(
    x: &Var,
    y: &Var,
    encoder: &SpeakerEncoder,
    p: &Bound,
    mel: &MelExtractor,
) -> Result<Var> {
    check_pair(x, y)?;
    let hx = encoder.forward(p, &mel.forward_var(x)?)?.hidden;
    let hy = encoder.forward(p, &mel.forward_var(y)?)?.hidden;
    let b = x.dim(0);
    let mut terms = Vec::with_capacity(b * hx.len());
    for (a, c) in hx.iter().zip(&hy) {
        let d = c.sub(a);
        for i in 0..b {
            terms.push(d.narrow(0, i, 1).l2_norm());
        }
    }
    Ok(sum_all(&terms).scale(1.0 / b as f64))
}

fn mean_sq_from(v: &Var, target: f64) -> Var {
    v.add_scalar(-target).square().mean()
}

/// Discriminator side of the joint least-squares objective. Score tensors
/// of any shape are averaged before use.
pub fn jcu_discriminator_loss(d_real: &Var, d_fake: &Var, ds_real: &Var, ds_fake: &Var) -> Var {
    let uncond = mean_sq_from(d_real, 1.0).add(&mean_sq_from(d_fake, 0.0));
    let cond = mean_sq_from(ds_real, 1.0).add(&mean_sq_from(ds_fake, 0.0));
    uncond.add(&cond).scale(0.5)
}

/// Generator side: push both discriminators' fake scores towards one.
pub fn jcu_generator_loss(d_fake: &Var, ds_fake: &Var) -> Var {
    mean_sq_from(d_fake, 1.0).add(&mean_sq_from(ds_fake, 1.0)).scale(0.5)
}

/// `aux_mix · (spl + stft)`, plus `λ · adv` outside pretraining.
pub fn generator_total_loss(l_spl: &Var, l_stft: &Var, l_adv_g: Option<&Var>, w: &LossWeights) -> Var {
    let aux = l_spl.add(l_stft).scale(w.aux_mix);
    match l_adv_g {
        Some(adv) => aux.add(&adv.scale(w.lambda_adv)),
        None => aux,
    }
}
