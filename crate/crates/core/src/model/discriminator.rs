use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, Init, ParamSet};
use crate::autograd::{avg_pool, concat, conv1d, lstm, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncondDiscConfig {
    pub channels: usize,
    pub kernel_size: usize,
    /// One entry per layer.
    pub dilations: Vec<usize>,
    pub negative_slope: f64,
}

impl Default for UncondDiscConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            kernel_size: 5,
            dilations: vec![1, 1, 2, 3, 4, 5, 6, 7, 8, 1],
            negative_slope: 0.2,
        }
    }
}

impl UncondDiscConfig {
    pub fn layers(&self) -> usize {
        self.dilations.len()
    }

    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations.len() < 2 || self.dilations.contains(&0) {
            return Err(Error::Config("need at least two layers with positive dilations".into()));
        }
        if self.channels == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config("channels must be positive and kernel_size odd".into()));
        }
        Ok(())
    }
}

/// Stack of non-causal dilated convolutions emitting a raw score per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct UnconditionalDiscriminator {
    config: UncondDiscConfig,
    params: ParamSet,
}

impl UnconditionalDiscriminator {
    pub fn new(config: UncondDiscConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init::new(&mut rng);
        let n = config.layers();
        for i in 0..n {
            let cin = if i == 0 { 1 } else { config.channels };
            let cout = if i == n - 1 { 1 } else { config.channels };
            init.conv(&format!("uncond.conv{i}"), cout, cin, config.kernel_size, true);
        }
        Ok(Self {
            config,
            params: init.params,
        })
    }

    pub fn with_params(config: UncondDiscConfig, params: ParamSet) -> Result<Self> {
        let mut d = Self::new(config, 0)?;
        d.params.check_layout(&params)?;
        d.params = params;
        Ok(d)
    }

    pub fn config(&self) -> &UncondDiscConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Waveforms `[B, T]` to scores `[B, T]`.
    pub fn forward(&self, p: &Bound, wave: &Var) -> Result<Var> {
        let rf = self.config.receptive_field();
        if wave.value().rank() != 2 || wave.dim(1) < rf {
            return Err(Error::Shape(format!(
                "input {:?} shorter than the receptive field of {rf} samples",
                wave.shape()
            )));
        }
        let (b, t) = (wave.dim(0), wave.dim(1));
        let n = self.config.layers();
        let mut h = wave.reshape(&[b, 1, t]);
        for (i, &d) in self.config.dilations.iter().enumerate() {
            let pad = d * (self.config.kernel_size - 1) / 2;
            h = conv1d(
                &h,
                p.get(&format!("uncond.conv{i}.weight")),
                Some(p.get(&format!("uncond.conv{i}.bias"))),
                d,
                pad,
            );
            if i + 1 < n {
                h = h.leaky_relu(self.config.negative_slope);
            }
        }
        Ok(h.reshape(&[b, t]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondDiscConfig {
    /// Pooling stride of each stage.
    pub pool_factors: Vec<usize>,
    pub pool_kernel: usize,
    /// Output channels of the convolution before each pooling stage.
    pub channels: Vec<usize>,
    pub conv_kernel: usize,
    pub lstm_layers: usize,
    pub embedding_dim: usize,
    pub negative_slope: f64,
}

impl Default for CondDiscConfig {
    fn default() -> Self {
        Self {
            pool_factors: vec![8, 8, 2, 2],
            pool_kernel: 4,
            channels: vec![64, 128, 256, 256],
            conv_kernel: 3,
            lstm_layers: 2,
            embedding_dim: 256,
            negative_slope: 0.2,
        }
    }
}

impl CondDiscConfig {
    pub fn downsampling(&self) -> usize {
        self.pool_factors.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_factors.is_empty() || self.pool_factors.len() != self.channels.len() {
            return Err(Error::Config("one channel count per pooling stage required".into()));
        }
        if self.pool_factors.contains(&0) || self.channels.contains(&0) || self.pool_kernel == 0 {
            return Err(Error::Config("pooling factors and channels must be positive".into()));
        }
        if self.channels.last() != Some(&self.embedding_dim) {
            return Err(Error::Config(format!(
                "last stage width {:?} must equal the embedding dimension {}",
                self.channels.last(),
                self.embedding_dim
            )));
        }
        if self.lstm_layers == 0 || self.conv_kernel % 2 == 0 {
            return Err(Error::Config("need an LSTM layer and an odd conv kernel".into()));
        }
        Ok(())
    }
}

/// Downsampling encoder plus LSTM whose final state is compared with a
/// singer embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct SingerConditionalDiscriminator {
    config: CondDiscConfig,
    params: ParamSet,
}

impl SingerConditionalDiscriminator {
    pub fn new(config: CondDiscConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init::new(&mut rng);
        let mut cin = 1;
        for (i, &c) in config.channels.iter().enumerate() {
            init.conv(&format!("cond.conv{i}"), c, cin, config.conv_kernel, true);
            cin = c;
        }
        let e = config.embedding_dim;
        for l in 0..config.lstm_layers {
            init.lstm(&format!("cond.lstm{l}"), e, e);
        }
        init.weight("cond.head.weight".into(), &[1, e]);
        // a small positive bias keeps the ReLU head active at the start
        init.value("cond.head.bias".into(), 0.1);
        Ok(Self {
            config,
            params: init.params,
        })
    }

    pub fn with_params(config: CondDiscConfig, params: ParamSet) -> Result<Self> {
        let mut d = Self::new(config, 0)?;
        d.params.check_layout(&params)?;
        d.params = params;
        Ok(d)
    }

    pub fn config(&self) -> &CondDiscConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// `[B, T]` waveforms to the `[B, T/256, 256]` sequence fed to the LSTM.
    /// Inputs are zero-padded up to a multiple of the downsampling factor.
    pub fn encode(&self, p: &Bound, wave: &Var) -> Result<Var> {
        let factor = self.config.downsampling();
        if wave.value().rank() != 2 || wave.dim(1) < factor {
            return Err(Error::Shape(format!(
                "input {:?} shorter than {factor} samples",
                wave.shape()
            )));
        }
        let (b, t) = (wave.dim(0), wave.dim(1));
        let padded = t.div_ceil(factor) * factor;
        let mut h = wave.reshape(&[b, 1, t]);
        if padded > t {
            h = concat(&[h, Var::constant(Tensor::zeros(&[b, 1, padded - t]))], 2);
        }
        let pad = (self.config.conv_kernel - 1) / 2;
        for (i, &stride) in self.config.pool_factors.iter().enumerate() {
            h = conv1d(
                &h,
                p.get(&format!("cond.conv{i}.weight")),
                Some(p.get(&format!("cond.conv{i}.bias"))),
                1,
                pad,
            )
            .leaky_relu(self.config.negative_slope);
            h = avg_pool(&h, self.config.pool_kernel, stride);
        }
        Ok(h.transpose_last())
    }

    /// Waveforms `[B, T]` and embeddings `[B, 256]` to scores `[B]`, each ≥ 0.
    pub fn forward(&self, p: &Bound, wave: &Var, embedding: &Var) -> Result<Var> {
        let e = self.config.embedding_dim;
        if embedding.value().rank() != 2 || embedding.dim(1) != e {
            return Err(Error::Shape(format!(
                "embedding must be [B, {e}], got {:?}",
                embedding.shape()
            )));
        }
        if embedding.dim(0) != wave.dim(0) {
            return Err(Error::Shape("one embedding per waveform required".into()));
        }
        let mut h = self.encode(p, wave)?;
        for l in 0..self.config.lstm_layers {
            let name = |s: &str| format!("cond.lstm{l}.{s}");
            h = lstm(&h, p.get(&name("w_ih")), p.get(&name("w_hh")), p.get(&name("bias")));
        }
        let (b, steps) = (h.dim(0), h.dim(1));
        let last = h.narrow(1, steps - 1, 1).reshape(&[b, e]);
        let score = last
            .add(embedding)
            .linear(p.get("cond.head.weight"), Some(p.get("cond.head.bias")))
            .relu();
        Ok(score.reshape(&[b]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::check_gradients;
    use crate::model::generator::gaussian_noise;

    fn wave(batch: usize, len: usize, seed: u64) -> Tensor {
        gaussian_noise(&mut ChaCha8Rng::seed_from_u64(seed), batch, len)
            .map(|v| 0.3 * v)
            .reshape(&[batch, len])
    }

    fn zeroed(p: &ParamSet) -> ParamSet {
        let mut z = ParamSet::new();
        for (k, t) in p.iter() {
            z.insert(k.clone(), Tensor::zeros(t.shape()));
        }
        z
    }

    /// Run a gradient check over every parameter plus the extra inputs.
    fn grad_check(
        params: &ParamSet,
        extra: Vec<Tensor>,
        f: impl Fn(&Bound, &[Var]) -> Var,
    ) -> crate::autograd::GradCheck {
        let names: Vec<String> = params.iter().map(|(k, _)| k.clone()).collect();
        let mut inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
        inputs.extend(extra);
        check_gradients(
            |v| {
                let bound = Bound::from_vars(names.iter().cloned().zip(v.iter().cloned()));
                f(&bound, &v[names.len()..])
            },
            &inputs,
            1e-6,
            1,
            1e-6,
        )
    }

    #[test]
    fn default_unconditional_architecture() {
        let c = UncondDiscConfig::default();
        assert_eq!(c.layers(), 10);
        assert_eq!((c.channels, c.kernel_size), (64, 5));
        assert_eq!(c.dilations[0], 1);
        assert_eq!(c.dilations[9], 1);
        assert!(c.dilations[1..9].windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!((c.dilations[1], c.dilations[8]), (1, 8));
        assert_eq!(c.receptive_field(), 153);
        let d = UnconditionalDiscriminator::new(c, 1).unwrap();
        assert_eq!(d.params().get("uncond.conv0.weight").unwrap().shape(), &[64, 1, 5]);
        assert_eq!(d.params().get("uncond.conv9.weight").unwrap().shape(), &[1, 64, 5]);
    }

    #[test]
    fn receptive_field_measured_by_impulse() {
        // output at the centre reacts to exactly 153 input positions
        let d = UnconditionalDiscriminator::new(UncondDiscConfig::default(), 2).unwrap();
        let p = d.params().bind(false);
        let t = 401;
        let base = d.forward(&p, &Var::constant(Tensor::zeros(&[1, t]))).unwrap();
        let centre = t / 2;
        let mut reach = 0;
        for i in 0..t {
            let mut x = Tensor::zeros(&[1, t]);
            x.data_mut()[i] = 1.0;
            let y = d.forward(&p, &Var::constant(x)).unwrap();
            if (y.value().data()[centre] - base.value().data()[centre]).abs() > 0.0 {
                reach += 1;
            }
        }
        assert_eq!(reach, 153);
    }

    #[test]
    fn unconditional_shapes_and_zero_params() {
        let d = UnconditionalDiscriminator::new(UncondDiscConfig::default(), 3).unwrap();
        let x = Var::constant(wave(2, 300, 4));
        let y = d.forward(&d.params().bind(false), &x).unwrap();
        assert_eq!(y.shape(), &[2, 300]);
        let z = d.forward(&zeroed(d.params()).bind(false), &x).unwrap();
        assert!(z.value().data().iter().all(|&v| v == 0.0));
        let short = Var::constant(wave(1, 152, 5));
        assert!(d.forward(&d.params().bind(false), &short).is_err());
    }

    #[test]
    fn conditional_downsamples_by_256() {
        let c = CondDiscConfig::default();
        assert_eq!(c.downsampling(), 256);
        let d = SingerConditionalDiscriminator::new(c, 6).unwrap();
        let p = d.params().bind(false);
        let seq = d.encode(&p, &Var::constant(wave(1, 4096, 7))).unwrap();
        assert_eq!(seq.shape(), &[1, 16, 256]);
        // non-multiples are padded up
        let seq = d.encode(&p, &Var::constant(wave(1, 4000, 8))).unwrap();
        assert_eq!(seq.shape(), &[1, 16, 256]);
    }

    #[test]
    fn conditional_scores_are_nonnegative_scalars() {
        let d = SingerConditionalDiscriminator::new(CondDiscConfig::default(), 9).unwrap();
        let p = d.params().bind(false);
        let s = Var::constant(wave(3, 256, 10));
        let y = d.forward(&p, &Var::constant(wave(3, 1024, 11)), &s).unwrap();
        assert_eq!(y.shape(), &[3]);
        assert!(y.value().data().iter().all(|&v| v >= 0.0));

        let bad = Var::constant(Tensor::zeros(&[3, 255]));
        assert!(d.forward(&p, &Var::constant(wave(3, 1024, 11)), &bad).is_err());
    }

    #[test]
    fn zero_head_weights_give_zero_score() {
        let d = SingerConditionalDiscriminator::new(CondDiscConfig::default(), 12).unwrap();
        let mut params = d.params().clone();
        params.insert("cond.head.weight", Tensor::zeros(&[1, 256]));
        params.insert("cond.head.bias", Tensor::zeros(&[1]));
        let y = d
            .forward(&params.bind(false), &Var::constant(wave(2, 512, 13)), &Var::constant(wave(2, 256, 14)))
            .unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn head_bias_raises_active_scores() {
        let d = SingerConditionalDiscriminator::new(CondDiscConfig::default(), 15).unwrap();
        let x = Var::constant(wave(4, 512, 16));
        let s = Var::constant(wave(4, 256, 17));
        let mut prev: Option<Vec<f64>> = None;
        for bias in [1.0, 1.5, 2.0] {
            let mut params = d.params().clone();
            params.insert("cond.head.bias", Tensor::new(vec![1], vec![bias]));
            let y = d.forward(&params.bind(false), &x, &s).unwrap().value().data().to_vec();
            assert!(y.iter().all(|&v| v > 0.0));
            if let Some(prev) = prev {
                assert!(y.iter().zip(&prev).all(|(a, b)| a > b));
            }
            prev = Some(y);
        }
    }

    fn tiny_uncond() -> UnconditionalDiscriminator {
        let cfg = UncondDiscConfig {
            channels: 3,
            kernel_size: 3,
            dilations: vec![1, 2, 1],
            negative_slope: 0.2,
        };
        let mut d = UnconditionalDiscriminator::new(cfg, 18).unwrap();
        for (k, t) in d.params_mut().iter_mut() {
            if k.ends_with("bias") {
                *t = t.map(|_| 0.05);
            }
        }
        d
    }

    fn tiny_cond() -> SingerConditionalDiscriminator {
        let cfg = CondDiscConfig {
            pool_factors: vec![2, 2],
            pool_kernel: 2,
            channels: vec![2, 4],
            conv_kernel: 3,
            lstm_layers: 1,
            embedding_dim: 4,
            negative_slope: 0.2,
        };
        SingerConditionalDiscriminator::new(cfg, 19).unwrap()
    }

    #[test]
    fn unconditional_gradients_match_finite_differences() {
        let d = tiny_uncond();
        let target = wave(2, 12, 20);
        let r = grad_check(d.params(), vec![wave(2, 12, 21)], |p, x| {
            d.forward(p, &x[0]).unwrap().mul(&Var::constant(target.clone())).sum()
        });
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }

    #[test]
    fn conditional_gradients_match_finite_differences() {
        let d = tiny_cond();
        let r = grad_check(d.params(), vec![wave(2, 16, 22), wave(2, 4, 23)], |p, x| {
            d.forward(p, &x[0], &x[1]).unwrap().sub(&Var::constant(Tensor::full(&[2], 1.0))).square().sum()
        });
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }

    #[test]
    fn mismatched_stage_widths_rejected() {
        let mut c = CondDiscConfig::default();
        c.channels[3] = 128;
        assert!(c.validate().is_err());
        let mut c = UncondDiscConfig::default();
        c.kernel_size = 4;
        assert!(c.validate().is_err());
    }
}
