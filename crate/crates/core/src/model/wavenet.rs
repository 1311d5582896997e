use serde::{Deserialize, Serialize};

use super::params::{Bound, Init};
use crate::autograd::{conv1d, gated_activation, repeat_nearest, sum_all, Var};
use crate::{Error, Result};

/// Shape of one stack of WaveNet blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubGeneratorConfig {
    pub num_blocks: usize,
    /// Dilation of each block, in order.
    pub dilation_cycle: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub gate_channels: usize,
    #[serde(default = "default_conditioning")]
    pub conditioning_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
}

fn default_conditioning() -> usize {
    80
}

fn default_kernel() -> usize {
    3
}

impl SubGeneratorConfig {
    /// `num_blocks` blocks whose dilations run `1, 2, 4, …, 2^(per_cycle-1)`
    /// and then repeat.
    pub fn doubling(num_blocks: usize, per_cycle: usize, residual: usize, skip: usize, gate: usize) -> Self {
        Self {
            num_blocks,
            dilation_cycle: (0..num_blocks).map(|i| 1 << (i % per_cycle)).collect(),
            residual_channels: residual,
            skip_channels: skip,
            gate_channels: gate,
            conditioning_channels: default_conditioning(),
            kernel_size: default_kernel(),
        }
    }

    /// Twenty blocks, dilations 1..512 twice.
    pub fn low_band() -> Self {
        Self::doubling(20, 10, 64, 64, 128)
    }

    /// Ten blocks, dilations 1..16 twice.
    pub fn high_band() -> Self {
        Self::doubling(10, 5, 64, 64, 128)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 || self.num_blocks != self.dilation_cycle.len() {
            return Err(Error::Config(format!(
                "num_blocks {} does not match {} dilations",
                self.num_blocks,
                self.dilation_cycle.len()
            )));
        }
        if self.dilation_cycle.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        let channels = [
            self.residual_channels,
            self.skip_channels,
            self.gate_channels,
            self.conditioning_channels,
        ];
        if channels.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.gate_channels % 2 != 0 {
            return Err(Error::Config("gate_channels must be even".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        Ok(())
    }

    /// Samples of input that can influence one output sample.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilation_cycle.iter().sum::<usize>()
    }
}

/// One gated residual unit.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveNetBlock {
    prefix: String,
    dilation: usize,
    kernel_size: usize,
}

impl WaveNetBlock {
    pub fn new(prefix: impl Into<String>, dilation: usize, kernel_size: usize) -> Self {
        Self {
            prefix: prefix.into(),
            dilation,
            kernel_size,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub(crate) fn init<R: rand::Rng>(&self, init: &mut Init<'_, R>, cfg: &SubGeneratorConfig) {
        let half = cfg.gate_channels / 2;
        init.conv(&self.name("dilated"), cfg.gate_channels, cfg.residual_channels, self.kernel_size, true);
        init.conv(&self.name("cond"), cfg.gate_channels, cfg.conditioning_channels, 1, false);
        init.conv(&self.name("skip"), cfg.skip_channels, half, 1, true);
        init.conv(&self.name("out"), cfg.residual_channels, half, 1, true);
    }

    /// Project conditioning features `[B, C_cond, T]` to gate width.
    pub fn project_conditioning(&self, p: &Bound, cond: &Var) -> Var {
        conv1d(cond, p.get(&self.name("cond.weight")), None, 1, 0)
    }

    /// Returns `(skip, residual)` for hidden `x` `[B, C_res, T]` and
    /// conditioning features `cond` `[B, C_cond, T]`.
    pub fn forward(&self, p: &Bound, x: &Var, cond: &Var) -> Result<(Var, Var)> {
        if cond.value().rank() != 3 || cond.dim(2) != x.dim(2) {
            return Err(Error::Shape(format!(
                "conditioning {:?} does not match hidden {:?}",
                cond.shape(),
                x.shape()
            )));
        }
        let projected = self.project_conditioning(p, cond);
        self.forward_projected(p, x, &projected)
    }

    /// Same as [`forward`](Self::forward) with the conditioning already
    /// projected to `[B, C_gate, T]`.
    pub fn forward_projected(&self, p: &Bound, x: &Var, cond: &Var) -> Result<(Var, Var)> {
        let pad = self.dilation * (self.kernel_size - 1) / 2;
        let h = conv1d(
            x,
            p.get(&self.name("dilated.weight")),
            Some(p.get(&self.name("dilated.bias"))),
            self.dilation,
            pad,
        );
        if h.shape() != cond.shape() {
            return Err(Error::Shape(format!(
                "projected conditioning {:?} does not match gate input {:?}",
                cond.shape(),
                h.shape()
            )));
        }
        let z = gated_activation(&h.add(cond));
        let skip = conv1d(&z, p.get(&self.name("skip.weight")), Some(p.get(&self.name("skip.bias"))), 1, 0);
        let res = conv1d(&z, p.get(&self.name("out.weight")), Some(p.get(&self.name("out.bias"))), 1, 0);
        Ok((skip, x.add(&res)))
    }
}

/// A noise-to-band stack of WaveNet blocks with its own output head.
#[derive(Clone, Debug, PartialEq)]
pub struct SubGenerator {
    prefix: String,
    config: SubGeneratorConfig,
    out_channels: usize,
    blocks: Vec<WaveNetBlock>,
}

impl SubGenerator {
    pub fn new(prefix: impl Into<String>, config: SubGeneratorConfig, out_channels: usize) -> Result<Self> {
        config.validate()?;
        let prefix = prefix.into();
        let blocks = config
            .dilation_cycle
            .iter()
            .enumerate()
            .map(|(i, &d)| WaveNetBlock::new(format!("{prefix}.block{i}"), d, config.kernel_size))
            .collect();
        Ok(Self {
            prefix,
            config,
            out_channels,
            blocks,
        })
    }

    pub fn config(&self) -> &SubGeneratorConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[WaveNetBlock] {
        &self.blocks
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub(crate) fn init<R: rand::Rng>(&self, init: &mut Init<'_, R>) {
        let c = &self.config;
        let p = &self.prefix;
        init.conv(&format!("{p}.input"), c.residual_channels, 1, 1, true);
        for b in &self.blocks {
            b.init(init, c);
        }
        init.conv(&format!("{p}.post1"), c.skip_channels, c.skip_channels, 1, true);
        init.conv(&format!("{p}.post2"), self.out_channels, c.skip_channels, 1, true);
    }

    /// Map noise `[B, 1, T]` to `[B, out_channels, T]` in `(-1, 1)`.
    ///
    /// `frames` holds conditioning at frame rate, `[B, C_cond, F]`, with
    /// `F · upsample == T`. Each block projects at frame rate and repeats
    /// afterwards, which equals projecting the repeated sequence.
    pub fn forward(&self, p: &Bound, noise: &Var, frames: &Var, upsample: usize) -> Result<Var> {
        let t = noise.dim(2);
        if frames.dim(2) * upsample != t {
            return Err(Error::Shape(format!(
                "{} frames × {upsample} does not cover {t} noise samples",
                frames.dim(2)
            )));
        }
        let name = |s: &str| format!("{}.{s}", self.prefix);
        let mut x = conv1d(noise, p.get(&name("input.weight")), Some(p.get(&name("input.bias"))), 1, 0);
        let mut skips = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let cond = repeat_nearest(&block.project_conditioning(p, frames), upsample);
            let (skip, res) = block.forward_projected(p, &x, &cond)?;
            skips.push(skip);
            x = res;
        }
        let h = sum_all(&skips).scale((1.0 / skips.len() as f64).sqrt()).relu();
        let h = conv1d(&h, p.get(&name("post1.weight")), Some(p.get(&name("post1.bias"))), 1, 0).relu();
        let h = conv1d(&h, p.get(&name("post2.weight")), Some(p.get(&name("post2.bias"))), 1, 0);
        Ok(h.tanh())
    }
}
