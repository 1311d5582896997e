//! Trainable networks: the two-stack multi-band generator, a full-band
//! reference generator, and the two discriminators.

mod checkpoint;
mod discriminator;
mod generator;
mod params;
mod wavenet;

pub use checkpoint::Checkpoint;
pub use discriminator::{
    CondDiscConfig, SingerConditionalDiscriminator, UncondDiscConfig, UnconditionalDiscriminator,
};
pub use generator::{gaussian_noise, FullBandGenerator, GeneratorConfig, MelNorm, MultiBandGenerator, Vocoder};
pub use params::{Bound, ParamSet};
pub(crate) use params::Init;
pub use wavenet::{SubGenerator, SubGeneratorConfig, WaveNetBlock};
