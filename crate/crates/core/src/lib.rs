//! Multi-band GAN vocoder for multi-singer singing voice.
//!
//! A noise-driven generator built from two frequency-adapted WaveNet stacks
//! emits four PQMF sub-bands that are merged into a 24 kHz waveform. Training
//! combines a multi-resolution STFT loss, a singer perceptual loss computed
//! on a frozen LSTM speaker encoder, and a joint least-squares adversarial
//! objective against an unconditional and a singer-conditional
//! discriminator.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod dsp;
pub mod eval;
pub mod losses;
pub mod model;
pub mod optim;
pub mod speaker_encoder;
pub mod training;
mod error;

pub use error::{Error, Result};
