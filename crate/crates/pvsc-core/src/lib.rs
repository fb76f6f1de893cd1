//! End-to-end simulator for perception-aware video semantic communication.
//!
//! The crate models a feature-domain video link: a toy analysis transform
//! produces per-unit feature vectors, a conditional Gaussian entropy model
//! prices each quantized feature, a rate controller matches that price to a
//! discrete set of per-unit symbol budgets, and a linear unit mapper turns
//! features into complex channel symbols. Symbols cross an AWGN or
//! block-fading Rayleigh channel with optional CSI error, are equalized, and
//! are synthesized back into frames. Quantization-step / mean / scale side
//! information travels over a bit-exact side bitstream (range-coded
//! hyper-latents plus a PNG-coded rate map).
//!
//! Module map:
//!
//! - [`channel`]: complex baseband channel, CSI corruption, ZF/MMSE
//!   equalizers, SNR measurement.
//! - [`entropy`]: scalar quantizer, Gaussian unit-bit pricing, checkerboard
//!   spatial split and the block-1 spatial prior.
//! - [`bitstream`]: carry-less range coder, factorized hyper-latent prior,
//!   from-scratch PNG codec for rate maps, side-info framing.
//! - [`rate`]: discrete rate sets, nearest-level matching, masked orthonormal
//!   unit mapping, rate-set distillation.
//! - [`codec`]: invertible toy transforms standing in for the learned
//!   context/feature extractors, hyper coder, and generator.
//! - [`pipeline`]: per-frame encode/decode, reference-buffer alignment, GOP
//!   handling, sequence runner.
//! - [`metrics`]: CBR/PSNR/rate-loss accounting and BD-rate style curve
//!   comparison.
//!
//! Everything is deterministic given the configured seeds: random draws go
//! through counter-derived substreams (see [`rng`]), so a run reproduces
//! byte-identically on the same platform.

pub mod bitstream;
pub mod channel;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rate;
pub mod rng;

pub use bitstream::{FactorizedPrior, HyperLatent, SideInfoFrame};
pub use channel::{
    mmse_equalize, zf_equalize, ChannelConfig, ChannelKind, ChannelRealization, CsiQuality,
    NoiseLevel,
};
pub use codec::{
    CodecConfig, CodecModel, ContextPair, GaussianParams, PresetVector, ReferenceBuffer,
};
pub use entropy::EntropyConfig;
pub use error::{Error, Result};
pub use grid::{FeatureGrid, Frame};
pub use metrics::{LinkReport, RateQualityCurve};
pub use pipeline::{FrameTransmission, SessionConfig, SessionModel};
pub use rate::{RateMap, RateSet, UnitProjector};
