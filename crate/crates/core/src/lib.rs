//! Audio fingerprinting engine.
//!
//! Converts audio into compact unit-norm embeddings ("subfingerprints") with a
//! residual CNN encoder augmented by channel-wise spectral-temporal attention,
//! trains the encoder contrastively on clean/distorted segment pairs, indexes
//! reference tracks with multi-probe locality-sensitive hashing, and answers
//! short-query lookups with track identification plus timestamp localization.
//!
//! The crate is organized around the processing pipeline:
//!
//! - [`frontend`]: resampling, segmentation, energy gating, log-mel spectrograms
//! - [`augment`]: the stochastic distortion chain used to build positive pairs
//! - [`synth`]: synthetic noise / room-impulse-response / track generation
//! - [`encoder`]: the CNN encoder, forward and backward
//! - [`loss`]: NT-Xent contrastive loss with exact gradients
//! - [`trainer`]: Adam + cyclic learning rate training loop
//! - [`index`]: fingerprint database, sign-LSH index, persistence
//! - [`retrieval`]: query fingerprinting, vote counting, timestamp localization
//! - [`config`]: the single layered engine configuration document

pub mod augment;
pub mod config;
pub mod dsp;
pub mod encoder;
pub mod frontend;
pub mod index;
pub mod loss;
pub mod retrieval;
pub mod synth;
pub mod trainer;
pub mod wav;

pub use config::EngineConfig;
pub use frontend::{AudioSegment, FrontendConfig, LogMelSpec, Waveform};
pub use index::{FingerprintRecord, LshConfig, LshIndex};
pub use retrieval::{MatchList, QueryFingerprint, RetrievalResult};
