//! Gameplay event detection and highlight generation.
//!
//! The crate covers the whole pipeline, bottom up:
//!
//! - [`annotations`]: VIA project parsing, the per-game event catalogue and
//!   seeded train/test manifests of one-second clips.
//! - [`background`]: sampling of non-interesting intervals from the gaps
//!   between annotated events.
//! - [`frames`]: raw clip acquisition (`.rgbc` files or an external decoder),
//!   frame selection, bilinear resize and channel normalization.
//! - [`autodiff`]: a small reverse-mode differentiation tape over dense
//!   matrices, generic over `f32`/`f64`.
//! - [`model`]: the video encoder (cross-frame communication transformer and
//!   multi-frame integration), the text encoder, video-conditioned prompting
//!   and the similarity classifier with its prompt cache.
//! - [`training`], [`quant`], [`detection`], [`metrics`], [`checkpoint`].

pub mod annotations;
pub mod autodiff;
pub mod background;
pub mod checkpoint;
pub mod detection;
pub mod frames;
pub mod json;
pub mod metrics;
pub mod model;
pub mod quant;
pub mod seed;
pub mod synth;
pub mod training;

pub use annotations::{AnnotatedEvent, ClipRef, DatasetManifest, EventLabel, GameId, Split};
pub use model::{ModelConfig, XClip};
