//! Adversarial shallow watermarking.
//!
//! A message is hidden in an RGB image by optimizing the pixels until a
//! frozen, randomly initialized shallow CNN (the key) decodes the message;
//! extraction is one forward pass through the same network.

pub mod codec;
pub mod decoder;
pub mod distortion;
pub mod error;
pub mod imaging;
pub mod lbfgs;
pub mod message;
pub mod metrics;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use codec::{embed, extract, EmbedConfig, EmbedResult};
pub use decoder::{build_decoder, extract_message, DecoderConfig, DecoderWeights};
pub use error::{AswError, Result};
pub use message::WatermarkMessage;
pub use tensor::Tensor;
