//! Pyramid vector quantization (PVQ) and machine-vision primitives that run
//! directly on the quantized representation: dot products, block convolutions,
//! linear SVM window scoring, HOG features and cosine-similarity descriptor
//! matching, together with a fixed-rate block image codec and exact operation
//! counting for every compressed-domain kernel.

pub mod bits;
pub mod codec;
pub mod convolve;
pub mod detect;
pub mod dot;
pub mod error;
pub mod matching;
pub mod pgm;
pub mod pyramid;
pub mod transform;

pub use error::{Error, Result};
