//! Barcode detection for ultra-high-resolution images.
//!
//! The pipeline downsamples a large grayscale scene, proposes barcode
//! regions with a small fully-convolutional objectness network, segments
//! each proposed crop with the two-branch Y-Net, and turns the mask into
//! boxes with erosion, border following and margin expansion. Synthetic
//! scene generation and the evaluation stack live alongside.

pub mod bbox;
pub mod nn;
pub mod raster;

pub use bbox::BBox;
pub use raster::{BinaryMask, GrayImage, LabelImage, ProbMap};
pub mod atomic;
pub mod checkpoint;
pub mod cli;
pub mod eval;
pub mod pipeline;
pub mod postproc;
pub mod rpn;
pub mod synth;
pub mod ynet;
