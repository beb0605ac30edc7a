//! One-shot, query-conditioned logo segmentation and detection.
//!
//! A conditioning CNN encodes a query logo into a latent code that is fused
//! into every encoder stage of a U-Net style segmentation network. The
//! predicted mask is turned into scored boxes and evaluated with box
//! mAP@0.5 and pixel IoU. A procedural logo benchmark provides data.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod kv;
pub mod eval;
pub mod gradsuite;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
