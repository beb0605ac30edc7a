//! The query-conditioned segmentation network, its parameters and
//! checkpoint format.

pub mod checkpoint;
mod config;
mod net;
mod params;
pub mod train;


pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{FusionMode, InitMode, ModelConfig, Precision};
pub use net::{BoundConv, BoundParams, LogoNet, StageFeatures};
pub use params::{DecoderStage, Parameters, PAPER_INIT_STD};
