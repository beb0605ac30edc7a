//! Deterministic synthetic logo benchmark.

pub mod dataset;
pub mod font;
pub mod glyph;
pub mod pnm;
pub mod scene;

pub use dataset::{
    for_each_triplet, gen_triplets, instance_seed, read_dataset, split_one_shot, split_train_val,
    triplet_count, write_dataset, DatasetFile, DatasetReader, DatasetWriter, GenParams, Layout,
    Triplet,
};
pub use glyph::{make_classes, LogoClass, Primitive, PrimitiveKind, Variation, MAX_CLASSES};
pub use scene::{render_scene, Scene, SceneParams};
