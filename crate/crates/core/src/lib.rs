//! Domain-randomized synthetic dataset generation for visual inspection:
//! scene recreation, PBR material randomization, HDRI-lit path tracing,
//! automatic bounding-box labels, and a detection evaluation harness.
//!
//! Pipeline per frame: [`randomizer::sample_scenario`] draws materials,
//! lighting, camera pose, background, distractors and noise from a
//! [`randomizer::RandomizationConfig`]; [`randomizer::apply_scenario`]
//! binds them into a [`scene::SceneGraph`]; [`render::trace`] produces the
//! beauty image and instance-ID map; [`label::extract_annotations`] turns
//! the ID map into boxes. [`dataset`] orchestrates whole campaigns and
//! [`eval`] scores detector output.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod jsonio;
pub mod label;
pub mod material;
pub mod randomizer;
pub mod render;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};
