//! Procedural sprite datasets with known generative factors.

pub mod color;
pub mod grid;
pub mod materialize;
pub mod render;
pub mod sampling;
pub mod spec;

pub use color::hsv_to_rgb;
pub use grid::{make_factor_grid, FactorGrid};
pub use materialize::materialize;
pub use render::{render_sprite, sprite_area};
pub use sampling::{build_dataset, render_sample, sample_batch, sample_factors, DatasetStream};
pub use spec::{
    CirclesDataset, DatasetSpec, FactorKind, FactorName, FactorSpec, FactorVector, Holdout, Sample, Shape,
};
