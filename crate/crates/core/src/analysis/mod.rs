//! Latent traversals, latent-geometry embeddings and rate-distortion tables.

pub mod figures;
pub mod geometry;
pub mod rate_distortion;
pub mod traversal;

pub use figures::{
    mosaic, read_csv, render_geometry, write_csv, write_geometry_csv, write_geometry_png, write_mosaic_png,
    write_traversal_png, GeometryRow,
};
pub use geometry::{embed_factor_grid, linearity_r2, AffineMap, GeometryEmbedding};
pub use rate_distortion::{mean_std, rate_distortion_table, RateDistortionRow, RunPoint};
pub use traversal::{traverse, TraversalConfig, TraversalGrid};
