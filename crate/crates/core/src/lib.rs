//! Validity pruning for multi-resolution hash grids queried at a fixed set
//! of points.
//!
//! Given the query points, [`prune::compute_validity`] finds every table row
//! that d-linear interpolation can read. [`codec::encode_grid`] keeps only
//! those rows, quantizes and range codes them, and frames them into a
//! bitstream; [`codec::decode_grid`] recomputes the same rows from the points
//! and rebuilds a grid whose interpolated outputs at those points are
//! identical.

pub mod cli;
pub mod codec;
pub mod error;
pub mod grid;
pub mod io;
pub mod prune;
pub mod synth;
pub mod verify;

pub use codec::{decode_grid, encode_grid, PrunedBitstream, QuantMode, QuantParams};
pub use error::{Error, Result};
pub use grid::{
    corner_vertices, corner_weights, hash_vertex, interpolate, interpolate_all, scale_position, BoundingBox,
    GridConfig, HashGrid, Interpolated, PointSet, VertexCoord,
};
pub use prune::{compute_validity, pack, touched_indices_oracle, unpack, PackedFeatures, ValidityMask};
