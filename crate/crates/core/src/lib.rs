//! Ball-tree accelerated k-means for low-dimensional points, with a
//! closed-form memory model, a regression runtime predictor and a
//! Gaussian-process runtime adjuster.

pub mod accelerator;
pub mod balltree;
pub mod estimator;
pub mod harness;
pub mod spatial;

pub use accelerator::{run, KmeansConfig, KmeansError, RunOutput, Variant};
pub use balltree::BallTree;
pub use spatial::{Dataset, SpatialVector};
