#![no_std]

//! Projected-point LiDAR semantic segmentation.
//!
//! A scan is projected onto a spherical range image; set abstraction then
//! samples centers on a regular grid of that image, groups neighbors from a
//! k×k window of rays instead of a 3D ball query, and aggregates them with a
//! PointNet, SpiderCNN-style or PointConv-style operator. Feature propagation
//! scatters coarse features back through the same windows with inverse
//! distance weights.
//!
//! The crate is `no_std` (it needs `alloc`); the `std` feature only swaps in
//! the platform float functions, which are faster than `libm`. File formats,
//! benchmarks and the command line live in the `ppseg` crate.

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod baseline;
pub mod check;
pub mod cloud;
mod error;
pub mod grouping;
pub mod knn;
pub mod labels;
pub mod math;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod propagation;
pub mod sampling;
pub mod set_abstraction;
pub mod synth;
pub mod tensor;


pub use cloud::{PointCloud, IGNORE};
pub use error::{Error, Result};
pub use grouping::{GroupingConfig, NeighborhoodBundle};
pub use knn::KnnConfig;
pub use labels::LabelMap;
pub use metrics::{evaluate, ConfusionMatrix, Evaluation};
pub use model::{Arch, Model, ModelSpec, PreparedScan};
pub use projection::{ProjectionConfig, RangeImage};
pub use sampling::SampleGrid;
pub use set_abstraction::Variant;
pub use tensor::{Graph, Tensor, Var};
