//! Change detection and update for crowd-sourced visual localization maps.
//!
//! The pipeline runs over a [`MapBundle`](model::MapBundle):
//!
//! 1. [`pairing`] picks query/map image pairs whose poses are close in
//!    position and line of sight.
//! 2. [`alignment`] matches descriptors and fits a 5DOF or 8DOF homography.
//! 3. [`preprocess`] and [`change`] classify features and vote per visual
//!    segment to produce a change mask for each side of an aligned pair.
//! 4. [`aggregate`] averages many masks per map image into a master mask and
//!    tags changed map features; [`propagate`] carries those tags to other
//!    map images by global similarity and 3D proximity.
//! 5. [`mapupdate`] removes changed features and registers new map sections.
//!
//! [`metrics`] scores masks and [`synth`] fabricates scenes with ground truth.
//!
//! Geometric kernels are generic over [`Real`](scalar::Real) (`f32`/`f64`);
//! mask statistics are generic over [`Field`](scalar::Field), which also
//! admits exact rationals. The aliases below fix the common concrete types.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod alignment;
pub mod change;
pub mod config;
pub mod grid;
pub mod mapupdate;
pub mod metrics;
pub mod model;
pub mod pairing;
pub mod preprocess;
pub mod pipeline;
pub mod propagate;
pub(crate) mod ransac;
pub mod scalar;
pub mod synth;

pub use config::PipelineConfig;
pub use model::{
    read_bundle, write_bundle, CameraPose, ChangeMask, ChangeTag, FeaturePoint, Homography,
    ImageKind, ImageRecord, LabelRaster, MapBundle,
};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat4 = nalgebra::Matrix4<f64>;

/// Rigid (optionally scaled) transform in double precision.
pub type RigidTransform = model::Rigid3<f64>;
/// Single precision variant for memory-bound point clouds.
pub type RigidTransformF32 = model::Rigid3<f32>;
/// Exact scalar for count-ratio checks.
pub type Rational = num_rational::Ratio<i64>;
