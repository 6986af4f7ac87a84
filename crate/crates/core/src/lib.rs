//! Planar object tracking toolkit.
//!
//! Segmentation masks are turned into homographies by fitting four boundary
//! lines and intersecting them ([`samh`]); the [`controller`] fuses that
//! mask-based pose with dense weighted-flow homography estimation ([`wfh`]).
//! [`synthgen`] renders synthetic planar scenes with exact ground truth and
//! [`evalharness`] computes benchmark metrics.

pub mod controller;
pub mod disambiguation;
pub mod evalharness;
pub mod features;
pub mod geometry;
pub mod image;
pub mod maskgeom;
pub mod provider;
pub mod samh;
pub mod synthgen;
pub mod wfh;
