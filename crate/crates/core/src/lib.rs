//! Intent-driven target identification through clarification dialogue, plus
//! grasp-point extraction from a rendered point cloud.

pub mod error;
pub mod eval;
pub mod agents;
pub mod dialogue;
pub mod geometry;
pub mod grasp;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{iou, RegionBox};
