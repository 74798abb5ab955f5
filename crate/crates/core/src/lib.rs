//! Percolation and connectivity simulation on signal-to-interference-ratio graphs.

pub mod attenuation;
pub mod bounds;
pub mod coloring;
pub mod error;
pub mod experiments;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod hex;
pub mod sir_graph;
pub mod square;

pub use attenuation::{AttenuationModel, Integral};
pub use error::{Error, Result};
pub use geometry::{Boundary, Metric, Point2, PointProcess, PointProcessConfig, Window};
