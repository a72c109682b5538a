//! Orientation and surface reconstruction of unoriented point clouds with a
//! mollified Daubechies-4 wavelet representation of the indicator function.

pub mod assembly;
pub mod basis;
pub mod error;
pub mod fields;
pub mod io;
pub mod isosurface;
pub mod kdtree;
pub mod metrics;
pub mod mollifier;
pub mod orientation;
pub mod pipeline;
pub mod shapes;
pub mod solver;
pub mod sparse;
pub mod wavelet;

pub use error::{Error, Result};
