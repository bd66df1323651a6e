//! Geometry, target generation, decoding, losses, and evaluation for
//! selected-anchor rotated text proposal networks.
//!
//! Everything here operates on coordinates and score maps; there is no
//! network and no image decoding.

pub mod decode;
pub mod error;
pub mod evalkit;
pub mod formats;
pub mod geom;
pub mod grid;
pub mod losses;
pub mod mapfile;
pub mod polyiou;
pub mod targets;

pub use error::{Error, Result};
pub use geom::{Point2, Quad, RotatedBox};
pub use grid::Grid;
