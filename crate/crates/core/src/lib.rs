//! Unified space-time supersampling for real-time rendered frames.
//!
//! One shared network upsamples rendered low-resolution frames (SF) and
//! extrapolates the frames in between that are never rendered (EF), using
//! motion-vector warped history, the G-buffer of the target frame and a
//! windowed reshading attention module.

pub mod erm;
pub mod error;
pub mod image;
pub mod net;
pub mod nn;
pub mod numerics;
pub mod rrm;
pub mod scene;
pub mod train;
pub mod warp;

pub use error::{Result, StssError};
