//! Ground-robot coordination from a fixed overhead camera.
//!
//! The pipeline runs synthetic camera frames through marker perception into a
//! central, delay-aware controller whose commands reach the robots over an
//! impaired wireless link:
//!
//! - [`geometry`]: homography calibration, polygons, polylines, reflection.
//! - [`sim`]: the ground-truth world and the frame rasterizer.
//! - [`perception`]: marker detection and alpha-beta tracking.
//! - [`control`]: delay prediction, pure pursuit, boundary reflection, safety.
//! - [`coordination`]: missions, coverage planning/accounting, deconfliction.
//! - [`link`]: the 14-byte command frame and the lossy channel.
//! - [`runner`]: scenario configuration, the fixed-step loop, metrics, traces.

pub mod geometry;
pub mod sim;
pub mod perception;
pub mod control;
pub mod coordination;
pub mod link;
pub mod runner;
