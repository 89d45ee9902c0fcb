//! Race-track geometry: occupancy maps, distance fields, centerlines and
//! pose queries against them.

mod centerline;
mod edt;
mod extract;
pub mod fixtures;
mod map;

pub use centerline::{Centerline, PoseProjection, PROJECTION_WINDOW};
pub use edt::distance_field;
pub use extract::{extract_centerline, ExtractOptions};
pub use map::{MapMetadata, TrackMap};

/// Default disc radius used for crash detection.
pub const DEFAULT_HALFWIDTH: f64 = 0.16;

#[derive(Debug, thiserror::Error)]
pub enum TrackError {
    #[error("malformed map image: {0}")]
    Image(String),
    #[error("malformed map metadata: {0}")]
    Metadata(String),
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("map has no free cells")]
    NoFreeSpace,
    #[error("free space is split into {0} disconnected regions")]
    Disconnected(usize),
    #[error("track is open: no enclosed inner boundary")]
    OpenTrack,
    #[error("no centerline could be traced through the free space")]
    NoCenterline,
    #[error("centerline loop is {0:.2} m long, shorter than the 10 m minimum")]
    LoopTooShort(f64),
    #[error("centerline csv: {0}")]
    Csv(String),
    #[error("invalid centerline: {0}")]
    InvalidCenterline(String),
    #[error("pose ({x:.3}, {y:.3}) is {distance:.3} m from the centerline")]
    OffTrack { x: f64, y: f64, distance: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crash test with a disc footprint; anything outside the grid collides.
pub fn collision(map: &TrackMap, x: f64, y: f64, vehicle_halfwidth: f64) -> bool {
    map.collision(x, y, vehicle_halfwidth)
}
