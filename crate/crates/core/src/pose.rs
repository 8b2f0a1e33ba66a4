use serde::{Deserialize, Serialize};

/// Planar vehicle pose.
///
/// Heading uses the compass convention: 0 degrees is north and angles grow
/// clockwise, so east is +90.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Meters east of the scene origin.
    pub x_e: f64,
    /// Meters north of the scene origin.
    pub x_n: f64,
    /// Degrees in `[-180, 180)`.
    pub gamma: f64,
}

impl Pose {
    pub fn new(x_e: f64, x_n: f64, gamma: f64) -> Self {
        Self {
            x_e,
            x_n,
            gamma: normalize_degrees(gamma),
        }
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}
