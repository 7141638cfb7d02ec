//! Pinhole projection relations between camera motion and image motion.
//!
//! Units are fixed throughout the crate: focal length and image
//! displacements in pixels, camera translation and scene depth in meters,
//! angles in radians.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Default lower bound on `|dp|` accepted when inverting for depth.
pub const DEFAULT_MIN_DISPLACEMENT_PX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    focal_length_px: f64,
}

impl CameraIntrinsics {
    pub fn new(focal_length_px: f64) -> Result<Self> {
        if focal_length_px.is_finite() && focal_length_px > 0.0 {
            Ok(Self { focal_length_px })
        } else {
            Err(Error::InvalidIntrinsics(focal_length_px))
        }
    }

    #[inline]
    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_px
    }
}

/// Real-valued image displacement, horizontal and vertical components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PixelDisplacement {
    pub dp_h: f64,
    pub dp_v: f64,
}

impl PixelDisplacement {
    pub fn new(dp_h: f64, dp_v: f64) -> Self {
        debug_assert!(dp_h.is_finite() && dp_v.is_finite());
        Self { dp_h, dp_v }
    }

    pub fn magnitude(&self) -> f64 {
        self.dp_h.hypot(self.dp_v)
    }
}

/// Image displacement of a point seen along ray angle `alpha` when the
/// camera rotates by `theta`: the difference of its projections before and
/// after the rotation.
pub fn rotational_mv_exact(intrinsics: CameraIntrinsics, alpha: f64, theta: f64) -> Result<f64> {
    let after = alpha + theta;
    for angle in [alpha, after] {
        if !angle.is_finite() || angle.abs() >= FRAC_PI_2 {
            return Err(Error::Domain { angle });
        }
    }
    let f = intrinsics.focal_length_px;
    let p1 = f * alpha.tan();
    let p2 = f * after.tan();
    Ok(p2 - p1)
}

/// Small-angle form of [`rotational_mv_exact`] with `sec²(alpha)` taken as 1.
#[inline]
pub fn rotational_mv_small_angle(intrinsics: CameraIntrinsics, theta: f64) -> f64 {
    intrinsics.focal_length_px * theta
}

/// Both rotational components under the small-angle model.
pub fn rotational_displacement(intrinsics: CameraIntrinsics, theta_h: f64, theta_v: f64) -> PixelDisplacement {
    PixelDisplacement::new(
        rotational_mv_small_angle(intrinsics, theta_h),
        rotational_mv_small_angle(intrinsics, theta_v),
    )
}

/// Parallax of a point at depth `z` when the camera translates by `d`.
pub fn translational_mv(intrinsics: CameraIntrinsics, d: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::DegenerateDepth { z });
    }
    Ok(intrinsics.focal_length_px * d / z)
}

/// Inverts [`translational_mv`] for depth.
///
/// Displacements with `|dp| < min_displacement` carry too little signal at
/// integer-pel resolution and are rejected, as is a zero baseline. The sign of
/// `dp` must follow the sign of `d` since depth is positive.
pub fn depth_from_mv(intrinsics: CameraIntrinsics, d: f64, dp: f64, min_displacement: f64) -> Result<f64> {
    if d == 0.0 || !d.is_finite() || !dp.is_finite() || dp.abs() < min_displacement || dp == 0.0 {
        return Err(Error::DegenerateMotion { d, dp });
    }
    if d.signum() != dp.signum() {
        return Err(Error::SignMismatch { d, dp });
    }
    Ok(intrinsics.focal_length_px * d / dp)
}
