use glam::{DQuat, DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Ray, Transform};

pub const MIN_RESOLUTION: u32 = 16;

/// Pinhole camera looking down its local -z axis with +y up.
///
/// Pixel coordinates are continuous: pixel `(i, j)` covers
/// `[i, i + 1) x [j, j + 1)` with `j = 0` the top row, so the image center
/// is `(width / 2, height / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeCamera {
    /// Camera-to-world transform; scale must be 1.
    pub pose: Transform,
    pub vertical_fov: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel(DVec2),
    BehindCamera,
}

impl PinholeCamera {
    pub fn look_at(eye: DVec3, target: DVec3, up: DVec3, vertical_fov: f64, width: u32, height: u32) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(up).normalize();
        let true_up = right.cross(forward);
        let basis = glam::DMat3::from_cols(right, true_up, -forward);
        PinholeCamera {
            pose: Transform::new(eye, DQuat::from_mat3(&basis).normalize(), 1.0),
            vertical_fov,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vertical_fov.is_finite() && self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(Error::field("camera.vertical_fov", "must lie in (0, pi) radians"));
        }
        if self.width < MIN_RESOLUTION || self.height < MIN_RESOLUTION {
            return Err(Error::field("camera.resolution", "must be at least 16x16"));
        }
        if (self.pose.scale - 1.0).abs() > 1e-9 {
            return Err(Error::field("camera.pose.scale", "camera pose must be rigid"));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * f64::from(self.height) / (0.5 * self.vertical_fov).tan()
    }

    pub fn position(&self) -> DVec3 {
        self.pose.translation
    }

    pub fn to_camera(&self, p: DVec3) -> DVec3 {
        self.pose.rotation.inverse() * (p - self.pose.translation)
    }

    pub fn project_point(&self, p: DVec3) -> Projection {
        let c = self.to_camera(p);
        let depth = -c.z;
        if depth.is_nan() || depth <= 0.0 {
            return Projection::BehindCamera;
        }
        let f = self.focal();
        Projection::Pixel(DVec2::new(
            0.5 * f64::from(self.width) + f * c.x / depth,
            0.5 * f64::from(self.height) - f * c.y / depth,
        ))
    }

    /// World-space ray through continuous pixel coordinate `(u, v)`.
    pub fn ray_through(&self, u: f64, v: f64) -> Ray {
        let f = self.focal();
        let d = DVec3::new(
            (u - 0.5 * f64::from(self.width)) / f,
            -(v - 0.5 * f64::from(self.height)) / f,
            -1.0,
        );
        Ray::new(self.pose.translation, (self.pose.rotation * d).normalize())
    }

    pub fn pixel_center_ray(&self, x: u32, y: u32) -> Ray {
        self.ray_through(f64::from(x) + 0.5, f64::from(y) + 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream, uniform};

    fn cam() -> PinholeCamera {
        PinholeCamera {
            pose: Transform::IDENTITY,
            vertical_fov: 60f64.to_radians(),
            width: 640,
            height: 480,
        }
    }

    #[test]
    fn optical_axis_maps_to_center() {
        let c = cam();
        assert_eq!(
            c.project_point(DVec3::new(0.0, 0.0, -1.0)),
            Projection::Pixel(DVec2::new(320.0, 240.0))
        );
        assert_eq!(c.project_point(DVec3::new(0.0, 0.0, 1.0)), Projection::BehindCamera);
        assert_eq!(c.project_point(DVec3::ZERO), Projection::BehindCamera);
    }

    #[test]
    fn frustum_corner_maps_to_origin_pixel() {
        let c = cam();
        // top-left frustum edge built from the fov alone
        let ty = (0.5 * c.vertical_fov).tan();
        let tx = ty * f64::from(c.width) / f64::from(c.height);
        let p = DVec3::new(-tx, ty, -1.0) * 3.7;
        let Projection::Pixel(px) = c.project_point(p) else { panic!() };
        assert!(px.length() < 0.5, "{px}");
    }

    #[test]
    fn projection_ray_round_trip() {
        let c = PinholeCamera::look_at(
            DVec3::new(1.0, 2.0, 3.0),
            DVec3::new(0.0, 0.5, 0.0),
            DVec3::Y,
            0.8,
            320,
            200,
        );
        let mut rng = stream(11);
        let mut checked = 0;
        while checked < 1000 {
            let p = DVec3::new(
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
            );
            let Projection::Pixel(px) = c.project_point(p) else { continue };
            let ray = c.ray_through(px.x, px.y);
            let want = (p - c.position()).normalize();
            let angle = ray.dir.dot(want).clamp(-1.0, 1.0).acos();
            assert!(angle < 1e-5, "angle {angle}");
            checked += 1;
        }
    }

    #[test]
    fn invalid_cameras_rejected() {
        let mut c = cam();
        c.vertical_fov = std::f64::consts::PI;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.width = 8;
        assert!(c.validate().is_err());
    }
}
