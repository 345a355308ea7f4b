use super::{Mat3, Vec3};
use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square-pixel intrinsics with the principal point at the image center.
    pub fn centered(width: u32, height: u32, focal: f64) -> Self {
        Self {
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64)
            || !(self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        Ok(())
    }
}

/// A calibrated pinhole camera.
///
/// Camera frame follows the computer-vision convention: +x right, +y down,
/// +z along the viewing direction. `rotation` maps camera-frame directions
/// into world space and `center` is the camera position in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub rotation: Mat3,
    pub center: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

/// A camera ray `origin + t * direction` restricted to `[t_near, t_far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Mat3,
        center: Vec3,
        t_near: f64,
        t_far: f64,
    ) -> Result<Self> {
        intrinsics.validate()?;
        if rotation.orthonormality_error() > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("camera rotation must be a proper rotation"));
        }
        if !center.is_finite() {
            return Err(Error::invalid("camera center must be finite"));
        }
        if !(t_near > 0.0 && t_far > t_near) {
            return Err(Error::invalid(format!(
                "depth range must satisfy 0 < t_near < t_far (got {t_near}, {t_far})"
            )));
        }
        Ok(Self {
            intrinsics,
            rotation,
            center,
            t_near,
            t_far,
        })
    }

    /// Builds a camera at `position` looking at `target`.
    ///
    /// Image "up" is aligned with the projection of `up` onto the image plane.
    pub fn look_at(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: Intrinsics,
        t_near: f64,
        t_far: f64,
    ) -> Result<Self> {
        let forward = (target - position)
            .try_normalize()
            .ok_or_else(|| Error::invalid("camera position coincides with target"))?;
        let up = up
            .try_normalize()
            .ok_or_else(|| Error::invalid("up vector is zero"))?;
        let right = forward.cross(up);
        if right.norm() < 1e-6 {
            return Err(Error::invalid("up vector is parallel to the viewing direction"));
        }
        let right = right.normalize();
        let down = forward.cross(right);
        Camera::new(
            intrinsics,
            Mat3::from_columns(right, down, forward),
            position,
            t_near,
            t_far,
        )
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    /// Unit viewing axis in world space.
    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2)
    }

    /// Ray through the sub-pixel location `(px, py)`; pixel `(i, j)` has its
    /// center at `(i + 0.5, j + 0.5)`.
    pub fn pixel_ray(&self, px: f64, py: f64) -> Result<Ray> {
        let k = &self.intrinsics;
        if !(px >= 0.0 && px < k.width as f64 && py >= 0.0 && py < k.height as f64) {
            return Err(Error::invalid(format!(
                "pixel ({px}, {py}) outside {}x{} image",
                k.width, k.height
            )));
        }
        Ok(self.pixel_ray_unchecked(px, py))
    }

    pub(crate) fn pixel_ray_unchecked(&self, px: f64, py: f64) -> Ray {
        let k = &self.intrinsics;
        let dir_cam = Vec3::new((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0);
        Ray {
            origin: self.center,
            direction: self.rotation.mul_vec(dir_cam).normalize(),
            t_near: self.t_near,
            t_far: self.t_far,
        }
    }

    /// Camera-frame coordinates of a world point.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(p - self.center)
    }

    /// Sub-pixel image coordinates of a world point, or `None` when the point
    /// is not in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 1e-12 {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
    }
}
