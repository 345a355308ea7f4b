//! Geometric primitives shared by the whole pipeline: vectors, pinhole
//! cameras and rays, cubic Béziers, sphere/ray sampling and the frequency
//! encoding fed to the field network.

mod bezier;
mod camera;
mod encoding;
mod sampling;
mod vec3;

pub use bezier::{bezier_basis_weights, CubicBezier};
pub use camera::{Camera, Intrinsics, Ray};
pub use encoding::{encoded_len, positional_encoding};
pub(crate) use encoding::encode_into;
pub use sampling::{fibonacci_sphere, midpoint_samples, stratified_samples};
pub use vec3::{Mat3, Vec3};

/// Point on `curve` at `t`; errors when `t ∉ [0, 1]`.
pub fn bezier_point(curve: &CubicBezier, t: f64) -> crate::Result<Vec3> {
    curve.point(t)
}

/// Camera at `position` facing `target`.
pub fn camera_look_at(
    position: Vec3,
    target: Vec3,
    up: Vec3,
    intrinsics: Intrinsics,
    t_near: f64,
    t_far: f64,
) -> crate::Result<Camera> {
    Camera::look_at(position, target, up, intrinsics, t_near, t_far)
}

/// Ray through sub-pixel `(px, py)` of `camera`.
pub fn pixel_ray(camera: &Camera, px: f64, py: f64) -> crate::Result<Ray> {
    camera.pixel_ray(px, py)
}
