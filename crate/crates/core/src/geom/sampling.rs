use rand::Rng;

use super::{Ray, Vec3};
use crate::error::{Error, Result};

/// `n` near-uniform points on a sphere via the golden-angle lattice.
///
/// The lattice pole is the +y axis; point `i` sits at height
/// `1 - 2(i + 0.5)/n`, so no point lies exactly on a pole.
pub fn fibonacci_sphere(n: usize, radius: f64, center: Vec3) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::EmptyInput("fibonacci_sphere needs n >= 1"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    Ok((0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let theta = golden_angle * i as f64;
            let unit = Vec3::new(theta.cos() * r, y, theta.sin() * r).normalize();
            center + unit * radius
        })
        .collect())
}

/// Stratified depths: one uniform draw inside each of `n` equal sub-intervals
/// of `[t_near, t_far]`.
pub fn stratified_samples<R: Rng + ?Sized>(ray: &Ray, n: usize, rng: &mut R) -> Vec<f64> {
    let step = (ray.t_far - ray.t_near) / n as f64;
    (0..n)
        .map(|i| {
            let u: f64 = rng.gen();
            ray.t_near + (i as f64 + u) * step
        })
        .collect()
}

/// Stratum midpoints; the deterministic counterpart of [`stratified_samples`].
pub fn midpoint_samples(ray: &Ray, n: usize) -> Vec<f64> {
    let step = (ray.t_far - ray.t_near) / n as f64;
    (0..n)
        .map(|i| ray.t_near + (i as f64 + 0.5) * step)
        .collect()
}
