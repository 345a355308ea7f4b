use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Degree-3 Bernstein weights at `t`; `bezier_point = Σ wᵢ pᵢ`.
pub fn bezier_basis_weights(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

/// Cubic Bézier curve. `p1` and `p4` are the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicBezier {
    pub p1: Vec3,
    pub p2: Vec3,
    pub p3: Vec3,
    pub p4: Vec3,
}

impl CubicBezier {
    pub fn new(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> Self {
        Self { p1, p2, p3, p4 }
    }

    /// Straight segment `a -> b` with interior control points at 1/3 and 2/3.
    pub fn line(a: Vec3, b: Vec3) -> Self {
        let d = b - a;
        Self::new(a, a + d / 3.0, a + d * (2.0 / 3.0), b)
    }

    pub fn from_array(v: [f64; 12]) -> Self {
        Self::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            Vec3::new(v[6], v[7], v[8]),
            Vec3::new(v[9], v[10], v[11]),
        )
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, p) in self.control_points().iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(&p.to_array());
        }
        out
    }

    pub fn control_points(&self) -> [Vec3; 4] {
        [self.p1, self.p2, self.p3, self.p4]
    }

    pub fn control_points_mut(&mut self) -> [&mut Vec3; 4] {
        [&mut self.p1, &mut self.p2, &mut self.p3, &mut self.p4]
    }

    pub fn is_finite(&self) -> bool {
        self.control_points().iter().all(|p| p.is_finite())
    }

    pub fn is_degenerate(&self) -> bool {
        let p = self.control_points();
        p.iter().all(|q| q.distance_squared(p[0]) == 0.0)
    }

    /// Point at parameter `t ∈ [0, 1]`.
    pub fn point(&self, t: f64) -> Result<Vec3> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("bezier parameter {t} outside [0, 1]")));
        }
        Ok(self.eval(t))
    }

    /// Point at `t` without range checking.
    pub fn eval(&self, t: f64) -> Vec3 {
        let s = 1.0 - t;
        self.p1 * (s * s * s)
            + self.p2 * (3.0 * s * s * t)
            + self.p3 * (3.0 * s * t * t)
            + self.p4 * (t * t * t)
    }

    /// Evaluation via explicit Bernstein weights (linear in control points).
    pub fn eval_weighted(&self, w: &[f64; 4]) -> Vec3 {
        self.p1 * w[0] + self.p2 * w[1] + self.p3 * w[2] + self.p4 * w[3]
    }

    /// `n >= 2` points at uniformly spaced parameters `i / (n - 1)`.
    pub fn sample_uniform(&self, n: usize) -> Vec<Vec3> {
        match n {
            0 => Vec::new(),
            1 => vec![self.p1],
            _ => (0..n).map(|i| self.eval(i as f64 / (n - 1) as f64)).collect(),
        }
    }

    /// Polyline approximation of the arc length.
    pub fn approx_length(&self, segments: usize) -> f64 {
        self.sample_uniform(segments.max(1) + 1)
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum()
    }

    /// Distance from `p` to the curve, via dense sampling plus local
    /// ternary refinement.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        const N: usize = 64;
        let mut best_i = 0;
        let mut best = f64::INFINITY;
        for i in 0..=N {
            let d = self.eval(i as f64 / N as f64).distance_squared(p);
            if d < best {
                best = d;
                best_i = i;
            }
        }
        let mut lo = (best_i.saturating_sub(1)) as f64 / N as f64;
        let mut hi = ((best_i + 1).min(N)) as f64 / N as f64;
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if self.eval(m1).distance_squared(p) < self.eval(m2).distance_squared(p) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let refined = self.eval(0.5 * (lo + hi)).distance_squared(p);
        best.min(refined).sqrt()
    }
}
