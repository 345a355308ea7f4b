//! Coarse-to-fine curve reconstruction from an edge point cloud: greedy
//! fit-and-delete line fitting, promotion of lines to cubic Béziers, and
//! joint refinement under Chamfer and endpoint losses.

mod chamfer;
mod coarse;
mod fine;
mod io;
#[cfg(test)]
mod tests;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extract::{Normalization, PointCloud};
use crate::geom::{CubicBezier, Vec3};

pub use chamfer::{chamfer_loss, chamfer_with_assignment, sample_and_dilate, Assignment, CurveSample};
pub use coarse::{coarse_fit, fit_single_line, point_segment_distance, CoarseFit};
pub use fine::{endpoint_loss, endpoint_pairs, fine_fit, FineReport};
pub use io::{
    curves_string, parse_curves, read_curves, sample_curves, sample_curves_total, write_curve_samples, write_curves,
};

/// Lengths are in normalized units (the cloud's long axis spans `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub gamma_coarse: f64,
    pub gamma_fine: f64,
    pub samples_per_curve: usize,
    pub dilated_samples: usize,
    pub dilation_sigma: f64,
    pub stop_remaining: usize,
    pub delete_radius: f64,
    /// Endpoint attraction radius, in voxels of the extraction grid.
    pub endpoint_d_voxels: f64,
    /// Extraction grid resolution used to convert `endpoint_d_voxels`.
    pub grid_resolution: usize,
    pub lambda_ep: f64,
    pub learning_rate: f64,
    /// Learning rate of the per-line endpoint refinement.
    pub coarse_learning_rate: f64,
    /// Normalized length of one learning-rate unit.
    pub lr_unit: f64,
    pub ransac_trials: usize,
    pub coarse_steps: usize,
    pub fine_steps: usize,
    pub mask_refresh: usize,
    /// Largest gap between consecutive points when growing a seed line.
    pub grow_gap: f64,
    /// Refine each line against the whole remaining cloud instead of its
    /// own inliers.
    pub refine_on_full_cloud: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            gamma_coarse: 5.0,
            gamma_fine: 1.0,
            samples_per_curve: 100,
            dilated_samples: 500,
            dilation_sigma: 0.01,
            stop_remaining: 20,
            delete_radius: 0.02,
            endpoint_d_voxels: 4.0,
            grid_resolution: 256,
            lambda_ep: 0.01,
            learning_rate: 0.5,
            coarse_learning_rate: 0.05,
            lr_unit: 0.01,
            ransac_trials: 64,
            coarse_steps: 200,
            fine_steps: 500,
            mask_refresh: 50,
            grow_gap: 0.04,
            refine_on_full_cloud: false,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Desk-scale preset paired with a 64³ extraction grid.
    pub fn desk() -> Self {
        FitConfig {
            grid_resolution: 64,
            ..Self::default()
        }
    }

    pub fn endpoint_d(&self) -> f64 {
        self.endpoint_d_voxels / self.grid_resolution as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_coarse", self.gamma_coarse),
            ("gamma_fine", self.gamma_fine),
            ("delete_radius", self.delete_radius),
            ("endpoint_d_voxels", self.endpoint_d_voxels),
            ("lambda_ep", self.lambda_ep),
            ("learning_rate", self.learning_rate),
            ("coarse_learning_rate", self.coarse_learning_rate),
            ("lr_unit", self.lr_unit),
            ("grow_gap", self.grow_gap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("fit.{name} must be positive, got {v}")));
            }
        }
        if self.gamma_coarse < 1.0 || self.gamma_fine < 1.0 {
            return Err(Error::invalid("fit gammas must be >= 1"));
        }
        if !(self.dilation_sigma >= 0.0 && self.dilation_sigma.is_finite()) {
            return Err(Error::invalid("fit.dilation_sigma must be >= 0"));
        }
        if self.samples_per_curve < 2 || self.dilated_samples < self.samples_per_curve {
            return Err(Error::invalid("need dilated_samples >= samples_per_curve >= 2"));
        }
        let counts = [
            ("stop_remaining", self.stop_remaining),
            ("grid_resolution", self.grid_resolution),
            ("ransac_trials", self.ransac_trials),
            ("coarse_steps", self.coarse_steps),
            ("fine_steps", self.fine_steps),
            ("mask_refresh", self.mask_refresh),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("fit.{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub a: Vec3,
    pub b: Vec3,
}

impl LineSegment {
    pub const MIN_LENGTH: f64 = 1e-6;

    pub fn new(a: Vec3, b: Vec3) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a.distance(b) <= Self::MIN_LENGTH {
            return Err(Error::invalid("line segment endpoints must be finite and distinct"));
        }
        Ok(LineSegment { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn distance_to(&self, p: Vec3) -> f64 {
        point_segment_distance(p, self.a, self.b)
    }
}

/// `(a, b) -> Bézier(a, a + (b−a)/3, a + 2(b−a)/3, b)` for every line.
pub fn lines_to_beziers(lines: &[LineSegment]) -> Result<Vec<CubicBezier>> {
    if lines.is_empty() {
        return Err(Error::EmptyInput("line set"));
    }
    Ok(lines.iter().map(|l| CubicBezier::line(l.a, l.b)).collect())
}

/// Adam over a flat list of 3D points.
#[derive(Debug, Clone)]
pub(crate) struct PointAdam {
    lr: f64,
    step: i32,
    m: Vec<Vec3>,
    v: Vec<Vec3>,
}

impl PointAdam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub(crate) fn new(len: usize, lr: f64) -> Self {
        PointAdam {
            lr,
            step: 0,
            m: vec![Vec3::ZERO; len],
            v: vec![Vec3::ZERO; len],
        }
    }

    pub(crate) fn update<'a>(&mut self, params: impl Iterator<Item = &'a mut Vec3>, grads: &[Vec3]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = (1.0 - Self::BETA2.powi(self.step)).sqrt();
        for (i, p) in params.enumerate() {
            let g = grads[i].to_array();
            let mut m = self.m[i].to_array();
            let mut v = self.v[i].to_array();
            let mut q = p.to_array();
            for k in 0..3 {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                q[k] -= self.lr / c1 * m[k] / (v[k].sqrt() / c2 + Self::EPS);
            }
            self.m[i] = Vec3::from_array(m);
            self.v[i] = Vec3::from_array(v);
            *p = Vec3::from_array(q);
        }
    }
}

/// Result of [`fit_pipeline`], curves in the input frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub curves: Vec<CubicBezier>,
    pub lines: Vec<LineSegment>,
    pub normalization: Normalization,
    pub report: FineReport,
    pub leftover: usize,
}

/// normalize → coarse lines → Béziers → joint refinement → original frame.
pub fn fit_pipeline(points: &[Vec3], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("point cloud to fit"));
    }
    let normalized = crate::extract::normalize_unit(&PointCloud::new(points.to_vec()))?;
    let norm = normalized.normalization.expect("normalize_unit records its transform");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coarse = coarse_fit(&normalized.points, config, &mut rng)?;
    let init = lines_to_beziers(&coarse.lines)?;
    let (fitted, report) = fine_fit(&init, &normalized.points, config, &mut rng)?;
    let curves = fitted
        .iter()
        .map(|c| {
            let [p1, p2, p3, p4] = c.control_points().map(|p| norm.invert(p));
            CubicBezier::new(p1, p2, p3, p4)
        })
        .collect();
    let lines = coarse
        .lines
        .iter()
        .map(|l| LineSegment {
            a: norm.invert(l.a),
            b: norm.invert(l.b),
        })
        .collect();
    Ok(FitResult {
        curves,
        lines,
        normalization: norm,
        report,
        leftover: coarse.leftover,
    })
}
