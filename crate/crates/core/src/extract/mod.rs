//! Dense grid evaluation of a trained field, thresholding into a point
//! cloud, and point-cloud normalization/downsampling.

mod ply;

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{edge_density_batch, encode_batch, EdgeFieldParams, Real};
use crate::geom::Vec3;

pub use ply::{parse_ply, read_ply, write_ply};

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_GRID_RESOLUTION: usize = 256;
/// Metric downsampling voxel, in normalized units.
pub const DEFAULT_EVAL_VOXEL: f64 = 1.0 / 128.0;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Bounds {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z {
            return Err(Error::invalid(format!("empty or non-finite bounds {lo:?}..{hi:?}")));
        }
        Ok(Bounds { lo, hi })
    }

    /// `[-h, h]³`.
    pub fn centered_cube(h: f64) -> Result<Self> {
        Self::new(Vec3::splat(-h), Vec3::splat(h))
    }

    pub fn extent(&self) -> Vec3 {
        self.hi - self.lo
    }
}

impl Default for Bounds {
    /// The scene cube `[-0.5, 0.5]³` that every synthetic scene fits in.
    fn default() -> Self {
        Bounds {
            lo: Vec3::splat(-0.5),
            hi: Vec3::splat(0.5),
        }
    }
}

/// Edge density at the voxel centers of a regular grid. Values are stored
/// x-fastest: `index = (k * n + j) * n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVolume {
    pub resolution: usize,
    pub bounds: Bounds,
    pub values: Vec<f64>,
}

impl DensityVolume {
    pub fn voxel_size(&self) -> Vec3 {
        self.bounds.extent() / self.resolution as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        voxel_center(&self.bounds, self.resolution, i, j, k)
    }

    /// Center of the voxel at flat index `idx`.
    pub fn center_of(&self, idx: usize) -> Vec3 {
        let n = self.resolution;
        self.voxel_center(idx % n, (idx / n) % n, idx / (n * n))
    }
}

fn voxel_center(b: &Bounds, n: usize, i: usize, j: usize, k: usize) -> Vec3 {
    let e = b.extent();
    let f = |lo: f64, ext: f64, i: usize| lo + (i as f64 + 0.5) * ext / n as f64;
    Vec3::new(f(b.lo.x, e.x, i), f(b.lo.y, e.y, j), f(b.lo.z, e.z, k))
}

/// Evaluates E at every voxel center, one z-slab per task.
pub fn sample_grid<F: Real>(
    params: &EdgeFieldParams<F>,
    resolution: usize,
    bounds: Bounds,
) -> Result<DensityVolume> {
    if resolution < 2 {
        return Err(Error::invalid(format!("grid resolution must be >= 2, got {resolution}")));
    }
    params.config.validate()?;
    let n = resolution;
    let slabs: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut points = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    points.push(voxel_center(&bounds, n, i, j, k));
                }
            }
            let pos: Array2<F> = encode_batch(&points, params.config.pe_position_l);
            edge_density_batch(params, pos).iter().map(|v| v.f64()).collect()
        })
        .collect();
    Ok(DensityVolume {
        resolution,
        bounds,
        values: slabs.concat(),
    })
}

/// Affine map `p' = scale * p + offset` recorded by [`normalize_unit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: Vec3,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        scale: 1.0,
        offset: Vec3::ZERO,
    };

    /// Transform fitting the bounding box of `points` into `[0,1]³`: the
    /// longest axis spans `[0,1]`, the others are centered.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        let first = *points.first().ok_or(Error::EmptyInput("point cloud"))?;
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("point cloud has non-finite coordinates"));
        }
        let (lo, hi) = points
            .iter()
            .fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let ext = hi - lo;
        let max_ext = ext.max_element();
        if max_ext <= 0.0 {
            return Err(Error::invalid("cannot normalize a degenerate cloud (all points equal)"));
        }
        let scale = 1.0 / max_ext;
        let pad = (Vec3::splat(1.0) - ext * scale) * 0.5;
        Ok(Normalization {
            scale,
            offset: pad - lo * scale,
        })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        p * self.scale + self.offset
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        (p - self.offset) / self.scale
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn invert_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|&p| self.invert(p)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Set when `points` are in normalized coordinates.
    pub normalization: Option<Normalization>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            normalization: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points in the original frame.
    pub fn denormalized(&self) -> Vec<Vec3> {
        match &self.normalization {
            Some(n) => n.invert_all(&self.points),
            None => self.points.clone(),
        }
    }
}

/// One point per voxel center with `E > tau`.
pub fn threshold_points(volume: &DensityVolume, tau: f64) -> Result<PointCloud> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("threshold must be in (0, 1), got {tau}")));
    }
    let points: Vec<Vec3> = volume
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tau)
        .map(|(idx, _)| volume.center_of(idx))
        .collect();
    if points.is_empty() {
        log::warn!("no voxel exceeds edge threshold {tau}; extracted cloud is empty");
    }
    Ok(PointCloud::new(points))
}

/// Rescales into `[0,1]³` and records the transform. Already-normalized
/// input is first mapped back to its original frame.
pub fn normalize_unit(pc: &PointCloud) -> Result<PointCloud> {
    let original = pc.denormalized();
    let norm = Normalization::fit(&original)?;
    Ok(PointCloud {
        points: norm.apply_all(&original),
        normalization: Some(norm),
    })
}

/// Keeps one point per occupied voxel of edge `voxel_size`: the member
/// closest to the members' centroid (lowest index on ties). Survivors keep
/// their input order.
pub fn voxel_downsample(pc: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::invalid(format!("voxel size must be positive, got {voxel_size}")));
    }
    let key = |p: Vec3| {
        (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        )
    };
    let mut groups: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in pc.points.iter().enumerate() {
        groups.entry(key(p)).or_default().push(i);
    }
    let mut keep: Vec<usize> = groups
        .values()
        .map(|members| {
            let centroid = members
                .iter()
                .fold(Vec3::ZERO, |acc, &i| acc + pc.points[i])
                / members.len() as f64;
            // members are in increasing index order, so min_by keeps the first tie
            *members
                .iter()
                .min_by(|&&a, &&b| {
                    let da = pc.points[a].distance_squared(centroid);
                    let db = pc.points[b].distance_squared(centroid);
                    da.total_cmp(&db)
                })
                .expect("voxel groups are non-empty")
        })
        .collect();
    keep.sort_unstable();
    Ok(PointCloud {
        points: keep.into_iter().map(|i| pc.points[i]).collect(),
        normalization: pc.normalization,
    })
}
