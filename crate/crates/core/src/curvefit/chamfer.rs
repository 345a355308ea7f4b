use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{bezier_basis_weights, CubicBezier, Vec3};
use crate::spatial::KdTree;

/// Nearest-neighbour pairing in both directions of a Chamfer term.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// For each curve sample, the index of its nearest target.
    pub sample_to_target: Vec<usize>,
    /// For each target, the index of its nearest curve sample.
    pub target_to_sample: Vec<usize>,
}

impl Assignment {
    pub fn compute(samples: &[Vec3], target_tree: &KdTree) -> Result<Self> {
        if samples.is_empty() || target_tree.is_empty() {
            return Err(Error::EmptyInput("chamfer point set"));
        }
        let sample_tree = KdTree::build(samples);
        let nearest = |tree: &KdTree, q: &Vec3| tree.nearest(*q).expect("non-empty tree").0;
        Ok(Assignment {
            sample_to_target: samples.par_iter().map(|q| nearest(target_tree, q)).collect(),
            target_to_sample: target_tree
                .points()
                .par_iter()
                .map(|q| nearest(&sample_tree, q))
                .collect(),
        })
    }
}

/// Chamfer value and per-sample gradient under a fixed assignment:
/// `γ·mean_c |c − t(c)|² + mean_t |t − c(t)|²`.
pub fn chamfer_with_assignment(
    samples: &[Vec3],
    targets: &[Vec3],
    gamma: f64,
    a: &Assignment,
) -> (f64, Vec<Vec3>) {
    let (nc, nt) = (samples.len() as f64, targets.len() as f64);
    let mut grad = vec![Vec3::ZERO; samples.len()];
    let mut forward = 0.0;
    for (i, (&c, &j)) in samples.iter().zip(&a.sample_to_target).enumerate() {
        let d = c - targets[j];
        forward += d.norm_squared();
        grad[i] = d * (2.0 * gamma / nc);
    }
    let mut backward = 0.0;
    for (&t, &i) in targets.iter().zip(&a.target_to_sample) {
        let d = samples[i] - t;
        backward += d.norm_squared();
        grad[i] += d * (2.0 / nt);
    }
    (gamma * forward / nc + backward / nt, grad)
}

/// Asymmetrically weighted squared Chamfer distance between curve samples
/// and target points, with its gradient w.r.t. each sample position.
pub fn chamfer_loss(samples: &[Vec3], targets: &[Vec3], gamma: f64) -> Result<(f64, Vec<Vec3>)> {
    if samples.is_empty() || targets.is_empty() {
        return Err(Error::EmptyInput("chamfer point set"));
    }
    let tree = KdTree::build(targets);
    let a = Assignment::compute(samples, &tree)?;
    Ok(chamfer_with_assignment(samples, targets, gamma, &a))
}

/// A curve sample: `point = Σ basis_weights[k]·p_k + noise_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub point: Vec3,
    pub basis_weights: [f64; 4],
    pub noise_offset: Vec3,
}

impl CurveSample {
    pub fn position(&self, curve: &CubicBezier) -> Vec3 {
        curve.eval_weighted(&self.basis_weights) + self.noise_offset
    }
}

/// `n` samples at `t = i/(n−1)` plus `m − n` copies of them (round-robin)
/// displaced by fixed N(0, σ²) offsets.
pub fn sample_and_dilate<R: Rng + ?Sized>(
    curve: &CubicBezier,
    n: usize,
    m: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<CurveSample>> {
    if n < 2 || m < n {
        return Err(Error::invalid(format!("need m >= n >= 2, got n={n} m={m}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("dilation sigma must be >= 0, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|_| Error::invalid(format!("dilation sigma must be >= 0, got {sigma}")))?;
    let mut out: Vec<CurveSample> = (0..n)
        .map(|i| {
            let w = bezier_basis_weights(i as f64 / (n - 1) as f64);
            CurveSample {
                point: curve.eval_weighted(&w),
                basis_weights: w,
                noise_offset: Vec3::ZERO,
            }
        })
        .collect();
    for k in 0..m - n {
        let base = out[k % n];
        let offset = Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
        out.push(CurveSample {
            point: base.point + offset,
            basis_weights: base.basis_weights,
            noise_offset: offset,
        });
    }
    Ok(out)
}

/// Chain rule from sample gradients to the four control points.
pub(crate) fn control_point_grad(samples: &[CurveSample], grad: &[Vec3]) -> [Vec3; 4] {
    let mut out = [Vec3::ZERO; 4];
    for (s, g) in samples.iter().zip(grad) {
        for (o, w) in out.iter_mut().zip(s.basis_weights) {
            *o += *g * w;
        }
    }
    out
}
