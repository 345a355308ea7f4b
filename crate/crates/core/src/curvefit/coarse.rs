use rand::Rng;

use super::chamfer::{chamfer_with_assignment, control_point_grad, sample_and_dilate, Assignment};
use super::{FitConfig, LineSegment, PointAdam};
use crate::error::{Error, Result};
use crate::geom::{CubicBezier, Vec3};
use crate::spatial::KdTree;

pub fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn inliers(points: &[Vec3], seg: &LineSegment, radius: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| seg.distance_to(points[i]) <= radius)
        .collect()
}

/// Best of `ransac_trials` random point pairs by inlier count (first wins
/// ties). Falls back to point 0 and the point farthest from it when every
/// drawn pair is degenerate.
fn ransac_seed<R: Rng + ?Sized>(points: &[Vec3], cfg: &FitConfig, rng: &mut R) -> Option<LineSegment> {
    let n = points.len();
    let mut best: Option<(usize, LineSegment)> = None;
    for _ in 0..cfg.ransac_trials {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Ok(seg) = LineSegment::new(points[i], points[j]) else {
            continue;
        };
        let score = points
            .iter()
            .filter(|&&p| seg.distance_to(p) <= cfg.delete_radius)
            .count();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, seg));
        }
    }
    best.map(|(_, s)| s).or_else(|| {
        let far = (1..n).max_by(|&a, &b| {
            points[a]
                .distance_squared(points[0])
                .total_cmp(&points[b].distance_squared(points[0]))
                .then(b.cmp(&a))
        })?;
        LineSegment::new(points[0], points[far]).ok()
    })
}

/// Principal axis of `pts` by power iteration from `init`.
fn principal_axis(pts: &[Vec3], centroid: Vec3, init: Vec3) -> Vec3 {
    let mut c = [[0.0; 3]; 3];
    for p in pts {
        let d = (*p - centroid).to_array();
        for r in 0..3 {
            for k in 0..3 {
                c[r][k] += d[r] * d[k];
            }
        }
    }
    let mut v = init;
    for _ in 0..50 {
        let a = v.to_array();
        let next = Vec3::new(
            c[0][0] * a[0] + c[0][1] * a[1] + c[0][2] * a[2],
            c[1][0] * a[0] + c[1][1] * a[1] + c[1][2] * a[2],
            c[2][0] * a[0] + c[2][1] * a[1] + c[2][2] * a[2],
        );
        match next.try_normalize() {
            Some(u) => v = u,
            None => break,
        }
    }
    v
}

/// Extends a seed along its supporting line over the contiguous run of
/// nearby points (gaps up to `grow_gap`), then refits the axis to that run.
fn grow(points: &[Vec3], seed: LineSegment, cfg: &FitConfig) -> LineSegment {
    let mut seg = seed;
    for _ in 0..2 {
        let dir = (seg.b - seg.a).normalize();
        let span = seg.length();
        let mut cand: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| {
                let t = (p - seg.a).dot(dir);
                let off = (p - seg.a - dir * t).norm();
                (off <= cfg.delete_radius).then_some((t, i))
            })
            .collect();
        cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let Some(first_in) = cand.iter().position(|c| c.0 >= -cfg.grow_gap) else {
            break;
        };
        let last_in = cand.iter().rposition(|c| c.0 <= span + cfg.grow_gap).unwrap_or(first_in);
        if last_in < first_in {
            break;
        }
        let (mut lo, mut hi) = (first_in, last_in);
        while lo > 0 && cand[lo].0 - cand[lo - 1].0 <= cfg.grow_gap {
            lo -= 1;
        }
        while hi + 1 < cand.len() && cand[hi + 1].0 - cand[hi].0 <= cfg.grow_gap {
            hi += 1;
        }
        let run: Vec<Vec3> = cand[lo..=hi].iter().map(|c| points[c.1]).collect();
        if run.len() < 2 {
            break;
        }
        let centroid = run.iter().fold(Vec3::ZERO, |a, &p| a + p) / run.len() as f64;
        let axis = principal_axis(&run, centroid, dir);
        let (tmin, tmax) = run.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            let t = (p - centroid).dot(axis);
            (lo.min(t), hi.max(t))
        });
        match LineSegment::new(centroid + axis * tmin, centroid + axis * tmax) {
            Ok(s) => seg = s,
            Err(_) => break,
        }
    }
    seg
}

/// Adam on the two endpoints minimizing the `gamma_coarse` Chamfer term
/// against `targets`.
fn refine<R: Rng + ?Sized>(
    seg: LineSegment,
    targets: &[Vec3],
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<LineSegment> {
    let template = sample_and_dilate(
        &CubicBezier::line(seg.a, seg.b),
        cfg.samples_per_curve,
        cfg.dilated_samples,
        cfg.dilation_sigma,
        rng,
    )?;
    let tree = KdTree::build(targets);
    let mut ends = [seg.a, seg.b];
    let mut adam = PointAdam::new(2, cfg.coarse_learning_rate * cfg.lr_unit);
    for step in 0..cfg.coarse_steps {
        let curve = CubicBezier::line(ends[0], ends[1]);
        let pos: Vec<Vec3> = template.iter().map(|s| s.position(&curve)).collect();
        let assign = Assignment::compute(&pos, &tree)?;
        let (loss, grad) = chamfer_with_assignment(&pos, targets, cfg.gamma_coarse, &assign);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("coarse line refinement, chamfer={loss}"),
            });
        }
        // interior control points sit at 1/3 and 2/3 of the segment
        let g = control_point_grad(&template, &grad);
        let ga = g[0] + g[1] * (2.0 / 3.0) + g[2] * (1.0 / 3.0);
        let gb = g[1] * (1.0 / 3.0) + g[2] * (2.0 / 3.0) + g[3];
        adam.update(ends.iter_mut(), &[ga, gb]);
    }
    Ok(LineSegment::new(ends[0], ends[1]).unwrap_or(seg))
}

/// RANSAC seed, growth along the seed's line, then endpoint refinement.
/// Returns the segment and the indices of points within `delete_radius`.
pub fn fit_single_line<R: Rng + ?Sized>(
    points: &[Vec3],
    config: &FitConfig,
    rng: &mut R,
) -> Result<(LineSegment, Vec<usize>)> {
    fit_line_with_support(points, points, config, rng)
}

/// Seeds on `points` but grows and refines against `support`, so a line
/// still reaches corners whose points an earlier line already claimed.
fn fit_line_with_support<R: Rng + ?Sized>(
    points: &[Vec3],
    support: &[Vec3],
    config: &FitConfig,
    rng: &mut R,
) -> Result<(LineSegment, Vec<usize>)> {
    if points.len() < 2 {
        return Err(Error::invalid(format!("line fit needs >= 2 points, got {}", points.len())));
    }
    let seed = ransac_seed(points, config, rng)
        .ok_or_else(|| Error::invalid("cannot fit a line: all points coincide"))?;
    let grown = grow(support, seed, config);
    let refined = if config.refine_on_full_cloud {
        refine(grown, points, config, rng)?
    } else {
        let idx = inliers(support, &grown, config.delete_radius);
        let targets: Vec<Vec3> = if idx.is_empty() {
            vec![seed.a, seed.b]
        } else {
            idx.iter().map(|&i| support[i]).collect()
        };
        refine(grown, &targets, config, rng)?
    };
    let idx = inliers(points, &refined, config.delete_radius);
    Ok((refined, idx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseFit {
    pub lines: Vec<LineSegment>,
    /// Points not explained by any line.
    pub leftover: usize,
    /// True when the loop stopped on a line with fewer than 3 inliers.
    pub stalled: bool,
    pub iterations: usize,
}

/// Fit-and-delete: fit one line, drop its inliers, repeat until fewer than
/// `stop_remaining` points remain or a line explains fewer than 3 points.
pub fn coarse_fit<R: Rng + ?Sized>(points: &[Vec3], config: &FitConfig, rng: &mut R) -> Result<CoarseFit> {
    config.validate()?;
    if points.len() < config.stop_remaining {
        return Err(Error::invalid(format!(
            "coarse fit needs at least {} points, got {}",
            config.stop_remaining,
            points.len()
        )));
    }
    let mut remaining: Vec<Vec3> = points.to_vec();
    let mut lines = Vec::new();
    let mut stalled = false;
    let mut iterations = 0;
    while remaining.len() >= config.stop_remaining {
        iterations += 1;
        let fit = match fit_line_with_support(&remaining, points, config, rng) {
            Ok(f) => f,
            Err(Error::InvalidInput(_)) => {
                stalled = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (seg, idx) = fit;
        if idx.len() < 3 {
            stalled = true;
            break;
        }
        lines.push(seg);
        let mut drop = vec![false; remaining.len()];
        for i in idx {
            drop[i] = true;
        }
        let mut k = 0;
        remaining.retain(|_| {
            k += 1;
            !drop[k - 1]
        });
    }
    if stalled {
        log::warn!(
            "coarse fit stalled after {} lines; {} points left unexplained",
            lines.len(),
            remaining.len()
        );
    }
    if lines.is_empty() {
        return Err(Error::invalid("coarse fit found no line"));
    }
    Ok(CoarseFit {
        lines,
        leftover: remaining.len(),
        stalled,
        iterations,
    })
}
