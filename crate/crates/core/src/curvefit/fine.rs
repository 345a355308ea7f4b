use rand::Rng;

use super::chamfer::{chamfer_with_assignment, control_point_grad, sample_and_dilate, Assignment, CurveSample};
use super::{FitConfig, PointAdam};
use crate::error::{Error, Result};
use crate::geom::{CubicBezier, Vec3};
use crate::spatial::KdTree;

fn endpoint(curves: &[CubicBezier], e: usize) -> Vec3 {
    let c = &curves[e / 2];
    if e.is_multiple_of(2) {
        c.p1
    } else {
        c.p4
    }
}

/// Endpoint pairs `(e1, e2)`, `e1 < e2`, from different curves lying within
/// `d` of each other. Endpoint `e` is `p1` (even) or `p4` (odd) of curve
/// `e / 2`.
pub fn endpoint_pairs(curves: &[CubicBezier], d: f64) -> Vec<(usize, usize)> {
    let n = 2 * curves.len();
    let mut pairs = Vec::new();
    for e1 in 0..n {
        for e2 in e1 + 1..n {
            if e1 / 2 != e2 / 2 && endpoint(curves, e1).distance(endpoint(curves, e2)) <= d {
                pairs.push((e1, e2));
            }
        }
    }
    pairs
}

/// Σ |x − y|² over the masked pairs; gradient per curve as `[∂p1, ∂p4]`.
fn endpoint_with_mask(curves: &[CubicBezier], pairs: &[(usize, usize)]) -> (f64, Vec<[Vec3; 2]>) {
    let mut grad = vec![[Vec3::ZERO; 2]; curves.len()];
    let mut loss = 0.0;
    for &(e1, e2) in pairs {
        let diff = endpoint(curves, e1) - endpoint(curves, e2);
        loss += diff.norm_squared();
        let g1 = &mut grad[e1 / 2][e1 % 2];
        *g1 += diff * 2.0;
        let g2 = &mut grad[e2 / 2][e2 % 2];
        *g2 -= diff * 2.0;
    }
    (loss, grad)
}

/// Endpoint regularizer over pairs closer than `d` from different curves.
pub fn endpoint_loss(curves: &[CubicBezier], d: f64) -> Result<(f64, Vec<[Vec3; 2]>)> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("curve set"));
    }
    Ok(endpoint_with_mask(curves, &endpoint_pairs(curves, d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FineReport {
    /// `gamma_fine` Chamfer of the initial curves.
    pub initial_chamfer: f64,
    /// Chamfer of the returned curves.
    pub final_chamfer: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Optimizer step at which the returned curves were taken.
    pub selected_step: usize,
}

struct Problem<'a> {
    targets: &'a [Vec3],
    tree: KdTree,
    templates: Vec<Vec<CurveSample>>,
    gamma: f64,
    lambda: f64,
    d: f64,
}

struct Snapshot {
    chamfer: f64,
    objective: f64,
    assign: Assignment,
    pairs: Vec<(usize, usize)>,
}

impl Problem<'_> {
    fn positions(&self, curves: &[CubicBezier]) -> Vec<Vec3> {
        curves
            .iter()
            .zip(&self.templates)
            .flat_map(|(c, t)| t.iter().map(move |s| s.position(c)))
            .collect()
    }

    fn snapshot(&self, curves: &[CubicBezier]) -> Result<Snapshot> {
        let pos = self.positions(curves);
        let assign = Assignment::compute(&pos, &self.tree)?;
        let (chamfer, _) = chamfer_with_assignment(&pos, self.targets, self.gamma, &assign);
        let pairs = endpoint_pairs(curves, self.d);
        let (ep, _) = endpoint_with_mask(curves, &pairs);
        Ok(Snapshot {
            chamfer,
            objective: chamfer + self.lambda * ep,
            assign,
            pairs,
        })
    }
}

/// Adam over all control points minimizing `gamma_fine` Chamfer plus
/// `lambda_ep` times the endpoint term. Assignments and the endpoint mask
/// are refreshed every `mask_refresh` steps; the refreshed state with the
/// lowest objective whose Chamfer does not exceed the initial one is
/// returned.
pub fn fine_fit<R: Rng + ?Sized>(
    curves: &[CubicBezier],
    targets: &[Vec3],
    config: &FitConfig,
    rng: &mut R,
) -> Result<(Vec<CubicBezier>, FineReport)> {
    config.validate()?;
    if curves.is_empty() {
        return Err(Error::EmptyInput("curve set"));
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("target points"));
    }
    let templates = curves
        .iter()
        .map(|c| {
            sample_and_dilate(c, config.samples_per_curve, config.dilated_samples, config.dilation_sigma, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = Problem {
        targets,
        tree: KdTree::build(targets),
        templates,
        gamma: config.gamma_fine,
        lambda: config.lambda_ep,
        d: config.endpoint_d(),
    };
    let mut cur = curves.to_vec();
    let mut snap = problem.snapshot(&cur)?;
    let mut report = FineReport {
        initial_chamfer: snap.chamfer,
        final_chamfer: snap.chamfer,
        initial_objective: snap.objective,
        final_objective: snap.objective,
        selected_step: 0,
    };
    let mut best = cur.clone();
    let mut adam = PointAdam::new(4 * cur.len(), config.learning_rate * config.lr_unit);
    let per_curve = config.dilated_samples;
    for step in 1..=config.fine_steps {
        let pos = problem.positions(&cur);
        let (chamfer, g) = chamfer_with_assignment(&pos, targets, problem.gamma, &snap.assign);
        let (ep, eg) = endpoint_with_mask(&cur, &snap.pairs);
        let objective = chamfer + problem.lambda * ep;
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("fine fit, chamfer={chamfer} endpoint={ep}"),
            });
        }
        let mut grads = Vec::with_capacity(4 * cur.len());
        for (k, template) in problem.templates.iter().enumerate() {
            let mut cg = control_point_grad(template, &g[k * per_curve..(k + 1) * per_curve]);
            cg[0] += eg[k][0] * problem.lambda;
            cg[3] += eg[k][1] * problem.lambda;
            grads.extend_from_slice(&cg);
        }
        adam.update(cur.iter_mut().flat_map(|c| c.control_points_mut()), &grads);

        if step % config.mask_refresh == 0 || step == config.fine_steps {
            snap = problem.snapshot(&cur)?;
            if !snap.objective.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    detail: format!("fine fit, chamfer={}", snap.chamfer),
                });
            }
            if snap.chamfer <= report.initial_chamfer && snap.objective < report.final_objective {
                best.clone_from(&cur);
                report.final_chamfer = snap.chamfer;
                report.final_objective = snap.objective;
                report.selected_step = step;
            }
        }
    }
    Ok((best, report))
}
