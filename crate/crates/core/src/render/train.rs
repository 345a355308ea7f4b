use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::composite::Composite;
use super::losses::{cauchy, is_edge, wmse_weights, ColorWeighting, LossParts, LossWeights, Reduction};
use crate::error::{Error, Result};
use crate::field::{
    backward_batch, density_map, density_map_grad, encode_batch, forward_batch, init_params,
    EdgeFieldParams, FieldConfig, Real,
};
use crate::geom::{stratified_samples, Ray, Vec3};
use crate::synth::ViewDataset;

/// Optimization settings for field training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub samples_per_ray: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Iteration cap; 0 derives the count from `epochs`.
    pub iterations: usize,
    /// Passes over all pixels, used when `iterations` is 0.
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub color_weighting: ColorWeighting,
    pub wmse_reduction: Reduction,
    /// Rays per parallel work unit.
    pub chunk_rays: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: 64,
            batch_size: 1024,
            learning_rate: 5e-4,
            iterations: 0,
            epochs: 6,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            color_weighting: ColorWeighting::Adaptive,
            wmse_reduction: Reduction::Mean,
            chunk_rays: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray == 0 || self.batch_size == 0 || self.chunk_rays == 0 {
            return Err(Error::invalid("sample, batch and chunk sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam betas must be in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("adam eps must be positive"));
        }
        Ok(())
    }

    /// Total iterations to run on a dataset with `pixels` pixels.
    pub fn total_iterations(&self, pixels: usize) -> usize {
        if self.iterations > 0 {
            self.iterations
        } else {
            (self.epochs * pixels).div_ceil(self.batch_size)
        }
    }
}

/// Rays with their sample depths and target gray values.
#[derive(Debug, Clone, PartialEq)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    /// `samples_per_ray` increasing depths per ray, concatenated.
    pub ts: Vec<f64>,
    pub gt_gray: Vec<f64>,
    pub samples_per_ray: usize,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn ray_ts(&self, r: usize) -> &[f64] {
        &self.ts[r * self.samples_per_ray..(r + 1) * self.samples_per_ray]
    }

    fn validate(&self) -> Result<()> {
        if self.rays.is_empty() {
            return Err(Error::EmptyInput("ray batch"));
        }
        if self.gt_gray.len() != self.rays.len() || self.ts.len() != self.rays.len() * self.samples_per_ray {
            return Err(Error::ShapeMismatch("ray batch arrays disagree in length".into()));
        }
        Ok(())
    }
}

/// Deterministic per-iteration generator: the stream index is the
/// iteration, so resumed runs draw the same batches.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration + 1);
    rng
}

/// Draws `batch_size` pixels uniformly over all pixels of all views, with
/// stratified samples along each pixel-center ray.
pub fn sample_batch(dataset: &ViewDataset, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<RayBatch> {
    dataset.validate()?;
    let (w, h) = dataset.image_size();
    let per_view = w as usize * h as usize;
    let total = per_view * dataset.views.len();
    let mut batch = RayBatch {
        rays: Vec::with_capacity(cfg.batch_size),
        ts: Vec::with_capacity(cfg.batch_size * cfg.samples_per_ray),
        gt_gray: Vec::with_capacity(cfg.batch_size),
        samples_per_ray: cfg.samples_per_ray,
    };
    for _ in 0..cfg.batch_size {
        let idx = rng.gen_range(0..total);
        let view = &dataset.views[idx / per_view];
        let pix = idx % per_view;
        let (px, py) = ((pix % w as usize) as f64, (pix / w as usize) as f64);
        let ray = view.camera.pixel_ray_unchecked(px + 0.5, py + 0.5);
        batch.ts.extend(stratified_samples(&ray, cfg.samples_per_ray, rng));
        batch.rays.push(ray);
        batch.gt_gray.push(view.edge_map.values[pix] as f64);
    }
    Ok(batch)
}

/// How the rendering term of the objective is weighted and reduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    pub color_weighting: ColorWeighting,
    pub wmse_reduction: Reduction,
}

impl Objective {
    pub fn from_config(weights: LossWeights, cfg: &TrainConfig) -> Self {
        Self {
            weights,
            color_weighting: cfg.color_weighting,
            wmse_reduction: cfg.wmse_reduction,
        }
    }
}

pub(crate) fn encode_rays_pub<F: Real>(
    params: &EdgeFieldParams<F>,
    rays: &[Ray],
    ts: &[f64],
    spr: usize,
) -> (Array2<F>, Array2<F>) {
    let cfg = &params.config;
    let points: Vec<Vec3> = rays
        .iter()
        .enumerate()
        .flat_map(|(r, ray)| ts[r * spr..(r + 1) * spr].iter().map(move |&t| ray.at(t)))
        .collect();
    let pos = encode_batch::<F>(&points, cfg.pe_position_l);
    let per_ray = encode_batch::<F>(&rays.iter().map(|r| r.direction).collect::<Vec<_>>(), cfg.pe_direction_l);
    let dim = per_ray.ncols();
    let dir = Array2::from_shape_fn((rays.len() * spr, dim), |(i, j)| per_ray[[i / spr, j]]);
    (pos, dir)
}

struct ChunkResult<F> {
    parts: LossParts,
    grads: EdgeFieldParams<F>,
}

/// Batch objective `λ₁ W-MSE + λ₂ consistency + λ₃ sparsity` and its exact
/// gradient. Work is split into fixed chunks of rays whose gradients are
/// summed in chunk order, so the result does not depend on the number of
/// worker threads.
pub fn batch_loss_and_grad<F: Real>(
    params: &EdgeFieldParams<F>,
    batch: &RayBatch,
    objective: &Objective,
    chunk_rays: usize,
) -> Result<(LossParts, EdgeFieldParams<F>)> {
    batch.validate()?;
    let lw = objective.weights;
    let n = batch.len();
    let spr = batch.samples_per_ray;
    let color_w = match objective.color_weighting {
        ColorWeighting::Adaptive => wmse_weights(&batch.gt_gray, lw.eta)?,
        ColorWeighting::Uniform => vec![1.0; n],
    };
    let reduce = match objective.wmse_reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / n as f64,
    };
    let non_edge = batch.gt_gray.iter().filter(|&&c| !is_edge(c, lw.eta)).count();
    let inv_samples = 1.0 / (n * spr) as f64;
    let inv_sparse = if non_edge > 0 { 1.0 / (non_edge * spr) as f64 } else { 0.0 };
    let (alpha, beta, g) = (params.alpha(), params.config.beta, params.config.g);

    let chunks: Vec<usize> = (0..n).step_by(chunk_rays.max(1)).collect();
    let results: Vec<ChunkResult<F>> = chunks
        .par_iter()
        .map(|&start| {
            let end = (start + chunk_rays).min(n);
            let rays = &batch.rays[start..end];
            let ts = &batch.ts[start * spr..end * spr];
            let (pos, dir) = encode_rays_pub(params, rays, ts, spr);
            let fwd = forward_batch(params, pos, &dir);
            let m = rays.len() * spr;
            let mut d_edge = vec![F::zero(); m];
            let mut d_gray_f = vec![F::zero(); m];
            let mut grads = params.zeros_like();
            let mut parts = LossParts::default();
            let mut comp = Composite::default();
            let (mut e, mut c, mut sigma) = (vec![0.0; spr], vec![0.0; spr], vec![0.0; spr]);
            let (mut d_sigma, mut d_gray) = (vec![0.0; spr], vec![0.0; spr]);
            for r in 0..rays.len() {
                let base = r * spr;
                for i in 0..spr {
                    e[i] = fwd.edge[base + i].f64();
                    c[i] = fwd.gray[base + i].f64();
                    sigma[i] = density_map(e[i], alpha, beta, g);
                }
                comp.recompute(&ts[base..base + spr], rays[r].t_far, &sigma, &c);
                let gt = batch.gt_gray[start + r];
                let coef = color_w[start + r] * reduce;
                let err = comp.gray - gt;
                parts.wmse += coef * err * err;
                d_gray.iter_mut().for_each(|v| *v = 0.0);
                comp.backward(&c, lw.lambda1 * 2.0 * coef * err, &mut d_sigma, &mut d_gray);
                let sparse = !is_edge(gt, lw.eta);
                for i in 0..spr {
                    let diff = e[i] - c[i];
                    parts.consistency += diff * diff * inv_samples;
                    let dcons = lw.lambda2 * 2.0 * diff * inv_samples;
                    let mut de = dcons;
                    if sparse {
                        let (l, dl) = cauchy(e[i], lw.s);
                        parts.sparsity += l * inv_sparse;
                        de += lw.lambda3 * dl * inv_sparse;
                    }
                    de += d_sigma[i] * density_map_grad(e[i], alpha, beta, g);
                    grads.log_alpha += d_sigma[i] * sigma[i];
                    d_edge[base + i] = F::of(de);
                    d_gray_f[base + i] = F::of(d_gray[i] - dcons);
                }
            }
            backward_batch(params, &fwd, &d_edge, &d_gray_f, &mut grads);
            ChunkResult { parts, grads }
        })
        .collect();

    let mut iter = results.into_iter();
    let first = iter.next().expect("batch is non-empty");
    let (mut parts, mut grads) = (first.parts, first.grads);
    for r in iter {
        parts.add(&r.parts);
        grads.add_assign(&r.grads);
    }
    Ok((parts, grads))
}

/// ReLU on/off pattern of the network over every sample of `batch`.
pub fn batch_activation_pattern<F: Real>(params: &EdgeFieldParams<F>, batch: &RayBatch) -> Vec<bool> {
    let (pos, dir) = encode_rays_pub(params, &batch.rays, &batch.ts, batch.samples_per_ray);
    forward_batch(params, pos, &dir).activation_pattern()
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub parts: LossParts,
    pub total: f64,
    pub alpha: f64,
}

/// Field parameters plus optimizer state, advanced one batch at a time.
pub struct Trainer<'a> {
    pub dataset: &'a ViewDataset,
    pub config: TrainConfig,
    pub objective: Objective,
    pub params: EdgeFieldParams<f32>,
    pub adam: Adam<f32>,
    pub history: Vec<LossRecord>,
}

impl<'a> Trainer<'a> {
    /// Fresh run: parameters initialized from `config.seed`.
    pub fn new(
        dataset: &'a ViewDataset,
        field: &FieldConfig,
        config: TrainConfig,
        weights: LossWeights,
    ) -> Result<Self> {
        let params = init_params(field, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
        Self::resume(dataset, params, None, config, weights)
    }

    /// Continues from saved parameters and, when available, optimizer state.
    pub fn resume(
        dataset: &'a ViewDataset,
        params: EdgeFieldParams<f32>,
        adam: Option<Adam<f32>>,
        config: TrainConfig,
        weights: LossWeights,
    ) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        dataset.validate()?;
        let adam = adam.unwrap_or_else(|| {
            Adam::new(&params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
        });
        Ok(Self {
            dataset,
            config,
            objective: Objective::from_config(weights, &config),
            params,
            adam,
            history: Vec::new(),
        })
    }

    /// Completed iterations, counting those before a resume.
    pub fn iteration(&self) -> usize {
        self.adam.step as usize
    }

    pub fn total_iterations(&self) -> usize {
        self.config.total_iterations(self.dataset.pixel_count())
    }

    pub fn step(&mut self) -> Result<LossRecord> {
        let it = self.iteration();
        let mut rng = iteration_rng(self.config.seed, it as u64);
        let batch = sample_batch(self.dataset, &self.config, &mut rng)?;
        let (parts, grads) = batch_loss_and_grad(&self.params, &batch, &self.objective, self.config.chunk_rays)?;
        let total = parts.total(&self.objective.weights);
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite {
                step: it,
                detail: format!(
                    "wmse={} consistency={} sparsity={} total={} alpha={}",
                    parts.wmse,
                    parts.consistency,
                    parts.sparsity,
                    total,
                    self.params.alpha()
                ),
            });
        }
        self.adam.update(&mut self.params, &grads);
        let record = LossRecord {
            iteration: it,
            parts,
            total,
            alpha: self.params.alpha(),
        };
        self.history.push(record);
        Ok(record)
    }

    /// Runs until `total_iterations`, calling `hook` after every step.
    pub fn run(&mut self, mut hook: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        while self.iteration() < self.total_iterations() {
            let rec = self.step()?;
            if rec.iteration % 100 == 0 {
                log::info!(
                    "iter {} total {:.5} wmse {:.5} cons {:.5} sparse {:.5} alpha {:.3}",
                    rec.iteration,
                    rec.total,
                    rec.parts.wmse,
                    rec.parts.consistency,
                    rec.parts.sparsity,
                    rec.alpha
                );
            }
            hook(self)?;
        }
        Ok(())
    }
}

/// Trains a freshly initialized field and returns it with its loss history.
pub fn train(
    dataset: &ViewDataset,
    field: &FieldConfig,
    config: &TrainConfig,
    weights: &LossWeights,
) -> Result<(EdgeFieldParams<f32>, Vec<LossRecord>)> {
    let mut trainer = Trainer::new(dataset, field, *config, *weights)?;
    trainer.run(|_| Ok(()))?;
    Ok((trainer.params, trainer.history))
}

pub const HISTORY_HEADER: &str = "iteration,wmse,consistency,sparsity,total,alpha";

pub fn format_history_row(r: &LossRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.iteration, r.parts.wmse, r.parts.consistency, r.parts.sparsity, r.total, r.alpha
    )
}

/// Writes the history as CSV, replacing `path`.
pub fn write_history(records: &[LossRecord], path: &Path) -> Result<()> {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format_history_row(r));
        s.push('\n');
    }
    crate::synth::write_file(path, s.as_bytes())
}

pub fn read_history(path: &Path) -> Result<Vec<LossRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::parse(path, "missing loss history header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(path, format!("malformed row {}", i + 2));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(LossRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                parts: LossParts {
                    wmse: num(1)?,
                    consistency: num(2)?,
                    sparsity: num(3)?,
                },
                total: num(4)?,
                alpha: num(5)?,
            })
        })
        .collect()
}
