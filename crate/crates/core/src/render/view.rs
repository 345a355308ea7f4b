use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::composite::{deltas_into, Composite};
use crate::error::{Error, Result};
use crate::field::{density_map, forward_batch, EdgeFieldParams, Real};
use crate::geom::{midpoint_samples, stratified_samples, Camera, Ray};
use crate::synth::EdgeMap;

/// Per-sample quantities along a rendered ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub delta: f64,
    pub edge: f64,
    pub gray: f64,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayRender {
    pub gray: f64,
    pub depth: f64,
    pub samples: Vec<SampleRecord>,
}

/// Renders rays whose sample depths are given (`spr` per ray, concatenated),
/// returning one composite per ray.
pub fn render_rays<F: Real>(params: &EdgeFieldParams<F>, rays: &[Ray], ts: &[f64], spr: usize) -> Vec<RayRender> {
    const CHUNK: usize = 256;
    let (alpha, beta, g) = (params.alpha(), params.config.beta, params.config.g);
    let starts: Vec<usize> = (0..rays.len()).step_by(CHUNK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let end = (start + CHUNK).min(rays.len());
            let chunk = &rays[start..end];
            let cts = &ts[start * spr..end * spr];
            let (pos, dir) = super::train::encode_rays_pub(params, chunk, cts, spr);
            let fwd = forward_batch(params, pos, &dir);
            (0..chunk.len())
                .map(|r| {
                    let b = r * spr;
                    let e: Vec<f64> = (0..spr).map(|i| fwd.edge[b + i].f64()).collect();
                    let c: Vec<f64> = (0..spr).map(|i| fwd.gray[b + i].f64()).collect();
                    let sigma: Vec<f64> = e.iter().map(|&v| density_map(v, alpha, beta, g)).collect();
                    let rts = &cts[b..b + spr];
                    let comp = Composite::compute(rts, chunk[r].t_far, &sigma, &c);
                    let samples = (0..spr)
                        .map(|i| SampleRecord {
                            t: rts[i],
                            delta: comp.deltas[i],
                            edge: e[i],
                            gray: c[i],
                            sigma: sigma[i],
                            weight: comp.weights[i],
                        })
                        .collect();
                    RayRender {
                        gray: comp.gray,
                        depth: comp.depth,
                        samples,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Volume-renders one ray with `n_samples` stratified samples.
pub fn render_ray<F: Real, R: Rng + ?Sized>(
    params: &EdgeFieldParams<F>,
    ray: &Ray,
    n_samples: usize,
    rng: &mut R,
) -> Result<RayRender> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample per ray"));
    }
    let ts = stratified_samples(ray, n_samples, rng);
    Ok(render_rays(params, std::slice::from_ref(ray), &ts, n_samples).remove(0))
}

/// Renders the given pixel centers of `camera` with deterministic midpoint
/// samples.
pub fn render_pixels<F: Real>(
    params: &EdgeFieldParams<F>,
    camera: &Camera,
    pixels: &[(u32, u32)],
    n_samples: usize,
) -> Vec<RayRender> {
    let rays: Vec<Ray> = pixels
        .iter()
        .map(|&(x, y)| camera.pixel_ray_unchecked(x as f64 + 0.5, y as f64 + 0.5))
        .collect();
    let ts: Vec<f64> = rays.iter().flat_map(|r| midpoint_samples(r, n_samples)).collect();
    render_rays(params, &rays, &ts, n_samples)
}

/// Rendered edge image plus depth, both raw and scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugView {
    pub edge: EdgeMap,
    pub depth_raw: Vec<f64>,
    pub depth_display: EdgeMap,
}

pub fn render_debug_view<F: Real>(
    params: &EdgeFieldParams<F>,
    camera: &Camera,
    n_samples: usize,
) -> Result<DebugView> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample per ray"));
    }
    let (w, h) = (camera.width(), camera.height());
    let pixels: Vec<(u32, u32)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
    let out = render_pixels(params, camera, &pixels, n_samples);
    let edge = out.iter().map(|r| r.gray.clamp(0.0, 1.0) as f32).collect();
    let depth_raw: Vec<f64> = out.iter().map(|r| r.depth).collect();
    let lo = depth_raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = depth_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let display = depth_raw
        .iter()
        .map(|&d| if hi > lo { ((d - lo) / (hi - lo)) as f32 } else { 0.0 })
        .collect();
    Ok(DebugView {
        edge: EdgeMap::from_values(w, h, edge)?,
        depth_raw,
        depth_display: EdgeMap::from_values(w, h, display)?,
    })
}

/// Raw depth as a little-endian grayscale PFM, rows top to bottom.
pub fn write_pfm(path: &Path, width: u32, height: u32, values: &[f64]) -> Result<()> {
    if values.len() != width as usize * height as usize {
        return Err(Error::ShapeMismatch("pfm size".into()));
    }
    let mut bytes = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    // PFM stores the bottom row first.
    for row in values.chunks(width as usize).rev() {
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    crate::synth::write_file(path, &bytes)
}

/// `δ` spacing for a sorted depth list, exposed for callers inspecting samples.
pub fn sample_deltas(ts: &[f64], t_far: f64) -> Vec<f64> {
    let mut out = Vec::new();
    deltas_into(ts, t_far, &mut out);
    out
}
