use rand::Rng;

use super::scenes::SceneSpec;
use crate::error::{Error, Result};
use crate::geom::{Camera, CubicBezier, Vec3};

/// Self-occlusion bias along the line of sight, in scene units.
pub const OCCLUSION_BIAS: f64 = 1e-4;

/// Maximum spacing between consecutive projected curve samples, in pixels.
const MAX_SAMPLE_SPACING_PX: f64 = 0.45;

/// Single-channel edge image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl EdgeMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("edge map values must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn count_above(&self, threshold: f32) -> usize {
        self.values.iter().filter(|&&v| v > threshold).count()
    }
}

/// A curve sample with its projection, produced by adaptive subdivision.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedSample {
    pub point: Vec3,
    pub pixel: (f64, f64),
}

/// Samples `curve` so that consecutive projections in `camera` are less than
/// half a pixel apart.
pub fn sample_curve_projected(curve: &CubicBezier, camera: &Camera) -> Vec<ProjectedSample> {
    fn recurse(
        curve: &CubicBezier,
        camera: &Camera,
        (t0, a): (f64, ProjectedSample),
        (t1, b): (f64, ProjectedSample),
        depth: u32,
        out: &mut Vec<ProjectedSample>,
    ) {
        let dx = a.pixel.0 - b.pixel.0;
        let dy = a.pixel.1 - b.pixel.1;
        if depth >= 24 || (dx * dx + dy * dy).sqrt() < MAX_SAMPLE_SPACING_PX {
            out.push(b);
            return;
        }
        let tm = 0.5 * (t0 + t1);
        let Some(m) = project(curve, camera, tm) else {
            out.push(b);
            return;
        };
        recurse(curve, camera, (t0, a), (tm, m), depth + 1, out);
        recurse(curve, camera, (tm, m), (t1, b), depth + 1, out);
    }
    fn project(curve: &CubicBezier, camera: &Camera, t: f64) -> Option<ProjectedSample> {
        let point = curve.eval(t);
        camera.project(point).map(|pixel| ProjectedSample { point, pixel })
    }

    // Seed with a coarse uniform split so curved arcs cannot fool the
    // endpoint-distance test.
    const SEED: usize = 8;
    let seeds: Vec<(f64, Option<ProjectedSample>)> = (0..=SEED)
        .map(|i| {
            let t = i as f64 / SEED as f64;
            (t, project(curve, camera, t))
        })
        .collect();
    let mut out = Vec::new();
    if let (_, Some(first)) = seeds[0] {
        out.push(first);
    }
    for w in seeds.windows(2) {
        match (w[0], w[1]) {
            ((t0, Some(a)), (t1, Some(b))) => recurse(curve, camera, (t0, a), (t1, b), 0, &mut out),
            ((_, _), (_, Some(b))) => out.push(b),
            _ => {}
        }
    }
    out
}

/// True when the line of sight from the camera to `p` is not blocked.
pub fn is_visible(scene: &SceneSpec, camera: &Camera, p: Vec3) -> bool {
    !scene.occluder.occludes(camera.center, p, OCCLUSION_BIAS)
}

/// Anti-aliased disk profile: 1 inside `radius - 0.5`, linear falloff to 0
/// at `radius`.
fn disk_intensity(r: f64, radius: f64) -> f64 {
    ((radius - r) / 0.5).clamp(0.0, 1.0)
}

/// Renders the visible parts of the scene's curves as soft strokes of
/// radius `stroke_px`.
pub fn render_edge_map(scene: &SceneSpec, camera: &Camera, stroke_px: f64) -> Result<EdgeMap> {
    if !(stroke_px >= 0.5) {
        return Err(Error::invalid(format!("stroke radius {stroke_px} below 0.5 px")));
    }
    let (w, h) = (camera.width(), camera.height());
    let mut map = EdgeMap::zeros(w, h);
    for curve in &scene.curves {
        for s in sample_curve_projected(curve, camera) {
            if is_visible(scene, camera, s.point) {
                splat_disk(&mut map, s.pixel, stroke_px);
            }
        }
    }
    Ok(map)
}

fn splat_disk(map: &mut EdgeMap, (u, v): (f64, f64), radius: f64) {
    let (w, h) = (map.width as i64, map.height as i64);
    let x0 = ((u - radius).floor() as i64).max(0);
    let x1 = ((u + radius).ceil() as i64).min(w - 1);
    let y0 = ((v - radius).floor() as i64).max(0);
    let y1 = ((v + radius).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - u;
            let dy = y as f64 + 0.5 - v;
            let value = disk_intensity((dx * dx + dy * dy).sqrt(), radius) as f32;
            let cell = &mut map.values[(y * w + x) as usize];
            if value > *cell {
                *cell = value;
            }
        }
    }
}

/// Detector-noise stand-in: Gaussian blur (σ = kernel/6, edge-replicated
/// borders) followed by independent per-pixel dropout.
pub fn degrade_edge_map<R: Rng + ?Sized>(
    map: &EdgeMap,
    dropout: f64,
    blur_kernel: usize,
    rng: &mut R,
) -> Result<EdgeMap> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::invalid("dropout must be in [0, 1)"));
    }
    if blur_kernel != 0 && blur_kernel.is_multiple_of(2) {
        return Err(Error::invalid("blur kernel must be odd or 0"));
    }
    let mut out = if blur_kernel > 0 {
        gaussian_blur(map, blur_kernel)
    } else {
        map.clone()
    };
    if dropout > 0.0 {
        for v in out.values.iter_mut() {
            if rng.gen::<f64>() < dropout {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

fn gaussian_blur(map: &EdgeMap, kernel: usize) -> EdgeMap {
    let sigma = kernel as f64 / 6.0;
    let half = (kernel / 2) as i64;
    let weights: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let (w, h) = (map.width as i64, map.height as i64);
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut dst = vec![0.0f32; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let o = k as i64 - half;
                    let (sx, sy) = if horizontal {
                        ((x + o).clamp(0, w - 1), y)
                    } else {
                        (x, (y + o).clamp(0, h - 1))
                    };
                    acc += wt * src[(sy * w + sx) as usize] as f64;
                }
                dst[(y * w + x) as usize] = (acc as f32).clamp(0.0, 1.0);
            }
        }
        dst
    };
    let tmp = pass(&map.values, true);
    EdgeMap {
        width: map.width,
        height: map.height,
        values: pass(&tmp, false),
    }
}
