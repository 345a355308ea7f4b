use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::params::{EdgeFieldParams, Linear, Real};
use crate::error::{Error, Result};
use crate::geom::{encode_into, Vec3};

/// Edge density mapped to volume density: `σ = α / (1 + exp(-g (E - β)))`.
pub fn density_map(e: f64, alpha: f64, beta: f64, g: f64) -> f64 {
    alpha * logistic(g * (e - beta))
}

/// `∂σ/∂E` of [`density_map`].
pub fn density_map_grad(e: f64, alpha: f64, beta: f64, g: f64) -> f64 {
    let s = logistic(g * (e - beta));
    alpha * g * s * (1.0 - s)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    (F::one() / (F::one() + (-x).exp())).flush()
}

/// Output of the field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub edge_density: f64,
    pub gray: f64,
    pub feature: Vec<f64>,
}

/// Encodes points row-wise, with passthrough.
pub fn encode_batch<F: Real>(points: &[Vec3], frequencies: usize) -> Array2<F> {
    let dim = crate::geom::encoded_len(3, frequencies, true);
    let mut flat = Vec::with_capacity(points.len() * dim);
    let mut row = Vec::with_capacity(dim);
    for p in points {
        row.clear();
        encode_into(&p.to_array(), frequencies, true, &mut row);
        flat.extend(row.iter().map(|&v| F::of(v)));
    }
    Array2::from_shape_vec((points.len(), dim), flat).expect("row lengths agree")
}

fn affine<F: Real>(x: &ArrayView2<F>, layer: &Linear<F>, relu: bool) -> Array2<F> {
    let mut z = x.dot(&layer.weight);
    let bias = layer.bias.as_slice().expect("standard layout");
    let rows = z.as_slice_mut().expect("fresh product is contiguous");
    for row in rows.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            let x = *v + b;
            *v = if relu && x < F::zero() { F::zero() } else { x.flush() };
        }
    }
    z
}

/// `acc += Σ_rows m`.
fn add_column_sums<F: Real>(acc: &mut Array1<F>, m: &Array2<F>) {
    let acc = acc.as_slice_mut().expect("standard layout");
    match m.as_slice() {
        Some(rows) => {
            for row in rows.chunks_exact(acc.len()) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        None => {
            for row in m.rows() {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
    }
}

/// Zeroes gradient entries whose ReLU output was not positive, and flushes
/// the rest.
fn mask_relu<F: Real>(grad: &mut Array2<F>, out: &ArrayView2<F>) {
    if let (Some(g), Some(o)) = (grad.as_slice_mut(), out.as_slice()) {
        for (d, &a) in g.iter_mut().zip(o) {
            *d = if a <= F::zero() { F::zero() } else { d.flush() };
        }
        return;
    }
    ndarray::Zip::from(grad).and(out).for_each(|d, &a| {
        *d = if a <= F::zero() { F::zero() } else { d.flush() };
    });
}

/// Activations of one batched forward pass, kept for backpropagation.
pub struct FieldForward<F> {
    /// Input of every backbone layer.
    backbone_inputs: Vec<Array2<F>>,
    feature: Array2<F>,
    /// Input of every gray hidden layer, followed by the last hidden output.
    gray_inputs: Vec<Array2<F>>,
    pub edge: Array1<F>,
    pub gray: Array1<F>,
}

impl<F: Real> FieldForward<F> {
    pub fn len(&self) -> usize {
        self.edge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge.is_empty()
    }

    pub fn feature(&self) -> &Array2<F> {
        &self.feature
    }

    /// On/off state of every hidden ReLU unit for every point. Two parameter
    /// settings with equal patterns lie in the same smooth piece of the
    /// network.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let w = self.feature.ncols();
        let mut bits = Vec::new();
        for input in &self.backbone_inputs[1..] {
            bits.extend(input.slice(s![.., ..w]).iter().map(|&v| v > F::zero()));
        }
        bits.extend(self.feature.iter().map(|&v| v > F::zero()));
        for h in &self.gray_inputs[1..] {
            bits.extend(h.iter().map(|&v| v > F::zero()));
        }
        bits
    }
}

/// Evaluates the network on encoded positions and directions (one row per
/// point).
pub fn forward_batch<F: Real>(
    params: &EdgeFieldParams<F>,
    pos: Array2<F>,
    dir: &Array2<F>,
) -> FieldForward<F> {
    let cfg = &params.config;
    let mut backbone_inputs: Vec<Array2<F>> = Vec::with_capacity(params.backbone.len());
    let mut h = pos;
    for (l, layer) in params.backbone.iter().enumerate() {
        let input = if l > 0 && cfg.has_skip() && l == cfg.skip_layer {
            concatenate(Axis(1), &[h.view(), backbone_inputs[0].view()]).expect("row counts agree")
        } else {
            h
        };
        let z = affine(&input.view(), layer, true);
        backbone_inputs.push(input);
        h = z;
    }
    let feature = h;
    let edge = affine(&feature.view(), &params.density_head, false)
        .column(0)
        .mapv(sigmoid);
    let edge_col = edge.view().insert_axis(Axis(1));
    let mut g = concatenate(Axis(1), &[feature.view(), edge_col, dir.view()]).expect("row counts agree");
    let mut gray_inputs = Vec::with_capacity(params.gray_hidden.len() + 1);
    for layer in &params.gray_hidden {
        let z = affine(&g.view(), layer, true);
        gray_inputs.push(g);
        g = z;
    }
    let gray = affine(&g.view(), &params.gray_out, false).column(0).mapv(sigmoid);
    gray_inputs.push(g);
    FieldForward {
        backbone_inputs,
        feature,
        gray_inputs,
        edge,
        gray,
    }
}

/// Edge density only, skipping the gray head. Rows match `forward_batch`.
pub fn edge_density_batch<F: Real>(params: &EdgeFieldParams<F>, pos: Array2<F>) -> Array1<F> {
    let cfg = &params.config;
    let input0 = pos;
    let mut h: Option<Array2<F>> = None;
    for (l, layer) in params.backbone.iter().enumerate() {
        let z = match &h {
            None => affine(&input0.view(), layer, true),
            Some(prev) if l > 0 && cfg.has_skip() && l == cfg.skip_layer => {
                let cat = concatenate(Axis(1), &[prev.view(), input0.view()]).expect("row counts agree");
                affine(&cat.view(), layer, true)
            }
            Some(prev) => affine(&prev.view(), layer, true),
        };
        h = Some(z);
    }
    let feature = h.unwrap_or(input0);
    affine(&feature.view(), &params.density_head, false)
        .column(0)
        .mapv(sigmoid)
}

/// Accumulates `∂L/∂θ` into `grads` given `∂L/∂E` and `∂L/∂c` per point.
/// `log_alpha` is left untouched; it only enters through the density map.
pub fn backward_batch<F: Real>(
    params: &EdgeFieldParams<F>,
    fwd: &FieldForward<F>,
    d_edge: &[F],
    d_gray: &[F],
    grads: &mut EdgeFieldParams<F>,
) {
    let n = fwd.len();
    assert!(d_edge.len() == n && d_gray.len() == n, "upstream length mismatch");
    let w = params.config.backbone_width;

    // gray head
    let dz_out: Array1<F> = Array1::from_shape_fn(n, |i| {
        let c = fwd.gray[i];
        (d_gray[i] * c * (F::one() - c)).flush()
    });
    let dz_out = dz_out.insert_axis(Axis(1));
    let last = fwd.gray_inputs.last().expect("gray head has an output layer");
    general_mat_mul(F::one(), &last.t(), &dz_out, F::one(), &mut grads.gray_out.weight);
    add_column_sums(&mut grads.gray_out.bias, &dz_out);
    // outer product built row-major so later element loops stay contiguous
    let w_out = params.gray_out.weight.column(0);
    let mut dh = Array2::from_shape_fn((n, w_out.len()), |(i, j)| dz_out[[i, 0]] * w_out[j]);
    for (k, layer) in params.gray_hidden.iter().enumerate().rev() {
        let out = &fwd.gray_inputs[k + 1];
        mask_relu(&mut dh, &out.view());
        let input = &fwd.gray_inputs[k];
        let gl = &mut grads.gray_hidden[k];
        general_mat_mul(F::one(), &input.t(), &dh, F::one(), &mut gl.weight);
        add_column_sums(&mut gl.bias, &dh);
        dh = if k == 0 {
            dh.dot(&layer.weight.slice(s![..w + 1, ..]).t())
        } else {
            dh.dot(&layer.weight.t())
        };
    }
    // dh is now the gradient w.r.t. [feature | E]
    let mut d_feature = dh.slice(s![.., ..w]).to_owned();
    let dz_edge: Array1<F> = Array1::from_shape_fn(n, |i| {
        let e = fwd.edge[i];
        ((d_edge[i] + dh[[i, w]]) * e * (F::one() - e)).flush()
    });
    let dz_edge = dz_edge.insert_axis(Axis(1));
    general_mat_mul(F::one(), &fwd.feature.t(), &dz_edge, F::one(), &mut grads.density_head.weight);
    add_column_sums(&mut grads.density_head.bias, &dz_edge);
    general_mat_mul(F::one(), &dz_edge, &params.density_head.weight.t(), F::one(), &mut d_feature);

    // backbone
    let mut da = d_feature;
    for (l, layer) in params.backbone.iter().enumerate().rev() {
        let out = if l + 1 < params.backbone.len() {
            fwd.backbone_inputs[l + 1].slice(s![.., ..w])
        } else {
            fwd.feature.view()
        };
        mask_relu(&mut da, &out);
        let input = &fwd.backbone_inputs[l];
        let gl = &mut grads.backbone[l];
        general_mat_mul(F::one(), &input.t(), &da, F::one(), &mut gl.weight);
        add_column_sums(&mut gl.bias, &da);
        if l > 0 {
            da = da.dot(&layer.weight.slice(s![..w, ..]).t());
        }
    }
}

fn check_direction(d: Vec3) -> Result<()> {
    if !d.is_finite() || (d.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("direction {d:?} is not a unit vector")));
    }
    Ok(())
}

/// Evaluates the field at a single position and unit view direction.
pub fn field_eval<F: Real>(params: &EdgeFieldParams<F>, x: Vec3, d: Vec3) -> Result<FieldOutput> {
    if !x.is_finite() {
        return Err(Error::invalid("position must be finite"));
    }
    check_direction(d)?;
    let cfg = &params.config;
    let pos = encode_batch::<F>(&[x], cfg.pe_position_l);
    let dir = encode_batch::<F>(&[d], cfg.pe_direction_l);
    let fwd = forward_batch(params, pos, &dir);
    Ok(FieldOutput {
        edge_density: fwd.edge[0].f64(),
        gray: fwd.gray[0].f64(),
        feature: fwd.feature.row(0).iter().map(|v| v.f64()).collect(),
    })
}

/// Upstream gradients for a batch: one entry per point for each of E, c
/// and σ.
#[derive(Debug, Clone, Default)]
pub struct Upstream {
    pub edge: Vec<f64>,
    pub gray: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Batched outputs (E, c, σ per point) and the gradient of
/// `Σ (u_E E + u_c c + u_σ σ)` with respect to every parameter, `log_alpha`
/// included.
pub fn field_eval_batch_with_grad<F: Real>(
    params: &EdgeFieldParams<F>,
    xs: &[Vec3],
    ds: &[Vec3],
    upstream: &Upstream,
) -> Result<(Vec<(f64, f64, f64)>, EdgeFieldParams<F>)> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyInput("field batch"));
    }
    if ds.len() != n || upstream.edge.len() != n || upstream.gray.len() != n || upstream.sigma.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} positions, {} directions, upstream {}/{}/{}",
            n,
            ds.len(),
            upstream.edge.len(),
            upstream.gray.len(),
            upstream.sigma.len()
        )));
    }
    for &d in ds {
        check_direction(d)?;
    }
    let cfg = params.config;
    let alpha = params.alpha();
    let pos = encode_batch::<F>(xs, cfg.pe_position_l);
    let dir = encode_batch::<F>(ds, cfg.pe_direction_l);
    let fwd = forward_batch(params, pos, &dir);
    let mut grads = params.zeros_like();
    let mut outputs = Vec::with_capacity(n);
    let mut d_edge = Vec::with_capacity(n);
    let mut d_gray = Vec::with_capacity(n);
    for i in 0..n {
        let e = fwd.edge[i].f64();
        let sigma = density_map(e, alpha, cfg.beta, cfg.g);
        outputs.push((e, fwd.gray[i].f64(), sigma));
        d_edge.push(F::of(
            upstream.edge[i] + upstream.sigma[i] * density_map_grad(e, alpha, cfg.beta, cfg.g),
        ));
        d_gray.push(F::of(upstream.gray[i]));
        grads.log_alpha += upstream.sigma[i] * sigma;
    }
    backward_batch(params, &fwd, &d_edge, &d_gray, &mut grads);
    Ok((outputs, grads))
}
