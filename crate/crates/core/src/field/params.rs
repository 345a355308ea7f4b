use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::config::FieldConfig;
use crate::error::Result;

/// Floating-point type the network can be evaluated in. Training uses `f32`;
/// gradient checks use `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// Zero when `|self| < sqrt(MIN_POSITIVE)`, so a product of two flushed
    /// values is never subnormal. Subnormal arithmetic makes matrix products
    /// many times slower on common CPUs, and late in training the gradients
    /// behind opaque edges drift into that range.
    fn flush(self) -> Self {
        if self.abs() < Self::min_positive_value().sqrt() {
            Self::zero()
        } else {
            self
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense affine layer `y = x W + b`, `W` stored as `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || F::of(dist.sample(rng)));
        let bias = Array1::from_shape_simple_fn(outputs, || F::of(dist.sample(rng)));
        Self { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// All trainable state of the edge field. The same layout doubles as the
/// gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFieldParams<F = f32> {
    pub config: FieldConfig,
    pub backbone: Vec<Linear<F>>,
    pub density_head: Linear<F>,
    pub gray_hidden: Vec<Linear<F>>,
    pub gray_out: Linear<F>,
    /// Density scale α is `exp(log_alpha)`.
    pub log_alpha: f64,
}

fn layer_shapes(c: &FieldConfig) -> (Vec<(usize, usize)>, (usize, usize), Vec<(usize, usize)>, (usize, usize)) {
    let w = c.backbone_width;
    let backbone = (0..c.backbone_depth)
        .map(|l| {
            let inputs = if l == 0 {
                c.position_dim()
            } else if c.has_skip() && l == c.skip_layer {
                w + c.position_dim()
            } else {
                w
            };
            (inputs, w)
        })
        .collect();
    let gw = c.gray_head_width;
    let gray = (0..c.gray_head_depth)
        .map(|k| (if k == 0 { w + 1 + c.direction_dim() } else { gw }, gw))
        .collect();
    (backbone, (w, 1), gray, (gw, 1))
}

impl<F: Real> EdgeFieldParams<F> {
    /// Parameters with every weight, bias and `log_alpha` set to zero.
    pub fn zeros(config: &FieldConfig) -> Self {
        let (bb, dh, gh, go) = layer_shapes(config);
        Self {
            config: *config,
            backbone: bb.into_iter().map(|(i, o)| Linear::zeros(i, o)).collect(),
            density_head: Linear::zeros(dh.0, dh.1),
            gray_hidden: gh.into_iter().map(|(i, o)| Linear::zeros(i, o)).collect(),
            gray_out: Linear::zeros(go.0, go.1),
            log_alpha: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear<F>> {
        self.backbone
            .iter()
            .chain(std::iter::once(&self.density_head))
            .chain(self.gray_hidden.iter())
            .chain(std::iter::once(&self.gray_out))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear<F>> {
        self.backbone
            .iter_mut()
            .chain(std::iter::once(&mut self.density_head))
            .chain(self.gray_hidden.iter_mut())
            .chain(std::iter::once(&mut self.gray_out))
    }

    /// Weight and bias buffers in declaration order: for every layer its
    /// weight then its bias.
    pub fn tensors(&self) -> Vec<&[F]> {
        self.layers()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        self.layers_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    /// Number of network scalars, excluding `log_alpha`.
    pub fn network_len(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.log_alpha.is_finite() && self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        self.log_alpha += other.log_alpha;
    }

    pub fn scale(&mut self, s: F) {
        for l in self.layers_mut() {
            l.weight *= s;
            l.bias *= s;
        }
        self.log_alpha *= s.f64();
    }

    /// Network scalar at flat index `i` (weights then bias per layer);
    /// `i == network_len()` addresses `log_alpha`.
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for t in self.tensors() {
            if i < t.len() {
                return t[i].f64();
            }
            i -= t.len();
        }
        assert_eq!(i, 0, "flat index out of range");
        self.log_alpha
    }

    pub fn set_flat(&mut self, mut i: usize, v: f64) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = F::of(v);
                return;
            }
            i -= t.len();
        }
        assert_eq!(i, 0, "flat index out of range");
        self.log_alpha = v;
    }

    pub fn cast<G: Real>(&self) -> EdgeFieldParams<G> {
        let conv = |l: &Linear<F>| Linear {
            weight: l.weight.mapv(|v| G::of(v.f64())),
            bias: l.bias.mapv(|v| G::of(v.f64())),
        };
        EdgeFieldParams {
            config: self.config,
            backbone: self.backbone.iter().map(conv).collect(),
            density_head: conv(&self.density_head),
            gray_hidden: self.gray_hidden.iter().map(conv).collect(),
            gray_out: conv(&self.gray_out),
            log_alpha: self.log_alpha,
        }
    }
}

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// for weights and biases, with `α = alpha_init`.
pub fn init_params<F: Real, R: Rng + ?Sized>(config: &FieldConfig, rng: &mut R) -> Result<EdgeFieldParams<F>> {
    config.validate()?;
    let (bb, dh, gh, go) = layer_shapes(config);
    let backbone = bb.into_iter().map(|(i, o)| Linear::uniform(i, o, rng)).collect();
    let density_head = Linear::uniform(dh.0, dh.1, rng);
    let gray_hidden = gh.into_iter().map(|(i, o)| Linear::uniform(i, o, rng)).collect();
    let gray_out = Linear::uniform(go.0, go.1, rng);
    Ok(EdgeFieldParams {
        config: *config,
        backbone,
        density_head,
        gray_hidden,
        gray_out,
        log_alpha: config.alpha_init.ln(),
    })
}
