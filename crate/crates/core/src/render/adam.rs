use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{EdgeFieldParams, Real, Reader, Writer};

pub const OPTIMIZER_MAGIC: &[u8; 8] = b"NEFADAM\0";
const OPTIMIZER_VERSION: u32 = 1;

/// Adam moments for every parameter, `log_alpha` included.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub step: u64,
    pub m: EdgeFieldParams<F>,
    pub v: EdgeFieldParams<F>,
}

impl<F: Real> Adam<F> {
    pub fn new(params: &EdgeFieldParams<F>, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut EdgeFieldParams<F>, grads: &EdgeFieldParams<F>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = (1.0 - self.beta2.powi(t)).sqrt();
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (one, eps) = (F::one(), F::of(self.eps));
        let step_size = F::of(self.learning_rate / c1);
        let c2f = F::of(c2);
        let g_all = grads.tensors();
        let m_all = self.m.tensors_mut();
        let v_all = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(g_all).zip(m_all).zip(v_all) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                p[i] -= step_size * m[i] / (v[i].sqrt() / c2f + eps);
            }
        }
        let g = grads.log_alpha;
        self.m.log_alpha = self.beta1 * self.m.log_alpha + (1.0 - self.beta1) * g;
        self.v.log_alpha = self.beta2 * self.v.log_alpha + (1.0 - self.beta2) * g * g;
        params.log_alpha -=
            self.learning_rate / c1 * self.m.log_alpha / (self.v.log_alpha.sqrt() / c2 + self.eps);
    }
}

/// Saves moments and the step counter next to a checkpoint so training can
/// resume exactly.
pub fn save_optimizer(adam: &Adam<f32>, path: &Path) -> Result<()> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(OPTIMIZER_MAGIC);
    w.u32(OPTIMIZER_VERSION);
    w.u64(adam.step);
    for v in [adam.learning_rate, adam.beta1, adam.beta2, adam.eps] {
        w.f64(v);
    }
    for moments in [&adam.m, &adam.v] {
        w.u64(moments.network_len() as u64);
        for t in moments.tensors() {
            w.f32s(t);
        }
        w.f64(moments.log_alpha);
    }
    crate::synth::write_file(path, &w.buf)
}

/// Loads optimizer state for `params`; the stored moments must match its
/// layout.
pub fn load_optimizer(params: &EdgeFieldParams<f32>, path: &Path) -> Result<Adam<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse = || -> std::result::Result<Adam<f32>, String> {
        let mut r = Reader::new(&bytes);
        if r.take(8)? != OPTIMIZER_MAGIC {
            return Err("bad magic: not an optimizer state file".into());
        }
        let version = r.u32()?;
        if version != OPTIMIZER_VERSION {
            return Err(format!("unsupported optimizer version {version}"));
        }
        let step = r.u64()?;
        let mut adam = Adam::new(params, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        adam.step = step;
        for moments in [&mut adam.m, &mut adam.v] {
            let len = r.u64()? as usize;
            if len != moments.network_len() {
                return Err(format!(
                    "moment size {len} does not match the network ({})",
                    moments.network_len()
                ));
            }
            for t in moments.tensors_mut() {
                r.f32s_into(t)?;
            }
            moments.log_alpha = r.f64()?;
        }
        r.finish()?;
        Ok(adam)
    };
    parse().map_err(|m| Error::parse(path, m))
}
