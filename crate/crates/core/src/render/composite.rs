/// Alpha-compositing state of one ray.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Composite {
    pub gray: f64,
    pub depth: f64,
    pub deltas: Vec<f64>,
    /// `w_i = T_i (1 - exp(-σ_i δ_i))`.
    pub weights: Vec<f64>,
    /// Transmittance after each sample, `T_{i+1}`.
    pub trans_after: Vec<f64>,
}

/// Interval lengths `δ_i = t_{i+1} - t_i`, the last one running to `t_far`.
pub fn deltas_into(ts: &[f64], t_far: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(ts.windows(2).map(|w| w[1] - w[0]));
    if let Some(&last) = ts.last() {
        out.push((t_far - last).max(0.0));
    }
}

impl Composite {
    /// Composites `gray` along samples `ts` with densities `sigma`.
    pub fn compute(ts: &[f64], t_far: f64, sigma: &[f64], gray: &[f64]) -> Self {
        let mut c = Composite::default();
        c.recompute(ts, t_far, sigma, gray);
        c
    }

    /// Like [`Composite::compute`] but reuses this value's buffers.
    pub fn recompute(&mut self, ts: &[f64], t_far: f64, sigma: &[f64], gray: &[f64]) {
        debug_assert!(ts.len() == sigma.len() && ts.len() == gray.len());
        deltas_into(ts, t_far, &mut self.deltas);
        self.weights.clear();
        self.trans_after.clear();
        let mut trans = 1.0;
        let (mut out, mut depth) = (0.0, 0.0);
        for i in 0..ts.len() {
            let next = trans * (-sigma[i] * self.deltas[i]).exp();
            let w = trans - next;
            out += w * gray[i];
            depth += w * ts[i];
            self.weights.push(w);
            self.trans_after.push(next);
            trans = next;
        }
        self.gray = out;
        self.depth = depth;
    }

    /// Accumulated opacity `Σ w_i = 1 - Π (1 - α_i)`.
    pub fn opacity(&self) -> f64 {
        1.0 - self.trans_after.last().copied().unwrap_or(1.0)
    }

    /// Given `∂L/∂Ĉ`, writes `∂L/∂σ_i` and adds `∂L/∂c_i`.
    pub fn backward(&self, gray: &[f64], d_out: f64, d_sigma: &mut [f64], d_gray: &mut [f64]) {
        // suffix = Σ_{i>k} w_i c_i
        let mut suffix = 0.0;
        for k in (0..gray.len()).rev() {
            d_sigma[k] = d_out * self.deltas[k] * (self.trans_after[k] * gray[k] - suffix);
            d_gray[k] += d_out * self.weights[k];
            suffix += self.weights[k] * gray[k];
        }
    }
}
