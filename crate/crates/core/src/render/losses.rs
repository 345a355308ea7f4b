use crate::error::{Error, Result};

/// Loss balancing: `λ₁` (W-MSE), `λ₂` (consistency), `λ₃` (sparsity), the
/// edge/non-edge threshold `eta` and the Cauchy scale `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub eta: f64,
    pub s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.01,
            eta: 0.3,
            s: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.eta, self.s];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if !(self.eta < 1.0) {
            return Err(Error::invalid("eta must be below 1"));
        }
        if self.s <= 0.0 {
            return Err(Error::invalid("sparsity scale s must be positive"));
        }
        Ok(())
    }
}

/// Per-ray color weighting of the rendering loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorWeighting {
    /// Inverse class frequency within each batch.
    Adaptive,
    /// `W ≡ 1`, plain squared error.
    Uniform,
}

/// How the per-ray terms of the rendering loss are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

impl std::fmt::Display for ColorWeighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColorWeighting::Adaptive => "adaptive",
            ColorWeighting::Uniform => "uniform",
        })
    }
}

impl std::str::FromStr for ColorWeighting {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adaptive" => Ok(ColorWeighting::Adaptive),
            "uniform" => Ok(ColorWeighting::Uniform),
            _ => Err(format!("expected adaptive or uniform, got '{s}'")),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

impl std::str::FromStr for Reduction {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(format!("expected sum or mean, got '{s}'")),
        }
    }
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub wmse: f64,
    pub consistency: f64,
    pub sparsity: f64,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        total_loss(self, w)
    }

    pub fn add(&mut self, o: &LossParts) {
        self.wmse += o.wmse;
        self.consistency += o.consistency;
        self.sparsity += o.sparsity;
    }
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    w.lambda1 * parts.wmse + w.lambda2 * parts.consistency + w.lambda3 * parts.sparsity
}

pub fn is_edge(c: f64, eta: f64) -> bool {
    c > eta
}

/// Per-ray weights `W(r)`: non-edge rays get the edge fraction of the batch,
/// edge rays the non-edge fraction.
pub fn wmse_weights(gt: &[f64], eta: f64) -> Result<Vec<f64>> {
    if gt.is_empty() {
        return Err(Error::EmptyInput("W-MSE batch"));
    }
    let n = gt.len() as f64;
    let edges = gt.iter().filter(|&&c| is_edge(c, eta)).count() as f64;
    let (w_edge, w_non) = ((n - edges) / n, edges / n);
    Ok(gt
        .iter()
        .map(|&c| if is_edge(c, eta) { w_edge } else { w_non })
        .collect())
}

/// `Σ W(r) (C(r) - Ĉ(r))²` and its gradient with respect to `Ĉ`.
pub fn wmse_loss(pred: &[f64], gt: &[f64], eta: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            gt.len()
        )));
    }
    let w = wmse_weights(gt, eta)?;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(gt)
        .zip(&w)
        .map(|((&p, &c), &w)| {
            loss += w * (c - p) * (c - p);
            2.0 * w * (p - c)
        })
        .collect();
    Ok((loss, grad))
}

/// Mean over samples of `(E_i - c_i)²`, with gradients `(∂/∂E, ∂/∂c)`.
pub fn consistency_loss(e: &[f64], c: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(e.len(), c.len(), "consistency inputs must align");
    if e.is_empty() {
        return (0.0, vec![], vec![]);
    }
    let n = e.len() as f64;
    let loss = e.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let de: Vec<f64> = e.iter().zip(c).map(|(a, b)| 2.0 * (a - b) / n).collect();
    let dc = de.iter().map(|v| -v).collect();
    (loss, de, dc)
}

/// Cauchy penalty `log(1 + E²/s)` for one sample, and its derivative.
pub fn cauchy(e: f64, s: f64) -> (f64, f64) {
    ((e * e / s).ln_1p(), 2.0 * e / (s + e * e))
}

/// Mean Cauchy penalty over the given samples (empty gives 0).
pub fn sparsity_loss(e: &[f64], s: f64) -> (f64, Vec<f64>) {
    if e.is_empty() {
        return (0.0, vec![]);
    }
    let n = e.len() as f64;
    let mut loss = 0.0;
    let grad = e
        .iter()
        .map(|&v| {
            let (l, g) = cauchy(v, s);
            loss += l;
            g / n
        })
        .collect();
    (loss / n, grad)
}
