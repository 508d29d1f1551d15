//! Score functions `f: X -> (0, 1)` with analytic input and parameter gradients.
//!
//! Both families are written as `sigmoid(logit(x))`, so every objective that depends on
//! scores differentiates through `∂logit/∂θ`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

/// Loss clamp: scores are kept in `[EPS, 1 - EPS]` inside the cross-entropy.
pub const LOSS_EPS: f64 = 1e-7;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with the score clamped to `[LOSS_EPS, 1 - LOSS_EPS]`.
pub fn loss(y: u8, s: f64) -> f64 {
    let s = s.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    if y == 1 {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

/// `∂loss/∂logit`; zero where the clamp is active.
pub fn loss_dlogit(y: u8, s: f64) -> f64 {
    if !(LOSS_EPS..=1.0 - LOSS_EPS).contains(&s) {
        return 0.0;
    }
    s - f64::from(y)
}

/// Prediction rule: ties at 0.5 are accepted.
pub fn accepted(s: f64) -> bool {
    s >= 0.5
}

/// Logistic model `sigmoid(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl GlmScorer {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0.0; d], 0.0)
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Fully connected ReLU network with a single sigmoid output unit.
///
/// `weights[l]` is row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpScorer {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpScorer {
    /// Layers `d -> hidden[0] -> ... -> 1` initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn new(d: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(d, hidden)?;
        let mut rng = rng_for(seed, stream::INIT);
        for l in 0..mlp.weights.len() {
            let bound = 1.0 / (mlp.sizes[l] as f64).sqrt();
            for w in mlp.weights[l].iter_mut().chain(mlp.biases[l].iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(mlp)
    }

    pub fn zeros(d: usize, hidden: &[usize]) -> Result<Self> {
        if d == 0 || hidden.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let mut sizes = vec![d];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            sizes,
            weights,
            biases,
        })
    }

    fn validate(&self) -> Result<()> {
        let layers = self.sizes.len().saturating_sub(1);
        let ok = self.sizes.len() >= 2
            && *self.sizes.last().unwrap() == 1
            && self.weights.len() == layers
            && self.biases.len() == layers
            && (0..layers).all(|l| {
                self.weights[l].len() == self.sizes[l] * self.sizes[l + 1]
                    && self.biases[l].len() == self.sizes[l + 1]
            });
        if ok {
            Ok(())
        } else {
            Err(Error::config("MLP layer shapes do not compose"))
        }
    }

    /// Pre-activations of every layer.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut act: Vec<f64> = x.to_vec();
        for l in 0..self.weights.len() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.weights[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    self.biases[l][o] + (0..n_in).map(|i| w[o * n_in + i] * act[i]).sum::<f64>()
                })
                .collect();
            act = z.iter().map(|v| v.max(0.0)).collect();
            pre.push(z);
        }
        pre
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.forward(x).last().unwrap()[0]
    }

    /// Backward pass from `∂logit = 1`; returns `∂logit/∂x` and adds `coeff·∂logit/∂θ` to
    /// `param_grad` when given.
    fn backward(&self, x: &[f64], coeff: f64, mut param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let pre = self.forward(x);
        let layers = self.weights.len();
        let mut upstream = vec![1.0];
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.weights[l].len() + self.biases[l].len();
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            // ReLU derivative on hidden outputs, subgradient 0 at the kink
            if l + 1 < layers {
                for (u, z) in upstream.iter_mut().zip(&pre[l]) {
                    if *z <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            if let Some(g) = param_grad.as_deref_mut() {
                let base = offsets[l];
                for o in 0..n_out {
                    let u = upstream[o] * coeff;
                    if u == 0.0 {
                        continue;
                    }
                    for i in 0..n_in {
                        let a = if l == 0 { x[i] } else { pre[l - 1][i].max(0.0) };
                        g[base + o * n_in + i] += u * a;
                    }
                    g[base + n_in * n_out + o] += u;
                }
            }
            let w = &self.weights[l];
            upstream = (0..n_in)
                .map(|i| (0..n_out).map(|o| w[o * n_in + i] * upstream[o]).sum())
                .collect();
        }
        upstream
    }
}

/// A parameterized score function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    Glm(GlmScorer),
    Mlp(MlpScorer),
}

impl Scorer {
    pub fn glm_zeros(d: usize) -> Self {
        Scorer::Glm(GlmScorer::zeros(d))
    }

    pub fn as_glm(&self) -> Option<&GlmScorer> {
        match self {
            Scorer::Glm(g) => Some(g),
            Scorer::Mlp(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Scorer::Glm(g) => g.weights.len(),
            Scorer::Mlp(m) => m.sizes[0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scorer::Glm(g) if g.weights.is_empty() => Err(Error::config("GLM has no weights")),
            Scorer::Glm(_) => Ok(()),
            Scorer::Mlp(m) => m.validate(),
        }
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Logit without the dimension check; `x.len()` must equal `dim()`.
    pub(crate) fn logit_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Scorer::Glm(g) => g.logit(x),
            Scorer::Mlp(m) => m.logit(x),
        }
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.logit_unchecked(x))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(accepted(self.score(x)?)))
    }

    pub(crate) fn grad_logit_input_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Scorer::Glm(g) => g.weights.clone(),
            Scorer::Mlp(m) => m.backward(x, 0.0, None),
        }
    }

    /// `∂logit/∂x`.
    pub fn grad_logit_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.grad_logit_input_unchecked(x))
    }

    /// `∂score/∂x = s(1-s)·∂logit/∂x`.
    pub fn grad_score_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.score(x)?;
        let scale = s * (1.0 - s);
        Ok(self.grad_logit_input(x)?.into_iter().map(|g| g * scale).collect())
    }

    /// Adds `coeff·∂logit(x)/∂θ` to `grad` (flattened parameter order of [`Self::params`]).
    pub(crate) fn accumulate_logit_grad(&self, x: &[f64], coeff: f64, grad: &mut [f64]) {
        match self {
            Scorer::Glm(g) => {
                let d = g.weights.len();
                for (gi, xi) in grad[..d].iter_mut().zip(x) {
                    *gi += coeff * xi;
                }
                grad[d] += coeff;
            }
            Scorer::Mlp(m) => {
                m.backward(x, coeff, Some(grad));
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Scorer::Glm(g) => g.weights.len() + 1,
            Scorer::Mlp(m) => m
                .weights
                .iter()
                .zip(&m.biases)
                .map(|(w, b)| w.len() + b.len())
                .sum(),
        }
    }

    /// Flattened parameters: GLM `[w.., b]`; MLP per layer `[W (row-major), b]`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Scorer::Glm(g) => {
                let mut p = g.weights.clone();
                p.push(g.bias);
                p
            }
            Scorer::Mlp(m) => m
                .weights
                .iter()
                .zip(&m.biases)
                .flat_map(|(w, b)| w.iter().chain(b).copied())
                .collect(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Dimension {
                expected: self.n_params(),
                got: p.len(),
            });
        }
        match self {
            Scorer::Glm(g) => {
                let d = g.weights.len();
                g.weights.copy_from_slice(&p[..d]);
                g.bias = p[d];
            }
            Scorer::Mlp(m) => {
                let mut off = 0;
                for (w, b) in m.weights.iter_mut().zip(m.biases.iter_mut()) {
                    let (nw, nb) = (w.len(), b.len());
                    w.copy_from_slice(&p[off..off + nw]);
                    off += nw;
                    b.copy_from_slice(&p[off..off + nb]);
                    off += nb;
                }
            }
        }
        Ok(())
    }
}
