//! Differentiable EI surrogates `U_δ` and the loss-based BE baseline.
//!
//! All penalties depend on the parameters only through the best-response scores
//! `y_i^max = max f(x_i + Δx)` of the rejected samples `I_-`. Gradients hold the maximizer
//! fixed (Danskin), so `∂y_i^max/∂θ = y_i^max (1 - y_i^max) ∂logit(x_i + Δx_i*)/∂θ`.
//! Membership in `I_-` is treated as constant.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effort::{best_response_glm, best_response_pgd, EffortBudget, PgdConfig};
use crate::error::{Error, Result};
use crate::models::{accepted, loss, loss_dlogit, sigmoid, Scorer};
use crate::special::{norm_pdf, q_function};

pub const DEFAULT_KDE_BANDWIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyTag {
    None,
    EiCov,
    EiKde,
    EiLoss,
    BeLoss,
}

impl PenaltyTag {
    pub const ALL: [&'static str; 5] = ["none", "ei_cov", "ei_kde", "ei_loss", "be_loss"];
}

impl FromStr for PenaltyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PenaltyTag::None),
            "ei_cov" => Ok(PenaltyTag::EiCov),
            "ei_kde" => Ok(PenaltyTag::EiKde),
            "ei_loss" => Ok(PenaltyTag::EiLoss),
            "be_loss" => Ok(PenaltyTag::BeLoss),
            other => Err(Error::config(format!(
                "unknown penalty `{other}` (valid: {})",
                Self::ALL.join(", ")
            ))),
        }
    }
}

impl std::fmt::Display for PenaltyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let i = *self as usize;
        f.write_str(Self::ALL[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyKind {
    pub tag: PenaltyTag,
    /// Kernel bandwidth on the score scale; used by `ei_kde` only.
    #[serde(default = "default_bandwidth")]
    pub kde_bandwidth: f64,
}

fn default_bandwidth() -> f64 {
    DEFAULT_KDE_BANDWIDTH
}

impl PenaltyKind {
    pub fn new(tag: PenaltyTag) -> Self {
        Self {
            tag,
            kde_bandwidth: DEFAULT_KDE_BANDWIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag == PenaltyTag::EiKde && !(self.kde_bandwidth > 0.0 && self.kde_bandwidth.is_finite()) {
            return Err(Error::config("KDE bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Penalty value and its parameter gradient on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyValue {
    pub value: f64,
    pub grad: Vec<f64>,
    /// The batch had no rejected samples; value and gradient are zero.
    pub degenerate: bool,
    /// Groups left out because their conditioning set was empty.
    pub excluded_groups: Vec<usize>,
}

impl PenaltyValue {
    fn zero(n_params: usize, degenerate: bool) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; n_params],
            degenerate,
            excluded_groups: vec![],
        }
    }
}

/// Best responses of the rejected rows of a batch.
struct InnerMax {
    rows: Vec<usize>,
    max_logit: Vec<f64>,
    /// GLM: the common perturbation. MLP: `None`, see `moved`.
    shift: Option<Vec<f64>>,
    moved: Vec<Vec<f64>>,
}

fn inner_max(
    model: &Scorer,
    data: &Dataset,
    rows: &[usize],
    budget: &EffortBudget,
    pgd: &PgdConfig,
) -> Result<InnerMax> {
    let rejected: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&i| !accepted(sigmoid(model.logit_unchecked(data.row(i)))))
        .collect();
    match model {
        Scorer::Glm(g) => {
            let zero = vec![0.0; data.dim()];
            let br = best_response_glm(g, &zero, budget, data.partition());
            let gain = br.max_logit - g.bias;
            let max_logit = rejected
                .iter()
                .map(|&i| model.logit_unchecked(data.row(i)) + gain)
                .collect();
            Ok(InnerMax {
                rows: rejected,
                max_logit,
                shift: Some(br.delta_x),
                moved: vec![],
            })
        }
        Scorer::Mlp(_) => {
            let mut max_logit = Vec::with_capacity(rejected.len());
            let mut moved = Vec::with_capacity(rejected.len());
            for &i in &rejected {
                let x = data.row(i);
                let br = best_response_pgd(model, x, budget, pgd, data.partition())?;
                max_logit.push(br.max_logit);
                moved.push(x.iter().zip(&br.delta_x).map(|(a, b)| a + b).collect());
            }
            Ok(InnerMax {
                rows: rejected,
                max_logit,
                shift: None,
                moved,
            })
        }
    }
}

impl InnerMax {
    /// `Σ_k coeff_k ∂max_logit_k/∂θ`.
    fn backprop(&self, model: &Scorer, data: &Dataset, coeff: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; model.n_params()];
        match &self.shift {
            Some(shift) => {
                let d = data.dim();
                let mut total = 0.0;
                for (&i, &c) in self.rows.iter().zip(coeff) {
                    if c == 0.0 {
                        continue;
                    }
                    for (g, x) in grad[..d].iter_mut().zip(data.row(i)) {
                        *g += c * x;
                    }
                    total += c;
                }
                for (g, s) in grad[..d].iter_mut().zip(shift) {
                    *g += total * s;
                }
                grad[d] += total;
            }
            None => {
                for (x, &c) in self.moved.iter().zip(coeff) {
                    if c != 0.0 {
                        model.accumulate_logit_grad(x, c, &mut grad);
                    }
                }
            }
        }
        grad
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates `U_δ` and `∂U_δ/∂θ` over the given batch rows.
pub fn penalty(
    kind: &PenaltyKind,
    model: &Scorer,
    data: &Dataset,
    rows: &[usize],
    budget: &EffortBudget,
    pgd: &PgdConfig,
) -> Result<PenaltyValue> {
    kind.validate()?;
    let n_params = model.n_params();
    if kind.tag == PenaltyTag::None {
        return Ok(PenaltyValue::zero(n_params, false));
    }
    if kind.tag == PenaltyTag::EiCov && data.n_groups() > 2 {
        return Err(Error::config(
            "the covariance penalty needs a binary group attribute; use ei_kde or ei_loss",
        ));
    }
    let im = inner_max(model, data, rows, budget, pgd)?;
    if im.rows.is_empty() {
        return Ok(PenaltyValue::zero(n_params, true));
    }
    let z_count = data.n_groups();
    let n_rej = im.rows.len() as f64;
    let groups: Vec<usize> = im.rows.iter().map(|&i| data.group(i)).collect();
    let mut rej_count = vec![0.0; z_count];
    for &z in &groups {
        rej_count[z] += 1.0;
    }

    // value and dU/dmax_logit per rejected sample
    let (value, coeff, excluded): (f64, Vec<f64>, Vec<usize>) = match kind.tag {
        PenaltyTag::EiCov => {
            let zbar = groups.iter().map(|&z| z as f64).sum::<f64>() / n_rej;
            let y: Vec<f64> = im.max_logit.iter().map(|&t| sigmoid(t)).collect();
            let a = groups
                .iter()
                .zip(&y)
                .map(|(&z, &s)| (z as f64 - zbar) * s)
                .sum::<f64>()
                / n_rej;
            let coeff = groups
                .iter()
                .zip(&y)
                .map(|(&z, &s)| 2.0 * a * (z as f64 - zbar) / n_rej * s * (1.0 - s))
                .collect();
            (a * a, coeff, vec![])
        }
        PenaltyTag::EiKde => {
            let h = kind.kde_bandwidth;
            let y: Vec<f64> = im.max_logit.iter().map(|&t| sigmoid(t)).collect();
            let tail: Vec<f64> = y.iter().map(|s| q_function((0.5 - s) / h)).collect();
            let mut per_group = vec![0.0; z_count];
            for (&z, t) in groups.iter().zip(&tail) {
                per_group[z] += t;
            }
            let pooled = tail.iter().sum::<f64>() / n_rej;
            let mut value = 0.0;
            let mut signs = vec![0.0; z_count];
            let mut excluded = vec![];
            for z in 0..z_count {
                if rej_count[z] == 0.0 {
                    excluded.push(z);
                    continue;
                }
                let gap = per_group[z] / rej_count[z] - pooled;
                value += gap.abs();
                signs[z] = sign0(gap);
            }
            let sign_sum: f64 = signs.iter().sum();
            let coeff = groups
                .iter()
                .zip(&y)
                .map(|(&z, &s)| {
                    let dtail = norm_pdf((0.5 - s) / h) / h;
                    let du = signs[z] / rej_count[z] - sign_sum / n_rej;
                    du * dtail * s * (1.0 - s)
                })
                .collect();
            (value, coeff, excluded)
        }
        PenaltyTag::EiLoss | PenaltyTag::BeLoss => {
            let be = kind.tag == PenaltyTag::BeLoss;
            // per-group denominators: rejected count (EI) or full group size (BE)
            let (denom, total) = if be {
                let mut counts = vec![0.0; z_count];
                for &i in rows {
                    counts[data.group(i)] += 1.0;
                }
                (counts, rows.len() as f64)
            } else {
                (rej_count.clone(), n_rej)
            };
            let y: Vec<f64> = im.max_logit.iter().map(|&t| sigmoid(t)).collect();
            let losses: Vec<f64> = y.iter().map(|&s| loss(1, s)).collect();
            let mut per_group = vec![0.0; z_count];
            for (&z, l) in groups.iter().zip(&losses) {
                per_group[z] += l;
            }
            let pooled = losses.iter().sum::<f64>() / total;
            let mut value = 0.0;
            let mut signs = vec![0.0; z_count];
            let mut excluded = vec![];
            for z in 0..z_count {
                if denom[z] == 0.0 {
                    excluded.push(z);
                    continue;
                }
                let gap = per_group[z] / denom[z] - pooled;
                value += gap.abs();
                signs[z] = sign0(gap);
            }
            let sign_sum: f64 = signs.iter().sum();
            let coeff = groups
                .iter()
                .zip(&y)
                .map(|(&z, &s)| (signs[z] / denom[z] - sign_sum / total) * loss_dlogit(1, s))
                .collect();
            (value, coeff, excluded)
        }
        PenaltyTag::None => unreachable!(),
    };
    Ok(PenaltyValue {
        value,
        grad: im.backprop(model, data, &coeff),
        degenerate: false,
        excluded_groups: excluded,
    })
}
