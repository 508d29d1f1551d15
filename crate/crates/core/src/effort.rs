//! Effort budgets and the inner maximization `max_{μ(Δx_I) ≤ δ} f(x + Δx)`.
//!
//! Only improvable coordinates move; manipulable and immutable entries of `Δx` are zero.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::FeaturePartition;
use crate::error::{Error, Result};
use crate::models::{accepted, sigmoid, GlmScorer, Scorer};
use crate::rng::{rng_for, stream};

/// Feasibility slack for returned perturbations.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `μ(v) = max_i |v_i|`.
    Linf,
    /// `μ(v) = sqrt(vᵀ C v)` with diagonal `C`.
    L2Weighted,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(NormKind::Linf),
            "l2" | "l2_weighted" => Ok(NormKind::L2Weighted),
            other => Err(Error::config(format!(
                "unknown norm `{other}` (valid: linf, l2)"
            ))),
        }
    }
}

/// Norm kind, budget δ and the diagonal of the cost matrix over improvable features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortBudget {
    pub norm: NormKind,
    pub delta: f64,
    /// One entry per improvable feature; ignored by `Linf`.
    pub cost_diag: Vec<f64>,
}

impl EffortBudget {
    pub fn linf(delta: f64, d_improvable: usize) -> Self {
        Self {
            norm: NormKind::Linf,
            delta,
            cost_diag: vec![1.0; d_improvable],
        }
    }

    pub fn l2(delta: f64, cost_diag: Vec<f64>) -> Self {
        Self {
            norm: NormKind::L2Weighted,
            delta,
            cost_diag,
        }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn validate(&self, partition: &FeaturePartition) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!(
                "effort budget must be finite and non-negative, got {}",
                self.delta
            )));
        }
        if partition.improvable.is_empty() {
            return Err(Error::config(
                "an effort budget needs at least one improvable feature",
            ));
        }
        if self.cost_diag.len() != partition.improvable.len() {
            return Err(Error::config(format!(
                "cost diagonal has {} entries for {} improvable features",
                self.cost_diag.len(),
                partition.improvable.len()
            )));
        }
        if self.cost_diag.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::config("cost diagonal must be strictly positive"));
        }
        Ok(())
    }

    /// Effort norm of a vector over improvable coordinates.
    pub fn mu(&self, v: &[f64]) -> f64 {
        match self.norm {
            NormKind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::L2Weighted => v
                .iter()
                .zip(&self.cost_diag)
                .map(|(x, c)| c * x * x)
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Dual norm of `g`: the largest `gᵀv` over `μ(v) ≤ 1`.
    pub fn dual(&self, g: &[f64]) -> f64 {
        match self.norm {
            NormKind::Linf => g.iter().map(|x| x.abs()).sum(),
            NormKind::L2Weighted => g
                .iter()
                .zip(&self.cost_diag)
                .map(|(x, c)| x * x / c)
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Unit-μ direction maximizing `gᵀv`; zero when `g` is zero.
    fn steepest(&self, g: &[f64]) -> Vec<f64> {
        match self.norm {
            NormKind::Linf => g.iter().map(|x| sign0(*x)).collect(),
            NormKind::L2Weighted => {
                let dual = self.dual(g);
                if dual == 0.0 {
                    return vec![0.0; g.len()];
                }
                g.iter()
                    .zip(&self.cost_diag)
                    .map(|(x, c)| x / c / dual)
                    .collect()
            }
        }
    }

    /// Projection onto `μ(v) ≤ δ`: clipping for `Linf`, radial scaling for weighted L2.
    fn project(&self, v: &mut [f64]) {
        match self.norm {
            NormKind::Linf => {
                for x in v.iter_mut() {
                    *x = x.clamp(-self.delta, self.delta);
                }
            }
            NormKind::L2Weighted => {
                let m = self.mu(v);
                if m > self.delta {
                    let scale = if m > 0.0 { self.delta / m } else { 0.0 };
                    v.iter_mut().for_each(|x| *x *= scale);
                }
            }
        }
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgdInit {
    Zero,
    Random,
}

/// Projected ascent settings.
///
/// Each step moves `γ` along the steepest-ascent direction of the logit under the effort
/// norm, then projects back onto the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub steps: usize,
    /// Step length in effort units; `None` means `δ / 5`.
    #[serde(default)]
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub init: PgdInit,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            step_size: None,
            restarts: 1,
            init: PgdInit::Zero,
            seed: 0,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.restarts == 0 {
            return Err(Error::config("PGD needs at least one step and one restart"));
        }
        if let Some(g) = self.step_size {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config("PGD step size must be positive"));
            }
        }
        Ok(())
    }
}

/// Maximizing perturbation and the resulting score.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Full-length perturbation, zero outside improvable indices.
    pub delta_x: Vec<f64>,
    pub max_logit: f64,
    pub max_score: f64,
}

impl BestResponse {
    pub fn improvable(&self) -> bool {
        accepted(self.max_score)
    }
}

fn finish(x: &[f64], model: &Scorer, delta_x: Vec<f64>) -> BestResponse {
    let moved: Vec<f64> = x.iter().zip(&delta_x).map(|(a, b)| a + b).collect();
    let max_logit = model.logit_unchecked(&moved);
    BestResponse {
        delta_x,
        max_logit,
        max_score: sigmoid(max_logit),
    }
}

/// Closed form for a logistic model: the logit rises by `δ·‖w_I‖_*`.
pub fn best_response_glm(
    glm: &GlmScorer,
    x: &[f64],
    budget: &EffortBudget,
    partition: &FeaturePartition,
) -> BestResponse {
    let w_i: Vec<f64> = partition.improvable.iter().map(|&k| glm.weights[k]).collect();
    let step = budget.steepest(&w_i);
    let mut delta_x = vec![0.0; x.len()];
    for (&k, s) in partition.improvable.iter().zip(&step) {
        delta_x[k] = budget.delta * s;
    }
    let logit = glm.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + glm.bias;
    let max_logit = logit + budget.delta * budget.dual(&w_i);
    BestResponse {
        delta_x,
        max_logit,
        max_score: sigmoid(max_logit),
    }
}

/// Projected steepest ascent with best-iterate tracking across restarts.
///
/// Steps are accepted only when they raise the logit; a rejected step halves the step
/// length, so every run is a monotone ascent from its starting point.
pub fn best_response_pgd(
    model: &Scorer,
    x: &[f64],
    budget: &EffortBudget,
    cfg: &PgdConfig,
    partition: &FeaturePartition,
) -> Result<BestResponse> {
    model.check_dim(x)?;
    let idx = &partition.improvable;
    if budget.delta == 0.0 {
        return Ok(finish(x, model, vec![0.0; x.len()]));
    }
    let mut rng = rng_for(cfg.seed, stream::PGD);
    let mut best: Option<BestResponse> = None;
    for restart in 0..cfg.restarts {
        let mut v = vec![0.0; idx.len()];
        if cfg.init == PgdInit::Random || restart > 0 {
            for e in v.iter_mut() {
                *e = rng.gen_range(-budget.delta..=budget.delta);
            }
            budget.project(&mut v);
        }
        let run = ascend(model, x, budget, cfg, idx, v)?;
        if best.as_ref().map_or(true, |b| run.max_logit > b.max_logit) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Projected ascent started from a given perturbation (full-length, improvable entries
/// used), e.g. the best response for a smaller budget. The result is never worse than the
/// projected start.
pub fn best_response_pgd_from(
    model: &Scorer,
    x: &[f64],
    budget: &EffortBudget,
    cfg: &PgdConfig,
    partition: &FeaturePartition,
    start: &[f64],
) -> Result<BestResponse> {
    model.check_dim(x)?;
    model.check_dim(start)?;
    let idx = &partition.improvable;
    let mut v: Vec<f64> = idx.iter().map(|&k| start[k]).collect();
    budget.project(&mut v);
    ascend(model, x, budget, cfg, idx, v)
}

fn ascend(
    model: &Scorer,
    x: &[f64],
    budget: &EffortBudget,
    cfg: &PgdConfig,
    idx: &[usize],
    mut v: Vec<f64>,
) -> Result<BestResponse> {
    let mut step = cfg.step_size.unwrap_or(budget.delta / 5.0);
    let mut current = expand(x, model, idx, &v);
    let mut moved = x.to_vec();
    for _ in 0..cfg.steps {
        if step == 0.0 {
            break;
        }
        for (&k, e) in idx.iter().zip(&v) {
            moved[k] = x[k] + e;
        }
        let grad = model.grad_logit_input_unchecked(&moved);
        let g_i: Vec<f64> = idx.iter().map(|&k| grad[k]).collect();
        if g_i.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical("non-finite gradient in projected ascent"));
        }
        let mut candidate = v.clone();
        for (e, s) in candidate.iter_mut().zip(budget.steepest(&g_i)) {
            *e += step * s;
        }
        budget.project(&mut candidate);
        let next = expand(x, model, idx, &candidate);
        if next.max_logit > current.max_logit {
            v = candidate;
            current = next;
        } else {
            step *= 0.5;
        }
    }
    Ok(current)
}

fn expand(x: &[f64], model: &Scorer, idx: &[usize], v: &[f64]) -> BestResponse {
    let mut delta_x = vec![0.0; x.len()];
    for (&k, e) in idx.iter().zip(v) {
        delta_x[k] = *e;
    }
    finish(x, model, delta_x)
}

/// Closed form for GLMs, projected ascent otherwise.
pub fn best_response(
    model: &Scorer,
    x: &[f64],
    budget: &EffortBudget,
    partition: &FeaturePartition,
    pgd: &PgdConfig,
) -> Result<BestResponse> {
    match model {
        Scorer::Glm(g) => {
            model.check_dim(x)?;
            Ok(best_response_glm(g, x, budget, partition))
        }
        Scorer::Mlp(_) => best_response_pgd(model, x, budget, pgd, partition),
    }
}

/// Minimum effort to reach acceptance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recourse {
    pub distance: f64,
    /// Acceptance was not reachable within `delta_max`; `distance` equals `delta_max`.
    pub capped: bool,
}

/// Bisection tolerance for non-GLM recourse.
pub const RECOURSE_TOL: f64 = 1e-4;

/// `min μ(Δx)` subject to `f(x + Δx) ≥ 0.5`, for a rejected `x`.
///
/// Only the norm and costs of `budget` are used; `delta_max` caps the search.
pub fn recourse_distance(
    model: &Scorer,
    x: &[f64],
    budget: &EffortBudget,
    partition: &FeaturePartition,
    pgd: &PgdConfig,
    delta_max: f64,
) -> Result<Recourse> {
    let logit = model.logit(x)?;
    if accepted(sigmoid(logit)) {
        return Err(Error::Precondition(
            "recourse is only defined for rejected samples".into(),
        ));
    }
    let capped = Recourse {
        distance: delta_max,
        capped: true,
    };
    match model {
        Scorer::Glm(g) => {
            let w_i: Vec<f64> = partition.improvable.iter().map(|&k| g.weights[k]).collect();
            let dual = budget.dual(&w_i);
            let d = -logit / dual;
            if dual == 0.0 || d > delta_max {
                return Ok(capped);
            }
            Ok(Recourse {
                distance: d,
                capped: false,
            })
        }
        Scorer::Mlp(_) => {
            let reach = |delta: f64| -> Result<bool> {
                let b = budget.with_delta(delta);
                Ok(best_response_pgd(model, x, &b, pgd, partition)?.improvable())
            };
            if !reach(delta_max)? {
                return Ok(capped);
            }
            let (mut lo, mut hi) = (0.0, delta_max);
            while hi - lo > RECOURSE_TOL {
                let mid = 0.5 * (lo + hi);
                if reach(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(Recourse {
                distance: hi,
                capped: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpScorer;
    use proptest::prelude::*;

    fn glm(w: Vec<f64>, b: f64) -> Scorer {
        Scorer::Glm(GlmScorer::new(w, b))
    }

    #[test]
    fn closed_form_examples() {
        let p = FeaturePartition::all_improvable(2);
        let m = GlmScorer::new(vec![3.0, 4.0], 0.0);
        let r = best_response_glm(&m, &[0.0, 0.0], &EffortBudget::l2(0.5, vec![1.0, 1.0]), &p);
        assert!((r.max_logit - 2.5).abs() < 1e-12);
        let m = GlmScorer::new(vec![1.0, -2.0], 0.0);
        let r = best_response_glm(&m, &[0.0, 0.0], &EffortBudget::linf(0.5, 2), &p);
        assert_eq!(r.delta_x, vec![0.5, -0.5]);
        assert!((r.max_logit - 1.5).abs() < 1e-12);
        let r = best_response_glm(&m, &[1.0, 1.0], &EffortBudget::linf(0.0, 2), &p);
        assert_eq!(r.delta_x, vec![0.0, 0.0]);
        assert!((r.max_logit - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn weighted_l2_closed_form() {
        let p = FeaturePartition::all_improvable(2);
        let budget = EffortBudget::l2(1.0, vec![4.0, 1.0]);
        let m = GlmScorer::new(vec![2.0, 1.0], 0.0);
        let r = best_response_glm(&m, &[0.0, 0.0], &budget, &p);
        // wᵀC⁻¹w = 4/4 + 1 = 2
        assert!((r.max_logit - 2f64.sqrt()).abs() < 1e-12);
        assert!((budget.mu(&r.delta_x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn only_improvable_coordinates_move() {
        let p = FeaturePartition::new(vec![1], vec![0], vec![2]);
        let m = glm(vec![1.0, 1.0, 1.0], 0.0);
        let b = EffortBudget::linf(0.3, 1);
        let r = best_response(&m, &[0.0; 3], &b, &p, &PgdConfig::default()).unwrap();
        assert_eq!(r.delta_x, vec![0.0, 0.3, 0.0]);
        let r = best_response_pgd(&m, &[0.0; 3], &b, &PgdConfig::default(), &p).unwrap();
        assert_eq!(r.delta_x[0], 0.0);
        assert_eq!(r.delta_x[2], 0.0);
    }

    #[test]
    fn zero_weights_give_zero_response() {
        let p = FeaturePartition::all_improvable(2);
        let r = best_response_glm(&GlmScorer::zeros(2), &[1.0, 1.0], &EffortBudget::l2(1.0, vec![1.0, 1.0]), &p);
        assert_eq!(r.delta_x, vec![0.0, 0.0]);
    }

    #[test]
    fn recourse_examples() {
        let p = FeaturePartition::all_improvable(1);
        let m = glm(vec![1.0], 0.0);
        let b = EffortBudget::linf(0.5, 1);
        let r = recourse_distance(&m, &[-2.0], &b, &p, &PgdConfig::default(), 100.0).unwrap();
        assert!((r.distance - 2.0).abs() < 1e-12 && !r.capped);
        let r = recourse_distance(&m, &[-1e-12], &b, &p, &PgdConfig::default(), 100.0).unwrap();
        assert!(r.distance < 1e-11);
        assert!(matches!(
            recourse_distance(&m, &[0.0], &b, &p, &PgdConfig::default(), 100.0),
            Err(Error::Precondition(_))
        ));
        let r = recourse_distance(&m, &[-200.0], &b, &p, &PgdConfig::default(), 100.0).unwrap();
        assert!(r.capped && r.distance == 100.0);
    }

    #[test]
    fn mlp_recourse_by_bisection() {
        // a one-hidden-unit network equivalent to logit = relu(x) - 1 on x > 0
        let mlp = MlpScorer {
            sizes: vec![1, 1, 1],
            weights: vec![vec![1.0], vec![1.0]],
            biases: vec![vec![0.0], vec![-1.0]],
        };
        let m = Scorer::Mlp(mlp);
        let p = FeaturePartition::all_improvable(1);
        let b = EffortBudget::linf(0.1, 1);
        let r = recourse_distance(&m, &[0.25], &b, &p, &PgdConfig::default(), 10.0).unwrap();
        assert!((r.distance - 0.75).abs() <= 2.0 * RECOURSE_TOL, "{}", r.distance);
    }

    proptest! {
        #[test]
        fn pgd_matches_closed_form(w in prop::collection::vec(-3.0..3.0f64, 1..6),
                                    x in prop::collection::vec(-2.0..2.0f64, 6),
                                    delta in 0.0..2.0f64, l2 in any::<bool>(),
                                    costs in prop::collection::vec(0.2..5.0f64, 6)) {
            let d = w.len();
            let p = FeaturePartition::all_improvable(d);
            let budget = if l2 { EffortBudget::l2(delta, costs[..d].to_vec()) } else { EffortBudget::linf(delta, d) };
            let g = GlmScorer::new(w, 0.3);
            let closed = best_response_glm(&g, &x[..d], &budget, &p);
            let pgd = best_response_pgd(&Scorer::Glm(g), &x[..d], &budget, &PgdConfig::default(), &p).unwrap();
            prop_assert!((closed.max_score - pgd.max_score).abs() <= 1e-4);
            prop_assert!(budget.mu(&pgd.delta_x) <= delta + FEASIBILITY_TOL);
            prop_assert!(budget.mu(&closed.delta_x) <= delta + FEASIBILITY_TOL);
        }

        #[test]
        fn pgd_budget_monotone_on_glm(w in prop::collection::vec(-3.0..3.0f64, 3),
                                      x in prop::collection::vec(-2.0..2.0f64, 3),
                                      d1 in 0.0..2.0f64, d2 in 0.0..2.0f64, l2 in any::<bool>()) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let p = FeaturePartition::new(vec![0, 2], vec![], vec![1]);
            let b = if l2 { EffortBudget::l2(lo, vec![0.5, 2.0]) } else { EffortBudget::linf(lo, 2) };
            let m = glm(w, -0.2);
            let small = best_response_pgd(&m, &x, &b, &PgdConfig::default(), &p).unwrap();
            let big = best_response_pgd(&m, &x, &b.with_delta(hi), &PgdConfig::default(), &p).unwrap();
            prop_assert!(big.max_score >= small.max_score - 1e-6);
        }

        #[test]
        fn warm_started_pgd_is_budget_monotone(seed in 0u64..500, x in prop::collection::vec(-2.0..2.0f64, 3)) {
            let m = Scorer::Mlp(MlpScorer::new(3, &[6], seed).unwrap());
            let p = FeaturePartition::new(vec![0, 2], vec![], vec![1]);
            let b = EffortBudget::linf(0.5, 2);
            let small = best_response_pgd(&m, &x, &b, &PgdConfig::default(), &p).unwrap();
            let big = best_response_pgd_from(&m, &x, &b.with_delta(1.0), &PgdConfig::default(), &p, &small.delta_x).unwrap();
            prop_assert!(big.max_score >= small.max_score);
            prop_assert_eq!(big.delta_x[1], 0.0);
            prop_assert!(b.mu(&[big.delta_x[0], big.delta_x[2]]) <= 1.0 + FEASIBILITY_TOL);
        }
    }
}
