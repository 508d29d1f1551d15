//! Minimizes `(1 - λ)·mean loss + λ·U_δ` with Danskin gradients.

mod cv;
mod optim;
mod sweep;

pub use cv::{cross_validate, stage_two_grid, CvOptions, CvResult, CvScore, STAGE_ONE_GRID};
pub use optim::OptimizerKind;
pub use sweep::{frontier, pareto_sweep, SweepResult, SweepRow, SWEEP_HEADER};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effort::{EffortBudget, PgdConfig};
use crate::error::{Error, Result};
use crate::models::{accepted, loss, loss_dlogit, sigmoid, MlpScorer, Scorer};
use crate::penalties::{penalty, PenaltyKind, PenaltyTag};
use crate::rng::{rng_for, stream};
use optim::Optimizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Logreg,
    Mlp { hidden: Vec<usize> },
}

impl ModelSpec {
    pub fn init(&self, d: usize, seed: u64) -> Result<Scorer> {
        match self {
            ModelSpec::Logreg => Ok(Scorer::glm_zeros(d)),
            ModelSpec::Mlp { hidden } => Ok(Scorer::Mlp(MlpScorer::new(d, hidden, seed)?)),
        }
    }

    /// 300 epochs for logistic models, 500 for networks.
    pub fn default_epochs(&self) -> usize {
        match self {
            ModelSpec::Logreg => 300,
            ModelSpec::Mlp { .. } => 500,
        }
    }
}

/// Every setting of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub budget: EffortBudget,
    pub epochs: usize,
    /// Rows per batch; `0` means the whole training set.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub pgd: PgdConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Logistic regression, Adam, Linf budget over `d_improvable` features.
    pub fn logreg(penalty: PenaltyTag, lambda: f64, delta: f64, d_improvable: usize) -> Self {
        Self {
            model: ModelSpec::Logreg,
            penalty: PenaltyKind::new(penalty),
            lambda,
            budget: EffortBudget::linf(delta, d_improvable),
            epochs: ModelSpec::Logreg.default_epochs(),
            batch_size: 0,
            learning_rate: 0.05,
            optimizer: OptimizerKind::AdaptiveMoment,
            pgd: PgdConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1), got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        self.penalty.validate()?;
        self.pgd.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub objective: f64,
    pub penalty: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub scorer: Scorer,
    pub config: TrainConfig,
    #[serde(skip)]
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Self-describing TOML document with the scorer, its shapes and the training config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize model: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Data(format!("invalid model file: {e}")))?;
        m.scorer.validate()?;
        Ok(m)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,objective,penalty,error\n");
        for (i, r) in self.history.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i + 1, r.objective, r.penalty, r.error));
        }
        out
    }
}

/// Objective value, penalty value and parameter gradient over `rows`.
pub struct ObjectiveValue {
    pub objective: f64,
    pub penalty: f64,
    pub grad: Vec<f64>,
}

pub fn objective(model: &Scorer, data: &Dataset, rows: &[usize], config: &TrainConfig) -> Result<ObjectiveValue> {
    let n = rows.len() as f64;
    let w_loss = 1.0 - config.lambda;
    let mut grad = vec![0.0; model.n_params()];
    let mut total = 0.0;
    for &i in rows {
        let x = data.row(i);
        let s = sigmoid(model.logit_unchecked(x));
        let y = data.label(i);
        total += loss(y, s);
        let c = w_loss * loss_dlogit(y, s) / n;
        if c != 0.0 {
            model.accumulate_logit_grad(x, c, &mut grad);
        }
    }
    let mut value = w_loss * total / n;
    let mut pen = 0.0;
    if config.lambda > 0.0 && config.penalty.tag != PenaltyTag::None {
        let p = penalty(&config.penalty, model, data, rows, &config.budget, &config.pgd)?;
        pen = p.value;
        value += config.lambda * p.value;
        for (g, pg) in grad.iter_mut().zip(&p.grad) {
            *g += config.lambda * pg;
        }
    }
    Ok(ObjectiveValue {
        objective: value,
        penalty: pen,
        grad,
    })
}

fn training_error(model: &Scorer, data: &Dataset) -> f64 {
    let wrong = (0..data.len())
        .filter(|&i| u8::from(accepted(sigmoid(model.logit_unchecked(data.row(i))))) != data.label(i))
        .count();
    wrong as f64 / data.len() as f64
}

/// Runs `config.epochs` passes of shuffled mini-batch descent.
///
/// History rows are evaluated on the full training set with the parameters at the end of
/// each epoch.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if config.lambda > 0.0 && config.penalty.tag != PenaltyTag::None {
        config.budget.validate(data.partition())?;
    }
    let mut model = config.model.init(data.dim(), config.seed)?;
    let mut params = model.params();
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.len());
    let mut rng = rng_for(config.seed, stream::BATCHES);
    let n = data.len();
    let batch = if config.batch_size == 0 { n } else { config.batch_size.min(n) };
    let all: Vec<usize> = (0..n).collect();
    let mut order = all.clone();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for (b, rows) in order.chunks(batch).enumerate() {
            let v = objective(&model, data, rows, config)?;
            if !v.objective.is_finite() || v.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite objective at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            opt.step(&mut params, &v.grad);
            model.set_params(&params)?;
        }
        let full = objective(&model, data, &all, config)?;
        if !full.objective.is_finite() {
            return Err(Error::numerical(format!("non-finite objective after epoch {}", epoch + 1)));
        }
        history.push(EpochRecord {
            objective: full.objective,
            penalty: full.penalty,
            error: training_error(&model, data),
        });
    }
    Ok(TrainedModel {
        scorer: model,
        config: config.clone(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, FeaturePartition, SyntheticConfig};

    fn small_synth(n: usize, seed: u64) -> Dataset {
        let cfg = SyntheticConfig {
            n_samples: n,
            ..SyntheticConfig::paper_default()
        };
        generate_synthetic(&cfg, seed).unwrap()
    }

    fn quick(tag: PenaltyTag, lambda: f64) -> TrainConfig {
        TrainConfig {
            epochs: 40,
            batch_size: 128,
            learning_rate: 0.02,
            ..TrainConfig::logreg(tag, lambda, 0.5, 2)
        }
    }

    #[test]
    fn zero_lambda_ignores_penalty_kind() {
        let data = small_synth(600, 1);
        let base = train(&data, &quick(PenaltyTag::None, 0.0)).unwrap();
        for tag in [PenaltyTag::EiCov, PenaltyTag::EiKde, PenaltyTag::EiLoss, PenaltyTag::BeLoss] {
            let other = train(&data, &quick(tag, 0.0)).unwrap();
            assert_eq!(other.scorer, base.scorer);
            assert_eq!(other.history, base.history);
        }
    }

    #[test]
    fn deterministic_serialization() {
        let data = small_synth(400, 2);
        let cfg = quick(PenaltyTag::EiLoss, 0.5);
        let a = train(&data, &cfg).unwrap().to_toml().unwrap();
        let b = train(&data, &cfg).unwrap().to_toml().unwrap();
        assert_eq!(a, b);
        let back = TrainedModel::from_toml(&a).unwrap();
        assert_eq!(back.to_toml().unwrap(), a);
    }

    #[test]
    fn mlp_model_round_trips() {
        let data = small_synth(200, 3);
        let cfg = TrainConfig {
            model: ModelSpec::Mlp { hidden: vec![4] },
            epochs: 3,
            ..quick(PenaltyTag::EiKde, 0.3)
        };
        let m = train(&data, &cfg).unwrap();
        let back = TrainedModel::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back.scorer, m.scorer);
    }

    #[test]
    fn history_matches_final_model() {
        let data = small_synth(500, 4);
        let cfg = quick(PenaltyTag::EiKde, 0.4);
        let m = train(&data, &cfg).unwrap();
        assert_eq!(m.history.len(), cfg.epochs);
        let last = m.history.last().unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let v = objective(&m.scorer, &data, &all, &cfg).unwrap();
        assert_eq!(v.objective, last.objective);
        assert_eq!(training_error(&m.scorer, &data), last.error);
    }

    #[test]
    fn objective_decreases() {
        let data = small_synth(800, 5);
        for tag in [PenaltyTag::None, PenaltyTag::EiCov, PenaltyTag::EiKde, PenaltyTag::EiLoss, PenaltyTag::BeLoss] {
            let m = train(&data, &quick(tag, if tag == PenaltyTag::None { 0.0 } else { 0.5 })).unwrap();
            let (first, last) = (m.history[0].objective, m.history.last().unwrap().objective);
            assert!(last <= first + 1e-6, "{tag}: {first} -> {last}");
        }
    }

    #[test]
    fn frozen_inner_max_step_decreases_objective() {
        // full-batch step along -grad with the maximizer held fixed
        let data = small_synth(400, 6);
        let cfg = quick(PenaltyTag::EiLoss, 0.5);
        let model = train(&data, &TrainConfig { epochs: 2, ..cfg.clone() }).unwrap().scorer;
        let all: Vec<usize> = (0..data.len()).collect();
        let v = objective(&model, &data, &all, &cfg).unwrap();
        for lr in [1e-3, 1e-4] {
            let mut m = model.clone();
            let p: Vec<f64> = model.params().iter().zip(&v.grad).map(|(p, g)| p - lr * g).collect();
            m.set_params(&p).unwrap();
            let after = objective(&m, &data, &all, &cfg).unwrap().objective;
            assert!(after < v.objective, "lr {lr}: {} -> {after}", v.objective);
        }
    }

    #[test]
    fn invalid_configs() {
        let data = small_synth(50, 7);
        assert!(matches!(train(&data, &quick(PenaltyTag::EiLoss, 1.0)), Err(Error::Config(_))));
        assert!(matches!(train(&data, &TrainConfig { epochs: 0, ..quick(PenaltyTag::None, 0.0) }), Err(Error::Config(_))));
        let cfg = TrainConfig {
            budget: EffortBudget::linf(0.5, 3),
            ..quick(PenaltyTag::EiLoss, 0.5)
        };
        assert!(train(&data, &cfg).is_err());
    }

    #[test]
    fn erm_gradient_is_logistic_gradient() {
        let data = Dataset::new(vec![1.5, -0.5], 2, vec![1], vec![0], 2, FeaturePartition::all_improvable(2), vec!["a".into(), "b".into()]).unwrap();
        let m = Scorer::Glm(crate::models::GlmScorer::new(vec![0.2, 0.4], -0.1));
        let v = objective(&m, &data, &[0], &quick(PenaltyTag::None, 0.0)).unwrap();
        let s = m.score(&[1.5, -0.5]).unwrap();
        let expect = [(s - 1.0) * 1.5, (s - 1.0) * -0.5, s - 1.0];
        for (a, b) in v.grad.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
